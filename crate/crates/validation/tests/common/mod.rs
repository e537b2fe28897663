#![allow(dead_code)]

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use wickwz_core::kernels::Partition;

/// Serialises timed tests so wall-clock budgets are not shared.
pub static SERIAL: Mutex<()> = Mutex::new(());

pub fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Composite Simpson of `f·g` on every half subinterval, panel ends nudged
/// inward so each panel sees a single smooth branch.
pub fn simpson(p: &Partition, f: impl Fn(f64) -> f64, total_points: usize) -> f64 {
    let panels = 2 * p.num_intervals();
    let per = (total_points / panels).max(2) & !1;
    let mut acc = 0.0;
    for k in 0..p.num_intervals() {
        let (lo, hi) = p.interval(k);
        let mid = 0.5 * (lo + hi);
        for (a, b) in [(lo, mid), (mid, hi)] {
            let h = (b - a) / per as f64;
            let nudge = 1e-9 * (b - a);
            let mut s = 0.0;
            for j in 0..=per {
                let u = (a + j as f64 * h).clamp(a + nudge, b - nudge);
                let w = match j {
                    0 => 1.0,
                    j if j == per => 1.0,
                    j if j % 2 == 1 => 4.0,
                    _ => 2.0,
                };
                s += w * f(u);
            }
            acc += s * h / 3.0;
        }
    }
    acc
}

/// Small deterministic generator for test inputs.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

pub struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    start: Instant,
}

impl Criterion {
    pub fn start(id: u32, name: &'static str, budget_secs: u64) -> Self {
        Criterion {
            id,
            name,
            budget: Duration::from_secs(budget_secs),
            start: Instant::now(),
        }
    }

    /// Prints one PASS/FAIL line and returns the overall verdict, which also
    /// covers the runtime budget. Writes to the process stdout directly so the
    /// line shows up without `--nocapture`.
    pub fn finish(self, ok: bool, detail: &str) -> bool {
        let elapsed = self.start.elapsed();
        let in_time = elapsed <= self.budget;
        let pass = ok && in_time;
        let line = format!(
            "criterion {} ({}): {} [{:.1}s / {}s budget] {}\n",
            self.id,
            self.name,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            self.budget.as_secs(),
            detail
        );
        let mut out = std::io::stdout().lock();
        let _ = out.write_all(line.as_bytes()).and_then(|_| out.flush());
        pass
    }
}
