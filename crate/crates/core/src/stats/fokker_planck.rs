use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{bootstrap, mean};
use crate::solver::EnsembleRun;

const BOOTSTRAP_RESAMPLES: usize = 200;
const BOOTSTRAP_SEED: u64 = 0xf0cc_e7a1;

/// `ψ(τ) = exp{-1/(1-τ²)}` on `|τ| < 1` with its first two derivatives.
fn psi(tau: f64) -> (f64, f64, f64) {
    if tau.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let w = 1.0 - tau * tau;
    let v = (-1.0 / w).exp();
    let g1 = -2.0 * tau / (w * w);
    let g2 = -2.0 / (w * w) - 8.0 * tau * tau / (w * w * w);
    (v, v * g1, v * (g1 * g1 + g2))
}

/// Product bump `ψ((t-ct)/wt) · ψ((x-cx)/wx)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center_t: f64,
    pub width_t: f64,
    pub center_x: f64,
    pub width_x: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Zero,
    Bump(Bump),
}

impl TestFunction {
    pub fn id(&self) -> String {
        match self {
            TestFunction::Zero => "zero".into(),
            TestFunction::Bump(b) => format!(
                "bump(t={},{};x={},{})",
                b.center_t, b.width_t, b.center_x, b.width_x
            ),
        }
    }

    /// `(φ_t, φ_x, φ_xx)` at `(t, x)`.
    pub fn derivatives(&self, t: f64, x: f64) -> (f64, f64, f64) {
        match self {
            TestFunction::Zero => (0.0, 0.0, 0.0),
            TestFunction::Bump(b) => {
                let (pt, pt1, _) = psi((t - b.center_t) / b.width_t);
                if pt == 0.0 && pt1 == 0.0 {
                    return (0.0, 0.0, 0.0);
                }
                let (px, px1, px2) = psi((x - b.center_x) / b.width_x);
                (
                    pt1 / b.width_t * px,
                    pt * px1 / b.width_x,
                    pt * px2 / (b.width_x * b.width_x),
                )
            }
        }
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        match self {
            TestFunction::Zero => 0.0,
            TestFunction::Bump(b) => {
                psi((t - b.center_t) / b.width_t).0 * psi((x - b.center_x) / b.width_x).0
            }
        }
    }

    /// Closed time support, `None` for the zero function.
    pub fn time_support(&self) -> Option<(f64, f64)> {
        match self {
            TestFunction::Zero => None,
            TestFunction::Bump(b) => Some((b.center_t - b.width_t, b.center_t + b.width_t)),
        }
    }
}

/// Bump whose time support must lie strictly inside `window`.
pub fn make_bump(
    center_t: f64,
    width_t: f64,
    center_x: f64,
    width_x: f64,
    window: (f64, f64),
) -> Result<TestFunction> {
    let all_finite = [center_t, width_t, center_x, width_x]
        .iter()
        .all(|v| v.is_finite());
    if !all_finite || width_t <= 0.0 || width_x <= 0.0 {
        return Err(Error::SupportOutOfRange(format!(
            "widths must be positive and finite (width_t={width_t}, width_x={width_x})"
        )));
    }
    let (a, b) = (center_t - width_t, center_t + width_t);
    if !(a > window.0 && b < window.1) {
        return Err(Error::SupportOutOfRange(format!(
            "time support [{a}, {b}] not inside ({}, {})",
            window.0, window.1
        )));
    }
    Ok(TestFunction::Bump(Bump {
        center_t,
        width_t,
        center_x,
        width_x,
    }))
}

/// Five bumps over the bulk of a unit-mean law started at `x_scale` on `(s, T)`.
pub fn standard_bumps(s: f64, horizon: f64, x_scale: f64) -> Result<Vec<TestFunction>> {
    let ct = 0.5 * (s + horizon);
    let wt = 0.3 * (horizon - s);
    [(0.7, 0.4), (1.0, 0.4), (1.3, 0.5), (0.9, 0.25), (1.6, 0.6)]
        .iter()
        .map(|&(cx, wx)| make_bump(ct, wt, cx * x_scale, wx * x_scale, (s, horizon)))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub test_function_id: String,
    pub residual: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub include_second_order: bool,
    pub bootstrap_resamples: usize,
    pub bootstrap_seed: u64,
    pub pass: bool,
}

/// Monte Carlo estimate of
/// `∫_s^T E[φ_t + φ_x b(X_r) + φ_xx X_r D_{η_r}X_r] dr`, trapezoid in `r`
/// over the run's output grid. With `include_second_order = false` the last
/// term is dropped.
pub fn fp_residual(
    run: &EnsembleRun,
    phi: &TestFunction,
    include_second_order: bool,
) -> Result<ResidualReport> {
    let deta = run.deta().ok_or(Error::NoDerivatives)?;
    let s = run.spec().start();
    let horizon = run.spec().partition().horizon();
    if let Some((a, b)) = phi.time_support() {
        if !(a > s && b < horizon) {
            return Err(Error::UnsupportedTestFunction {
                start: s,
                end: horizon,
            });
        }
    }
    let times = run.output().times();
    let nt = times.len();
    let drift = *run.spec().drift();
    let x = run.x();
    let per_path: Vec<f64> = (0..run.n_paths())
        .map(|i| {
            let mut acc = 0.0;
            let mut prev = 0.0;
            for (j, &t) in times.iter().enumerate() {
                let k = i * nt + j;
                let (ft, fx, fxx) = phi.derivatives(t, x[k]);
                let mut f = ft + fx * drift.value(x[k]);
                if include_second_order {
                    f += fxx * x[k] * deta[k];
                }
                if j > 0 {
                    acc += 0.5 * (t - times[j - 1]) * (prev + f);
                }
                prev = f;
            }
            acc
        })
        .collect();
    let residual = mean(&per_path);
    let boot = bootstrap(&per_path, BOOTSTRAP_RESAMPLES, BOOTSTRAP_SEED, |v| mean(v));
    Ok(ResidualReport {
        test_function_id: phi.id(),
        residual,
        std_error: boot.std_error,
        n_paths: run.n_paths(),
        include_second_order,
        bootstrap_resamples: boot.resamples,
        bootstrap_seed: boot.seed,
        pass: residual.abs() <= 3.0 * boot.std_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump() -> TestFunction {
        make_bump(0.5, 0.3, 1.0, 0.4, (0.0, 1.0)).unwrap()
    }

    #[test]
    fn value_at_center_and_outside() {
        let b = bump();
        assert!((b.value(0.5, 1.0) - (-2.0f64).exp()).abs() < 1e-16);
        assert_eq!(b.value(0.9, 1.0), 0.0);
        assert_eq!(b.derivatives(0.5, 2.0), (0.0, 0.0, 0.0));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = bump();
        let h = 1e-4;
        for &(t, x) in &[(0.5, 1.0), (0.42, 1.13), (0.61, 0.8)] {
            let (ft, fx, fxx) = b.derivatives(t, x);
            let dt = (b.value(t + h, x) - b.value(t - h, x)) / (2.0 * h);
            let dx = (b.value(t, x + h) - b.value(t, x - h)) / (2.0 * h);
            let dxx = (b.value(t, x + h) - 2.0 * b.value(t, x) + b.value(t, x - h)) / (h * h);
            assert!((ft - dt).abs() < 1e-6);
            assert!((fx - dx).abs() < 1e-6);
            assert!((fxx - dxx).abs() < 1e-6);
        }
    }

    #[test]
    fn support_checks() {
        assert!(matches!(
            make_bump(0.2, 0.3, 1.0, 0.4, (0.0, 1.0)),
            Err(Error::SupportOutOfRange(_))
        ));
        assert!(make_bump(0.5, 0.0, 1.0, 0.4, (0.0, 1.0)).is_err());
        assert_eq!(standard_bumps(0.0, 1.0, 1.0).unwrap().len(), 5);
    }
}
