//! Geometric Brownian motion restarted at a breakpoint `s`: the closed-form
//! Wick–polygonal solution, the exact Itô solution and the sawtooth
//! diffusion factor `ξ^π`.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{Direction, KernelSlice, Partition, TIME_TOL};
use crate::paths::PathSample;
use crate::solver::{Drift, InitialCondition, ModelSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct GbmConfig {
    partition: Partition,
    x0: f64,
    s: f64,
}

impl GbmConfig {
    pub fn new(p: &Partition, x0: f64, s: f64) -> Result<Self> {
        if x0 == 0.0 || !x0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "x0 must be finite and non-zero, got {x0}"
            )));
        }
        check_restart(p, s)?;
        Ok(GbmConfig {
            partition: p.clone(),
            x0,
            s,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn start(&self) -> f64 {
        self.s
    }

    /// `|1_{[0,s)} + K_{s,t}|² = s + |K_{s,t}|²`.
    pub fn log_variance(&self, t: f64) -> Result<f64> {
        Ok(self.s + KernelSlice::new(&self.partition, self.s, t)?.norm_sq())
    }

    /// Zero-drift model whose initial datum is `x0·E(1_{[0,s)})`.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        let init = if self.s == 0.0 {
            InitialCondition::Deterministic { x0: self.x0 }
        } else {
            InitialCondition::LognormalExp {
                y0: self.x0,
                direction: Direction::indicator(&self.partition, 0.0, self.s)?,
            }
        };
        ModelSpec::new(&self.partition, Drift::Zero, None, init, self.s)
    }
}

fn check_restart(p: &Partition, s: f64) -> Result<usize> {
    match p.breakpoint_index(s) {
        Some(k) if k < p.num_intervals() => Ok(k),
        _ => Err(Error::InvalidArgument(format!(
            "restart time s={s} must be a breakpoint below the horizon"
        ))),
    }
}

/// `x0·exp{B_s + (B^π_t - B^π_s) - (s + |K_{s,t}|²)/2}`.
pub fn gbm_wz(ps: &PathSample, cfg: &GbmConfig, t: f64) -> Result<f64> {
    ps.partition().ensure_same(&cfg.partition)?;
    let horizon = cfg.partition.horizon();
    if !(t >= cfg.s - TIME_TOL && t <= horizon + TIME_TOL) {
        return Err(Error::out_of_range("t", t, cfg.s, horizon));
    }
    // B_s and B^π_s coincide at a breakpoint.
    let bt = ps.polygonal_value(t)?;
    Ok(cfg.x0 * (bt - 0.5 * cfg.log_variance(t)?).exp())
}

/// `x0·exp{B_t - t/2}` with the fine-grid Brownian value.
pub fn gbm_exact(ps: &PathSample, x0: f64, t: f64) -> Result<f64> {
    let horizon = ps.partition().horizon();
    if !(t >= -TIME_TOL && t <= horizon + TIME_TOL) {
        return Err(Error::out_of_range("t", t, 0.0, horizon));
    }
    Ok(x0 * (ps.value_at(t)? - 0.5 * t).exp())
}

/// `ξ^π(t) = ∫(1_{[0,s)} + K_{s,t})(u) ∂_tK_t(u) du` for `t` in `[s, T)`.
pub fn xi_pi(p: &Partition, s: f64, t: f64) -> Result<f64> {
    check_restart(p, s)?;
    let horizon = p.horizon();
    if !(t >= s - TIME_TOL && t < horizon - TIME_TOL) {
        return Err(Error::out_of_range("t", t, s, horizon));
    }
    let k = p.locate(t)?;
    // Both pieces are constant on the active cell, where ∂_tK_t = 1/Δ_k.
    Ok(p.overlap_fraction(k, 0.0, s) + p.overlap_fraction(k, s, t))
}

/// `(1/(t-s)) ∫_s^t ξ^π(r) dr`, equal to `ξ^π(s) = 0` at `t = s`.
pub fn xi_running_average(p: &Partition, s: f64, t: f64) -> Result<f64> {
    check_restart(p, s)?;
    let horizon = p.horizon();
    if !(t >= s - TIME_TOL && t <= horizon + TIME_TOL) {
        return Err(Error::out_of_range("t", t, s, horizon));
    }
    if t - s <= TIME_TOL {
        return Ok(0.0);
    }
    let k0 = p.locate(s)?;
    let k1 = p.locate(t)?;
    let mut acc = 0.0;
    for k in k0..=k1 {
        let (a, b) = p.interval(k);
        let hi = b.min(t);
        acc += (hi - a) * (hi - a) / (2.0 * (b - a));
    }
    Ok(acc / (t - s))
}

/// `(1/Δ_k) ∫_{t_k}^{t_{k+1}} ξ^π(t) dt`.
pub fn xi_interval_average(p: &Partition, k: usize) -> Result<f64> {
    if k >= p.num_intervals() {
        return Err(Error::out_of_range(
            "k",
            k as f64,
            0.0,
            (p.num_intervals() - 1) as f64,
        ));
    }
    let (a, b) = p.interval(k);
    let integral = 0.5 * (b - a);
    Ok(integral / (b - a))
}

#[derive(Clone, Debug, Serialize)]
pub struct FpCompareRow {
    pub t: f64,
    pub xi: f64,
    pub running_avg: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FpCompareReport {
    pub s: f64,
    pub rows: Vec<FpCompareRow>,
    /// `sup |ξ^π - 1/2|` over the tabulated times, with one-sided limits.
    pub sup_deviation: f64,
    /// Running average at every breakpoint after `s`.
    pub breakpoint_averages: Vec<f64>,
}

impl FpCompareReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "xi", "running_avg"])?;
        for r in &self.rows {
            out.serialize((r.t, r.xi, r.running_avg))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Tabulates `ξ^π` against the constant Itô coefficient `1/2`. At `T` the
/// left limit `1` is reported.
pub fn fp_operator_compare(p: &Partition, s: f64, t_grid: &[f64]) -> Result<FpCompareReport> {
    let k0 = check_restart(p, s)?;
    let horizon = p.horizon();
    let mut rows = Vec::with_capacity(t_grid.len());
    let mut sup: f64 = 0.0;
    for &t in t_grid {
        let xi = if (t - horizon).abs() <= TIME_TOL {
            1.0
        } else {
            xi_pi(p, s, t)?
        };
        if let Some(k) = p.breakpoint_index(t) {
            if k > k0 {
                // left limit at an interior breakpoint
                sup = sup.max(0.5);
            }
        }
        sup = sup.max((xi - 0.5).abs());
        rows.push(FpCompareRow {
            t,
            xi,
            running_avg: xi_running_average(p, s, t)?,
        });
    }
    let breakpoint_averages = p.points()[k0 + 1..]
        .iter()
        .map(|&t| xi_running_average(p, s, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(FpCompareReport {
        s,
        rows,
        sup_deviation: sup,
        breakpoint_averages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::FineGrid;

    fn p4() -> Partition {
        Partition::uniform(4, 1.0).unwrap()
    }

    #[test]
    fn xi_examples() {
        let p = p4();
        assert_eq!(xi_pi(&p, 0.0, 0.375).unwrap(), 0.5);
        for t in [0.0, 0.25, 0.5, 0.75] {
            assert_eq!(xi_pi(&p, 0.0, t).unwrap(), 0.0);
        }
        for k in 0..4 {
            assert_eq!(xi_interval_average(&p, k).unwrap(), 0.5);
        }
        assert!(xi_pi(&p, 0.0, 1.0).is_err());
        assert!(xi_pi(&p, 0.3, 0.5).is_err());
    }

    #[test]
    fn compare_report() {
        for n in [4, 16] {
            let p = Partition::uniform(n, 1.0).unwrap();
            let grid: Vec<f64> = (0..=8 * n).map(|i| i as f64 / (8 * n) as f64).collect();
            let rep = fp_operator_compare(&p, 0.0, &grid).unwrap();
            assert_eq!(rep.sup_deviation, 0.5);
            assert!(rep
                .breakpoint_averages
                .iter()
                .all(|&a| (a - 0.5).abs() < 1e-15));
            assert!((rep.rows.last().unwrap().running_avg - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_forms_on_zero_path() {
        let p = p4();
        let g = FineGrid::new(&p, 4).unwrap();
        let zero = PathSample::zero(&g);
        let cfg = GbmConfig::new(&p, 2.0, 0.25).unwrap();
        let v = gbm_wz(&zero, &cfg, 0.375).unwrap();
        assert!((v - 2.0 * (-0.5 * (0.25 + 0.0625f64)).exp()).abs() < 1e-15);
        assert_eq!(gbm_exact(&zero, 2.0, 0.0).unwrap(), 2.0);
        assert!((gbm_exact(&zero, 2.0, 0.5).unwrap() - 2.0 * (-0.25f64).exp()).abs() < 1e-15);
        assert!(GbmConfig::new(&p, 0.0, 0.25).is_err());
        assert!(GbmConfig::new(&p, 1.0, 0.3).is_err());
    }
}
