use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{KernelSlice, Partition};
use crate::numeric::mean_and_se;
use crate::solver::{EnsembleRun, InitialCondition};

/// Ensembles smaller than this are flagged as low-power.
pub const LOW_POWER_PATHS: usize = 100;

#[derive(Clone, Debug, Serialize)]
pub struct MeanRow {
    pub t: f64,
    pub mean: f64,
    pub std_error: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    /// `|mean - target| <= 3·SE`
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MeanReport {
    pub target: f64,
    pub n_paths: usize,
    pub rows: Vec<MeanRow>,
    pub all_pass: bool,
    pub low_power: bool,
}

pub fn mean_band(t: f64, samples: &[f64], target: f64) -> MeanRow {
    let (mean, se) = mean_and_se(samples);
    let se = if se.is_finite() { se } else { f64::INFINITY };
    MeanRow {
        t,
        mean,
        std_error: se,
        band_lo: target - 3.0 * se,
        band_hi: target + 3.0 * se,
        pass: (mean - target).abs() <= 3.0 * se,
    }
}

fn report(run: &EnsembleRun, target: f64, column: impl Fn(usize) -> Vec<f64>) -> MeanReport {
    let rows: Vec<MeanRow> = (0..run.n_times())
        .map(|j| mean_band(run.output().time(j), &column(j), target))
        .collect();
    MeanReport {
        target,
        n_paths: run.n_paths(),
        all_pass: rows.iter().all(|r| r.pass),
        rows,
        low_power: run.n_paths() < LOW_POWER_PATHS,
    }
}

/// Sample mean of `X_t` against `x0` at every output time.
pub fn mean_preservation(run: &EnsembleRun, x0: f64) -> Result<MeanReport> {
    let spec = run.spec();
    if !spec.drift().is_zero() || !matches!(spec.init(), InitialCondition::Deterministic { .. }) {
        return Err(Error::WrongModel);
    }
    Ok(report(run, x0, |j| run.x_column(j)))
}

/// The naive comparator `x0·exp{B^π_t - t/2}` on the run's paths, tested
/// against the band around `x0`.
pub fn naive_comparator(run: &EnsembleRun, x0: f64) -> MeanReport {
    report(run, x0, |j| {
        let t = run.output().time(j);
        run.b_poly_column(j)
            .iter()
            .map(|b| x0 * (b - 0.5 * t).exp())
            .collect()
    })
}

/// `E[x0·exp{B^π_t - t/2}] = x0·exp{(|K_{0,t}|² - t)/2}`.
pub fn naive_expected_mean(p: &Partition, t: f64, x0: f64) -> Result<f64> {
    let k = KernelSlice::new(p, 0.0, t)?;
    Ok(x0 * (0.5 * (k.norm_sq() - t)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{run_ensemble, Drift, EnsembleOptions, ModelSpec};

    #[test]
    fn naive_mean_value() {
        let p = Partition::uniform(4, 1.0).unwrap();
        let v = naive_expected_mean(&p, 0.375, 1.0).unwrap();
        assert!((v - 0.969234).abs() < 1e-6);
    }

    #[test]
    fn single_path_is_low_power_and_passes() {
        let p = Partition::uniform(4, 1.0).unwrap();
        let sp = ModelSpec::new(
            &p,
            Drift::Zero,
            None,
            InitialCondition::Deterministic { x0: 1.0 },
            0.0,
        )
        .unwrap();
        let run = run_ensemble(&sp, &EnsembleOptions::new(2, 1, 5)).unwrap();
        let rep = mean_preservation(&run, 1.0).unwrap();
        assert!(rep.low_power && rep.all_pass);
    }

    #[test]
    fn drift_is_rejected() {
        let p = Partition::uniform(4, 1.0).unwrap();
        let sp = ModelSpec::new(
            &p,
            Drift::Linear { beta: 1.0 },
            None,
            InitialCondition::Deterministic { x0: 1.0 },
            0.0,
        )
        .unwrap();
        let run = run_ensemble(&sp, &EnsembleOptions::new(2, 2, 5)).unwrap();
        assert!(matches!(
            mean_preservation(&run, 1.0),
            Err(Error::WrongModel)
        ));
    }
}
