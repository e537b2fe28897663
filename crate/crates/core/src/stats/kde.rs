use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::mean_and_se;

pub const MIN_KDE_SAMPLES: usize = 100;

/// Kernel mass beyond this many bandwidths is ignored.
const CUTOFF: f64 = 8.0;

#[derive(Clone, Debug, Serialize)]
pub struct DensityEstimate {
    pub t: f64,
    pub grid_x: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityEstimate {
    /// Trapezoid mass over `grid_x`.
    pub fn mass(&self) -> f64 {
        trapezoid(&self.grid_x, &self.density)
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(a, b)| 0.5 * (a[1] - a[0]) * (b[0] + b[1]))
        .sum()
}

pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// `0.9 · min(sd, IQR/1.34) · n^{-1/5}`, taking `sorted` ascending.
pub fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    let (_, se) = mean_and_se(sorted);
    let sd = se * (n as f64).sqrt();
    let q = |p: f64| sorted[((p * (n - 1) as f64).round() as usize).min(n - 1)];
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (n as f64).powf(-0.2)
}

/// Gaussian-kernel density estimate at the points of `grid_x`.
pub fn kde_density(
    t: f64,
    samples: &[f64],
    bandwidth: Option<f64>,
    grid_x: &[f64],
) -> Result<DensityEstimate> {
    if samples.len() < MIN_KDE_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_KDE_SAMPLES,
            got: samples.len(),
        });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = match bandwidth {
        Some(b) if b > 0.0 && b.is_finite() => b,
        Some(b) => {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive, got {b}"
            )))
        }
        None => silverman_bandwidth(&sorted),
    };
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(
            "degenerate sample: zero bandwidth".into(),
        ));
    }
    let norm = 1.0 / (sorted.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid_x
        .par_iter()
        .map(|&x| {
            let lo = sorted.partition_point(|&v| v < x - CUTOFF * h);
            let hi = sorted.partition_point(|&v| v <= x + CUTOFF * h);
            let s: f64 = sorted[lo..hi]
                .iter()
                .map(|&v| {
                    let z = (x - v) / h;
                    (-0.5 * z * z).exp()
                })
                .sum();
            s * norm
        })
        .collect();
    Ok(DensityEstimate {
        t,
        grid_x: grid_x.to_vec(),
        density,
        bandwidth: h,
    })
}

/// `∫|p̂ - p|` by the trapezoid rule on the estimate's grid.
pub fn l1_distance(est: &DensityEstimate, pdf: impl Fn(f64) -> f64) -> f64 {
    let diff: Vec<f64> = est
        .grid_x
        .iter()
        .zip(&est.density)
        .map(|(&x, &d)| (d - pdf(x)).abs())
        .collect();
    trapezoid(&est.grid_x, &diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::GaussianSource;
    use statrs::distribution::{Continuous, Normal};

    #[test]
    fn standard_normal_recovered() {
        let mut g = GaussianSource::new(1);
        let xs: Vec<f64> = (0..100_000).map(|_| g.normal()).collect();
        let grid = uniform_grid(-6.0, 6.0, 1201);
        let est = kde_density(0.0, &xs, None, &grid).unwrap();
        let n = Normal::standard();
        assert!(l1_distance(&est, |x| n.pdf(x)) <= 0.02);
        assert!((est.mass() - 1.0).abs() <= 1e-2);
        assert!(est.density.iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            kde_density(0.0, &[1.0; 10], None, &[0.0]),
            Err(Error::TooFewSamples { got: 10, .. })
        ));
    }
}
