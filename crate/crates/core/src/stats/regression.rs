use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{mean_and_se, pairwise_sum};

pub const DEFAULT_BINS: usize = 64;
pub const DEFAULT_MIN_COUNT: usize = 50;

#[derive(Clone, Debug, Serialize)]
pub struct GBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Mean of the regressor within the bin.
    pub x_mean: f64,
    /// Mean of the response within the bin; NaN for an empty bin.
    pub m: f64,
    pub stderr: f64,
    /// `count >= min_count`.
    pub reported: bool,
}

/// Piecewise-constant estimate of `E[D_{η_r}X_r | X_r = x]` on equal-width bins.
#[derive(Clone, Debug, Serialize)]
pub struct GEstimate {
    pub t: f64,
    pub bins: Vec<GBin>,
    pub n_samples: usize,
    pub min_count: usize,
}

impl GEstimate {
    pub fn reported(&self) -> impl Iterator<Item = &GBin> {
        self.bins.iter().filter(|b| b.reported)
    }

    /// `Σ count·m / n` over all non-empty bins.
    pub fn tower_mean(&self) -> f64 {
        let terms: Vec<f64> = self
            .bins
            .iter()
            .filter(|b| b.count > 0)
            .map(|b| b.count as f64 * b.m)
            .collect();
        pairwise_sum(&terms) / self.n_samples as f64
    }

    /// `Σ |m|^q · count / n` over all non-empty bins.
    pub fn q_moment(&self, q: f64) -> f64 {
        let terms: Vec<f64> = self
            .bins
            .iter()
            .filter(|b| b.count > 0)
            .map(|b| b.m.abs().powf(q) * b.count as f64)
            .collect();
        pairwise_sum(&terms) / self.n_samples as f64
    }
}

/// Bins `x` into `n_bins` equal-width cells over its range and averages `d`
/// within each.
pub fn regress_g(
    t: f64,
    x: &[f64],
    d: &[f64],
    n_bins: usize,
    min_count: usize,
) -> Result<GEstimate> {
    if x.len() != d.len() {
        return Err(Error::DimensionMismatch {
            what: "derivative samples",
            expected: x.len(),
            got: d.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: x.len(),
        });
    }
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be >= 1".into()));
    }
    if x.iter().chain(d).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite sample".into()));
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;
    let mut xs: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    let mut ds: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for (&xv, &dv) in x.iter().zip(d) {
        let b = if width > 0.0 {
            (((xv - lo) / width) as usize).min(n_bins - 1)
        } else {
            0
        };
        xs[b].push(xv);
        ds[b].push(dv);
    }
    let bins: Vec<GBin> = (0..n_bins)
        .map(|b| {
            let count = ds[b].len();
            let (m, stderr) = if count > 0 {
                mean_and_se(&ds[b])
            } else {
                (f64::NAN, f64::NAN)
            };
            let x_mean = if count > 0 {
                pairwise_sum(&xs[b]) / count as f64
            } else {
                f64::NAN
            };
            GBin {
                lo: lo + b as f64 * width,
                hi: if b + 1 == n_bins {
                    hi
                } else {
                    lo + (b + 1) as f64 * width
                },
                count,
                x_mean,
                m,
                stderr,
                reported: count >= min_count && count > 0,
            }
        })
        .collect();
    if !bins.iter().any(|b| b.reported) {
        return Err(Error::EmptyBins { min_count });
    }
    Ok(GEstimate {
        t,
        bins,
        n_samples: x.len(),
        min_count,
    })
}
