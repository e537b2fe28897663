//! Ensemble statistics: density estimates, the conditional-expectation
//! coefficient `g`, weak Fokker–Planck residuals and mean preservation.

mod fokker_planck;
mod kde;
mod mean;
mod regression;

pub use fokker_planck::{
    fp_residual, make_bump, standard_bumps, Bump, ResidualReport, TestFunction,
};
pub use kde::{
    kde_density, l1_distance, silverman_bandwidth, uniform_grid, DensityEstimate, MIN_KDE_SAMPLES,
};
pub use mean::{
    mean_band, mean_preservation, naive_comparator, naive_expected_mean, MeanReport, MeanRow,
    LOW_POWER_PATHS,
};
pub use regression::{regress_g, GBin, GEstimate, DEFAULT_BINS, DEFAULT_MIN_COUNT};
