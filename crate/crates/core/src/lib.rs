//! Wick-type Wong–Zakai approximations of scalar Itô SDEs driven by a
//! polygonal Brownian path, with closed-form Malliavin directional
//! derivatives and Monte Carlo law diagnostics.

// `!(a > b)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gbm;
pub mod kernels;
pub mod malliavin;
pub mod numeric;
pub mod paths;
pub mod rng;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
