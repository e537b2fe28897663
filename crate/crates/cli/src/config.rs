//! JSON run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wickwz_core::kernels::{Direction, Partition};
use wickwz_core::solver::{Drift, InitialCondition, ModelSpec};
use wickwz_core::stats::Bump;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionConfig {
    Uniform { n: usize, horizon: f64 },
    Points(Vec<f64>),
}

impl PartitionConfig {
    pub fn build(&self) -> wickwz_core::Result<Partition> {
        match self {
            PartitionConfig::Uniform { n, horizon } => Partition::uniform(*n, *horizon),
            PartitionConfig::Points(pts) => Partition::new(pts.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DirectionConfig {
    Haar,
    Constant(f64),
    /// `1_{[a,b)}`
    Indicator([f64; 2]),
}

impl DirectionConfig {
    pub fn build(&self, p: &Partition) -> wickwz_core::Result<Direction> {
        match self {
            DirectionConfig::Haar => Ok(Direction::haar(p)),
            DirectionConfig::Constant(c) => Direction::constant(p, *c),
            DirectionConfig::Indicator([a, b]) => Direction::indicator(p, *a, *b),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    Deterministic {
        x0: f64,
    },
    LognormalExp {
        y0: f64,
        direction: DirectionConfig,
    },
    /// `x0·E(1_{[0,s)})`, the restarted geometric Brownian motion.
    Gbm {
        x0: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub drift: Drift,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    pub init: InitConfig,
    #[serde(default)]
    pub s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    CheckDerivative,
    Density,
    Fp,
    Convergence,
    GbmDemo,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::CheckDerivative => "check-derivative",
            Experiment::Density => "density",
            Experiment::Fp => "fp",
            Experiment::Convergence => "convergence",
            Experiment::GbmDemo => "gbm-demo",
        }
    }
}

fn default_substeps() -> usize {
    32
}
fn default_paths() -> usize {
    1000
}
fn default_eps() -> f64 {
    wickwz_core::malliavin::DEFAULT_EPS
}
fn default_eps_list() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4, 1e-5]
}
fn default_check_paths() -> usize {
    100
}
fn default_tolerance() -> f64 {
    1e-5
}
fn default_q() -> f64 {
    5.0
}
fn default_trim() -> f64 {
    wickwz_core::malliavin::DEFAULT_TRIM
}
fn default_grid_points() -> usize {
    1001
}
fn default_l1_tolerance() -> f64 {
    0.05
}
fn default_bins() -> usize {
    wickwz_core::stats::DEFAULT_BINS
}
fn default_min_count() -> usize {
    wickwz_core::stats::DEFAULT_MIN_COUNT
}
fn default_ns() -> Vec<usize> {
    vec![4, 8, 16, 32, 64, 128, 256]
}
fn default_seeds() -> usize {
    200
}
fn default_slope_range() -> [f64; 2] {
    [0.4, 0.55]
}
fn default_points_per_interval() -> usize {
    16
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivativeConfig {
    #[serde(default = "default_direction")]
    pub direction: DirectionConfig,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_eps_list")]
    pub eps_list: Vec<f64>,
    #[serde(default = "default_check_paths")]
    pub check_paths: usize,
    /// Largest accepted relative closed-form vs FD discrepancy.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_trim")]
    pub trim: f64,
    /// Time of the inverse-moment estimate; defaults to `T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

fn default_direction() -> DirectionConfig {
    DirectionConfig::Haar
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    /// Defaults to the midpoint of the first subinterval after `s`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_l1_tolerance")]
    pub l1_tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpConfig {
    /// Defaults to five bumps over the bulk of the law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bumps: Option<Vec<Bump>>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Regression time for `g_estimate.csv`; defaults to the density time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regression_t: Option<f64>,
    #[serde(default = "default_bins")]
    pub n_bins: usize,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    #[serde(default = "default_ns")]
    pub ns: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_slope_range")]
    pub slope_range: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbmDemoConfig {
    #[serde(default = "default_points_per_interval")]
    pub points_per_interval: usize,
}

macro_rules! default_via_serde {
    ($($t:ty),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                serde_json::from_str("{}").expect("all fields have defaults")
            }
        }
    )*};
}
default_via_serde!(
    DerivativeConfig,
    DensityConfig,
    FpConfig,
    ConvergenceConfig,
    GbmDemoConfig
);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub partition: PartitionConfig,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub master_seed: u64,
    pub model: ModelConfig,
    /// Output times; every fine node from `s` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_times: Option<Vec<f64>>,
    /// Extra experiments run by `simulate` after the ensemble is written.
    #[serde(default)]
    pub experiments: Vec<Experiment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub derivative: DerivativeConfig,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub fp: FpConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default)]
    pub gbm_demo: GbmDemoConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("{path}: {}", e.into_inner()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn partition(&self) -> Result<Partition, CliError> {
        self.partition
            .build()
            .map_err(|e| CliError::Config(format!("partition: {e}")))
    }

    pub fn model_spec(&self, p: &Partition) -> Result<ModelSpec, CliError> {
        let m = &self.model;
        let field = |name: &'static str| {
            move |e: wickwz_core::Error| CliError::Config(format!("model.{name}: {e}"))
        };
        let init = match &m.init {
            InitConfig::Deterministic { x0 } => InitialCondition::Deterministic { x0: *x0 },
            InitConfig::LognormalExp { y0, direction } => InitialCondition::LognormalExp {
                y0: *y0,
                direction: direction.build(p).map_err(field("init.direction"))?,
            },
            InitConfig::Gbm { x0 } => {
                if m.s == 0.0 {
                    InitialCondition::Deterministic { x0: *x0 }
                } else {
                    InitialCondition::LognormalExp {
                        y0: *x0,
                        direction: Direction::indicator(p, 0.0, m.s).map_err(field("s"))?,
                    }
                }
            }
        };
        ModelSpec::new(p, m.drift, m.sigma.clone(), init, m.s).map_err(field("spec"))
    }

    /// Scale of the initial datum, used to place default test functions.
    pub fn x_scale(&self) -> f64 {
        let v = match &self.model.init {
            InitConfig::Deterministic { x0 } | InitConfig::Gbm { x0 } => *x0,
            InitConfig::LognormalExp { y0, .. } => *y0,
        };
        if v.abs() > 0.0 {
            v.abs()
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "partition": {"uniform": {"n": 4, "horizon": 1.0}},
        "model": {"drift": {"id": "tanh_logistic", "a": 0.5, "c": 1.0},
                  "init": {"kind": "lognormal_exp", "y0": 1.0, "direction": "haar"}}
    }"#;

    #[test]
    fn round_trip_is_exact() {
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.model.s = 0.1 + 0.2;
        c.master_seed = u64::MAX;
        let text = c.to_json();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn unknown_drift_names_field() {
        let bad = MINIMAL.replace("tanh_logistic", "cubic");
        let err = RunConfig::from_json(&bad).unwrap_err();
        assert!(err.to_string().contains("model.drift"), "{err}");
    }

    #[test]
    fn unknown_experiment_rejected() {
        let bad = MINIMAL.replacen('{', r#"{"experiments": ["fp", "nope"],"#, 1);
        let err = RunConfig::from_json(&bad).unwrap_err();
        assert!(err.to_string().contains("experiments"), "{err}");
    }
}
