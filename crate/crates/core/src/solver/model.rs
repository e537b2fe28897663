use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Direction, KernelSlice, Partition};
use crate::paths::PathSample;

/// Registry of drifts with bounded first and second space derivatives
/// (except `Linear`, which is globally Lipschitz with constant derivatives).
/// All entries are autonomous: `b(r, x) = b(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum Drift {
    Zero,
    /// `beta * x`
    Linear {
        beta: f64,
    },
    /// `a * tanh(c * x)`
    TanhLogistic {
        a: f64,
        c: f64,
    },
    /// `a * sin(omega * x)`
    SinDrift {
        a: f64,
        omega: f64,
    },
}

impl Drift {
    pub fn is_zero(&self) -> bool {
        match *self {
            Drift::Zero => true,
            Drift::Linear { beta } => beta == 0.0,
            Drift::TanhLogistic { a, c } => a == 0.0 || c == 0.0,
            Drift::SinDrift { a, omega } => a == 0.0 || omega == 0.0,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Drift::Zero => 0.0,
            Drift::Linear { beta } => beta * x,
            Drift::TanhLogistic { a, c } => a * (c * x).tanh(),
            Drift::SinDrift { a, omega } => a * (omega * x).sin(),
        }
    }

    pub fn dx(&self, x: f64) -> f64 {
        match *self {
            Drift::Zero => 0.0,
            Drift::Linear { beta } => beta,
            Drift::TanhLogistic { a, c } => {
                let th = (c * x).tanh();
                a * c * (1.0 - th * th)
            }
            Drift::SinDrift { a, omega } => a * omega * (omega * x).cos(),
        }
    }

    pub fn dxx(&self, x: f64) -> f64 {
        match *self {
            Drift::Zero | Drift::Linear { .. } => 0.0,
            Drift::TanhLogistic { a, c } => {
                let th = (c * x).tanh();
                -2.0 * a * c * c * th * (1.0 - th * th)
            }
            Drift::SinDrift { a, omega } => -a * omega * omega * (omega * x).sin(),
        }
    }

    /// Lipschitz constant `sup |b_x|`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Drift::Zero => 0.0,
            Drift::Linear { beta } => beta.abs(),
            Drift::TanhLogistic { a, c } => (a * c).abs(),
            Drift::SinDrift { a, omega } => (a * omega).abs(),
        }
    }

    /// `M` with `|b(x)| <= M (1 + |x|)`.
    pub fn growth(&self) -> f64 {
        match *self {
            Drift::Zero => 0.0,
            Drift::Linear { beta } => beta.abs(),
            Drift::TanhLogistic { a, .. } => a.abs(),
            Drift::SinDrift { a, .. } => a.abs(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Drift::Zero => true,
            Drift::Linear { beta } => beta.is_finite(),
            Drift::TanhLogistic { a, c } => a.is_finite() && c.is_finite(),
            Drift::SinDrift { a, omega } => a.is_finite() && omega.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "non-finite drift parameter in {self:?}"
            )))
        }
    }
}

/// The initial datum `Y` as a functional of the path.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Deterministic {
        x0: f64,
    },
    /// `Y = y0 * E(g)`.
    LognormalExp {
        y0: f64,
        direction: Direction,
    },
}

impl InitialCondition {
    pub fn value(&self, ps: &PathSample) -> Result<f64> {
        match self {
            InitialCondition::Deterministic { x0 } => Ok(*x0),
            InitialCondition::LognormalExp { y0, direction } => {
                let w = ps.wiener_integral(direction.step())?;
                Ok(y0 * (w - 0.5 * direction.norm_sq()).exp())
            }
        }
    }

    /// `D_h Y` on the given path.
    pub fn derivative(&self, ps: &PathSample, h: &Direction) -> Result<f64> {
        match self {
            InitialCondition::Deterministic { .. } => Ok(0.0),
            InitialCondition::LognormalExp { direction, .. } => {
                Ok(self.value(ps)? * direction.inner(h))
            }
        }
    }

    /// True when `D_h Y` vanishes for every path.
    pub fn degenerate_along(&self, h: &Direction) -> bool {
        match self {
            InitialCondition::Deterministic { .. } => true,
            InitialCondition::LognormalExp { y0, direction } => {
                *y0 == 0.0 || direction.inner(h) == 0.0
            }
        }
    }
}

/// Drift, piecewise-constant diffusion weights, initial datum and start time.
#[derive(Clone, Debug, Serialize)]
pub struct ModelSpec {
    partition: Partition,
    drift: Drift,
    sigma: Vec<f64>,
    init: InitialCondition,
    start: f64,
}

impl ModelSpec {
    pub fn new(
        partition: &Partition,
        drift: Drift,
        sigma: Option<Vec<f64>>,
        init: InitialCondition,
        start: f64,
    ) -> Result<Self> {
        drift.validate()?;
        let n = partition.num_intervals();
        let sigma = sigma.unwrap_or_else(|| vec![1.0; n]);
        if sigma.len() != n {
            return Err(Error::DimensionMismatch {
                what: "sigma",
                expected: n,
                got: sigma.len(),
            });
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "sigma weights must be finite".into(),
            ));
        }
        let horizon = partition.horizon();
        if !(start >= 0.0 && start < horizon) {
            return Err(Error::out_of_range("s", start, 0.0, horizon));
        }
        if let InitialCondition::LognormalExp { y0, .. } = &init {
            if !y0.is_finite() {
                return Err(Error::InvalidArgument("y0 must be finite".into()));
            }
        }
        Ok(ModelSpec {
            partition: partition.clone(),
            drift,
            sigma,
            init,
            start,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn drift(&self) -> &Drift {
        &self.drift
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn init(&self) -> &InitialCondition {
        &self.init
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn unit_sigma(&self) -> bool {
        self.sigma.iter().all(|&v| v == 1.0)
    }

    /// `κ_{s,t}`.
    pub fn kappa(&self, t: f64) -> Result<KernelSlice> {
        KernelSlice::weighted(&self.partition, self.start, t, &self.sigma)
    }
}
