//! Pathwise solution of the Wick equation by the reduction method: an
//! ordinary random ODE for `Z`, then `X_t = (T_{-κ_{s,t}} Z_t) · E(κ_{s,t})`.

mod ensemble;
mod model;

use serde::Serialize;

pub use ensemble::{run_ensemble, EnsembleOptions, EnsembleRun, SCHEMA_VERSION};
pub use model::{Drift, InitialCondition, ModelSpec};

use crate::error::{Error, Result};
use crate::kernels::TIME_TOL;
use crate::paths::{stoch_exp, FineGrid, PathSample, StochExpValue};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    /// RK4 steps per fine-grid cell.
    pub rk_substeps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { rk_substeps: 1 }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if self.rk_substeps == 0 {
            return Err(Error::InvalidArgument("rk_substeps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Output times, stored as strictly increasing fine-grid node indices.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputGrid {
    grid: FineGrid,
    indices: Vec<usize>,
}

impl OutputGrid {
    pub fn from_indices(grid: &FineGrid, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("output grid is empty".into()));
        }
        if indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "output times must be strictly increasing".into(),
            ));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i > grid.last()) {
            return Err(Error::GridMisaligned(bad as f64));
        }
        Ok(OutputGrid {
            grid: grid.clone(),
            indices,
        })
    }

    pub fn from_times(grid: &FineGrid, times: &[f64]) -> Result<Self> {
        let idx = times
            .iter()
            .map(|&t| grid.index_of(t))
            .collect::<Result<Vec<_>>>()?;
        Self::from_indices(grid, idx)
    }

    /// Every fine node in `[s, T]`.
    pub fn all_from(grid: &FineGrid, s: f64) -> Result<Self> {
        let i0 = grid.index_of(s)?;
        Self::from_indices(grid, (i0..=grid.last()).collect())
    }

    /// Every fine node in `[s, T]` whose index is a multiple of `stride`,
    /// plus `s` itself and `T`.
    pub fn strided(grid: &FineGrid, s: f64, stride: usize) -> Result<Self> {
        let stride = stride.max(1);
        let i0 = grid.index_of(s)?;
        let mut idx: Vec<usize> = std::iter::once(i0)
            .chain((i0 + 1..=grid.last()).filter(|i| i % stride == 0))
            .collect();
        if *idx.last().unwrap() != grid.last() {
            idx.push(grid.last());
        }
        Self::from_indices(grid, idx)
    }

    pub fn fine_grid(&self) -> &FineGrid {
        &self.grid
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.indices.iter().map(|&i| self.grid.time(i)).collect()
    }

    pub fn time(&self, j: usize) -> f64 {
        self.grid.time(self.indices[j])
    }

    pub fn position_of(&self, t: f64) -> Option<usize> {
        self.indices
            .iter()
            .position(|&i| (self.grid.time(i) - t).abs() <= TIME_TOL)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub z_values: Vec<f64>,
    pub x_values: Vec<f64>,
}

/// `∫κ_{s,r} dB` and `|κ_{s,r}|²` as functions of `r`, from the partition
/// increments of one path.
struct Exponents {
    lo: Vec<f64>,
    coef: Vec<f64>,
    db: Vec<f64>,
    width: Vec<f64>,
    pre_i: Vec<f64>,
    pre_n: Vec<f64>,
}

impl Exponents {
    fn new(ps: &PathSample, spec: &ModelSpec) -> Result<Self> {
        let p = ps.partition();
        let s = spec.start();
        let ks = p.locate(s)?;
        let n = p.num_intervals();
        let db = ps.partition_increments();
        let mut lo = vec![0.0; n];
        let mut coef = vec![0.0; n];
        let mut width = vec![0.0; n];
        let mut pre_i = vec![0.0; n];
        let mut pre_n = vec![0.0; n];
        let (mut ai, mut an) = (0.0, 0.0);
        for k in ks..n {
            let (a, b) = p.interval(k);
            let d = b - a;
            lo[k] = a.max(s);
            coef[k] = spec.sigma()[k] / d;
            width[k] = d;
            pre_i[k] = ai;
            pre_n[k] = an;
            let c = coef[k] * (b - lo[k]);
            ai += c * db[k];
            an += c * c * d;
        }
        Ok(Exponents {
            lo,
            coef,
            db,
            width,
            pre_i,
            pre_n,
        })
    }

    /// `∫κ_{s,r}dB + |κ_{s,r}|²/2` for `r` in the closure of subinterval `k`.
    #[inline]
    fn lift(&self, k: usize, r: f64) -> f64 {
        let c = self.coef[k] * (r - self.lo[k]);
        let i = self.pre_i[k] + c * self.db[k];
        let n = self.pre_n[k] + c * c * self.width[k];
        i + 0.5 * n
    }
}

/// Integrates `dZ/dr = b(Z e^{λ_r}) e^{-λ_r}` (with `λ_r = ∫κ_{s,r}dB + |κ_{s,r}|²/2`)
/// from node `i0` to node `i1`, optionally alongside `dL/dr = b_x(Z e^{λ_r})`.
/// `record` receives `(node, Z)` after every fine cell.
#[allow(clippy::too_many_arguments)]
fn integrate(
    ps: &PathSample,
    spec: &ModelSpec,
    y: f64,
    i0: usize,
    i1: usize,
    cfg: &SolverConfig,
    with_log: bool,
    mut record: impl FnMut(usize, f64),
) -> Result<(f64, f64)> {
    let drift = *spec.drift();
    let grid = ps.grid();
    record(i0, y);
    if drift.is_zero() {
        for i in i0 + 1..=i1 {
            record(i, y);
        }
        return Ok((y, 0.0));
    }
    let ex = Exponents::new(ps, spec)?;
    let rhs = |k: usize, r: f64, z: f64| -> (f64, f64) {
        let e = ex.lift(k, r).exp();
        let x = z * e;
        let dl = if with_log { drift.dx(x) } else { 0.0 };
        (drift.value(x) / e, dl)
    };
    let sub = cfg.rk_substeps;
    let (mut z, mut l) = (y, 0.0);
    for i in i0..i1 {
        let k = grid.cell_of_node(i);
        let r0 = grid.time(i);
        let h = (grid.time(i + 1) - r0) / sub as f64;
        for j in 0..sub {
            let r = r0 + j as f64 * h;
            let (k1, m1) = rhs(k, r, z);
            let (k2, m2) = rhs(k, r + 0.5 * h, z + 0.5 * h * k1);
            let (k3, m3) = rhs(k, r + 0.5 * h, z + 0.5 * h * k2);
            let (k4, m4) = rhs(k, r + h, z + h * k3);
            z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            l += h / 6.0 * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
            if !z.is_finite() || !l.is_finite() {
                return Err(Error::NonFiniteState {
                    path: 0,
                    time: r + h,
                });
            }
        }
        record(i + 1, z);
    }
    Ok((z, l))
}

fn check_grid(ps: &PathSample, spec: &ModelSpec) -> Result<usize> {
    ps.partition().ensure_same(spec.partition())?;
    ps.grid().index_of(spec.start())
}

/// `Z` at every output time, on the path as given.
pub fn solve_z(
    ps: &PathSample,
    spec: &ModelSpec,
    out: &OutputGrid,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let i0 = check_grid(ps, spec)?;
    if out.fine_grid() != ps.grid() {
        return Err(Error::PartitionMismatch);
    }
    if out.indices()[0] < i0 {
        return Err(Error::GridMisaligned(out.time(0)));
    }
    let y = spec.init().value(ps)?;
    let last = *out.indices().last().unwrap();
    let mut full = vec![0.0; last + 1];
    integrate(ps, spec, y, i0, last, cfg, false, |i, z| full[i] = z)?;
    Ok(out.indices().iter().map(|&i| full[i]).collect())
}

/// Pieces of one reconstruction at time `t`, on the path `ω̃ = ω - ∫κ_{s,t}`.
pub(crate) struct Reconstruction {
    pub shifted: PathSample,
    /// `Z_t(ω̃)`
    pub z_tilde: f64,
    /// `∫_s^t b_x(r, Z_r(ω̃) e^{λ_r(ω̃)}) dr`, zero unless requested.
    pub log_v: f64,
    /// `E(κ_{s,t})(ω)`
    pub e_kappa: StochExpValue,
}

impl Reconstruction {
    pub fn x(&self) -> f64 {
        self.z_tilde * self.e_kappa.value
    }
}

pub(crate) fn reconstruct(
    ps: &PathSample,
    spec: &ModelSpec,
    t: f64,
    cfg: &SolverConfig,
    with_log: bool,
) -> Result<Reconstruction> {
    cfg.validate()?;
    let i0 = check_grid(ps, spec)?;
    let it = ps.grid().index_of(t)?;
    if it < i0 {
        return Err(Error::out_of_range(
            "t",
            t,
            spec.start(),
            ps.partition().horizon(),
        ));
    }
    let kappa = spec.kappa(ps.grid().time(it))?;
    let e_kappa = stoch_exp(ps, &kappa)?;
    let shifted = ps.shifted(&kappa, -1.0)?;
    let y = spec.init().value(&shifted)?;
    let (z_tilde, log_v) = integrate(&shifted, spec, y, i0, it, cfg, with_log, |_, _| {})?;
    Ok(Reconstruction {
        shifted,
        z_tilde,
        log_v,
        e_kappa,
    })
}

/// `X_t` by re-solving `Z` on the path shifted by `-κ_{s,t}`.
pub fn reconstruct_x(ps: &PathSample, spec: &ModelSpec, t: f64, cfg: &SolverConfig) -> Result<f64> {
    Ok(reconstruct(ps, spec, t, cfg, false)?.x())
}

/// `Z` and `X` at every output time.
pub fn solve(
    ps: &PathSample,
    spec: &ModelSpec,
    out: &OutputGrid,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    let z_values = solve_z(ps, spec, out, cfg)?;
    let times = out.times();
    let x_values = times
        .iter()
        .map(|&t| reconstruct_x(ps, spec, t, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        times,
        z_values,
        x_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Direction, KernelSlice, Partition};
    use crate::paths::sample_path;

    fn p4() -> Partition {
        Partition::uniform(4, 1.0).unwrap()
    }

    fn spec(drift: Drift, init: InitialCondition, s: f64) -> ModelSpec {
        ModelSpec::new(&p4(), drift, None, init, s).unwrap()
    }

    #[test]
    fn zero_drift_z_is_constant() {
        let p = p4();
        let ps = sample_path(&p, 8, 1).unwrap();
        let h = Direction::haar(&p);
        let sp = spec(
            Drift::Zero,
            InitialCondition::LognormalExp {
                y0: 2.0,
                direction: h,
            },
            0.25,
        );
        let out = OutputGrid::all_from(ps.grid(), 0.25).unwrap();
        let z = solve_z(&ps, &sp, &out, &SolverConfig::default()).unwrap();
        let y = sp.init().value(&ps).unwrap();
        assert!(z.iter().all(|&v| v == y));
    }

    #[test]
    fn zero_drift_matches_closed_form() {
        let p = p4();
        for seed in 0..10 {
            let ps = sample_path(&p, 8, seed).unwrap();
            let sp = spec(
                Drift::Zero,
                InitialCondition::Deterministic { x0: 1.5 },
                0.0,
            );
            for t in [0.0, 0.125, 0.375, 0.5, 1.0] {
                let x = reconstruct_x(&ps, &sp, t, &SolverConfig::default()).unwrap();
                let k = KernelSlice::new(&p, 0.0, t).unwrap();
                let expect = 1.5 * stoch_exp(&ps, &k).unwrap().value;
                assert!((x / expect - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn linear_drift_z_closed_form() {
        let p = p4();
        let ps = sample_path(&p, 32, 3).unwrap();
        let sp = spec(
            Drift::Linear { beta: 0.7 },
            InitialCondition::Deterministic { x0: 1.0 },
            0.0,
        );
        let out = OutputGrid::all_from(ps.grid(), 0.0).unwrap();
        let z = solve_z(&ps, &sp, &out, &SolverConfig::default()).unwrap();
        for (t, v) in out.times().iter().zip(&z) {
            assert!((v / (0.7 * t).exp() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn start_time_returns_initial_value() {
        let p = p4();
        let ps = sample_path(&p, 8, 2).unwrap();
        let sp = spec(
            Drift::TanhLogistic { a: 1.0, c: 2.0 },
            InitialCondition::LognormalExp {
                y0: 1.0,
                direction: Direction::haar(&p),
            },
            0.25,
        );
        let y = sp.init().value(&ps).unwrap();
        let x = reconstruct_x(&ps, &sp, 0.25, &SolverConfig::default()).unwrap();
        assert_eq!(x, y);
        let out = OutputGrid::all_from(ps.grid(), 0.25).unwrap();
        let tr = solve(&ps, &sp, &out, &SolverConfig::default()).unwrap();
        assert_eq!(tr.z_values[0], y);
        assert_eq!(tr.x_values[0], y);
    }

    #[test]
    fn misaligned_times_are_rejected() {
        let p = p4();
        let ps = sample_path(&p, 4, 2).unwrap();
        let sp = spec(
            Drift::Zero,
            InitialCondition::Deterministic { x0: 1.0 },
            0.0,
        );
        assert!(matches!(
            reconstruct_x(&ps, &sp, 0.01, &SolverConfig::default()),
            Err(Error::GridMisaligned(_))
        ));
    }

    #[test]
    fn overflow_is_reported() {
        let p = p4();
        let ps = sample_path(&p, 4, 2).unwrap();
        let sp = spec(
            Drift::Linear { beta: 1e308 },
            InitialCondition::Deterministic { x0: 1e300 },
            0.0,
        );
        assert!(matches!(
            reconstruct_x(&ps, &sp, 1.0, &SolverConfig::default()),
            Err(Error::NonFiniteState { .. })
        ));
    }

    #[test]
    fn output_grid_constructors() {
        let g = FineGrid::new(&p4(), 4).unwrap();
        let all = OutputGrid::all_from(&g, 0.25).unwrap();
        assert_eq!(all.len(), 13);
        let st = OutputGrid::strided(&g, 0.0, 2).unwrap();
        assert_eq!(
            st.times(),
            (0..=8).map(|j| j as f64 / 8.0).collect::<Vec<_>>()
        );
        assert!(OutputGrid::from_times(&g, &[0.5, 0.25]).is_err());
        assert!(OutputGrid::from_times(&g, &[0.3]).is_err());
    }
}
