//! Brownian paths on a fine grid, their polygonal interpolation over the
//! partition, Cameron–Martin shifts and pathwise stochastic exponentials.

use std::borrow::Cow;
use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{Direction, KernelSlice, Partition, StepFunction, TIME_TOL};
use crate::numeric::{linear_fit, mean};
use crate::rng::GaussianSource;

/// Default number of fine sub-steps per partition subinterval.
pub const DEFAULT_SUBSTEPS: usize = 32;

/// `m` equal sub-steps inside every partition subinterval; breakpoints are
/// always nodes (node `k*m` is `t_k`).
#[derive(Clone, Debug, PartialEq)]
pub struct FineGrid {
    partition: Partition,
    m: usize,
}

impl FineGrid {
    pub fn new(partition: &Partition, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::BadResolution);
        }
        Ok(FineGrid {
            partition: partition.clone(),
            m,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn substeps(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.partition.num_intervals() * self.m + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the last node (`T`).
    pub fn last(&self) -> usize {
        self.len() - 1
    }

    pub fn time(&self, i: usize) -> f64 {
        let k = i / self.m;
        let j = i % self.m;
        let pts = self.partition.points();
        if j == 0 {
            pts[k]
        } else {
            pts[k] + j as f64 * (pts[k + 1] - pts[k]) / self.m as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Partition subinterval of the fine cell `[node i, node i+1]`.
    pub fn cell_of_node(&self, i: usize) -> usize {
        (i / self.m).min(self.partition.num_intervals() - 1)
    }

    pub fn step(&self, k: usize) -> f64 {
        self.partition.width(k) / self.m as f64
    }

    pub fn index_of(&self, t: f64) -> Result<usize> {
        let horizon = self.partition.horizon();
        if !(t >= -TIME_TOL && t <= horizon + TIME_TOL) {
            return Err(Error::GridMisaligned(t));
        }
        let k = self.partition.locate(t)?;
        let (a, _) = self.partition.interval(k);
        let j = ((t - a) / self.step(k)).round() as usize;
        let i = k * self.m + j.min(self.m);
        if (self.time(i) - t).abs() <= TIME_TOL {
            Ok(i)
        } else {
            Err(Error::GridMisaligned(t))
        }
    }
}

/// One Brownian trajectory sampled at the nodes of a [`FineGrid`], plus an
/// accumulated Cameron–Martin shift `ω ↦ ω + ∫_0^· g(u) du` kept symbolically
/// as a step function and applied on read.
#[derive(Clone, Debug)]
pub struct PathSample {
    grid: FineGrid,
    base: Arc<[f64]>,
    seed: u64,
    shift: StepFunction,
}

/// Anything that can act as a shift direction.
pub trait AsStep {
    fn as_step(&self) -> Cow<'_, StepFunction>;
    fn partition_hint(&self) -> Option<&Partition> {
        None
    }
}

impl AsStep for StepFunction {
    fn as_step(&self) -> Cow<'_, StepFunction> {
        Cow::Borrowed(self)
    }
}

impl AsStep for Direction {
    fn as_step(&self) -> Cow<'_, StepFunction> {
        Cow::Borrowed(self.step())
    }
}

impl AsStep for KernelSlice {
    fn as_step(&self) -> Cow<'_, StepFunction> {
        Cow::Owned(self.to_step())
    }
    fn partition_hint(&self) -> Option<&Partition> {
        Some(self.partition())
    }
}

pub fn sample_path(p: &Partition, m: usize, seed: u64) -> Result<PathSample> {
    PathSample::sample(&FineGrid::new(p, m)?, seed)
}

impl PathSample {
    pub fn sample(grid: &FineGrid, seed: u64) -> Result<Self> {
        let mut src = GaussianSource::new(seed);
        let mut values = Vec::with_capacity(grid.len());
        values.push(0.0);
        let mut acc = 0.0;
        for k in 0..grid.partition.num_intervals() {
            let sd = grid.step(k).sqrt();
            for _ in 0..grid.m {
                acc += sd * src.normal();
                values.push(acc);
            }
        }
        Ok(Self::build(grid, values, seed))
    }

    /// Path with prescribed node values (`values[0]` must be 0).
    pub fn from_values(grid: &FineGrid, values: Vec<f64>, seed: u64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                what: "path values",
                expected: grid.len(),
                got: values.len(),
            });
        }
        if values[0] != 0.0 {
            return Err(Error::InvalidArgument("path must start at 0".into()));
        }
        Ok(Self::build(grid, values, seed))
    }

    pub fn zero(grid: &FineGrid) -> Self {
        Self::build(grid, vec![0.0; grid.len()], 0)
    }

    fn build(grid: &FineGrid, values: Vec<f64>, seed: u64) -> Self {
        PathSample {
            grid: grid.clone(),
            base: values.into(),
            seed,
            shift: StepFunction::zero(grid.partition.horizon()),
        }
    }

    pub fn grid(&self) -> &FineGrid {
        &self.grid
    }

    pub fn partition(&self) -> &Partition {
        &self.grid.partition
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Accumulated shift direction (zero for an unshifted path).
    pub fn shift_record(&self) -> &StepFunction {
        &self.shift
    }

    pub fn value(&self, i: usize) -> f64 {
        self.base[i] + self.shift.integral_to(self.grid.time(i))
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|i| self.value(i)).collect()
    }

    pub fn value_at(&self, t: f64) -> Result<f64> {
        Ok(self.value(self.grid.index_of(t)?))
    }

    pub fn partition_values(&self) -> Vec<f64> {
        (0..=self.partition().num_intervals())
            .map(|k| self.value(k * self.grid.m))
            .collect()
    }

    /// `B_{t_{k+1}} - B_{t_k}` for every subinterval.
    pub fn partition_increments(&self) -> Vec<f64> {
        let pv = self.partition_values();
        pv.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `∫ g dB` for a step function whose knots are fine-grid nodes.
    pub fn wiener_integral(&self, g: &StepFunction) -> Result<f64> {
        let knots = g.knots();
        let mut acc = 0.0;
        for (c, &v) in g.values().iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let lo = self.node_of_knot(knots[c])?;
            let hi = self.node_of_knot(knots[c + 1])?;
            acc += v * (self.value(hi) - self.value(lo));
        }
        Ok(acc)
    }

    fn node_of_knot(&self, t: f64) -> Result<usize> {
        self.grid
            .index_of(t)
            .map_err(|_| Error::DirectionMisaligned(t))
    }

    /// `∫ κ dB` for a kernel slice, from the partition values alone.
    pub fn slice_integral(&self, slice: &KernelSlice) -> Result<f64> {
        self.partition().ensure_same(slice.partition())?;
        let inc = self.partition_increments();
        Ok(slice.coeffs().iter().zip(&inc).map(|(c, d)| c * d).sum())
    }

    /// Path shifted by `eps * ∫_0^· g(u) du`.
    pub fn shifted<G: AsStep + ?Sized>(&self, g: &G, eps: f64) -> Result<Self> {
        if let Some(p) = g.partition_hint() {
            self.partition().ensure_same(p)?;
        }
        let step = g.as_step();
        let horizon = self.partition().horizon();
        let knots = step.knots();
        if knots[0].abs() > TIME_TOL || (knots[knots.len() - 1] - horizon).abs() > TIME_TOL {
            return Err(Error::PartitionMismatch);
        }
        Ok(PathSample {
            shift: self.shift.add_scaled(&step, eps),
            ..self.clone()
        })
    }

    /// `B^π_t`: linear interpolation of the partition values.
    pub fn polygonal_value(&self, t: f64) -> Result<f64> {
        let p = self.partition();
        let k = p.locate(t)?;
        let horizon = p.horizon();
        let m = self.grid.m;
        if t >= horizon - TIME_TOL {
            return Ok(self.value(self.grid.last()));
        }
        let (a, b) = p.interval(k);
        let lam = (t - a) / (b - a);
        Ok((1.0 - lam) * self.value(k * m) + lam * self.value((k + 1) * m))
    }

    /// `\dot B^π_t = (B_{t_{k+1}} - B_{t_k}) / Δ_k` for `t in [t_k, t_{k+1})`.
    pub fn polygonal_slope(&self, t: f64) -> Result<f64> {
        let p = self.partition();
        let horizon = p.horizon();
        if !(t >= -TIME_TOL && t < horizon - TIME_TOL) {
            return Err(Error::out_of_range("t", t, 0.0, horizon));
        }
        Ok(self.slope_on(p.locate(t)?))
    }

    pub(crate) fn slope_on(&self, k: usize) -> f64 {
        let m = self.grid.m;
        (self.value((k + 1) * m) - self.value(k * m)) / self.partition().width(k)
    }

    /// `max_i |B^π(t_i) - B(t_i)|` over the fine nodes.
    pub fn sup_polygonal_error(&self) -> f64 {
        let m = self.grid.m;
        let pv = self.partition_values();
        (0..self.grid.len())
            .map(|i| {
                let k = self.grid.cell_of_node(i);
                let lam = (i - k * m) as f64 / m as f64;
                let poly = (1.0 - lam) * pv[k] + lam * pv[k + 1];
                (poly - self.value(i)).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "B", "B_poly"])?;
        for i in 0..self.grid.len() {
            let t = self.grid.time(i);
            out.serialize((t, self.value(i), self.polygonal_value(t)?))?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn polygonal_value(ps: &PathSample, t: f64) -> Result<f64> {
    ps.polygonal_value(t)
}

pub fn polygonal_slope(ps: &PathSample, t: f64) -> Result<f64> {
    ps.polygonal_slope(t)
}

pub fn shift_path<G: AsStep + ?Sized>(ps: &PathSample, g: &G, eps: f64) -> Result<PathSample> {
    ps.shifted(g, eps)
}

/// `E(h) = exp{∫h dB - |h|²/2}` stored through its exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StochExpValue {
    pub exponent: f64,
    pub value: f64,
}

impl StochExpValue {
    pub fn from_exponent(exponent: f64) -> Self {
        StochExpValue {
            exponent,
            value: exponent.exp(),
        }
    }
}

/// Stochastic exponential of a kernel slice on the (possibly shifted) path.
pub fn stoch_exp(ps: &PathSample, slice: &KernelSlice) -> Result<StochExpValue> {
    let w = ps.slice_integral(slice)?;
    Ok(StochExpValue::from_exponent(w - 0.5 * slice.norm_sq()))
}

/// Stochastic exponential of a grid-aligned step function.
pub fn stoch_exp_step(ps: &PathSample, g: &StepFunction) -> Result<StochExpValue> {
    let w = ps.wiener_integral(g)?;
    Ok(StochExpValue::from_exponent(w - 0.5 * g.norm_sq()))
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub ns: Vec<usize>,
    pub mesh: Vec<f64>,
    pub mean_sup_error: Vec<f64>,
    /// Least-squares slope of `log error` against `log mesh`; `None` when an
    /// error is exactly zero.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub seeds: usize,
    pub substeps: usize,
}

pub fn convergence_report(
    seeds: &[u64],
    ns: &[usize],
    m: usize,
    horizon: f64,
) -> Result<ConvergenceReport> {
    convergence_report_with(seeds, ns, m, horizon, |grid, seed| {
        PathSample::sample(grid, seed)
    })
}

/// [`convergence_report`] with a caller-supplied path generator.
pub fn convergence_report_with(
    seeds: &[u64],
    ns: &[usize],
    m: usize,
    horizon: f64,
    sampler: impl Fn(&FineGrid, u64) -> Result<PathSample> + Sync,
) -> Result<ConvergenceReport> {
    use rayon::prelude::*;
    if ns.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 partition sizes, got {}",
            ns.len()
        )));
    }
    if seeds.is_empty() {
        return Err(Error::InsufficientData("no seeds".into()));
    }
    let mut mesh = Vec::with_capacity(ns.len());
    let mut errors = Vec::with_capacity(ns.len());
    for &n in ns {
        let p = Partition::uniform(n, horizon)?;
        let grid = FineGrid::new(&p, m)?;
        let sups: Vec<f64> = seeds
            .par_iter()
            .map(|&s| sampler(&grid, s).map(|ps| ps.sup_polygonal_error()))
            .collect::<Result<_>>()?;
        mesh.push(p.mesh());
        errors.push(mean(&sups));
    }
    let (slope, intercept) = if errors.iter().all(|&e| e > 0.0) {
        let lx: Vec<f64> = mesh.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
        let (s, c) = linear_fit(&lx, &ly);
        (Some(s), Some(c))
    } else {
        (None, None)
    };
    Ok(ConvergenceReport {
        ns: ns.to_vec(),
        mesh,
        mean_sup_error: errors,
        slope,
        intercept,
        seeds: seeds.len(),
        substeps: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Direction;

    fn uniform4() -> Partition {
        Partition::uniform(4, 1.0).unwrap()
    }

    fn example_path() -> PathSample {
        let g = FineGrid::new(&uniform4(), 1).unwrap();
        PathSample::from_values(&g, vec![0.0, 0.1, -0.3, 0.2, 0.4], 0).unwrap()
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_path(&uniform4(), 32, 7).unwrap();
        let b = sample_path(&uniform4(), 32, 7).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.values()[0], 0.0);
        assert_ne!(
            a.values(),
            sample_path(&uniform4(), 32, 8).unwrap().values()
        );
        assert!(matches!(
            sample_path(&uniform4(), 0, 7),
            Err(Error::BadResolution)
        ));
    }

    #[test]
    fn partition_values_are_breakpoint_nodes() {
        let ps = sample_path(&uniform4(), 8, 3).unwrap();
        let v = ps.values();
        let pv = ps.partition_values();
        for k in 0..=4 {
            assert_eq!(pv[k], v[8 * k]);
        }
    }

    #[test]
    fn polygonal_examples() {
        let ps = example_path();
        assert_eq!(ps.polygonal_value(0.25).unwrap(), 0.1);
        assert!((ps.polygonal_value(0.375).unwrap() + 0.1).abs() < 1e-15);
        assert_eq!(ps.polygonal_value(0.5).unwrap(), -0.3);
        assert_eq!(ps.polygonal_value(1.0).unwrap(), 0.4);
        assert!((ps.polygonal_slope(0.3).unwrap() + 1.6).abs() < 1e-14);
        assert!((ps.polygonal_slope(0.25).unwrap() + 1.6).abs() < 1e-14);
        assert!(ps.polygonal_slope(1.0).is_err());
        let zero = PathSample::zero(&FineGrid::new(&uniform4(), 4).unwrap());
        for t in [0.0, 0.3, 0.6, 0.99] {
            assert_eq!(zero.polygonal_slope(t).unwrap(), 0.0);
        }
    }

    #[test]
    fn stoch_exp_examples() {
        // B^π_{0.375} - B^π_0 = 0.2 with |K|^2 = 0.3125
        let g = FineGrid::new(&uniform4(), 1).unwrap();
        let ps = PathSample::from_values(&g, vec![0.0, 0.1, 0.3, 0.0, 0.0], 0).unwrap();
        let k = KernelSlice::new(&uniform4(), 0.0, 0.375).unwrap();
        let e = stoch_exp(&ps, &k).unwrap();
        assert!((e.value - 0.04375f64.exp()).abs() < 1e-15);
        assert!((e.value - 1.044721).abs() < 1e-6);
        let empty = KernelSlice::new(&uniform4(), 0.3, 0.3).unwrap();
        assert_eq!(stoch_exp(&ps, &empty).unwrap().value, 1.0);
    }

    #[test]
    fn shift_examples() {
        let p = uniform4();
        let ps = sample_path(&p, 16, 11).unwrap();
        let same = ps.shifted(&Direction::haar(&p), 0.0).unwrap();
        assert_eq!(same.values(), ps.values());

        let k = KernelSlice::new(&p, 0.0, 0.375).unwrap();
        let up = ps.shifted(&k, 1.0).unwrap();
        let last = ps.grid().last();
        assert!((up.value(last) - ps.value(last) - 0.375).abs() < 1e-15);
        let back = up.shifted(&k, -1.0).unwrap();
        for (a, b) in back.values().iter().zip(ps.values()) {
            assert!((a - b).abs() <= 1e-14);
        }
        let other = Partition::uniform(3, 1.0).unwrap();
        let foreign = KernelSlice::new(&other, 0.0, 0.5).unwrap();
        assert!(matches!(
            ps.shifted(&foreign, 1.0),
            Err(Error::PartitionMismatch)
        ));
    }

    #[test]
    fn shift_composition_matches_combined_step() {
        let p = uniform4();
        let ps = sample_path(&p, 16, 5).unwrap();
        let h = Direction::haar(&p);
        let k = KernelSlice::new(&p, 0.1, 0.8).unwrap();
        let twice = ps.shifted(&h, 0.7).unwrap().shifted(&k, -1.3).unwrap();
        let combined = h.step().scaled(0.7).add_scaled(&k.to_step(), -1.3);
        let once = ps.shifted(&combined, 1.0).unwrap();
        for (a, b) in twice.values().iter().zip(once.values()) {
            assert!((a - b).abs() <= 1e-13);
        }
    }

    #[test]
    fn haar_integral_invariant_under_kernel_shift() {
        let p = uniform4();
        let h = Direction::haar(&p);
        for seed in 0..20 {
            let ps = sample_path(&p, 8, seed).unwrap();
            let before = ps.wiener_integral(h.step()).unwrap();
            let s = 0.05 * seed as f64 % 0.9;
            let k = KernelSlice::new(&p, s, s + 0.1).unwrap();
            let after = ps
                .shifted(&k, 2.5)
                .unwrap()
                .wiener_integral(h.step())
                .unwrap();
            assert!((before - after).abs() <= 1e-12);
        }
    }

    #[test]
    fn stoch_exp_product_identity() {
        let p = uniform4();
        let ps = sample_path(&p, 8, 9).unwrap();
        let k = KernelSlice::weighted(&p, 0.1, 0.9, &[1.0, 0.5, 2.0, -1.0]).unwrap();
        let a = stoch_exp(&ps, &k).unwrap().value;
        let b = stoch_exp(&ps, &k.scaled(-1.0)).unwrap().value;
        let expect = (-k.norm_sq()).exp();
        assert!((a * b / expect - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn wiener_integral_needs_aligned_knots() {
        let p = uniform4();
        let ps = sample_path(&p, 3, 1).unwrap();
        let h = Direction::haar(&p);
        assert!(matches!(
            ps.wiener_integral(h.step()),
            Err(Error::DirectionMisaligned(_))
        ));
    }

    #[test]
    fn convergence_report_errors_and_degenerate_path() {
        assert!(matches!(
            convergence_report(&[1, 2], &[4], 8, 1.0),
            Err(Error::InsufficientData(_))
        ));
        let rep =
            convergence_report_with(&[1, 2], &[4, 8, 16], 8, 1.0, |g, _| Ok(PathSample::zero(g)))
                .unwrap();
        assert!(rep.mean_sup_error.iter().all(|&e| e == 0.0));
        assert!(rep.slope.is_none());
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let ps = example_path();
        let mut buf = Vec::new();
        ps.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("t,B,B_poly"));
        assert_eq!(lines.count(), 5);
    }
}
