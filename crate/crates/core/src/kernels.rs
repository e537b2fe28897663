//! Partitions of `[0, T]` and the closed-form algebra of the polygonal
//! kernels `K_t(u)`, their time derivatives and admissible directions.
//!
//! Every kernel slice `K_{s,t} = K_t - K_s` (and its sigma-weighted version)
//! is constant in `u` on each subinterval of the partition, so it is stored
//! as one coefficient per subinterval and all inner products reduce to
//! finite sums.

use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Absolute tolerance used when matching times against breakpoints and grid nodes.
pub const TIME_TOL: f64 = 1e-12;

/// Ordered breakpoints `0 = t_0 < t_1 < ... < t_n = T`.
#[derive(Clone, Debug)]
pub struct Partition {
    points: Arc<[f64]>,
    mesh: f64,
}

impl Partition {
    pub fn new(points: impl Into<Vec<f64>>) -> Result<Self> {
        let points: Vec<f64> = points.into();
        if points.len() < 2 {
            return Err(Error::TooFewPoints(points.len()));
        }
        let first = points[0];
        let last = *points.last().unwrap();
        if first != 0.0 || !(last > first) || !last.is_finite() {
            return Err(Error::WrongEndpoints { first, last });
        }
        let mut mesh: f64 = 0.0;
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::NotSorted { index: i + 1 });
            }
            mesh = mesh.max(w[1] - w[0]);
        }
        Ok(Partition {
            points: points.into(),
            mesh,
        })
    }

    /// `n` equal subintervals of `[0, horizon]`.
    pub fn uniform(n: usize, horizon: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::TooFewPoints(1));
        }
        let pts: Vec<f64> = (0..=n)
            .map(|k| {
                if k == n {
                    horizon
                } else {
                    horizon * k as f64 / n as f64
                }
            })
            .collect();
        Self::new(pts)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn horizon(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Number of subintervals `n`.
    pub fn num_intervals(&self) -> usize {
        self.points.len() - 1
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn width(&self, k: usize) -> f64 {
        self.points[k + 1] - self.points[k]
    }

    pub fn interval(&self, k: usize) -> (f64, f64) {
        (self.points[k], self.points[k + 1])
    }

    /// Index `k` with `t in [t_k, t_{k+1})`; `t = T` maps to the last interval.
    pub fn locate(&self, t: f64) -> Result<usize> {
        let horizon = self.horizon();
        if !(t >= -TIME_TOL && t <= horizon + TIME_TOL) {
            return Err(Error::out_of_range("t", t, 0.0, horizon));
        }
        let idx = self.points.partition_point(|&p| p <= t + TIME_TOL);
        Ok(idx.saturating_sub(1).min(self.num_intervals() - 1))
    }

    /// Like [`Partition::locate`] but `u = T` lies in no interval.
    pub(crate) fn cell_of_u(&self, u: f64) -> Result<Option<usize>> {
        let horizon = self.horizon();
        if !(u >= -TIME_TOL && u <= horizon + TIME_TOL) {
            return Err(Error::out_of_range("u", u, 0.0, horizon));
        }
        if u >= horizon - TIME_TOL {
            return Ok(None);
        }
        self.locate(u).map(Some)
    }

    pub fn breakpoint_index(&self, t: f64) -> Option<usize> {
        let idx = self.points.partition_point(|&p| p < t - TIME_TOL);
        (idx < self.points.len() && (self.points[idx] - t).abs() <= TIME_TOL).then_some(idx)
    }

    pub fn same_as(&self, other: &Partition) -> bool {
        Arc::ptr_eq(&self.points, &other.points) || self.points == other.points
    }

    pub(crate) fn ensure_same(&self, other: &Partition) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::PartitionMismatch)
        }
    }

    /// `|[s,t] ∩ [t_k, t_{k+1})| / Δ_k`, the weight of subinterval `k` in `K_{s,t}`.
    pub(crate) fn overlap_fraction(&self, k: usize, s: f64, t: f64) -> f64 {
        let (a, b) = self.interval(k);
        let len = t.min(b) - s.max(a);
        if len <= 0.0 {
            0.0
        } else {
            len / (b - a)
        }
    }
}

impl PartialEq for Partition {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

impl Serialize for Partition {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.points.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let pts = Vec::<f64>::deserialize(deserializer)?;
        Partition::new(pts).map_err(serde::de::Error::custom)
    }
}

pub fn make_partition(points: &[f64]) -> Result<Partition> {
    Partition::new(points.to_vec())
}

/// `K_t(u)`: 1 on already-passed subintervals, the linear ramp
/// `(t - t_k)/Δ_k` on the active one, 0 beyond.
pub fn kernel_value(p: &Partition, t: f64, u: f64) -> Result<f64> {
    let k = p.locate(t)?;
    let Some(j) = p.cell_of_u(u)? else {
        return Ok(0.0);
    };
    Ok(match j.cmp(&k) {
        std::cmp::Ordering::Less => 1.0,
        std::cmp::Ordering::Equal => ((t - p.points[k]) / p.width(k)).clamp(0.0, 1.0),
        std::cmp::Ordering::Greater => 0.0,
    })
}

/// `∂_t K_t(u) = 1/Δ_k` when `t` and `u` share the subinterval `k`.
pub fn kernel_dt(p: &Partition, t: f64, u: f64) -> Result<f64> {
    let horizon = p.horizon();
    if !(t >= -TIME_TOL && t < horizon - TIME_TOL) {
        return Err(Error::out_of_range("t", t, 0.0, horizon));
    }
    let k = p.locate(t)?;
    Ok(match p.cell_of_u(u)? {
        Some(j) if j == k => 1.0 / p.width(k),
        _ => 0.0,
    })
}

/// Right-continuous step function on `[knots[0], knots[last])`, zero outside.
#[derive(Clone, Debug, PartialEq)]
pub struct StepFunction {
    knots: Vec<f64>,
    values: Vec<f64>,
    prefix: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StepRepr {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl Serialize for StepFunction {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        StepRepr {
            knots: self.knots.clone(),
            values: self.values.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StepFunction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let r = StepRepr::deserialize(deserializer)?;
        StepFunction::new(r.knots, r.values).map_err(serde::de::Error::custom)
    }
}

impl StepFunction {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::TooFewPoints(knots.len()));
        }
        if values.len() + 1 != knots.len() {
            return Err(Error::DimensionMismatch {
                what: "step values",
                expected: knots.len() - 1,
                got: values.len(),
            });
        }
        for (i, w) in knots.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::NotSorted { index: i + 1 });
            }
        }
        Ok(Self::from_parts(knots, values))
    }

    fn from_parts(knots: Vec<f64>, values: Vec<f64>) -> Self {
        let mut prefix = Vec::with_capacity(knots.len());
        let mut acc = 0.0;
        prefix.push(0.0);
        for (i, v) in values.iter().enumerate() {
            acc += v * (knots[i + 1] - knots[i]);
            prefix.push(acc);
        }
        StepFunction {
            knots,
            values,
            prefix,
        }
    }

    pub fn zero(horizon: f64) -> Self {
        Self::from_parts(vec![0.0, horizon], vec![0.0])
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn value_at(&self, u: f64) -> f64 {
        let n = self.knots.len();
        if u < self.knots[0] || u >= self.knots[n - 1] {
            return 0.0;
        }
        let i = self.knots.partition_point(|&k| k <= u) - 1;
        self.values[i]
    }

    /// `∫_{knots[0]}^t f(u) du`.
    pub fn integral_to(&self, t: f64) -> f64 {
        let n = self.knots.len();
        if t <= self.knots[0] {
            return 0.0;
        }
        if t >= self.knots[n - 1] {
            return self.prefix[n - 1];
        }
        let i = self.knots.partition_point(|&k| k <= t) - 1;
        self.prefix[i] + self.values[i] * (t - self.knots[i])
    }

    pub fn integral_over(&self, a: f64, b: f64) -> f64 {
        self.integral_to(b) - self.integral_to(a)
    }

    pub fn norm_sq(&self) -> f64 {
        self.values
            .iter()
            .zip(self.knots.windows(2))
            .map(|(v, w)| v * v * (w[1] - w[0]))
            .sum()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::from_parts(
            self.knots.clone(),
            self.values.iter().map(|v| a * v).collect(),
        )
    }

    /// Union of both knot sets (within [`TIME_TOL`]), paired with the value of
    /// each function on every merged cell.
    fn merged_cells(&self, other: &StepFunction) -> (Vec<f64>, Vec<(f64, f64)>) {
        let (a, b) = (&self.knots, &other.knots);
        let mut knots = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let next = match (a.get(i), b.get(j)) {
                (Some(&x), Some(&y)) if (x - y).abs() <= TIME_TOL => {
                    i += 1;
                    j += 1;
                    x
                }
                (Some(&x), Some(&y)) if x < y => {
                    i += 1;
                    x
                }
                (Some(_), Some(&y)) => {
                    j += 1;
                    y
                }
                (Some(&x), None) => {
                    i += 1;
                    x
                }
                (None, Some(&y)) => {
                    j += 1;
                    y
                }
                (None, None) => unreachable!(),
            };
            if knots.last().is_none_or(|&l: &f64| next - l > TIME_TOL) {
                knots.push(next);
            }
        }
        let cells = knots
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                (self.value_at(mid), other.value_at(mid))
            })
            .collect();
        (knots, cells)
    }

    /// `self + a * other` on the merged knot set.
    pub fn add_scaled(&self, other: &StepFunction, a: f64) -> Self {
        if other.is_zero() || a == 0.0 {
            return self.clone();
        }
        let (knots, cells) = self.merged_cells(other);
        let values = cells.into_iter().map(|(x, y)| x + a * y).collect();
        Self::from_parts(knots, values)
    }

    /// Exact `∫ f g du`.
    pub fn inner(&self, other: &StepFunction) -> f64 {
        let (knots, cells) = self.merged_cells(other);
        knots
            .windows(2)
            .zip(cells)
            .map(|(w, (x, y))| x * y * (w[1] - w[0]))
            .sum()
    }
}

/// `κ_{s,t}(u) = Σ_k σ_k |[s,t] ∩ I_k| / Δ_k · 1_{I_k}(u)`; with unit weights
/// this is `K_{s,t} = K_t - K_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSlice {
    partition: Partition,
    start: f64,
    end: f64,
    coeffs: Vec<f64>,
}

impl KernelSlice {
    pub fn new(p: &Partition, s: f64, t: f64) -> Result<Self> {
        Self::build(p, s, t, None)
    }

    pub fn weighted(p: &Partition, s: f64, t: f64, sigma: &[f64]) -> Result<Self> {
        Self::build(p, s, t, Some(sigma))
    }

    fn build(p: &Partition, s: f64, t: f64, sigma: Option<&[f64]>) -> Result<Self> {
        let horizon = p.horizon();
        if !(s >= -TIME_TOL && s <= horizon + TIME_TOL) {
            return Err(Error::out_of_range("s", s, 0.0, horizon));
        }
        if !(t >= s - TIME_TOL && t <= horizon + TIME_TOL) {
            return Err(Error::out_of_range("t", t, s, horizon));
        }
        if let Some(sig) = sigma {
            if sig.len() != p.num_intervals() {
                return Err(Error::DimensionMismatch {
                    what: "sigma",
                    expected: p.num_intervals(),
                    got: sig.len(),
                });
            }
        }
        let coeffs = (0..p.num_intervals())
            .map(|k| {
                let w = sigma.map_or(1.0, |sig| sig[k]);
                w * p.overlap_fraction(k, s, t)
            })
            .collect();
        Ok(KernelSlice {
            partition: p.clone(),
            start: s,
            end: t,
            coeffs,
        })
    }

    pub fn zero(p: &Partition) -> Self {
        KernelSlice {
            partition: p.clone(),
            start: 0.0,
            end: 0.0,
            coeffs: vec![0.0; p.num_intervals()],
        }
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    /// Value of the slice on each subinterval.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn value_at(&self, u: f64) -> Result<f64> {
        Ok(self.partition.cell_of_u(u)?.map_or(0.0, |k| self.coeffs[k]))
    }

    pub fn scaled(&self, a: f64) -> Self {
        KernelSlice {
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
            ..self.clone()
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * c * self.partition.width(k))
            .sum()
    }

    pub fn inner(&self, other: &KernelSlice) -> Result<f64> {
        self.partition.ensure_same(&other.partition)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .enumerate()
            .map(|(k, (a, b))| a * b * self.partition.width(k))
            .sum())
    }

    pub fn to_step(&self) -> StepFunction {
        StepFunction::from_parts(self.partition.points().to_vec(), self.coeffs.clone())
    }
}

pub fn inner_product(a: &KernelSlice, b: &KernelSlice) -> Result<f64> {
    a.inner(b)
}

pub fn weighted_kernel(p: &Partition, s: f64, t: f64, sigma: &[f64]) -> Result<KernelSlice> {
    KernelSlice::weighted(p, s, t, sigma)
}

/// Nonzero step function `h` used as a Malliavin direction, together with
/// its admissibility relative to the partition it was built against: zero
/// mean on every subinterval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Direction {
    step: StepFunction,
    norm_sq: f64,
    interval_means: Vec<f64>,
    admissible: bool,
}

impl Direction {
    pub fn new(p: &Partition, step: StepFunction) -> Result<Self> {
        let norm_sq = step.norm_sq();
        if !(norm_sq > 0.0) {
            return Err(Error::ZeroDirection);
        }
        let scale = step.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let interval_means: Vec<f64> = (0..p.num_intervals())
            .map(|k| {
                let (a, b) = p.interval(k);
                step.integral_over(a, b) / (b - a)
            })
            .collect();
        let admissible = interval_means.iter().all(|m| m.abs() <= 1e-12 * scale);
        Ok(Direction {
            step,
            norm_sq,
            interval_means,
            admissible,
        })
    }

    /// `+1` on the first half and `-1` on the second half of every subinterval.
    pub fn haar(p: &Partition) -> Self {
        let n = p.num_intervals();
        let mut knots = Vec::with_capacity(2 * n + 1);
        let mut values = Vec::with_capacity(2 * n);
        for k in 0..n {
            let (a, b) = p.interval(k);
            knots.push(a);
            knots.push(0.5 * (a + b));
            values.extend([1.0, -1.0]);
        }
        knots.push(p.horizon());
        Self::new(p, StepFunction::from_parts(knots, values)).expect("Haar direction is nonzero")
    }

    pub fn constant(p: &Partition, c: f64) -> Result<Self> {
        Self::new(p, StepFunction::from_parts(vec![0.0, p.horizon()], vec![c]))
    }

    /// `1_{[a,b)}`.
    pub fn indicator(p: &Partition, a: f64, b: f64) -> Result<Self> {
        let horizon = p.horizon();
        if !(a >= 0.0 && b > a && b <= horizon + TIME_TOL) {
            return Err(Error::out_of_range("indicator end", b, a, horizon));
        }
        let mut knots = vec![0.0];
        let mut values = vec![];
        if a > TIME_TOL {
            knots.push(a);
            values.push(0.0);
        }
        values.push(1.0);
        if b < horizon - TIME_TOL {
            knots.push(b);
            values.push(0.0);
        }
        knots.push(horizon);
        Self::new(p, StepFunction::from_parts(knots, values))
    }

    /// `η_r = ∂_r K_r(·)`, the direction along which `\dot B_r` integrates.
    pub fn eta(p: &Partition, r: f64) -> Result<Self> {
        let horizon = p.horizon();
        if !(r >= -TIME_TOL && r <= horizon + TIME_TOL) {
            return Err(Error::out_of_range("r", r, 0.0, horizon));
        }
        let k = p.locate(r)?;
        let mut values = vec![0.0; p.num_intervals()];
        values[k] = 1.0 / p.width(k);
        Self::new(p, StepFunction::from_parts(p.points().to_vec(), values))
    }

    pub fn from_slice(slice: &KernelSlice) -> Result<Self> {
        Self::new(slice.partition(), slice.to_step())
    }

    pub fn step(&self) -> &StepFunction {
        &self.step
    }

    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn interval_means(&self) -> &[f64] {
        &self.interval_means
    }

    pub fn is_admissible(&self) -> bool {
        self.admissible
    }

    pub fn first_violation(&self) -> Option<usize> {
        let scale = self
            .step
            .values()
            .iter()
            .fold(1.0f64, |m, v| m.max(v.abs()));
        self.interval_means
            .iter()
            .position(|m| m.abs() > 1e-12 * scale)
    }

    pub fn inner(&self, other: &Direction) -> f64 {
        self.step.inner(&other.step)
    }

    pub fn inner_slice(&self, slice: &KernelSlice) -> f64 {
        self.step.inner(&slice.to_step())
    }
}

pub fn make_haar_direction(p: &Partition) -> Direction {
    Direction::haar(p)
}

#[derive(Clone, Debug, Serialize)]
pub struct AdmissibilityReport {
    pub interval_means: Vec<f64>,
    pub violating: Vec<usize>,
    /// `max_r |⟨∂_r K_r, h⟩|` over the dense r-grid.
    pub max_residual: f64,
    pub r_grid_points: usize,
    pub admissible: bool,
}

pub const CHECK_R_GRID: usize = 10_000;

pub fn check_direction(p: &Partition, h: &Direction) -> AdmissibilityReport {
    let horizon = p.horizon();
    let max_residual = (0..CHECK_R_GRID)
        .map(|i| {
            let r = horizon * i as f64 / CHECK_R_GRID as f64;
            let eta = Direction::eta(p, r).expect("r inside [0,T)");
            eta.inner(h).abs()
        })
        .fold(0.0, f64::max);
    let interval_means: Vec<f64> = (0..p.num_intervals())
        .map(|k| {
            let (a, b) = p.interval(k);
            h.step().integral_over(a, b) / (b - a)
        })
        .collect();
    let scale = h.step().values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let violating: Vec<usize> = interval_means
        .iter()
        .enumerate()
        .filter(|(_, m)| m.abs() > 1e-12 * scale)
        .map(|(k, _)| k)
        .collect();
    AdmissibilityReport {
        admissible: violating.is_empty(),
        interval_means,
        violating,
        max_residual,
        r_grid_points: CHECK_R_GRID,
    }
}
