//! Directional Malliavin derivatives of `X_t`: the closed form along an
//! admissible direction, Cameron–Martin finite differences along arbitrary
//! directions, inverse-moment estimates and the derivative-equation residual.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::Direction;
use crate::numeric::{bootstrap, cumulative_integral, linear_fit, pairwise_sum};
use crate::paths::PathSample;
use crate::solver::{reconstruct, reconstruct_x, EnsembleRun, ModelSpec, OutputGrid, SolverConfig};

pub const DEFAULT_EPS: f64 = 1e-4;
pub const DEFAULT_TRIM: f64 = 1e-4;
pub const BOOTSTRAP_RESAMPLES: usize = 200;
pub const BOOTSTRAP_SEED: u64 = 0x5eed_b007;

/// `D_h X_t` from the homogeneous linear equation it satisfies when `h` has
/// zero mean on every subinterval:
/// `(T_{-K_{s,t}} D_h Y) · exp{∫_s^t b_x(r, X_r on the doubly shifted path) dr} · E(K_{s,t})`.
pub fn dhx_closed(
    ps: &PathSample,
    spec: &ModelSpec,
    h: &Direction,
    t: f64,
    cfg: &SolverConfig,
) -> Result<f64> {
    if !spec.unit_sigma() {
        return Err(Error::SigmaUnsupported);
    }
    if let Some(k) = h.first_violation() {
        return Err(Error::NotAdmissible(k));
    }
    if spec.init().degenerate_along(h) {
        return Err(Error::DegenerateInit);
    }
    let rec = reconstruct(ps, spec, t, cfg, true)?;
    let dy = spec.init().derivative(&rec.shifted, h)?;
    Ok(dy * rec.log_v.exp() * rec.e_kappa.value)
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::BadStep(eps))
    }
}

/// Central Cameron–Martin difference `(X_t(ω + ε∫h) - X_t(ω - ε∫h)) / 2ε`.
pub fn dhx_fd(
    ps: &PathSample,
    spec: &ModelSpec,
    h: &Direction,
    t: f64,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<f64> {
    check_eps(eps)?;
    let up = reconstruct_x(&ps.shifted(h, eps)?, spec, t, cfg)?;
    let down = reconstruct_x(&ps.shifted(h, -eps)?, spec, t, cfg)?;
    Ok((up - down) / (2.0 * eps))
}

/// `D_{η_r} X_r` with `η_r = ∂_r K_r(·)`, by central differences.
pub fn deta_x(
    ps: &PathSample,
    spec: &ModelSpec,
    r: f64,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<f64> {
    check_eps(eps)?;
    let horizon = ps.partition().horizon();
    if !(r >= spec.start() && r <= horizon) {
        return Err(Error::out_of_range("r", r, spec.start(), horizon));
    }
    let eta = Direction::eta(ps.partition(), r)?;
    dhx_fd(ps, spec, &eta, r, eps, cfg)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DerivativeSample {
    pub t: f64,
    pub closed_form: f64,
    pub fd_value: f64,
    pub eps: f64,
    /// FD value at `eps / 2`.
    pub fd_half: f64,
    /// Halving the step moved the FD value towards the closed form (or both
    /// errors are already at roundoff level).
    pub richardson_ok: bool,
}

impl DerivativeSample {
    pub fn relative_error(&self) -> f64 {
        (self.fd_value - self.closed_form).abs() / self.closed_form.abs().max(f64::MIN_POSITIVE)
    }
}

pub fn derivative_sample(
    ps: &PathSample,
    spec: &ModelSpec,
    h: &Direction,
    t: f64,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<DerivativeSample> {
    let closed_form = dhx_closed(ps, spec, h, t, cfg)?;
    let fd_value = dhx_fd(ps, spec, h, t, eps, cfg)?;
    let fd_half = dhx_fd(ps, spec, h, t, 0.5 * eps, cfg)?;
    let floor = 64.0 * f64::EPSILON * closed_form.abs() / eps;
    let e1 = (fd_value - closed_form).abs();
    let e2 = (fd_half - closed_form).abs();
    Ok(DerivativeSample {
        t,
        closed_form,
        fd_value,
        eps,
        fd_half,
        richardson_ok: e2 <= e1 || e1.max(e2) <= 2.0 * floor,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FdOrderReport {
    pub eps: Vec<f64>,
    pub abs_errors: Vec<f64>,
    /// Points above the roundoff floor that entered the fit.
    pub used: Vec<bool>,
    pub slope: Option<f64>,
}

/// Log-log slope of `|FD - closed form|` against the step, skipping steps
/// whose error is already at the cancellation floor `≈ 64 ε_mach |X| / eps`.
pub fn fd_order_slope(
    ps: &PathSample,
    spec: &ModelSpec,
    h: &Direction,
    t: f64,
    eps_list: &[f64],
    cfg: &SolverConfig,
) -> Result<FdOrderReport> {
    let closed = dhx_closed(ps, spec, h, t, cfg)?;
    let x = reconstruct_x(ps, spec, t, cfg)?;
    let mut abs_errors = Vec::with_capacity(eps_list.len());
    let mut used = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let err = (dhx_fd(ps, spec, h, t, eps, cfg)? - closed).abs();
        let floor = 64.0 * f64::EPSILON * x.abs().max(closed.abs()) / eps;
        abs_errors.push(err);
        used.push(err > floor);
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = eps_list
        .iter()
        .zip(&abs_errors)
        .zip(&used)
        .filter(|(_, &u)| u)
        .map(|((e, a), _)| (e.ln(), a.ln()))
        .unzip();
    let slope = (lx.len() >= 2).then(|| linear_fit(&lx, &ly).0);
    Ok(FdOrderReport {
        eps: eps_list.to_vec(),
        abs_errors,
        used,
        slope,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct InverseMomentReport {
    pub t: f64,
    pub q: f64,
    pub trim: f64,
    pub n_samples: usize,
    pub n_trimmed: usize,
    /// Mean of `|D|^{-q}` after dropping the `trim` fraction of largest values.
    pub estimate: f64,
    /// Untrimmed sample mean.
    pub raw_estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bootstrap_resamples: usize,
    pub bootstrap_seed: u64,
    pub min_abs_derivative: f64,
    pub nondegenerate: bool,
}

fn trimmed_mean(v: &mut [f64], drop: usize) -> f64 {
    let keep = v.len() - drop;
    if drop > 0 {
        v.select_nth_unstable_by(keep, f64::total_cmp);
    }
    pairwise_sum(&v[..keep]) / keep as f64
}

/// Trimmed Monte Carlo estimate of `E|D|^{-q}` from raw derivative samples.
pub fn inverse_moment_samples(
    t: f64,
    derivs: &[f64],
    q: f64,
    trim: f64,
) -> Result<InverseMomentReport> {
    if derivs.is_empty() {
        return Err(Error::NoDerivatives);
    }
    if !(q >= 0.0 && q.is_finite()) {
        return Err(Error::InvalidArgument(format!("q must be >= 0, got {q}")));
    }
    if !(0.0..0.5).contains(&trim) {
        return Err(Error::InvalidArgument(format!(
            "trim must lie in [0, 0.5), got {trim}"
        )));
    }
    let n = derivs.len();
    let drop = (trim * n as f64).floor() as usize;
    let vals: Vec<f64> = derivs.iter().map(|d| d.abs().powf(-q)).collect();
    let raw_estimate = pairwise_sum(&vals) / n as f64;
    let estimate = trimmed_mean(&mut vals.clone(), drop);
    let boot = bootstrap(&vals, BOOTSTRAP_RESAMPLES, BOOTSTRAP_SEED, |v| {
        trimmed_mean(v, drop)
    });
    let min_abs = derivs.iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min);
    Ok(InverseMomentReport {
        t,
        q,
        trim,
        n_samples: n,
        n_trimmed: drop,
        estimate,
        raw_estimate,
        std_error: boot.std_error,
        ci_low: boot.ci_low,
        ci_high: boot.ci_high,
        bootstrap_resamples: boot.resamples,
        bootstrap_seed: boot.seed,
        min_abs_derivative: min_abs,
        nondegenerate: min_abs > 0.0 && min_abs.is_finite(),
    })
}

/// [`inverse_moment_samples`] on the closed-form derivatives stored in a run,
/// at output position `t_idx`.
pub fn inverse_moment(
    run: &EnsembleRun,
    t_idx: usize,
    q: f64,
    trim: f64,
) -> Result<InverseMomentReport> {
    let d = run.dhx_column(t_idx).ok_or(Error::NoDerivatives)?;
    inverse_moment_samples(run.output().time(t_idx), &d, q, trim)
}

#[derive(Clone, Debug, Serialize)]
pub struct DxResidualReport {
    pub times: Vec<f64>,
    /// `D_η X_t - D_η Y`
    pub lhs: Vec<f64>,
    /// `∫ b_x D_η X + ∫ σ (D_η X)⋄Ḃ^π + ∫ σ X ⟨∂_r K_r, η⟩`
    pub rhs: Vec<f64>,
    pub residual: Vec<f64>,
    pub max_abs_residual: f64,
    /// Largest magnitude of the `∫ σ X ⟨∂_r K_r, η⟩` term.
    pub nonhomogeneous_max: f64,
    pub eps: f64,
}

/// Both sides of the linear equation for `D_η X_t`, on every fine node of
/// `out`'s span. First derivatives by central differences; the Wick term as
/// `F·Ḃ^π_r - D_{∂_rK_r}F` with the inner derivative taken by nested
/// central differences.
pub fn dx_equation_residual(
    ps: &PathSample,
    spec: &ModelSpec,
    eta: &Direction,
    out: &OutputGrid,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<DxResidualReport> {
    check_eps(eps)?;
    let grid = ps.grid();
    if out.fine_grid() != grid {
        return Err(Error::PartitionMismatch);
    }
    let p = ps.partition();
    let i0 = grid.index_of(spec.start())?;
    let i_end = *out.indices().last().unwrap();
    if out.indices()[0] < i0 {
        return Err(Error::GridMisaligned(out.time(0)));
    }
    let m = grid.substeps();
    let drift = *spec.drift();

    let plus = ps.shifted(eta, eps)?;
    let minus = ps.shifted(eta, -eps)?;
    let dy = {
        let a = spec.init().value(&plus)?;
        let b = spec.init().value(&minus)?;
        (a - b) / (2.0 * eps)
    };

    // Integrand at node i evaluated with the one-sided data of cell k.
    let integrand = |i: usize, k: usize| -> Result<(f64, f64)> {
        let r = grid.time(i);
        let x = reconstruct_x(ps, spec, r, cfg)?;
        let dx = (reconstruct_x(&plus, spec, r, cfg)? - reconstruct_x(&minus, spec, r, cfg)?)
            / (2.0 * eps);
        let (a, b) = p.interval(k);
        let eta_k = Direction::indicator(p, a, b)?.step().scaled(1.0 / (b - a));
        let xpp = reconstruct_x(&plus.shifted(&eta_k, eps)?, spec, r, cfg)?;
        let xpm = reconstruct_x(&plus.shifted(&eta_k, -eps)?, spec, r, cfg)?;
        let xmp = reconstruct_x(&minus.shifted(&eta_k, eps)?, spec, r, cfg)?;
        let xmm = reconstruct_x(&minus.shifted(&eta_k, -eps)?, spec, r, cfg)?;
        let d2 = (xpp - xpm - xmp + xmm) / (4.0 * eps * eps);
        let sigma = spec.sigma()[k];
        let slope = ps.slope_on(k);
        let pairing = eta.step().integral_over(a, b) / (b - a);
        let homog = drift.dx(x) * dx + sigma * (dx * slope - d2);
        Ok((homog, sigma * x * pairing))
    };

    let mut acc_h = 0.0;
    let mut acc_n = 0.0;
    let mut lhs_full = vec![0.0; i_end + 1];
    let mut rhs_full = vec![0.0; i_end + 1];
    let mut non_full = vec![0.0; i_end + 1];
    let x0 = reconstruct_x(&plus, spec, grid.time(i0), cfg)?
        - reconstruct_x(&minus, spec, grid.time(i0), cfg)?;
    lhs_full[i0] = x0 / (2.0 * eps) - dy;

    let mut i = i0;
    while i < i_end {
        let k = grid.cell_of_node(i);
        let cell_end = ((k + 1) * m).min(i_end);
        let mut fh = Vec::with_capacity(cell_end - i + 1);
        let mut fnh = Vec::with_capacity(cell_end - i + 1);
        for j in i..=cell_end {
            let (a, b) = integrand(j, k)?;
            fh.push(a);
            fnh.push(b);
        }
        let step = grid.step(k);
        let ch = cumulative_integral(&fh, step);
        let cn = cumulative_integral(&fnh, step);
        for (off, j) in (i..=cell_end).enumerate().skip(1) {
            rhs_full[j] = acc_h + ch[off] + acc_n + cn[off];
            non_full[j] = acc_n + cn[off];
            let r = grid.time(j);
            let d = (reconstruct_x(&plus, spec, r, cfg)? - reconstruct_x(&minus, spec, r, cfg)?)
                / (2.0 * eps);
            lhs_full[j] = d - dy;
        }
        acc_h += ch[ch.len() - 1];
        acc_n += cn[cn.len() - 1];
        i = cell_end;
    }

    let idx = out.indices();
    let lhs: Vec<f64> = idx.iter().map(|&j| lhs_full[j]).collect();
    let rhs: Vec<f64> = idx.iter().map(|&j| rhs_full[j]).collect();
    let residual: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    let max_abs_residual = residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let nonhomogeneous_max = idx.iter().fold(0.0f64, |m, &j| m.max(non_full[j].abs()));
    Ok(DxResidualReport {
        times: out.times(),
        lhs,
        rhs,
        residual,
        max_abs_residual,
        nonhomogeneous_max,
        eps,
    })
}
