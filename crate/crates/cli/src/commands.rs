use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use wickwz_core::gbm::fp_operator_compare;
use wickwz_core::kernels::{Partition, StepFunction};
use wickwz_core::malliavin::{derivative_sample, fd_order_slope, inverse_moment, DerivativeSample};
use wickwz_core::paths::{convergence_report, sample_path};
use wickwz_core::rng::derive_seed;
use wickwz_core::solver::{
    run_ensemble, EnsembleOptions, InitialCondition, ModelSpec, SolverConfig,
};
use wickwz_core::stats::{
    fp_residual, kde_density, make_bump, mean_preservation, naive_comparator, naive_expected_mean,
    regress_g, silverman_bandwidth, standard_bumps, uniform_grid, TestFunction,
};

use crate::config::{Experiment, RunConfig};
use crate::error::CliError;

/// A loaded config plus the directory outputs go to.
pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
}

impl Context {
    pub fn new(config: RunConfig, out: Option<PathBuf>) -> Self {
        let out_dir = out
            .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("wickwz-out"));
        Context { config, out_dir }
    }

    fn file(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn setup(&self) -> Result<(Partition, ModelSpec), CliError> {
        fs::create_dir_all(&self.out_dir)?;
        let p = self.config.partition()?;
        let spec = self.config.model_spec(&p)?;
        Ok((p, spec))
    }

    fn options(&self) -> EnsembleOptions {
        let c = &self.config;
        let mut opts = EnsembleOptions::new(c.substeps, c.n_paths, c.master_seed);
        opts.output_times = c.output_times.clone();
        opts
    }
}

pub fn run(experiment: Experiment, ctx: &Context) -> Result<(), CliError> {
    match experiment {
        Experiment::Simulate => cmd_simulate(ctx),
        Experiment::CheckDerivative => cmd_check_derivative(ctx),
        Experiment::Density => cmd_density(ctx),
        Experiment::Fp => cmd_fp(ctx),
        Experiment::Convergence => cmd_convergence(ctx),
        Experiment::GbmDemo => cmd_gbm_demo(ctx),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(wickwz_core::Error::from)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Core(e.into()))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Core(e.into())
}

/// Midpoint of the first subinterval starting at `s`.
fn default_time(p: &Partition, s: f64) -> Result<f64, CliError> {
    let k = p.locate(s)?;
    let (a, b) = p.interval(k);
    Ok(0.5 * (a + b))
}

/// Breakpoints and midpoints in `(s, T]`.
fn check_times(p: &Partition, s: f64) -> Vec<f64> {
    let mut ts = Vec::new();
    for k in 0..p.num_intervals() {
        let (a, b) = p.interval(k);
        if b <= s {
            continue;
        }
        if a >= s {
            ts.push(0.5 * (a + b));
        }
        ts.push(b);
    }
    ts
}

pub fn cmd_simulate(ctx: &Context) -> Result<(), CliError> {
    let (_, spec) = ctx.setup()?;
    let ens = run_ensemble(&spec, &ctx.options())?;
    let config = serde_json::to_value(&ctx.config).map_err(wickwz_core::Error::from)?;
    ens.write_dir(&ctx.out_dir, Some(&config))?;
    println!(
        "simulate: {} paths x {} times written to {} (config {})",
        ens.n_paths(),
        ens.n_times(),
        ctx.out_dir.display(),
        &ens.config_hash()[..12]
    );
    let mut failure = None;
    for &e in &ctx.config.experiments {
        if e == Experiment::Simulate {
            continue;
        }
        match run(e, ctx) {
            Ok(()) => {}
            Err(err @ CliError::StatisticalFail(_)) => {
                eprintln!("{}: {err}", e.name());
                failure.get_or_insert(err);
            }
            Err(err) => return Err(err),
        }
    }
    failure.map_or(Ok(()), Err)
}

#[derive(Serialize)]
struct DerivativeReport {
    direction: String,
    check_paths: usize,
    times: Vec<f64>,
    eps: f64,
    max_rel_discrepancy: f64,
    tolerance: f64,
    richardson_consistent: usize,
    fd_order: wickwz_core::malliavin::FdOrderReport,
    fd_order_t: f64,
    inverse_moment: wickwz_core::malliavin::InverseMomentReport,
    pass: bool,
}

pub fn cmd_check_derivative(ctx: &Context) -> Result<(), CliError> {
    let (p, spec) = ctx.setup()?;
    let c = &ctx.config;
    let dc = &c.derivative;
    let h = dc
        .direction
        .build(&p)
        .map_err(|e| CliError::Config(format!("derivative.direction: {e}")))?;
    if spec.init().degenerate_along(&h) {
        return Err(wickwz_core::Error::DegenerateInit.into());
    }
    let horizon = p.horizon();
    let t_im = dc.t.unwrap_or(horizon);
    let mut opts = EnsembleOptions::new(c.substeps, c.n_paths, c.master_seed);
    opts.output_times = Some(vec![t_im]);
    opts.derivative = Some(h.clone());
    let run = run_ensemble(&spec, &opts)?;
    let im = inverse_moment(&run, 0, dc.q, dc.trim)?;

    let times = c
        .output_times
        .clone()
        .unwrap_or_else(|| check_times(&p, spec.start()));
    let cfg = SolverConfig::default();
    let per_path: Vec<Result<Vec<DerivativeSample>, wickwz_core::Error>> = (0..dc.check_paths)
        .into_par_iter()
        .map(|i| {
            let ps = sample_path(&p, c.substeps, derive_seed(c.master_seed, i as u64))?;
            times
                .iter()
                .map(|&t| derivative_sample(&ps, &spec, &h, t, dc.eps, &cfg))
                .collect()
        })
        .collect();
    let mut w = csv_writer(&ctx.file("derivative.csv"))?;
    w.write_record(["path_id", "t", "dhx_closed", "dhx_fd", "eps"])
        .map_err(csv_err)?;
    let mut worst: f64 = 0.0;
    let mut richardson = 0;
    for (i, samples) in per_path.into_iter().enumerate() {
        for s in samples? {
            worst = worst.max(s.relative_error());
            richardson += s.richardson_ok as usize;
            w.serialize((i, s.t, s.closed_form, s.fd_value, s.eps))
                .map_err(csv_err)?;
        }
    }
    w.flush()?;

    let fd_order_t = times.last().copied().unwrap_or(horizon);
    let ps0 = sample_path(&p, c.substeps, derive_seed(c.master_seed, 0))?;
    let fd_order = fd_order_slope(&ps0, &spec, &h, fd_order_t, &dc.eps_list, &cfg)?;
    let pass = worst <= dc.tolerance;
    let report = DerivativeReport {
        direction: format!("{:?}", dc.direction),
        check_paths: dc.check_paths,
        times,
        eps: dc.eps,
        max_rel_discrepancy: worst,
        tolerance: dc.tolerance,
        richardson_consistent: richardson,
        fd_order,
        fd_order_t,
        inverse_moment: im,
        pass,
    };
    write_json(&ctx.file("derivative_report.json"), &report)?;
    println!(
        "check-derivative: max rel discrepancy {:.3e} (tol {:.1e}), FD slope {}, E|D_hX|^-{} = {:.6e} +- {:.2e}",
        worst,
        dc.tolerance,
        report.fd_order.slope.map_or("n/a".into(), |s| format!("{s:.3}")),
        dc.q,
        report.inverse_moment.estimate,
        report.inverse_moment.std_error
    );
    if pass {
        Ok(())
    } else {
        Err(CliError::StatisticalFail(format!(
            "closed-form vs finite-difference discrepancy {worst:.3e} exceeds {:.1e}",
            dc.tolerance
        )))
    }
}

/// Log-variance and prefactor of `X_t` when the law is an explicit
/// lognormal, i.e. zero drift and a positive prefactor.
fn exact_lognormal(spec: &ModelSpec, t: f64) -> Result<Option<(f64, f64)>, CliError> {
    if !spec.drift().is_zero() {
        return Ok(None);
    }
    let kappa = spec.kappa(t)?.to_step();
    let (y0, g) = match spec.init() {
        InitialCondition::Deterministic { x0 } => (*x0, kappa),
        InitialCondition::LognormalExp { y0, direction } => {
            (*y0, direction.step().add_scaled(&kappa, 1.0))
        }
    };
    Ok((y0 > 0.0).then(|| (y0, StepFunction::norm_sq(&g))))
}

pub fn cmd_density(ctx: &Context) -> Result<(), CliError> {
    use statrs::distribution::{Continuous, LogNormal};

    let (p, spec) = ctx.setup()?;
    let c = &ctx.config;
    let t = match c.density.t {
        Some(t) => t,
        None => default_time(&p, spec.start())?,
    };
    let mut opts = EnsembleOptions::new(c.substeps, c.n_paths, c.master_seed);
    opts.output_times = Some(vec![t]);
    let run = run_ensemble(&spec, &opts)?;
    let xs = run.x_column(0);
    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    let h = match c.density.bandwidth {
        Some(h) => h,
        None => silverman_bandwidth(&sorted),
    };
    let n = sorted.len();
    let lo_q = sorted[n / 1000];
    let hi_q = sorted[(n - 1) - n / 1000];
    let mut lo = lo_q - 4.0 * h;
    if sorted[0] > 0.0 {
        lo = lo.max(0.0);
    }
    let grid = uniform_grid(lo, hi_q + 4.0 * h, c.density.grid_points);
    let est = kde_density(t, &xs, Some(h), &grid)?;

    let mut w = csv_writer(&ctx.file("density.csv"))?;
    w.write_record(["t", "x", "p"]).map_err(csv_err)?;
    for (x, d) in est.grid_x.iter().zip(&est.density) {
        w.serialize((t, x, d)).map_err(csv_err)?;
    }
    w.flush()?;

    let l1 = match exact_lognormal(&spec, t)? {
        Some((y0, var)) if var > 0.0 => {
            let law = LogNormal::new(y0.ln() - 0.5 * var, var.sqrt())
                .map_err(|e| CliError::Config(format!("model: {e}")))?;
            Some(wickwz_core::stats::l1_distance(&est, |x| {
                if x > 0.0 {
                    law.pdf(x)
                } else {
                    0.0
                }
            }))
        }
        _ => None,
    };
    let pass = l1.is_none_or(|d| d <= c.density.l1_tolerance);
    write_json(
        &ctx.file("density_report.json"),
        &json!({
            "t": t,
            "n_samples": n,
            "bandwidth": h,
            "mass": est.mass(),
            "l1_to_exact": l1,
            "l1_tolerance": c.density.l1_tolerance,
            "pass": pass,
        }),
    )?;
    println!(
        "density: t = {t}, bandwidth {h:.4e}, L1 to exact law {}",
        l1.map_or("n/a".into(), |d| format!("{d:.4}"))
    );
    if pass {
        Ok(())
    } else {
        Err(CliError::StatisticalFail(format!(
            "density L1 distance {:.4} exceeds {}",
            l1.unwrap(),
            c.density.l1_tolerance
        )))
    }
}

pub fn cmd_fp(ctx: &Context) -> Result<(), CliError> {
    let (p, spec) = ctx.setup()?;
    let c = &ctx.config;
    let s = spec.start();
    let horizon = p.horizon();
    let mut opts = EnsembleOptions::new(c.substeps, c.n_paths, c.master_seed);
    opts.deta_eps = Some(c.fp.eps);
    let run = run_ensemble(&spec, &opts)?;

    let bumps: Vec<TestFunction> = match &c.fp.bumps {
        Some(list) => list
            .iter()
            .map(|b| make_bump(b.center_t, b.width_t, b.center_x, b.width_x, (s, horizon)))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Config(format!("fp.bumps: {e}")))?,
        None => standard_bumps(s, horizon, c.x_scale())?,
    };
    let mut full = Vec::with_capacity(bumps.len());
    let mut control = Vec::with_capacity(bumps.len());
    for phi in &bumps {
        full.push(fp_residual(&run, phi, true)?);
        control.push(fp_residual(&run, phi, false)?);
    }
    let fp_pass = full.iter().all(|r| r.pass);
    write_json(
        &ctx.file("fp_report.json"),
        &json!({
            "n_paths": run.n_paths(),
            "deta_eps": c.fp.eps,
            "residuals": full,
            "control_without_second_order": control,
            "all_pass": fp_pass,
        }),
    )?;

    let r = match c.fp.regression_t {
        Some(r) => r,
        None => default_time(&p, s)?,
    };
    let j = run
        .output()
        .position_of(r)
        .ok_or_else(|| CliError::Config(format!("fp.regression_t: {r} is not a fine-grid node")))?;
    let est = regress_g(
        r,
        &run.x_column(j),
        &run.deta_column(j).unwrap(),
        c.fp.n_bins,
        c.fp.min_count,
    )?;
    let mut w = csv_writer(&ctx.file("g_estimate.csv"))?;
    w.write_record(["t", "bin_lo", "bin_hi", "m", "stderr", "count"])
        .map_err(csv_err)?;
    for b in est.reported() {
        w.serialize((r, b.lo, b.hi, b.m, b.stderr, b.count))
            .map_err(csv_err)?;
    }
    w.flush()?;

    let mut mean_pass = true;
    if let InitialCondition::Deterministic { x0 } = spec.init() {
        if spec.drift().is_zero() {
            let wick = mean_preservation(&run, *x0)?;
            let naive = naive_comparator(&run, *x0);
            let expected: Vec<f64> = run
                .output()
                .times()
                .iter()
                .map(|&t| naive_expected_mean(&p, t, *x0))
                .collect::<Result<_, _>>()?;
            mean_pass = wick.all_pass;
            write_json(
                &ctx.file("mean_report.json"),
                &json!({ "wick": wick, "naive": naive, "naive_expected_mean": expected }),
            )?;
        }
    }
    let passed = full.iter().filter(|r| r.pass).count();
    println!(
        "fp: {passed}/{} test functions within 3 SE; g estimated at r = {r}",
        full.len()
    );
    if fp_pass && mean_pass {
        Ok(())
    } else if !fp_pass {
        Err(CliError::StatisticalFail(format!(
            "{} of {} weak-identity residuals exceed 3 SE",
            full.len() - passed,
            full.len()
        )))
    } else {
        Err(CliError::StatisticalFail(
            "sample mean left the 3 SE band".into(),
        ))
    }
}

pub fn cmd_convergence(ctx: &Context) -> Result<(), CliError> {
    fs::create_dir_all(&ctx.out_dir)?;
    let c = &ctx.config;
    let cc = &c.convergence;
    let horizon = c.partition()?.horizon();
    let seeds: Vec<u64> = (0..cc.seeds as u64)
        .map(|i| derive_seed(c.master_seed, i))
        .collect();
    let rep = convergence_report(&seeds, &cc.ns, cc.substeps, horizon)?;
    let [lo, hi] = cc.slope_range;
    let pass = rep.slope.is_some_and(|s| (lo..=hi).contains(&s));
    write_json(
        &ctx.file("convergence.json"),
        &json!({ "report": rep, "slope_range": cc.slope_range, "pass": pass }),
    )?;
    let slope = rep.slope.map_or("n/a".into(), |s| format!("{s:.4}"));
    println!("convergence: slope {slope} (accepted range [{lo}, {hi}])");
    if pass {
        Ok(())
    } else {
        Err(CliError::StatisticalFail(format!(
            "convergence slope {slope} outside [{lo}, {hi}]"
        )))
    }
}

pub fn cmd_gbm_demo(ctx: &Context) -> Result<(), CliError> {
    fs::create_dir_all(&ctx.out_dir)?;
    let c = &ctx.config;
    let p = c.partition()?;
    let s = c.model.s;
    let per = c.gbm_demo.points_per_interval.max(1);
    let mut grid = Vec::new();
    for k in 0..p.num_intervals() {
        let (a, b) = p.interval(k);
        if a < s {
            continue;
        }
        grid.extend((0..per).map(|j| a + (b - a) * j as f64 / per as f64));
    }
    grid.push(p.horizon());
    let rep =
        fp_operator_compare(&p, s, &grid).map_err(|e| CliError::Config(format!("model.s: {e}")))?;
    let file = fs::File::create(ctx.file("gbm_demo.csv"))?;
    rep.write_csv(file)?;
    let pass = rep
        .breakpoint_averages
        .iter()
        .all(|a| (a - 0.5).abs() <= 1e-12);
    println!(
        "gbm-demo: sup |xi - 1/2| = {:.3}, running average at breakpoints {:?}",
        rep.sup_deviation, rep.breakpoint_averages
    );
    if pass {
        Ok(())
    } else {
        Err(CliError::StatisticalFail(
            "running average of xi differs from 1/2 at a breakpoint".into(),
        ))
    }
}
