use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{reconstruct, solve_z, ModelSpec, OutputGrid, SolverConfig};
use crate::error::{Error, Result};
use crate::kernels::Direction;
use crate::malliavin::deta_x;
use crate::paths::{FineGrid, PathSample};
use crate::rng::derive_seed;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleOptions {
    pub substeps: usize,
    pub n_paths: usize,
    pub master_seed: u64,
    /// Output times; `None` means every fine node from `s` to `T`.
    pub output_times: Option<Vec<f64>>,
    /// Record the closed-form `D_h X` along this direction.
    pub derivative: Option<Direction>,
    /// Record `D_{η_r} X_r` at each output time by central differences with this step.
    pub deta_eps: Option<f64>,
    pub solver: SolverConfig,
}

impl EnsembleOptions {
    pub fn new(substeps: usize, n_paths: usize, master_seed: u64) -> Self {
        EnsembleOptions {
            substeps,
            n_paths,
            master_seed,
            output_times: None,
            derivative: None,
            deta_eps: None,
            solver: SolverConfig::default(),
        }
    }
}

/// Per-path trajectories on a shared output grid. Bulk arrays are stored
/// path-major: entry `(path, j)` lives at `path * n_times + j`.
#[derive(Clone, Debug)]
pub struct EnsembleRun {
    spec: ModelSpec,
    options: EnsembleOptions,
    output: OutputGrid,
    seeds: Vec<u64>,
    config_hash: String,
    z: Vec<f64>,
    x: Vec<f64>,
    b_poly: Vec<f64>,
    dhx: Option<Vec<f64>>,
    deta: Option<Vec<f64>>,
}

struct PathRecord {
    z: Vec<f64>,
    x: Vec<f64>,
    b_poly: Vec<f64>,
    dhx: Vec<f64>,
    deta: Vec<f64>,
}

fn simulate_one(
    spec: &ModelSpec,
    opts: &EnsembleOptions,
    out: &OutputGrid,
    ps: &PathSample,
) -> Result<PathRecord> {
    let cfg = &opts.solver;
    let z = solve_z(ps, spec, out, cfg)?;
    let nt = out.len();
    let mut x = Vec::with_capacity(nt);
    let mut dhx = Vec::new();
    let mut deta = Vec::new();
    let mut b_poly = Vec::with_capacity(nt);
    for t in out.times() {
        b_poly.push(ps.polygonal_value(t)?);
        match &opts.derivative {
            Some(h) => {
                let rec = reconstruct(ps, spec, t, cfg, true)?;
                let dy = spec.init().derivative(&rec.shifted, h)?;
                dhx.push(dy * rec.log_v.exp() * rec.e_kappa.value);
                x.push(rec.x());
            }
            None => x.push(reconstruct(ps, spec, t, cfg, false)?.x()),
        }
        if let Some(eps) = opts.deta_eps {
            deta.push(deta_x(ps, spec, t, eps, cfg)?);
        }
    }
    Ok(PathRecord {
        z,
        x,
        b_poly,
        dhx,
        deta,
    })
}

fn config_hash(spec: &ModelSpec, opts: &EnsembleOptions) -> Result<String> {
    let bytes = serde_json::to_vec(&(spec, opts))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Simulates `n_paths` independent paths in parallel. Path `i` uses seed
/// `derive_seed(master_seed, i)`, so results do not depend on scheduling.
/// The first failing path (lowest index) aborts the run.
pub fn run_ensemble(spec: &ModelSpec, opts: &EnsembleOptions) -> Result<EnsembleRun> {
    if opts.n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be >= 1".into()));
    }
    if let Some(h) = &opts.derivative {
        if !spec.unit_sigma() {
            return Err(Error::SigmaUnsupported);
        }
        if let Some(k) = h.first_violation() {
            return Err(Error::NotAdmissible(k));
        }
        if spec.init().degenerate_along(h) {
            return Err(Error::DegenerateInit);
        }
    }
    if let Some(eps) = opts.deta_eps {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::BadStep(eps));
        }
    }
    let grid = FineGrid::new(spec.partition(), opts.substeps)?;
    let output = match &opts.output_times {
        Some(ts) => OutputGrid::from_times(&grid, ts)?,
        None => OutputGrid::all_from(&grid, spec.start())?,
    };
    if output.time(0) < spec.start() - crate::kernels::TIME_TOL {
        return Err(Error::out_of_range(
            "output time",
            output.time(0),
            spec.start(),
            grid.partition().horizon(),
        ));
    }
    let seeds: Vec<u64> = (0..opts.n_paths as u64)
        .map(|i| derive_seed(opts.master_seed, i))
        .collect();
    let records: Vec<Result<PathRecord>> = seeds
        .par_iter()
        .map(|&seed| {
            let ps = PathSample::sample(&grid, seed)?;
            simulate_one(spec, opts, &output, &ps)
        })
        .collect();

    let nt = output.len();
    let total = opts.n_paths * nt;
    let mut z = Vec::with_capacity(total);
    let mut x = Vec::with_capacity(total);
    let mut b_poly = Vec::with_capacity(total);
    let mut dhx = opts.derivative.as_ref().map(|_| Vec::with_capacity(total));
    let mut deta = opts.deta_eps.map(|_| Vec::with_capacity(total));
    for (i, rec) in records.into_iter().enumerate() {
        let rec = rec.map_err(|e| match e {
            Error::NonFiniteState { time, .. } => Error::NonFiniteState { path: i, time },
            other => other,
        })?;
        z.extend(rec.z);
        x.extend(rec.x);
        b_poly.extend(rec.b_poly);
        if let Some(d) = dhx.as_mut() {
            d.extend(rec.dhx);
        }
        if let Some(d) = deta.as_mut() {
            d.extend(rec.deta);
        }
    }
    Ok(EnsembleRun {
        config_hash: config_hash(spec, opts)?,
        spec: spec.clone(),
        options: opts.clone(),
        output,
        seeds,
        z,
        x,
        b_poly,
        dhx,
        deta,
    })
}

fn column(v: &[f64], nt: usize, j: usize) -> Vec<f64> {
    v.iter().skip(j).step_by(nt).copied().collect()
}

impl EnsembleRun {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn options(&self) -> &EnsembleOptions {
        &self.options
    }

    pub fn output(&self) -> &OutputGrid {
        &self.output
    }

    pub fn n_paths(&self) -> usize {
        self.seeds.len()
    }

    pub fn n_times(&self) -> usize {
        self.output.len()
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn b_poly(&self) -> &[f64] {
        &self.b_poly
    }

    pub fn dhx(&self) -> Option<&[f64]> {
        self.dhx.as_deref()
    }

    pub fn deta(&self) -> Option<&[f64]> {
        self.deta.as_deref()
    }

    pub fn x_column(&self, j: usize) -> Vec<f64> {
        column(&self.x, self.n_times(), j)
    }

    pub fn z_column(&self, j: usize) -> Vec<f64> {
        column(&self.z, self.n_times(), j)
    }

    pub fn b_poly_column(&self, j: usize) -> Vec<f64> {
        column(&self.b_poly, self.n_times(), j)
    }

    pub fn dhx_column(&self, j: usize) -> Option<Vec<f64>> {
        self.dhx.as_ref().map(|d| column(d, self.n_times(), j))
    }

    pub fn deta_column(&self, j: usize) -> Option<Vec<f64>> {
        self.deta.as_ref().map(|d| column(d, self.n_times(), j))
    }

    pub fn x_path(&self, i: usize) -> &[f64] {
        let nt = self.n_times();
        &self.x[i * nt..(i + 1) * nt]
    }

    /// Writes `run.json` and `trajectories.csv` into `dir`. `config` is
    /// embedded verbatim; when absent the resolved model and options are.
    pub fn write_dir(&self, dir: &Path, config: Option<&serde_json::Value>) -> Result<()> {
        fs::create_dir_all(dir)?;
        let config = match config {
            Some(c) => c.clone(),
            None => serde_json::json!({ "model": &self.spec, "options": &self.options }),
        };
        let created = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let meta = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "config": config,
            "config_hash": self.config_hash,
            "master_seed": self.options.master_seed,
            "n_paths": self.n_paths(),
            "output_times": self.output.times(),
            "seeds": self.seeds,
            "metadata": { "created_unix": created },
        });
        fs::write(dir.join("run.json"), serde_json::to_string_pretty(&meta)?)?;

        let mut w = csv::Writer::from_path(dir.join("trajectories.csv"))?;
        w.write_record(["path_id", "t", "Z", "X"])?;
        let times = self.output.times();
        let nt = times.len();
        for i in 0..self.n_paths() {
            for (j, t) in times.iter().enumerate() {
                let k = i * nt + j;
                w.serialize((i, t, self.z[k], self.x[k]))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Partition;
    use crate::solver::{Drift, InitialCondition};

    fn gbm_spec() -> ModelSpec {
        let p = Partition::uniform(4, 1.0).unwrap();
        ModelSpec::new(
            &p,
            Drift::Zero,
            None,
            InitialCondition::Deterministic { x0: 1.0 },
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn same_seed_same_run() {
        let sp = gbm_spec();
        let opts = EnsembleOptions::new(4, 1, 9);
        let a = run_ensemble(&sp, &opts).unwrap();
        let b = run_ensemble(&sp, &opts).unwrap();
        assert_eq!(a.x(), b.x());
        assert_eq!(a.z(), b.z());
        assert_eq!(a.config_hash(), b.config_hash());
        let c = run_ensemble(&sp, &EnsembleOptions::new(4, 1, 10)).unwrap();
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let p = Partition::uniform(4, 1.0).unwrap();
        let sp = ModelSpec::new(
            &p,
            Drift::SinDrift { a: 1.0, omega: 1.0 },
            None,
            InitialCondition::Deterministic { x0: 0.5 },
            0.0,
        )
        .unwrap();
        let mut opts = EnsembleOptions::new(4, 16, 3);
        opts.output_times = Some(vec![0.0, 0.5, 1.0]);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_ensemble(&sp, &opts).unwrap());
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| run_ensemble(&sp, &opts).unwrap());
        assert_eq!(one.x(), many.x());
    }

    #[test]
    fn nonfinite_state_names_path() {
        let p = Partition::uniform(2, 1.0).unwrap();
        let sp = ModelSpec::new(
            &p,
            Drift::Linear { beta: 1e308 },
            None,
            InitialCondition::Deterministic { x0: 1e300 },
            0.0,
        )
        .unwrap();
        let err = run_ensemble(&sp, &EnsembleOptions::new(2, 3, 1)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteState { path: 0, .. }));
    }

    #[test]
    fn write_dir_creates_two_files() {
        let sp = gbm_spec();
        let run = run_ensemble(&sp, &EnsembleOptions::new(2, 2, 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        run.write_dir(dir.path(), None).unwrap();
        let csv = fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
        assert!(csv.starts_with("path_id,t,Z,X\n"));
        assert_eq!(csv.lines().count(), 1 + 2 * 9);
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap())
                .unwrap();
        assert_eq!(meta["schema_version"], 1);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 2);
    }
}
