//! Command implementations behind the binary: resolve a run configuration,
//! train, validate, run the classical oracle, and export every artifact as
//! plain CSV (comma-delimited, '.' decimal, LF endings). Every output file
//! starts with a header line carrying the artifact version and a hash of the
//! resolved configuration.

use crate::error::{Error, Result};
use crate::metrics::{check_error_bounds, space_time_errors, ErrorReport, Reference};
use crate::network::MlpState;
use crate::optimizer::LrSchedule;
use crate::problems::properties::{
    load_boundary_series, load_property_table, synthetic_boundary_series,
    synthetic_property_table, BoundarySeries, PropertyTable,
};
use crate::problems::{
    linear_control, make_coffee_problem, make_toy_problem, CoffeeGeometry, Nondimensionalization,
    ProblemSpec,
};
use crate::refsolver::{solve_linear, solve_nonlinear, Grid1d, OracleSolution};
use crate::testspace::midpoint_rule;
use crate::train::{train, CheckpointRecord, TrainEvent, TrainOptions, TrainOutcome};
use crate::weakform::{initial_sample, sample_state_values, WeakForm};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::{self, File};
use std::io::{BufWriter, Write as IoWrite};
use std::path::{Path, PathBuf};

pub const ARTIFACT_VERSION: &str = "v1";
/// Environment variable naming the default directory for data CSVs.
pub const DATA_DIR_ENV: &str = "VPINN_DATA_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Toy,
    Coffee,
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(ProblemKind::Toy),
            "coffee" => Ok(ProblemKind::Coffee),
            other => Err(Error::Config(format!(
                "unknown problem '{other}' (expected 'toy' or 'coffee')"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Constant,
    Exponential,
    Cosine,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(ScheduleKind::Constant),
            "exponential" | "exp" => Ok(ScheduleKind::Exponential),
            "cosine" => Ok(ScheduleKind::Cosine),
            other => Err(Error::Config(format!("unknown schedule '{other}'"))),
        }
    }
}

/// Fully resolved run configuration. Serialized (TOML) for the config hash
/// carried in every artifact header.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub init_seed: u64,
    pub quadrature_seed: u64,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub iterations: usize,
    pub lr0: f64,
    pub schedule: ScheduleKind,
    pub exp_decay_rate: f64,
    pub exp_decay_steps: f64,
    pub n_time: usize,
    pub n_test: usize,
    pub n_int: usize,
    pub t_end: f64,
    pub fixed_quadrature: bool,
    pub lagged_coefficients: bool,
    pub container_thickness: f64,
    pub properties_path: Option<PathBuf>,
    pub boundary_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub checkpoint_every: usize,
    pub metrics_every: usize,
    pub metric_points: usize,
    pub snapshot_steps: Vec<usize>,
    pub oracle_cells: usize,
    pub oracle_steps: usize,
    pub picard_tol: f64,
    pub picard_max: usize,
}

/// Partial configuration: file contents and command-line flags both merge
/// onto the per-problem defaults.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub problem: Option<ProblemKind>,
    pub init_seed: Option<u64>,
    pub quadrature_seed: Option<u64>,
    pub hidden_layers: Option<usize>,
    pub hidden_width: Option<usize>,
    pub iterations: Option<usize>,
    pub lr0: Option<f64>,
    pub schedule: Option<ScheduleKind>,
    pub exp_decay_rate: Option<f64>,
    pub exp_decay_steps: Option<f64>,
    pub n_time: Option<usize>,
    pub n_test: Option<usize>,
    pub n_int: Option<usize>,
    pub t_end: Option<f64>,
    pub fixed_quadrature: Option<bool>,
    pub lagged_coefficients: Option<bool>,
    pub container_thickness: Option<f64>,
    pub properties_path: Option<PathBuf>,
    pub boundary_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub checkpoint_every: Option<usize>,
    pub metrics_every: Option<usize>,
    pub metric_points: Option<usize>,
    pub snapshot_steps: Option<Vec<usize>>,
    pub oracle_cells: Option<usize>,
    pub oracle_steps: Option<usize>,
    pub picard_tol: Option<f64>,
    pub picard_max: Option<usize>,
}

impl RunConfig {
    pub fn defaults_for(problem: ProblemKind) -> RunConfig {
        let common = RunConfig {
            problem,
            init_seed: 0,
            quadrature_seed: 1,
            hidden_layers: 5,
            hidden_width: 32,
            iterations: 20_000,
            lr0: 1e-2,
            schedule: ScheduleKind::Exponential,
            exp_decay_rate: 0.9,
            exp_decay_steps: 1000.0,
            n_time: 128,
            n_test: 20,
            n_int: 128,
            t_end: 1.0,
            fixed_quadrature: false,
            lagged_coefficients: false,
            container_thickness: 0.1,
            properties_path: None,
            boundary_path: None,
            checkpoint_path: None,
            out_dir: PathBuf::from("out"),
            checkpoint_every: 1000,
            metrics_every: 100,
            metric_points: 2048,
            snapshot_steps: vec![1, 32, 64, 128],
            oracle_cells: 512,
            oracle_steps: 512,
            picard_tol: crate::refsolver::DEFAULT_PICARD_TOL,
            picard_max: crate::refsolver::DEFAULT_PICARD_MAX,
        };
        match problem {
            ProblemKind::Toy => common,
            ProblemKind::Coffee => RunConfig {
                iterations: 100_000,
                lr0: 1e-3,
                schedule: ScheduleKind::Cosine,
                n_test: 64,
                n_int: 256,
                t_end: CoffeeGeometry::default().t_end,
                oracle_cells: 256,
                oracle_steps: 512,
                ..common
            },
        }
    }

    pub fn apply(&mut self, o: &ConfigOverrides) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &o.$field { self.$field = v.clone(); })*
            };
        }
        take!(
            init_seed,
            quadrature_seed,
            hidden_layers,
            hidden_width,
            iterations,
            lr0,
            schedule,
            exp_decay_rate,
            exp_decay_steps,
            n_time,
            n_test,
            n_int,
            t_end,
            fixed_quadrature,
            lagged_coefficients,
            container_thickness,
            out_dir,
            checkpoint_every,
            metrics_every,
            metric_points,
            snapshot_steps,
            oracle_cells,
            oracle_steps,
            picard_tol,
            picard_max
        );
        if o.properties_path.is_some() {
            self.properties_path = o.properties_path.clone();
        }
        if o.boundary_path.is_some() {
            self.boundary_path = o.boundary_path.clone();
        }
        if o.checkpoint_path.is_some() {
            self.checkpoint_path = o.checkpoint_path.clone();
        }
    }

    /// Merge defaults <- config file <- flag overrides. The problem kind may
    /// come from either source (flags win).
    pub fn from_sources(file: Option<&Path>, flags: &ConfigOverrides) -> Result<RunConfig> {
        let file_overrides = match file {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                toml::from_str::<ConfigOverrides>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => ConfigOverrides::default(),
        };
        let problem = flags
            .problem
            .or(file_overrides.problem)
            .unwrap_or(ProblemKind::Toy);
        let mut cfg = RunConfig::defaults_for(problem);
        cfg.apply(&file_overrides);
        cfg.apply(flags);
        cfg.problem = problem;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(Error::Config("network must have hidden layers".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.n_time == 0 || self.n_test == 0 || self.n_int < 2 {
            return Err(Error::Config("discretization sizes too small".into()));
        }
        if self.t_end <= 0.0 || self.lr0 <= 0.0 {
            return Err(Error::Config("t_end and lr0 must be positive".into()));
        }
        if self.snapshot_steps.iter().any(|&n| n == 0 || n > self.n_time) {
            return Err(Error::Config(format!(
                "snapshot steps must lie in 1..={}",
                self.n_time
            )));
        }
        for path in [&self.properties_path, &self.boundary_path] {
            if let Some(p) = path {
                let resolved = resolve_data_path(p);
                if !resolved.exists() {
                    return Err(Error::Config(format!(
                        "data file not found: {}",
                        resolved.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Short hex digest of the serialized configuration.
    pub fn config_hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![1];
        w.extend(std::iter::repeat(self.hidden_width).take(self.hidden_layers));
        w.push(self.n_time);
        w
    }

    pub fn schedule(&self) -> LrSchedule {
        match self.schedule {
            ScheduleKind::Constant => LrSchedule::Constant,
            ScheduleKind::Exponential => LrSchedule::Exponential {
                rate: self.exp_decay_rate,
                decay_steps: self.exp_decay_steps,
            },
            ScheduleKind::Cosine => LrSchedule::Cosine {
                total_steps: self.iterations,
            },
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            iterations: self.iterations,
            lr0: self.lr0,
            schedule: self.schedule(),
            quadrature_seed: self.quadrature_seed,
            fixed_quadrature: self.fixed_quadrature,
            lagged_coefficients: self.lagged_coefficients,
            checkpoint_every: self.checkpoint_every,
            metrics_every: self.metrics_every,
            metric_points: self.metric_points,
        }
    }

    /// Materialize the problem this configuration describes.
    pub fn build_problem(&self) -> Result<(ProblemSpec, Option<Nondimensionalization>)> {
        match self.problem {
            ProblemKind::Toy => {
                let mut p = make_toy_problem();
                p.n_time = self.n_time;
                p.n_test = self.n_test;
                p.n_int = self.n_int;
                p.validate()?;
                Ok((p, None))
            }
            ProblemKind::Coffee => {
                let table = self.load_properties()?;
                let geometry = CoffeeGeometry {
                    d: self.container_thickness,
                    t_end: self.t_end,
                };
                let series = self.load_boundary(&table, geometry)?;
                let (mut p, nd) = make_coffee_problem(&table, &series, geometry)?;
                p.n_time = self.n_time;
                p.n_test = self.n_test;
                p.n_int = self.n_int;
                p.validate()?;
                Ok((p, Some(nd)))
            }
        }
    }

    fn load_properties(&self) -> Result<PropertyTable> {
        match &self.properties_path {
            Some(path) => load_property_table(&resolve_data_path(path)),
            None => Ok(synthetic_property_table()),
        }
    }

    fn load_boundary(&self, table: &PropertyTable, geometry: CoffeeGeometry) -> Result<BoundarySeries> {
        match &self.boundary_path {
            Some(path) => load_boundary_series(&resolve_data_path(path)),
            None => {
                let t_ref = crate::problems::COFFEE_INITIAL_TEMP_C;
                let nd = Nondimensionalization::new(
                    t_ref,
                    geometry.d,
                    table.rho_at(t_ref),
                    table.cp_at(t_ref),
                    table.k_at(t_ref),
                )?;
                Ok(synthetic_boundary_series(geometry.t_end * nd.t0))
            }
        }
    }
}

/// Resolve a data path against `VPINN_DATA_DIR` when it is relative and the
/// environment variable is set.
pub fn resolve_data_path(path: &Path) -> PathBuf {
    if path.is_absolute() || path.exists() {
        return path.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => PathBuf::from(dir).join(path),
        None => path.to_path_buf(),
    }
}

fn artifact_writer(path: &Path, hash: &str) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vpinn {ARTIFACT_VERSION} config={hash}")?;
    Ok(w)
}

/// Artifacts produced by a training run.
pub struct TrainArtifacts {
    pub outcome: TrainOutcome,
    pub problem: ProblemSpec,
    pub nondim: Option<Nondimensionalization>,
    pub state: MlpState,
    pub out_dir: PathBuf,
}

/// Train per the configuration and write all artifacts under `out_dir`.
/// The loss history and checkpoints are flushed incrementally, so a
/// divergence abort preserves everything written so far.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainArtifacts> {
    cfg.validate()?;
    let hash = cfg.config_hash();
    let (problem, nondim) = cfg.build_problem()?;
    let mut state = MlpState::init(cfg.init_seed, &cfg.widths())?;
    fs::create_dir_all(&cfg.out_dir)?;

    let started = std::time::Instant::now();
    let mut history_w = artifact_writer(&cfg.out_dir.join("loss_history.csv"), &hash)?;
    writeln!(history_w, "iteration,lr,loss")?;

    let out_dir = cfg.out_dir.clone();
    let widths = cfg.widths();
    let observer = |event: TrainEvent| -> Result<()> {
        match event {
            TrainEvent::Iteration(rec) => {
                writeln!(history_w, "{},{},{}", rec.iteration, rec.lr, rec.loss)?;
                Ok(())
            }
            TrainEvent::Checkpoint(rec) => {
                write_checkpoint_files(&out_dir, &hash, &widths, rec)?;
                Ok(())
            }
        }
    };

    let outcome = train(&mut state, &problem, &cfg.train_options(), observer);
    // flush whatever history exists even when training aborted
    drop(history_w);
    let outcome = outcome?;

    write_final_checkpoint(&cfg.out_dir, &hash, &state)?;
    write_snapshots(cfg, &hash, &problem, &state)?;
    let report = write_reports(cfg, &hash, &problem, &state, &outcome)?;
    if cfg.problem == ProblemKind::Coffee {
        write_midpoint_trace(cfg, &hash, &problem, &state)?;
    }
    let mut meta = BufWriter::new(File::create(cfg.out_dir.join("run_meta.txt"))?);
    writeln!(meta, "config_hash: {hash}")?;
    writeln!(meta, "problem: {}", problem.name)?;
    writeln!(meta, "iterations: {}", outcome.history.len())?;
    writeln!(meta, "final_loss: {}", outcome.final_loss)?;
    if let Some(r) = &report {
        writeln!(meta, "rel_l2: {}", r.rel_l2)?;
        writeln!(meta, "rel_h10: {}", r.rel_h10)?;
    }
    writeln!(meta, "wall_seconds: {:.3}", started.elapsed().as_secs_f64())?;
    drop(meta);

    Ok(TrainArtifacts {
        outcome,
        problem,
        nondim,
        state,
        out_dir: cfg.out_dir.clone(),
    })
}

fn write_checkpoint_files(
    out_dir: &Path,
    hash: &str,
    _widths: &[usize],
    rec: &CheckpointRecord,
) -> Result<()> {
    let mut w = artifact_writer(
        &out_dir.join(format!("residuals_iter{:06}.csv", rec.iteration + 1)),
        hash,
    )?;
    writeln!(w, "n,k,r")?;
    for n in 1..=rec.residuals.n_time {
        for k in 0..rec.residuals.n_test {
            writeln!(w, "{n},{k},{}", rec.residuals.get(n, k))?;
        }
    }
    Ok(())
}

fn write_final_checkpoint(out_dir: &Path, hash: &str, state: &MlpState) -> Result<()> {
    let path = out_dir.join("checkpoint_final.txt");
    let mut w = artifact_writer(&path, hash)?;
    w.write_all(state.to_checkpoint_string().as_bytes())?;
    Ok(())
}

fn snapshot_grid(problem: &ProblemSpec) -> Vec<f64> {
    let n = 400;
    (0..=n)
        .map(|i| problem.domain.0 + (problem.domain.1 - problem.domain.0) * i as f64 / n as f64)
        .collect()
}

fn write_snapshots(
    cfg: &RunConfig,
    hash: &str,
    problem: &ProblemSpec,
    state: &MlpState,
) -> Result<()> {
    let xs = snapshot_grid(problem);
    let bc = problem.bc_enforcer();
    let samples = sample_state_values(state, &bc, &xs);
    for &n in &cfg.snapshot_steps {
        let mut w = artifact_writer(
            &cfg.out_dir.join(format!("snapshot_step{n:03}.csv")),
            hash,
        )?;
        let t = problem.time_at(n);
        match &problem.exact {
            Some(exact) => {
                writeln!(w, "x,u,u_exact")?;
                for (i, &x) in xs.iter().enumerate() {
                    writeln!(
                        w,
                        "{x},{},{}",
                        samples.steps[n - 1].values[i],
                        exact.eval(x, t)
                    )?;
                }
            }
            None => {
                writeln!(w, "x,u")?;
                for (i, &x) in xs.iter().enumerate() {
                    writeln!(w, "{x},{}", samples.steps[n - 1].values[i])?;
                }
            }
        }
    }
    Ok(())
}

/// Error report vs the available reference; writes error_report.csv and
/// per_step_metrics.csv. Returns the report when a reference exists.
fn write_reports(
    cfg: &RunConfig,
    hash: &str,
    problem: &ProblemSpec,
    state: &MlpState,
    outcome: &TrainOutcome,
) -> Result<Option<ErrorReport>> {
    let metric_quad = midpoint_rule(problem.domain, cfg.metric_points);
    let bc = problem.bc_enforcer();
    let samples = sample_state_values(state, &bc, &metric_quad.points);
    let form = WeakForm::new(problem, cfg.lagged_coefficients)?;
    let mut vs = crate::autodiff::ValueScope;
    let initial = initial_sample(&mut vs, problem, &metric_quad.points);
    let (_, residuals) = form.total_loss(&mut vs, &samples, &initial, &metric_quad)?;

    let report = match (&problem.exact, cfg.problem) {
        (Some(exact), _) => Some(space_time_errors(
            &samples,
            &metric_quad,
            &Reference::Exact(exact),
            problem,
            Some(&residuals),
        )?),
        (None, ProblemKind::Coffee) => {
            let oracle = coffee_oracle(cfg, problem)?;
            Some(space_time_errors(
                &samples,
                &metric_quad,
                &Reference::Oracle(&oracle),
                problem,
                Some(&residuals),
            )?)
        }
        _ => None,
    };

    if let Some(report) = &report {
        let mut w = artifact_writer(&cfg.out_dir.join("error_report.csv"), hash)?;
        writeln!(w, "metric,value")?;
        writeln!(w, "reference,{:?}", report.reference)?;
        writeln!(w, "rel_l2,{}", report.rel_l2)?;
        writeln!(w, "rel_h10,{}", report.rel_h10)?;
        writeln!(w, "m_const,{}", report.m_const)?;
        writeln!(w, "gamma,{}", report.gamma)?;
        writeln!(w, "poincare,{}", report.poincare)?;
        writeln!(w, "final_loss,{}", outcome.final_loss)?;
        let mut psw = artifact_writer(&cfg.out_dir.join("per_step_metrics.csv"), hash)?;
        writeln!(psw, "n,h10_error,dual_norm")?;
        for n in 1..=problem.n_time {
            let dual = report
                .dual_norm_per_step
                .get(n - 1)
                .copied()
                .unwrap_or(f64::NAN);
            writeln!(psw, "{n},{},{dual}", report.per_step_h10[n - 1])?;
        }
    }
    Ok(report)
}

/// Oracle solve of the coffee problem on the configured grid (steps are a
/// multiple of the problem's step count so time nodes align).
fn coffee_oracle(cfg: &RunConfig, problem: &ProblemSpec) -> Result<OracleSolution> {
    let steps = cfg.oracle_steps.max(problem.n_time);
    let steps = steps - steps % problem.n_time;
    let grid = Grid1d::new(problem.domain, cfg.oracle_cells, problem.t_end, steps)?;
    solve_nonlinear(problem, &grid, cfg.picard_tol, cfg.picard_max)
}

fn write_midpoint_trace(
    cfg: &RunConfig,
    hash: &str,
    problem: &ProblemSpec,
    state: &MlpState,
) -> Result<()> {
    let mid = 0.5 * (problem.domain.0 + problem.domain.1);
    let bc = problem.bc_enforcer();
    let samples = sample_state_values(state, &bc, &[mid]);
    let oracle = coffee_oracle(cfg, problem)?;
    let control = linear_control(problem);
    let grid = oracle.grid;
    let control_sol = solve_linear(&control, &grid)?;
    let stride = grid.n_steps / problem.n_time;
    let mut w = artifact_writer(&cfg.out_dir.join("midpoint_trace.csv"), hash)?;
    writeln!(w, "t,u_nn,u_oracle,u_control")?;
    for n in 1..=problem.n_time {
        let t = problem.time_at(n);
        writeln!(
            w,
            "{t},{},{},{}",
            samples.steps[n - 1].values[0],
            oracle.interp(n * stride, mid),
            control_sol.interp(n * stride, mid)
        )?;
    }
    Ok(())
}

/// Status of a single validation check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug)]
pub struct ValidationCheck {
    pub name: String,
    pub status: CheckStatus,
    pub value: String,
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    /// Hard failures only; skipped checks do not fail validation.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&ValidationCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Validate a checkpoint: oracle comparison, bound checks, boundary
/// exactness, max-principle and trend checks. Writes validation.csv and
/// prints a human-readable block.
pub fn cmd_validate(cfg: &RunConfig) -> Result<ValidationReport> {
    cfg.validate()?;
    let hash = cfg.config_hash();
    let (problem, _) = cfg.build_problem()?;
    let ckpt_path = cfg
        .checkpoint_path
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("checkpoint_final.txt"));
    if !ckpt_path.exists() {
        return Err(Error::Config(format!(
            "missing checkpoint: {}",
            ckpt_path.display()
        )));
    }
    let text = fs::read_to_string(&ckpt_path)?;
    let state = MlpState::from_checkpoint_str(&text)?;
    if state.out_dim() != problem.n_time {
        return Err(Error::Config(format!(
            "checkpoint outputs {} steps, problem configured for {}",
            state.out_dim(),
            problem.n_time
        )));
    }

    let mut checks = Vec::new();
    let bc = problem.bc_enforcer();

    // boundary exactness at both endpoints
    let endpoints = [problem.domain.0, problem.domain.1];
    let mut worst_bc: f64 = 0.0;
    let samples_ends = sample_state_values(&state, &bc, &endpoints);
    for n in 1..=problem.n_time {
        let (l, r) = problem.boundary_values_at(n);
        worst_bc = worst_bc.max((samples_ends.steps[n - 1].values[0] - l).abs());
        worst_bc = worst_bc.max((samples_ends.steps[n - 1].values[1] - r).abs());
    }
    checks.push(ValidationCheck {
        name: "boundary_exactness".into(),
        status: if worst_bc < 1e-12 {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        value: format!("{worst_bc:e}"),
    });

    // deterministic residual assembly
    let metric_quad = midpoint_rule(problem.domain, cfg.metric_points);
    let samples = sample_state_values(&state, &bc, &metric_quad.points);
    let form = WeakForm::new(&problem, cfg.lagged_coefficients)?;
    let mut vs = crate::autodiff::ValueScope;
    let initial = initial_sample(&mut vs, &problem, &metric_quad.points);
    let (_, residuals) = form.total_loss(&mut vs, &samples, &initial, &metric_quad)?;
    checks.push(ValidationCheck {
        name: "residuals_finite".into(),
        status: if residuals.is_finite() {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        value: format!("{}", residuals.loss()),
    });

    match &problem.exact {
        Some(exact) => {
            let report = space_time_errors(
                &samples,
                &metric_quad,
                &Reference::Exact(exact),
                &problem,
                Some(&residuals),
            )?;
            let bound = check_error_bounds(&report, 1e-3)?;
            checks.push(ValidationCheck {
                name: "error_lower_bound".into(),
                status: if bound.passed {
                    CheckStatus::Pass
                } else {
                    CheckStatus::Fail
                },
                value: format!("{} violations", bound.violations.len()),
            });
            checks.push(ValidationCheck {
                name: "rel_l2".into(),
                status: CheckStatus::Pass,
                value: format!("{}", report.rel_l2),
            });
            checks.push(ValidationCheck {
                name: "rel_h10".into(),
                status: CheckStatus::Pass,
                value: format!("{}", report.rel_h10),
            });
        }
        None => {
            // coffee: compare against the oracle and check the max principle
            let oracle = coffee_oracle(cfg, &problem)?;
            let report = space_time_errors(
                &samples,
                &metric_quad,
                &Reference::Oracle(&oracle),
                &problem,
                Some(&residuals),
            )?;
            checks.push(ValidationCheck {
                name: "rel_l2_vs_oracle".into(),
                status: CheckStatus::Pass,
                value: format!("{}", report.rel_l2),
            });
            let (lo, hi) = data_bounds(&problem);
            let tol = 0.02;
            let mut worst = 0.0_f64;
            for step in &samples.steps {
                for &v in &step.values {
                    worst = worst.max((lo - v).max(v - hi).max(0.0));
                }
            }
            checks.push(ValidationCheck {
                name: "max_principle".into(),
                status: if worst <= tol {
                    CheckStatus::Pass
                } else {
                    CheckStatus::Fail
                },
                value: format!("excess {worst}"),
            });
        }
    }

    // trend check from the loss history, skipped when absent
    let history_path = cfg.out_dir.join("loss_history.csv");
    let trend = match read_loss_history(&history_path) {
        Ok(history) if history.len() >= 100 => {
            let first = history[0].1;
            let tail = &history[history.len() - history.len() / 10..];
            let tail_med = median(tail.iter().map(|r| r.1));
            let ratio = first / tail_med.max(f64::MIN_POSITIVE);
            ValidationCheck {
                name: "loss_trend".into(),
                status: if ratio >= 100.0 {
                    CheckStatus::Pass
                } else {
                    CheckStatus::Fail
                },
                value: format!("decrease factor {ratio:.1}"),
            }
        }
        _ => ValidationCheck {
            name: "loss_trend".into(),
            status: CheckStatus::Skipped,
            value: "no training history".into(),
        },
    };
    checks.push(trend);

    let report = ValidationReport { checks };
    let mut w = artifact_writer(&cfg.out_dir.join("validation.csv"), &hash)?;
    writeln!(w, "check,status,value")?;
    for c in &report.checks {
        writeln!(w, "{},{:?},{}", c.name, c.status, c.value)?;
    }
    drop(w);
    println!("validation ({}):", problem.name);
    for c in &report.checks {
        println!("  {:<22} {:?}  {}", c.name, c.status, c.value);
    }
    Ok(report)
}

/// min/max of boundary plus initial data (the max-principle window).
fn data_bounds(problem: &ProblemSpec) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..=64 {
        let x = problem.domain.0 + (problem.domain.1 - problem.domain.0) * i as f64 / 64.0;
        let v = problem.initial.eval(x);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    for n in 0..=problem.n_time {
        let (l, r) = problem.boundary.at(problem.time_at(n));
        lo = lo.min(l.min(r));
        hi = hi.max(l.max(r));
    }
    (lo, hi)
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if v.is_empty() {
        f64::NAN
    } else {
        v[v.len() / 2]
    }
}

/// Parse a loss_history.csv back into (iteration, loss) pairs.
pub fn read_loss_history(path: &Path) -> Result<Vec<(usize, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("iteration") || line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::Ingestion(format!("bad history row '{line}'")));
        }
        let iter: usize = cols[0]
            .parse()
            .map_err(|_| Error::Ingestion(format!("bad iteration '{}'", cols[0])))?;
        let loss: f64 = cols[2]
            .parse()
            .map_err(|_| Error::Ingestion(format!("bad loss '{}'", cols[2])))?;
        out.push((iter, loss));
    }
    Ok(out)
}

/// Artifacts of a standalone oracle run.
pub struct OracleArtifacts {
    pub solution: OracleSolution,
    pub control: Option<OracleSolution>,
    pub rel_l2_vs_exact: Option<f64>,
}

/// Run the classical solver standalone and dump the solution as (t, x, u)
/// rows. For the coffee problem the linear control solve is dumped alongside.
pub fn cmd_oracle(cfg: &RunConfig) -> Result<OracleArtifacts> {
    cfg.validate()?;
    let hash = cfg.config_hash();
    let (problem, _) = cfg.build_problem()?;
    let grid = Grid1d::new(problem.domain, cfg.oracle_cells, problem.t_end, cfg.oracle_steps)?;
    let constant = matches!(problem.capacity, crate::problems::Coefficient::Constant(_))
        && matches!(
            problem.conductivity,
            crate::problems::Coefficient::Constant(_)
        );
    let solution = if constant {
        solve_linear(&problem, &grid)?
    } else {
        solve_nonlinear(&problem, &grid, cfg.picard_tol, cfg.picard_max)?
    };
    fs::create_dir_all(&cfg.out_dir)?;
    dump_oracle(&cfg.out_dir.join("oracle_solution.csv"), &hash, &solution)?;

    let mut control = None;
    if cfg.problem == ProblemKind::Coffee {
        let ctrl_problem = linear_control(&problem);
        let ctrl = solve_linear(&ctrl_problem, &grid)?;
        dump_oracle(&cfg.out_dir.join("oracle_control.csv"), &hash, &ctrl)?;
        let mut w = artifact_writer(&cfg.out_dir.join("oracle_midpoint.csv"), &hash)?;
        writeln!(w, "t,u_nonlinear,u_control")?;
        let mid = 0.5 * (problem.domain.0 + problem.domain.1);
        for n in 0..=grid.n_steps {
            let t = n as f64 * grid.dt;
            writeln!(w, "{t},{},{}", solution.interp(n, mid), ctrl.interp(n, mid))?;
        }
        let mut pw = artifact_writer(&cfg.out_dir.join("picard_iterations.csv"), &hash)?;
        writeln!(pw, "step,iterations")?;
        for (i, c) in solution.picard_iterations.iter().enumerate() {
            writeln!(pw, "{},{}", i + 1, c)?;
        }
        control = Some(ctrl);
    }

    let rel = match &problem.exact {
        Some(exact) => {
            let mut num = 0.0;
            let mut den = 0.0;
            for n in 1..=grid.n_steps {
                let t = n as f64 * grid.dt;
                for j in 0..=grid.n_cells {
                    let x = grid.node(j);
                    let r = exact.eval(x, t);
                    let d = solution.at(n, j) - r;
                    num += d * d;
                    den += r * r;
                }
            }
            let rel = (num / den).sqrt();
            println!("oracle rel_l2 vs exact: {rel}");
            Some(rel)
        }
        None => None,
    };
    Ok(OracleArtifacts {
        solution,
        control,
        rel_l2_vs_exact: rel,
    })
}

fn dump_oracle(path: &Path, hash: &str, sol: &OracleSolution) -> Result<()> {
    let mut w = artifact_writer(path, hash)?;
    writeln!(w, "t,x,u")?;
    for n in 0..=sol.grid.n_steps {
        let t = n as f64 * sol.grid.dt;
        for j in 0..=sol.grid.n_cells {
            writeln!(w, "{t},{},{}", sol.grid.node(j), sol.at(n, j))?;
        }
    }
    Ok(())
}

/// dt-consistency sweep: inject exact-solution samples into the residual and
/// measure how the per-step dual-norm estimates shrink as dt halves.
pub struct DtSweep {
    /// (n_time, dt, max dual-norm estimate over steps)
    pub rows: Vec<(usize, f64, f64)>,
    /// observed order log2(e_i / e_{i+1}) per halving
    pub orders: Vec<f64>,
}

pub fn dt_consistency_sweep(n_times: &[usize], quad_points: usize) -> Result<DtSweep> {
    let mut rows = Vec::new();
    for &n_time in n_times {
        let mut problem = make_toy_problem();
        problem.n_time = n_time;
        let exact = problem.exact.unwrap();
        let quad = midpoint_rule(problem.domain, quad_points);
        let form = WeakForm::new(&problem, false)?;
        let mut vs = crate::autodiff::ValueScope;
        let steps = (1..=n_time)
            .map(|n| {
                let t = problem.time_at(n);
                let (values, derivs) = quad
                    .points
                    .iter()
                    .map(|&x| (exact.eval(x, t), exact.dx(x, t)))
                    .unzip();
                crate::weakform::FieldSample { values, derivs }
            })
            .collect();
        let samples = crate::weakform::SolutionSamples { steps };
        let initial = initial_sample(&mut vs, &problem, &quad.points);
        let (_, matrix) = form.total_loss(&mut vs, &samples, &initial, &quad)?;
        let max_dual = (1..=n_time)
            .map(|n| matrix.dual_norm_estimate(n))
            .fold(0.0, f64::max);
        rows.push((n_time, problem.dt(), max_dual));
    }
    let orders = rows
        .windows(2)
        .map(|w| (w[0].2 / w[1].2).log2())
        .collect();
    Ok(DtSweep { rows, orders })
}

/// N_test nesting sweep: per-step dual-norm estimates must be nondecreasing
/// in the number of modes for fixed states and fixed quadrature.
pub struct NtestSweep {
    /// (seed, n_test, step, estimate)
    pub rows: Vec<(u64, usize, usize, f64)>,
    pub violations: usize,
}

pub fn ntest_monotonicity_sweep(
    problem: &ProblemSpec,
    seeds: &[u64],
    n_tests: &[usize],
    quad_points: usize,
) -> Result<NtestSweep> {
    let quad = midpoint_rule(problem.domain, quad_points);
    let mut rows = Vec::new();
    let mut violations = 0;
    for &seed in seeds {
        let state = MlpState::init(seed, &[1, 16, problem.n_time])?;
        let bc = problem.bc_enforcer();
        let samples = sample_state_values(&state, &bc, &quad.points);
        let mut vs = crate::autodiff::ValueScope;
        let initial = initial_sample(&mut vs, problem, &quad.points);
        let mut prev: Option<Vec<f64>> = None;
        for &n_test in n_tests {
            let mut p = problem.clone();
            p.n_test = n_test;
            let form = WeakForm::new(&p, false)?;
            let (_, matrix) = form.total_loss(&mut vs, &samples, &initial, &quad)?;
            let est: Vec<f64> = (1..=p.n_time)
                .map(|n| matrix.dual_norm_estimate(n))
                .collect();
            for (step, &e) in est.iter().enumerate() {
                rows.push((seed, n_test, step + 1, e));
            }
            if let Some(prev) = &prev {
                violations += prev.iter().zip(&est).filter(|(lo, hi)| hi < lo).count();
            }
            prev = Some(est);
        }
    }
    Ok(NtestSweep { rows, violations })
}

/// Sweep subcommand: run both sweeps and write their CSVs.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<(DtSweep, NtestSweep)> {
    cfg.validate()?;
    let hash = cfg.config_hash();
    fs::create_dir_all(&cfg.out_dir)?;
    let dt = dt_consistency_sweep(&[32, 64, 128], 8192)?;
    let mut w = artifact_writer(&cfg.out_dir.join("sweep_dt.csv"), &hash)?;
    writeln!(w, "n_time,dt,max_dual_norm")?;
    for (n, dtv, e) in &dt.rows {
        writeln!(w, "{n},{dtv},{e}")?;
    }
    drop(w);
    let (problem, _) = cfg.build_problem()?;
    let ntest = ntest_monotonicity_sweep(&problem, &[0, 1, 2, 3, 4], &[5, 10, 20, 40], 2048)?;
    let mut w = artifact_writer(&cfg.out_dir.join("sweep_ntest.csv"), &hash)?;
    writeln!(w, "seed,n_test,step,dual_norm")?;
    for (seed, nt, step, e) in &ntest.rows {
        writeln!(w, "{seed},{nt},{step},{e}")?;
    }
    println!(
        "dt sweep orders: {:?}; ntest monotonicity violations: {}",
        dt.orders, ntest.violations
    );
    Ok((dt, ntest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_experiment_hyperparameters() {
        let toy = RunConfig::defaults_for(ProblemKind::Toy);
        assert_eq!(toy.widths(), vec![1, 32, 32, 32, 32, 32, 128]);
        assert_eq!((toy.n_time, toy.n_test, toy.n_int), (128, 20, 128));
        assert_eq!(toy.lr0, 1e-2);
        assert_eq!(toy.schedule, ScheduleKind::Exponential);
        assert_eq!(toy.iterations, 20_000);

        let coffee = RunConfig::defaults_for(ProblemKind::Coffee);
        assert_eq!((coffee.n_time, coffee.n_test, coffee.n_int), (128, 64, 256));
        assert_eq!(coffee.lr0, 1e-3);
        assert_eq!(coffee.schedule, ScheduleKind::Cosine);
        assert_eq!(coffee.iterations, 100_000);
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = RunConfig::defaults_for(ProblemKind::Toy);
        let b = RunConfig::defaults_for(ProblemKind::Toy);
        assert_eq!(a.config_hash(), b.config_hash());
        let mut c = RunConfig::defaults_for(ProblemKind::Toy);
        c.iterations = 12345;
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn overrides_merge_in_order() {
        let file = ConfigOverrides {
            problem: Some(ProblemKind::Coffee),
            iterations: Some(500),
            lr0: Some(5e-4),
            ..Default::default()
        };
        let flags = ConfigOverrides {
            iterations: Some(250),
            ..Default::default()
        };
        let mut cfg = RunConfig::defaults_for(ProblemKind::Coffee);
        cfg.apply(&file);
        cfg.apply(&flags);
        assert_eq!(cfg.iterations, 250);
        assert_eq!(cfg.lr0, 5e-4);
        assert_eq!(cfg.n_test, 64);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = RunConfig::defaults_for(ProblemKind::Toy);
        cfg.iterations = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::defaults_for(ProblemKind::Toy);
        cfg.snapshot_steps = vec![0];
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::defaults_for(ProblemKind::Toy);
        cfg.snapshot_steps = vec![4096];
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::defaults_for(ProblemKind::Toy);
        cfg.properties_path = Some(PathBuf::from("/definitely/not/here.csv"));
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_overrides_parse() {
        let text = "problem = \"coffee\"\niterations = 42\nlr0 = 0.002\n";
        let o: ConfigOverrides = toml::from_str(text).unwrap();
        assert_eq!(o.problem, Some(ProblemKind::Coffee));
        assert_eq!(o.iterations, Some(42));
        let bad: std::result::Result<ConfigOverrides, _> = toml::from_str("no_such_key = 1\n");
        assert!(bad.is_err());
    }
}
