use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use vpinn::cli::{
    cmd_oracle, cmd_sweep, cmd_train, cmd_validate, ConfigOverrides, ProblemKind, RunConfig,
    ScheduleKind,
};

/// Variational neural solver for 1D transient heat conduction.
#[derive(Parser)]
#[command(name = "vpinn", version, about)]
struct CliArgs {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write loss history, checkpoints, snapshots and
    /// error reports.
    Train(CommonArgs),
    /// Validate an existing checkpoint: bound checks, oracle comparison,
    /// max-principle and trend checks.
    Validate(CommonArgs),
    /// Run the classical finite-difference solver standalone and dump its
    /// solution.
    Oracle(CommonArgs),
    /// Consistency sweeps: residual order in dt and dual-norm nesting in the
    /// number of test modes.
    Sweep(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem to run: toy | coffee.
    #[arg(long)]
    problem: Option<String>,
    /// Network initialization seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Quadrature sampling seed.
    #[arg(long)]
    quad_seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    lr0: Option<f64>,
    /// Learning-rate schedule: constant | exponential | cosine.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    hidden_layers: Option<usize>,
    #[arg(long)]
    hidden_width: Option<usize>,
    #[arg(long)]
    n_time: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    n_int: Option<usize>,
    /// Dimensionless time horizon (coffee; the toy problem is fixed at 1).
    #[arg(long)]
    t_end: Option<f64>,
    /// Keep one quadrature sample for the whole run.
    #[arg(long)]
    fixed_quadrature: bool,
    /// Evaluate the nonlinear coefficients at the previous time step.
    #[arg(long)]
    lagged_coefficients: bool,
    /// Container thickness d in meters (coffee).
    #[arg(long)]
    thickness: Option<f64>,
    /// Property table CSV (T,rho,cp,k); default is the synthetic placeholder.
    #[arg(long)]
    properties: Option<PathBuf>,
    /// Boundary series CSV (t,T_left,T_right); default is synthetic.
    #[arg(long)]
    boundary: Option<PathBuf>,
    /// Checkpoint to validate (default: <out-dir>/checkpoint_final.txt).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    metrics_every: Option<usize>,
    /// Comma-separated steps to snapshot, e.g. "1,32,64,128".
    #[arg(long)]
    snapshot_steps: Option<String>,
    #[arg(long)]
    oracle_cells: Option<usize>,
    #[arg(long)]
    oracle_steps: Option<usize>,
}

impl CommonArgs {
    fn overrides(&self) -> Result<ConfigOverrides, vpinn::Error> {
        let problem = match &self.problem {
            Some(p) => Some(p.parse::<ProblemKind>()?),
            None => None,
        };
        let schedule = match &self.schedule {
            Some(s) => Some(s.parse::<ScheduleKind>()?),
            None => None,
        };
        let snapshot_steps = match &self.snapshot_steps {
            Some(s) => Some(
                s.split(',')
                    .map(|tok| {
                        tok.trim().parse::<usize>().map_err(|_| {
                            vpinn::Error::Config(format!("bad snapshot step '{tok}'"))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            None => None,
        };
        Ok(ConfigOverrides {
            problem,
            init_seed: self.seed,
            quadrature_seed: self.quad_seed,
            hidden_layers: self.hidden_layers,
            hidden_width: self.hidden_width,
            iterations: self.iterations,
            lr0: self.lr0,
            schedule,
            exp_decay_rate: None,
            exp_decay_steps: None,
            n_time: self.n_time,
            n_test: self.n_test,
            n_int: self.n_int,
            t_end: self.t_end,
            fixed_quadrature: if self.fixed_quadrature { Some(true) } else { None },
            lagged_coefficients: if self.lagged_coefficients {
                Some(true)
            } else {
                None
            },
            container_thickness: self.thickness,
            properties_path: self.properties.clone(),
            boundary_path: self.boundary.clone(),
            checkpoint_path: self.checkpoint.clone(),
            out_dir: self.out_dir.clone(),
            checkpoint_every: self.checkpoint_every,
            metrics_every: self.metrics_every,
            metric_points: None,
            snapshot_steps,
            oracle_cells: self.oracle_cells,
            oracle_steps: self.oracle_steps,
            picard_tol: None,
            picard_max: None,
        })
    }

    fn resolve(&self) -> Result<RunConfig, vpinn::Error> {
        let flags = self.overrides()?;
        RunConfig::from_sources(self.config.as_deref(), &flags)
    }
}

fn run() -> Result<(), String> {
    let args = CliArgs::parse();
    match args.command {
        Command::Train(common) => {
            let cfg = common.resolve().map_err(|e| e.to_string())?;
            let artifacts = cmd_train(&cfg).map_err(|e| e.to_string())?;
            println!(
                "trained {} for {} iterations, final loss {} -> {}",
                artifacts.problem.name,
                artifacts.outcome.history.len(),
                artifacts.outcome.final_loss,
                artifacts.out_dir.display()
            );
            Ok(())
        }
        Command::Validate(common) => {
            let cfg = common.resolve().map_err(|e| e.to_string())?;
            let report = cmd_validate(&cfg).map_err(|e| e.to_string())?;
            if report.passed() {
                Ok(())
            } else {
                Err("validation failed".into())
            }
        }
        Command::Oracle(common) => {
            let cfg = common.resolve().map_err(|e| e.to_string())?;
            cmd_oracle(&cfg).map_err(|e| e.to_string())?;
            println!("oracle solution written to {}", cfg.out_dir.display());
            Ok(())
        }
        Command::Sweep(common) => {
            let cfg = common.resolve().map_err(|e| e.to_string())?;
            let (dt, ntest) = cmd_sweep(&cfg).map_err(|e| e.to_string())?;
            if ntest.violations > 0 {
                return Err(format!("{} nesting violations", ntest.violations));
            }
            if dt.orders.iter().any(|o| !(1.5..=2.5).contains(o)) {
                return Err(format!("dt consistency orders out of range: {:?}", dt.orders));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
