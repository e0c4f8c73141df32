//! Training loop: resample quadrature, assemble the loss on the tape,
//! backpropagate, Adam-step, and emit checkpoint diagnostics on a fixed
//! cadence. Checkpoint residuals and error metrics are recomputed on a
//! deterministic midpoint rule so verification noise stays decoupled from
//! training noise.

use crate::autodiff::{Tape, ValueScope};
use crate::error::{Error, Result};
use crate::metrics::{space_time_errors, ErrorReport, Reference};
use crate::network::MlpState;
use crate::optimizer::{AdamState, LrSchedule};
use crate::problems::ProblemSpec;
use crate::testspace::{midpoint_rule, sample_quadrature, QuadratureRule};
use crate::weakform::{initial_sample, sample_network, ResidualMatrix, WeakForm};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub iterations: usize,
    pub lr0: f64,
    pub schedule: LrSchedule,
    pub quadrature_seed: u64,
    /// Keep one quadrature sample for the whole run instead of resampling
    /// every iteration.
    pub fixed_quadrature: bool,
    /// Evaluate C, K at the previous step's state inside the residual.
    pub lagged_coefficients: bool,
    /// Cadence of deterministic checkpoint diagnostics (0 disables; the final
    /// iteration always checkpoints).
    pub checkpoint_every: usize,
    /// Cadence of error metrics against the exact solution (0 disables).
    pub metrics_every: usize,
    /// Points of the deterministic metric quadrature.
    pub metric_points: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            iterations: 20_000,
            lr0: 1e-2,
            schedule: LrSchedule::Exponential {
                rate: 0.9,
                decay_steps: 1000.0,
            },
            quadrature_seed: 1,
            fixed_quadrature: false,
            lagged_coefficients: false,
            checkpoint_every: 1000,
            metrics_every: 100,
            metric_points: 2048,
        }
    }
}

/// One row of the loss history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterRecord {
    pub iteration: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Deterministic diagnostics captured at a checkpoint.
#[derive(Clone, Debug)]
pub struct CheckpointRecord {
    pub iteration: usize,
    pub params: Vec<f64>,
    /// Residual matrix on the deterministic metric quadrature.
    pub residuals: ResidualMatrix,
    /// Errors against the exact solution, when one exists.
    pub report: Option<ErrorReport>,
}

/// Error metrics sampled during training (iteration, rel_l2, rel_h10).
pub type MetricSample = (usize, f64, f64);

#[derive(Debug)]
pub struct TrainOutcome {
    pub history: Vec<IterRecord>,
    pub checkpoints: Vec<CheckpointRecord>,
    pub metric_trace: Vec<MetricSample>,
    pub final_loss: f64,
}

/// Observer events emitted while training runs, so callers can persist
/// artifacts incrementally.
pub enum TrainEvent<'a> {
    Iteration(&'a IterRecord),
    Checkpoint(&'a CheckpointRecord),
}

/// Train the network in place. The observer may fail (e.g. on I/O), which
/// aborts the run with its error.
pub fn train(
    state: &mut MlpState,
    problem: &ProblemSpec,
    opts: &TrainOptions,
    mut observer: impl FnMut(TrainEvent) -> Result<()>,
) -> Result<TrainOutcome> {
    problem.validate()?;
    if state.out_dim() != problem.n_time {
        return Err(Error::Config(format!(
            "network output width {} must equal the number of time steps {}",
            state.out_dim(),
            problem.n_time
        )));
    }
    let bc = problem.bc_enforcer();
    let form = WeakForm::new(problem, opts.lagged_coefficients)?;
    let metric_quad = midpoint_rule(problem.domain, opts.metric_points);

    let mut params = state.flat_params();
    let mut adam = AdamState::new(params.len(), opts.lr0, opts.schedule);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.quadrature_seed);
    let fixed_rule = if opts.fixed_quadrature {
        Some(sample_quadrature(problem.domain, problem.n_int, &mut rng)?)
    } else {
        None
    };

    let mut tape = Tape::new();
    let mut history = Vec::with_capacity(opts.iterations);
    let mut checkpoints = Vec::new();
    let mut metric_trace = Vec::new();
    let mut final_loss = f64::NAN;

    for iter in 0..opts.iterations {
        let sampled;
        let quad: &QuadratureRule = match &fixed_rule {
            Some(rule) => rule,
            None => {
                sampled = sample_quadrature(problem.domain, problem.n_int, &mut rng)?;
                &sampled
            }
        };

        tape.clear();
        let lifted = state.lift(&mut tape);
        let samples = sample_network(&mut tape, &lifted, &bc, &quad.points);
        let initial = initial_sample(&mut tape, problem, &quad.points);
        let (loss_var, matrix) = form.total_loss(&mut tape, &samples, &initial, quad)?;
        let loss = tape.value(loss_var);
        if !loss.is_finite() || !matrix.is_finite() {
            return Err(Error::TrainingDiverged {
                iteration: iter,
                detail: format!("non-finite loss {loss}"),
            });
        }
        let adjoints = tape.backward(loss_var);
        let grads = tape.param_gradients(&adjoints);
        let lr = adam.step(&mut params, &grads).map_err(|e| match e {
            Error::TrainingDiverged { detail, .. } => Error::TrainingDiverged {
                iteration: iter,
                detail,
            },
            other => other,
        })?;
        state.set_flat_params(&params)?;

        let record = IterRecord {
            iteration: iter,
            lr,
            loss,
        };
        observer(TrainEvent::Iteration(&record))?;
        history.push(record);
        final_loss = loss;

        let last = iter + 1 == opts.iterations;
        if opts.metrics_every > 0 && ((iter + 1) % opts.metrics_every == 0 || last) {
            if let Some(exact) = &problem.exact {
                let vals = crate::weakform::sample_state_values(state, &bc, &metric_quad.points);
                let report =
                    space_time_errors(&vals, &metric_quad, &Reference::Exact(exact), problem, None)?;
                metric_trace.push((iter, report.rel_l2, report.rel_h10));
            }
        }
        if opts.checkpoint_every > 0 && ((iter + 1) % opts.checkpoint_every == 0 || last) {
            let record = checkpoint_diagnostics(state, problem, &form, &bc, &metric_quad, iter)?;
            observer(TrainEvent::Checkpoint(&record))?;
            checkpoints.push(record);
        }
    }

    Ok(TrainOutcome {
        history,
        checkpoints,
        metric_trace,
        final_loss,
    })
}

/// Deterministic residual matrix and error report for the current state.
pub fn checkpoint_diagnostics(
    state: &MlpState,
    problem: &ProblemSpec,
    form: &WeakForm,
    bc: &crate::network::BcEnforcer,
    metric_quad: &QuadratureRule,
    iteration: usize,
) -> Result<CheckpointRecord> {
    let vals = crate::weakform::sample_state_values(state, bc, &metric_quad.points);
    let mut vs = ValueScope;
    let initial = initial_sample(&mut vs, problem, &metric_quad.points);
    let (_, residuals) = form.total_loss(&mut vs, &vals, &initial, metric_quad)?;
    let report = match &problem.exact {
        Some(exact) => Some(space_time_errors(
            &vals,
            metric_quad,
            &Reference::Exact(exact),
            problem,
            Some(&residuals),
        )?),
        None => None,
    };
    Ok(CheckpointRecord {
        iteration,
        params: state.flat_params(),
        residuals,
        report,
    })
}
