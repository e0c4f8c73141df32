//! Error norms, residual-based bound checks and training diagnostics.
//!
//! Space-time norms follow the loss convention: the time integral is the
//! dt-weighted sum over steps 1..=N, the space integral a deterministic
//! midpoint rule. The lower side of the error sandwich
//! dual_norm / M <= ||error||_{H10} is checked per step (truncation only
//! shrinks the estimate, so the inequality is literally testable); the upper
//! side is reported as a diagnostic ratio only.

use crate::error::{Error, Result};
use crate::problems::{ExactSolution, ProblemSpec};
use crate::refsolver::OracleSolution;
use crate::testspace::QuadratureRule;
use crate::weakform::{ResidualMatrix, SolutionSamples};

/// Reference to measure errors against.
pub enum Reference<'a> {
    Exact(&'a ExactSolution),
    /// Oracle nodal values, linearly interpolated in space. The oracle must
    /// hold a whole number of its steps per problem step.
    Oracle(&'a OracleSolution),
}

impl Reference<'_> {
    fn stride_for(&self, n_time: usize) -> Result<usize> {
        match self {
            Reference::Exact(_) => Ok(1),
            Reference::Oracle(sol) => {
                if sol.grid.n_steps % n_time != 0 {
                    return Err(Error::Structural(format!(
                        "oracle has {} steps, not a multiple of {n_time}",
                        sol.grid.n_steps
                    )));
                }
                Ok(sol.grid.n_steps / n_time)
            }
        }
    }

    fn eval(&self, stride: usize, n: usize, t: f64, x: f64) -> f64 {
        match self {
            Reference::Exact(exact) => exact.eval(x, t),
            Reference::Oracle(sol) => sol.interp(n * stride, x),
        }
    }

    fn eval_dx(&self, stride: usize, n: usize, t: f64, x: f64) -> f64 {
        match self {
            Reference::Exact(exact) => exact.dx(x, t),
            Reference::Oracle(sol) => sol.interp_dx(n * stride, x),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceKind {
    Exact,
    Oracle,
}

/// Error metrics of one network snapshot against a reference, plus the
/// constants of the error sandwich.
#[derive(Clone, Debug)]
pub struct ErrorReport {
    pub reference: ReferenceKind,
    /// Relative space-time L2 error.
    pub rel_l2: f64,
    /// Relative space-time H10 (gradient) error.
    pub rel_h10: f64,
    /// Absolute per-step gradient-norm error, steps 1..=N.
    pub per_step_h10: Vec<f64>,
    /// Truncated dual-norm estimates per step (empty when no residual matrix
    /// was supplied).
    pub dual_norm_per_step: Vec<f64>,
    /// Continuity constant M = c_max C_P^2 + dt k_max.
    pub m_const: f64,
    /// Coercivity constant gamma = dt k_min.
    pub gamma: f64,
    /// Poincare constant of the domain, (b - a)/pi.
    pub poincare: f64,
}

/// Coefficient bounds over the state range visited by the samples (padded a
/// little), sampled densely.
fn coefficient_bounds(problem: &ProblemSpec, samples: &SolutionSamples<f64>) -> (f64, f64, f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for step in &samples.steps {
        for &v in &step.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    // include the initial and boundary data range
    for i in 0..=32 {
        let x = problem.domain.0 + (problem.domain.1 - problem.domain.0) * i as f64 / 32.0;
        let u0 = problem.initial.eval(x);
        lo = lo.min(u0);
        hi = hi.max(u0);
    }
    for n in 0..=problem.n_time {
        let (l, r) = problem.boundary.at(problem.time_at(n));
        lo = lo.min(l.min(r));
        hi = hi.max(l.max(r));
    }
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        lo = -1.0;
        hi = 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let range = (lo - pad, hi + pad);
    let (c_min, c_max) = problem.capacity.bounds_on(range, 2000);
    let (k_min, k_max) = problem.conductivity.bounds_on(range, 2000);
    (c_min, c_max, k_min, k_max)
}

/// Space-time errors of network samples (taken on `quad`, which should be the
/// deterministic metric rule) against a reference on the same time nodes.
pub fn space_time_errors(
    samples: &SolutionSamples<f64>,
    quad: &QuadratureRule,
    reference: &Reference,
    problem: &ProblemSpec,
    residuals: Option<&ResidualMatrix>,
) -> Result<ErrorReport> {
    let n_time = problem.n_time;
    if samples.n_time() != n_time {
        return Err(Error::Structural(format!(
            "samples cover {} steps, problem has {n_time}",
            samples.n_time()
        )));
    }
    let stride = reference.stride_for(n_time)?;
    let dt = problem.dt();
    let mut num_l2 = 0.0;
    let mut den_l2 = 0.0;
    let mut num_h10 = 0.0;
    let mut den_h10 = 0.0;
    let mut per_step_h10 = Vec::with_capacity(n_time);
    for n in 1..=n_time {
        let t = problem.time_at(n);
        let step = &samples.steps[n - 1];
        let mut step_l2 = 0.0;
        let mut step_ref_l2 = 0.0;
        let mut step_h10 = 0.0;
        let mut step_ref_h10 = 0.0;
        for (i, (&x, &w)) in quad.points.iter().zip(&quad.weights).enumerate() {
            let r = reference.eval(stride, n, t, x);
            let rdx = reference.eval_dx(stride, n, t, x);
            let ev = step.values[i] - r;
            let ed = step.derivs[i] - rdx;
            step_l2 += w * ev * ev;
            step_ref_l2 += w * r * r;
            step_h10 += w * ed * ed;
            step_ref_h10 += w * rdx * rdx;
        }
        num_l2 += dt * step_l2;
        den_l2 += dt * step_ref_l2;
        num_h10 += dt * step_h10;
        den_h10 += dt * step_ref_h10;
        per_step_h10.push(step_h10.sqrt());
    }
    if den_l2 <= 0.0 || den_h10 <= 0.0 {
        return Err(Error::UndefinedRatio(
            "reference norm vanishes on the sampled window".into(),
        ));
    }
    let (c_min, c_max, k_min, k_max) = coefficient_bounds(problem, samples);
    let _ = c_min;
    let poincare = (problem.domain.1 - problem.domain.0) / std::f64::consts::PI;
    let dual = residuals
        .map(|m| (1..=n_time).map(|n| m.dual_norm_estimate(n)).collect())
        .unwrap_or_default();
    Ok(ErrorReport {
        reference: match reference {
            Reference::Exact(_) => ReferenceKind::Exact,
            Reference::Oracle(_) => ReferenceKind::Oracle,
        },
        rel_l2: (num_l2 / den_l2).sqrt(),
        rel_h10: (num_h10 / den_h10).sqrt(),
        per_step_h10,
        dual_norm_per_step: dual,
        m_const: c_max * poincare * poincare + dt * k_max,
        gamma: dt * k_min,
        poincare,
    })
}

/// Result of the per-step lower-bound check of the error sandwich.
#[derive(Clone, Debug)]
pub struct BoundCheck {
    pub passed: bool,
    /// Steps where dual/M exceeded the H10 error + tolerance.
    pub violations: Vec<(usize, f64, f64)>,
    /// Diagnostic only: max over steps of gamma * ||e||_H10 / dual-estimate.
    /// Truncation makes the dual estimate an underestimate, so this ratio is
    /// not asserted.
    pub upper_ratio_diag: f64,
    pub tolerance: f64,
}

/// Check dual_norm(n)/M <= ||e^n||_{H10} + tol for every step. Requires an
/// exact-referenced report with dual norms attached.
pub fn check_error_bounds(report: &ErrorReport, tolerance: f64) -> Result<BoundCheck> {
    if report.reference != ReferenceKind::Exact {
        return Err(Error::Config(
            "bound check needs errors against the exact solution".into(),
        ));
    }
    if report.dual_norm_per_step.len() != report.per_step_h10.len() {
        return Err(Error::Config(
            "bound check needs dual-norm estimates for every step".into(),
        ));
    }
    let mut violations = Vec::new();
    let mut upper: f64 = 0.0;
    for (idx, (&dual, &err)) in report
        .dual_norm_per_step
        .iter()
        .zip(&report.per_step_h10)
        .enumerate()
    {
        let lhs = dual / report.m_const;
        if lhs > err + tolerance {
            violations.push((idx + 1, lhs, err));
        }
        if dual > 0.0 {
            upper = upper.max(report.gamma * err / dual);
        }
    }
    Ok(BoundCheck {
        passed: violations.is_empty(),
        violations,
        upper_ratio_diag: upper,
        tolerance,
    })
}

/// Pearson correlation coefficient of two equally long series.
pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    if xs.is_empty() {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}
