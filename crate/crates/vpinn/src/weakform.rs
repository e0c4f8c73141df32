//! Weak-residual assembly: per-step, per-mode residual coefficients
//! a(u^n, phi_k) - l^n(phi_k) under the backward-Euler coupling, and the total
//! training loss dt * sum_{n,k} r[n][k]^2.
//!
//! Two code paths produce the coefficients: [`WeakForm::residual_coefficient`]
//! assembles a single (n, k) entry from raw field samples, and
//! [`WeakForm::total_loss`] assembles the whole matrix with the per-point
//! state products shared across modes. Both fold the quadrature sum in the
//! same order, so their results agree bitwise; tests rely on that.

use crate::autodiff::{Scope, ValueScope};
use crate::error::{Error, Result};
use crate::network::{forward_with_derivative, BcEnforcer, MlpState};
use crate::problems::{Coefficient, ProblemSpec};
use crate::testspace::{Basis, QuadratureRule};

/// Field values and spatial derivatives at the quadrature points.
pub struct FieldSample<V> {
    pub values: Vec<V>,
    pub derivs: Vec<V>,
}

/// Network outputs at the quadrature points for every time step;
/// `steps[n - 1]` holds step n.
pub struct SolutionSamples<V> {
    pub steps: Vec<FieldSample<V>>,
}

impl<V> SolutionSamples<V> {
    pub fn n_time(&self) -> usize {
        self.steps.len()
    }
}

/// Evaluate the trial network at each point and transpose to step-major form.
pub fn sample_network<S: Scope>(
    scope: &mut S,
    net: &crate::network::LiftedMlp<S::Num>,
    bc: &BcEnforcer,
    xs: &[f64],
) -> SolutionSamples<S::Num> {
    let mut steps: Vec<FieldSample<S::Num>> = Vec::new();
    for &x in xs {
        let (u, du) = forward_with_derivative(scope, net, bc, x);
        if steps.is_empty() {
            steps = u
                .iter()
                .map(|_| FieldSample {
                    values: Vec::with_capacity(xs.len()),
                    derivs: Vec::with_capacity(xs.len()),
                })
                .collect();
        }
        for (n, (uv, dv)) in u.into_iter().zip(du).enumerate() {
            steps[n].values.push(uv);
            steps[n].derivs.push(dv);
        }
    }
    SolutionSamples { steps }
}

/// Value-only network samples (no tape) for metrics and diagnostics.
pub fn sample_state_values(state: &MlpState, bc: &BcEnforcer, xs: &[f64]) -> SolutionSamples<f64> {
    let mut vs = ValueScope;
    let lifted = state.lift(&mut vs);
    sample_network(&mut vs, &lifted, bc, xs)
}

/// The initial condition as a constant field sample (derivatives unused by
/// the assembly; stored as zeros).
pub fn initial_sample<S: Scope>(
    scope: &mut S,
    problem: &ProblemSpec,
    xs: &[f64],
) -> FieldSample<S::Num> {
    let values = xs
        .iter()
        .map(|&x| scope.constant(problem.initial.eval(x)))
        .collect();
    let derivs = xs.iter().map(|_| scope.constant(0.0)).collect();
    FieldSample { values, derivs }
}

/// Residual coefficients r[n][k] = a(u^n, phi_k) - l^n(phi_k), row-major in n.
#[derive(Clone, Debug)]
pub struct ResidualMatrix {
    pub dt: f64,
    pub n_time: usize,
    pub n_test: usize,
    entries: Vec<f64>,
}

impl ResidualMatrix {
    pub fn new(dt: f64, n_time: usize, n_test: usize) -> Self {
        ResidualMatrix {
            dt,
            n_time,
            n_test,
            entries: vec![0.0; n_time * n_test],
        }
    }

    pub fn from_entries(dt: f64, n_time: usize, n_test: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n_time * n_test {
            return Err(Error::Structural(format!(
                "residual matrix needs {} entries, got {}",
                n_time * n_test,
                entries.len()
            )));
        }
        Ok(ResidualMatrix {
            dt,
            n_time,
            n_test,
            entries,
        })
    }

    /// Entry for step n (1-based) and mode ordinal k (0-based).
    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.entries[(n - 1) * self.n_test + k]
    }

    pub fn set(&mut self, n: usize, k: usize, v: f64) {
        self.entries[(n - 1) * self.n_test + k] = v;
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.entries[(n - 1) * self.n_test..n * self.n_test]
    }

    /// Truncated dual-norm estimate at step n: sqrt(sum_k r[n][k]^2).
    pub fn dual_norm_estimate(&self, n: usize) -> f64 {
        self.row(n).iter().map(|r| r * r).sum::<f64>().sqrt()
    }

    /// dt * sum_{n,k} r^2 in row-major order — the exact arithmetic of the
    /// scalar loss returned to the optimizer.
    pub fn loss(&self) -> f64 {
        let mut acc = 0.0;
        for r in &self.entries {
            acc += r * r;
        }
        self.dt * acc
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|r| r.is_finite())
    }
}

/// Assembler for one problem's weak residual.
pub struct WeakForm<'a> {
    pub problem: &'a ProblemSpec,
    pub basis: Basis,
    /// Evaluate C and K at u^{n-1} instead of u^n (explicit-style coefficient
    /// treatment). The default evaluates at u^n with no prior linearization.
    pub lagged_coefficients: bool,
}

impl<'a> WeakForm<'a> {
    pub fn new(problem: &'a ProblemSpec, lagged_coefficients: bool) -> Result<Self> {
        Ok(WeakForm {
            problem,
            basis: problem.basis()?,
            lagged_coefficients,
        })
    }

    /// C(arg) * u or K(arg) * du, with the trivial constant-one coefficient
    /// skipped (multiplication by 1.0 is a bitwise identity).
    fn scaled_state<S: Scope>(
        &self,
        scope: &mut S,
        coeff: &Coefficient,
        arg: S::Num,
        state: S::Num,
    ) -> S::Num {
        if coeff.is_constant_one() {
            return state;
        }
        if let Coefficient::Constant(c) = coeff {
            return scope.mul_const(state, *c);
        }
        let c = coeff.eval_scope(scope, arg);
        scope.mul(c, state)
    }

    /// Per-point mass and flux factors of step n:
    /// mass_i = C(arg) u^n_i - C(u^{n-1}_i) u^{n-1}_i - dt f(x_i, t^n),
    /// flux_i = K(arg) du^n_i, where arg is u^n_i or u^{n-1}_i (lagged).
    #[allow(clippy::too_many_arguments)]
    fn step_factors<S: Scope>(
        &self,
        scope: &mut S,
        n: usize,
        u_prev: &FieldSample<S::Num>,
        u_n: &FieldSample<S::Num>,
        xs: &[f64],
        mass: &mut Vec<S::Num>,
        flux: &mut Vec<S::Num>,
    ) {
        let dt = self.problem.dt();
        let t_n = self.problem.time_at(n);
        mass.clear();
        flux.clear();
        for i in 0..xs.len() {
            let arg = if self.lagged_coefficients {
                u_prev.values[i]
            } else {
                u_n.values[i]
            };
            let cu_n = self.scaled_state(scope, &self.problem.capacity, arg, u_n.values[i]);
            let cu_prev = self.scaled_state(
                scope,
                &self.problem.capacity,
                u_prev.values[i],
                u_prev.values[i],
            );
            let diff = scope.sub(cu_n, cu_prev);
            let m = scope.add_const(diff, -(dt * self.problem.source.eval(xs[i], t_n)));
            mass.push(m);
            flux.push(self.scaled_state(scope, &self.problem.conductivity, arg, u_n.derivs[i]));
        }
    }

    /// One residual coefficient a(u^n, phi_k) - l^n(phi_k) from raw samples.
    /// `k` is the mode index in the basis' own numbering.
    pub fn residual_coefficient<S: Scope>(
        &self,
        scope: &mut S,
        n: usize,
        k: usize,
        u_prev: &FieldSample<S::Num>,
        u_n: &FieldSample<S::Num>,
        quad: &QuadratureRule,
    ) -> Result<S::Num> {
        let npts = quad.len();
        if u_prev.values.len() != npts || u_n.values.len() != npts || u_n.derivs.len() != npts {
            return Err(Error::Structural(format!(
                "field samples ({}, {}) do not match quadrature length {npts}",
                u_prev.values.len(),
                u_n.values.len()
            )));
        }
        if n == 0 || n > self.problem.n_time {
            return Err(Error::Structural(format!("step index {n} out of range")));
        }
        let dt = self.problem.dt();
        let mut mass = Vec::with_capacity(npts);
        let mut flux = Vec::with_capacity(npts);
        self.step_factors(scope, n, u_prev, u_n, &quad.points, &mut mass, &mut flux);

        // fold sum_i w_i [phi_k mass_i + dt dphi_k flux_i], interleaved per point
        let mut acc = scope.constant(0.0);
        for i in 0..npts {
            let (phi, dphi) = self.basis.eval(k, quad.points[i])?;
            let w = quad.weights[i];
            acc = scope.mul_add_const(acc, mass[i], w * phi);
            acc = scope.mul_add_const(acc, flux[i], dt * w * dphi);
        }
        Ok(acc)
    }

    /// Assemble the full loss dt * sum_{n,k} r[n][k]^2 and the residual matrix
    /// (as plain values). Gradient flows through both the u^n and u^{n-1}
    /// occurrences of the network outputs; nothing is detached.
    pub fn total_loss<S: Scope>(
        &self,
        scope: &mut S,
        samples: &SolutionSamples<S::Num>,
        initial: &FieldSample<S::Num>,
        quad: &QuadratureRule,
    ) -> Result<(S::Num, ResidualMatrix)> {
        let n_time = self.problem.n_time;
        if samples.n_time() != n_time {
            return Err(Error::Structural(format!(
                "samples cover {} steps, problem has {n_time}",
                samples.n_time()
            )));
        }
        let npts = quad.len();
        if initial.values.len() != npts || samples.steps.iter().any(|s| s.values.len() != npts) {
            return Err(Error::Structural(
                "sample lengths do not match quadrature".into(),
            ));
        }
        let dt = self.problem.dt();
        let table = self.basis.tabulate(&quad.points);
        let n_test = self.basis.n_modes;
        let mut matrix = ResidualMatrix::new(dt, n_time, n_test);

        let mut mass: Vec<S::Num> = Vec::with_capacity(npts);
        let mut flux: Vec<S::Num> = Vec::with_capacity(npts);
        let mut terms: Vec<(S::Num, f64)> = Vec::with_capacity(2 * npts);
        let mut sum = scope.constant(0.0);
        for n in 1..=n_time {
            let u_prev = if n == 1 {
                initial
            } else {
                &samples.steps[n - 2]
            };
            let u_n = &samples.steps[n - 1];
            self.step_factors(scope, n, u_prev, u_n, &quad.points, &mut mass, &mut flux);
            for (k_ord, (phi_row, dphi_row)) in table.phi.iter().zip(&table.dphi).enumerate() {
                terms.clear();
                for i in 0..npts {
                    let w = quad.weights[i];
                    terms.push((mass[i], w * phi_row[i]));
                    terms.push((flux[i], dt * w * dphi_row[i]));
                }
                let r = scope.linear_combination(&terms);
                matrix.set(n, k_ord, scope.value_of(r));
                let r2 = scope.mul(r, r);
                sum = scope.add(sum, r2);
            }
        }
        let loss = scope.mul_const(sum, dt);
        Ok((loss, matrix))
    }
}
