//! Problem definitions: the linear benchmark with a closed-form solution and
//! the nondimensionalized nonlinear freezing problem with table-driven
//! properties and data-driven boundary temperatures.

pub mod properties;

use crate::autodiff::Scope;
use crate::error::{Error, Result};
use crate::network::{BcEnforcer, Cutoff, Lift};
use crate::testspace::BasisKind;
use properties::{BoundarySeries, Pchip, PropertyTable, TimeSeries};
use std::f64::consts::PI;

/// Solution-dependent coefficient, evaluable on any scope so it stays
/// differentiable inside the loss.
#[derive(Clone, Debug)]
pub enum Coefficient {
    Constant(f64),
    /// C(u) = rho(T) cp(T) / (rho_ref cp_ref) with T = u * t_ref.
    VolumetricHeat {
        rho: Pchip,
        cp: Pchip,
        t_ref: f64,
        inv_scale: f64,
    },
    /// K(u) = k(T) / k_ref with T = u * t_ref.
    Conductivity {
        curve: Pchip,
        t_ref: f64,
        inv_scale: f64,
    },
}

impl Coefficient {
    pub fn is_constant_one(&self) -> bool {
        matches!(self, Coefficient::Constant(c) if *c == 1.0)
    }

    pub fn eval_scope<S: Scope>(&self, scope: &mut S, u: S::Num) -> S::Num {
        match self {
            Coefficient::Constant(c) => scope.constant(*c),
            Coefficient::VolumetricHeat {
                rho,
                cp,
                t_ref,
                inv_scale,
            } => {
                let t = scope.mul_const(u, *t_ref);
                let r = rho.eval_scope(scope, t);
                let c = cp.eval_scope(scope, t);
                let rc = scope.mul(r, c);
                scope.mul_const(rc, *inv_scale)
            }
            Coefficient::Conductivity {
                curve,
                t_ref,
                inv_scale,
            } => {
                let t = scope.mul_const(u, *t_ref);
                let k = curve.eval_scope(scope, t);
                scope.mul_const(k, *inv_scale)
            }
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.eval_scope(&mut crate::autodiff::ValueScope, u)
    }

    /// Min/max over a dense sample of the given state range.
    pub fn bounds_on(&self, u_range: (f64, f64), n_samples: usize) -> (f64, f64) {
        let (lo, hi) = u_range;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for i in 0..=n_samples {
            let u = lo + (hi - lo) * i as f64 / n_samples as f64;
            let v = self.eval(u);
            min = min.min(v);
            max = max.max(v);
        }
        (min, max)
    }
}

/// Volumetric source f(x, t).
#[derive(Clone, Debug)]
pub enum SourceTerm {
    Zero,
    /// Manufactured so that e^{-t} sin(x) cos(x/2) solves the unit heat
    /// equation: f = e^{-t} (sin(x) cos(x/2) / 4 + cos(x) sin(x/2)).
    ToyManufactured,
}

impl SourceTerm {
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match self {
            SourceTerm::Zero => 0.0,
            SourceTerm::ToyManufactured => {
                (-t).exp() * (0.25 * x.sin() * (x / 2.0).cos() + x.cos() * (x / 2.0).sin())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, SourceTerm::Zero)
    }
}

#[derive(Clone, Debug)]
pub enum InitialCondition {
    Constant(f64),
    /// sin(x) cos(x/2), the toy exact solution at t = 0.
    ToySineProfile,
}

impl InitialCondition {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            InitialCondition::Constant(c) => *c,
            InitialCondition::ToySineProfile => x.sin() * (x / 2.0).cos(),
        }
    }
}

/// Dirichlet data at the two endpoints as functions of (dimensionless) time.
#[derive(Clone, Debug)]
pub enum BoundaryCondition {
    Homogeneous,
    TimeDependent { left: TimeSeries, right: TimeSeries },
}

impl BoundaryCondition {
    pub fn at(&self, t: f64) -> (f64, f64) {
        match self {
            BoundaryCondition::Homogeneous => (0.0, 0.0),
            BoundaryCondition::TimeDependent { left, right } => (left.at(t), right.at(t)),
        }
    }
}

/// Closed-form reference solutions.
#[derive(Clone, Copy, Debug)]
pub enum ExactSolution {
    /// u*(x, t) = e^{-t} sin(x) cos(x/2) on (0, pi).
    ToyDecay,
}

impl ExactSolution {
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match self {
            ExactSolution::ToyDecay => (-t).exp() * x.sin() * (x / 2.0).cos(),
        }
    }

    /// Exact spatial derivative.
    pub fn dx(&self, x: f64, t: f64) -> f64 {
        match self {
            ExactSolution::ToyDecay => {
                (-t).exp() * (x.cos() * (x / 2.0).cos() - 0.5 * x.sin() * (x / 2.0).sin())
            }
        }
    }
}

/// Full description of one experiment: equation data, discretization sizes
/// and the test-space choice.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: (f64, f64),
    pub t_end: f64,
    pub n_time: usize,
    pub capacity: Coefficient,
    pub conductivity: Coefficient,
    pub source: SourceTerm,
    pub initial: InitialCondition,
    pub boundary: BoundaryCondition,
    pub basis_kind: BasisKind,
    pub n_test: usize,
    pub n_int: usize,
    pub exact: Option<ExactSolution>,
}

impl ProblemSpec {
    pub fn dt(&self) -> f64 {
        self.t_end / self.n_time as f64
    }

    pub fn time_at(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    pub fn basis(&self) -> Result<crate::testspace::Basis> {
        crate::testspace::Basis::new(self.basis_kind, self.domain, self.n_test)
    }

    /// Boundary values at step n (1-based).
    pub fn boundary_values_at(&self, n: usize) -> (f64, f64) {
        self.boundary.at(self.time_at(n))
    }

    /// Cutoff + lift matching this problem's boundary data.
    pub fn bc_enforcer(&self) -> BcEnforcer {
        let cutoff = Cutoff {
            a: self.domain.0,
            b: self.domain.1,
        };
        let lift = match &self.boundary {
            BoundaryCondition::Homogeneous => Lift::Zero,
            BoundaryCondition::TimeDependent { .. } => {
                let mut left = Vec::with_capacity(self.n_time);
                let mut right = Vec::with_capacity(self.n_time);
                for n in 1..=self.n_time {
                    let (l, r) = self.boundary_values_at(n);
                    left.push(l);
                    right.push(r);
                }
                Lift::Linear { left, right }
            }
        };
        BcEnforcer { cutoff, lift }
    }

    pub fn validate(&self) -> Result<()> {
        if self.domain.1 <= self.domain.0 {
            return Err(Error::Config("degenerate spatial domain".into()));
        }
        if self.n_time == 0 || self.t_end <= 0.0 {
            return Err(Error::Config("time discretization must be positive".into()));
        }
        if self.n_test == 0 || self.n_int < 2 {
            return Err(Error::Config("test/quadrature sizes too small".into()));
        }
        if let Some(exact) = &self.exact {
            // exact solution must satisfy the boundary and initial data
            let (a, b) = self.domain;
            for i in 0..=16 {
                let t = self.t_end * i as f64 / 16.0;
                let (bl, br) = self.boundary.at(t);
                if (exact.eval(a, t) - bl).abs() > 1e-10 || (exact.eval(b, t) - br).abs() > 1e-10 {
                    return Err(Error::Validation(format!(
                        "exact solution violates boundary data at t = {t}"
                    )));
                }
                let x = a + (b - a) * i as f64 / 16.0;
                if (exact.eval(x, 0.0) - self.initial.eval(x)).abs() > 1e-10 {
                    return Err(Error::Validation(format!(
                        "exact solution violates initial data at x = {x}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Physical-to-dimensionless scaling of the freezing problem:
/// u = T / T_ref, x = s / d, t = tau / t0 with t0 = d^2 rho_ref cp_ref / k_ref.
#[derive(Clone, Copy, Debug)]
pub struct Nondimensionalization {
    pub t_ref: f64,
    pub d: f64,
    pub rho_ref: f64,
    pub cp_ref: f64,
    pub k_ref: f64,
    pub t0: f64,
}

impl Nondimensionalization {
    pub fn new(t_ref: f64, d: f64, rho_ref: f64, cp_ref: f64, k_ref: f64) -> Result<Self> {
        if d <= 0.0 || rho_ref <= 0.0 || cp_ref <= 0.0 || k_ref <= 0.0 {
            return Err(Error::Config("reference scales must be positive".into()));
        }
        Ok(Nondimensionalization {
            t_ref,
            d,
            rho_ref,
            cp_ref,
            k_ref,
            t0: d * d * rho_ref * cp_ref / k_ref,
        })
    }

    pub fn temp_to_dimensionless(&self, t_c: f64) -> f64 {
        t_c / self.t_ref
    }

    pub fn temp_to_physical(&self, u: f64) -> f64 {
        u * self.t_ref
    }

    pub fn time_to_physical(&self, t: f64) -> f64 {
        t * self.t0
    }

    pub fn coord_to_physical(&self, x: f64) -> f64 {
        x * self.d
    }
}

/// The linear heat-equation benchmark on (0, pi) with a manufactured source,
/// exact solution e^{-t} sin(x) cos(x/2), and the hyperparameters used in the
/// reference experiment.
pub fn make_toy_problem() -> ProblemSpec {
    ProblemSpec {
        name: "toy".into(),
        domain: (0.0, PI),
        t_end: 1.0,
        n_time: 128,
        capacity: Coefficient::Constant(1.0),
        conductivity: Coefficient::Constant(1.0),
        source: SourceTerm::ToyManufactured,
        initial: InitialCondition::ToySineProfile,
        boundary: BoundaryCondition::Homogeneous,
        basis_kind: BasisKind::H10Sine,
        n_test: 20,
        n_int: 128,
        exact: Some(ExactSolution::ToyDecay),
    }
}

/// Container geometry and horizon of the freezing run. `d` is the
/// characteristic slab thickness in meters; `t_end` is dimensionless.
#[derive(Clone, Copy, Debug)]
pub struct CoffeeGeometry {
    pub d: f64,
    pub t_end: f64,
}

impl Default for CoffeeGeometry {
    fn default() -> Self {
        // placeholder slab thickness; the physical value is a config input
        CoffeeGeometry { d: 0.1, t_end: 0.4 }
    }
}

pub const COFFEE_INITIAL_TEMP_C: f64 = 20.0;

/// Assemble the dimensionless freezing problem from a property table, a
/// boundary-temperature series (physical units) and the geometry. Reference
/// values are taken at the initial temperature, so C(1) = K(1) = 1.
pub fn make_coffee_problem(
    table: &PropertyTable,
    series: &BoundarySeries,
    geometry: CoffeeGeometry,
) -> Result<(ProblemSpec, Nondimensionalization)> {
    let (t_lo, t_hi) = table.temp_range();
    if t_lo > -30.0 || t_hi < 25.0 {
        return Err(Error::Validation(format!(
            "property table must cover [-30, 25] C, got [{t_lo}, {t_hi}]"
        )));
    }
    let t_ref = COFFEE_INITIAL_TEMP_C;
    let nondim = Nondimensionalization::new(
        t_ref,
        geometry.d,
        table.rho_at(t_ref),
        table.cp_at(t_ref),
        table.k_at(t_ref),
    )?;
    let t_end_physical = geometry.t_end * nondim.t0;
    if !series.left.covers(0.0, t_end_physical) || !series.right.covers(0.0, t_end_physical) {
        return Err(Error::Ingestion(format!(
            "boundary series must cover [0, {t_end_physical}] s"
        )));
    }
    let capacity = Coefficient::VolumetricHeat {
        rho: table.rho_curve().clone(),
        cp: table.cp_curve().clone(),
        t_ref,
        inv_scale: 1.0 / (nondim.rho_ref * nondim.cp_ref),
    };
    let conductivity = Coefficient::Conductivity {
        curve: table.k_curve().clone(),
        t_ref,
        inv_scale: 1.0 / nondim.k_ref,
    };
    let problem = ProblemSpec {
        name: "coffee".into(),
        domain: (0.0, 1.0),
        t_end: geometry.t_end,
        n_time: 128,
        capacity,
        conductivity,
        source: SourceTerm::Zero,
        initial: InitialCondition::Constant(1.0),
        boundary: BoundaryCondition::TimeDependent {
            left: series.left.rescaled(nondim.t0, t_ref),
            right: series.right.rescaled(nondim.t0, t_ref),
        },
        basis_kind: BasisKind::H1Fourier,
        n_test: 64,
        n_int: 256,
        exact: None,
    };
    Ok((problem, nondim))
}

/// Same problem with the coefficients frozen at C = K = 1: the linear control
/// solution u0, on the same dimensionless scales.
pub fn linear_control(problem: &ProblemSpec) -> ProblemSpec {
    let mut p = problem.clone();
    p.name = format!("{}-linear-control", problem.name);
    p.capacity = Coefficient::Constant(1.0);
    p.conductivity = Coefficient::Constant(1.0);
    p
}

#[cfg(test)]
mod tests {
    use super::properties::{synthetic_boundary_series, synthetic_property_table};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn toy_exact_solution_values() {
        let exact = ExactSolution::ToyDecay;
        // u*(pi/2, 0) = cos(pi/4)
        let v = exact.eval(PI / 2.0, 0.0);
        assert!((v - (PI / 4.0).cos()).abs() < 1e-15);
        assert!((v - 0.70711).abs() < 1e-5);
        for t in [0.0, 0.3, 1.0] {
            assert!(exact.eval(0.0, t).abs() < 1e-15);
            assert!(exact.eval(PI, t).abs() < 2e-16);
        }
    }

    /// The manufactured source must close the strong PDE: independent check
    /// with fourth-order finite differences in t and x at random points.
    #[test]
    fn toy_source_closes_the_strong_form() {
        let problem = make_toy_problem();
        let exact = ExactSolution::ToyDecay;
        let u = |x: f64, t: f64| exact.eval(x, t);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (ht, hx) = (1e-3, 2e-3);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let x: f64 = rng.random_range(0.05..PI - 0.05);
            let t: f64 = rng.random_range(0.01..1.0);
            let du_dt = (u(x, t - 2.0 * ht) - 8.0 * u(x, t - ht) + 8.0 * u(x, t + ht)
                - u(x, t + 2.0 * ht))
                / (12.0 * ht);
            let d2u_dx2 = (-u(x - 2.0 * hx, t) + 16.0 * u(x - hx, t) - 30.0 * u(x, t)
                + 16.0 * u(x + hx, t)
                - u(x + 2.0 * hx, t))
                / (12.0 * hx * hx);
            let resid = du_dt - d2u_dx2 - problem.source.eval(x, t);
            worst = worst.max(resid.abs());
        }
        assert!(worst < 1e-9, "strong-form residual {worst:e}");
    }

    #[test]
    fn toy_problem_validates_and_has_expected_sizes() {
        let p = make_toy_problem();
        p.validate().unwrap();
        assert_eq!((p.n_time, p.n_test, p.n_int), (128, 20, 128));
        assert_eq!(p.domain, (0.0, PI));
        assert!((p.dt() - 1.0 / 128.0).abs() < 1e-18);
        let chi = p.bc_enforcer().cutoff;
        assert!((chi.eval(PI / 2.0) - PI * PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn coffee_problem_dimensionless_setup() {
        let table = synthetic_property_table();
        let geometry = CoffeeGeometry::default();
        // need t0 to size the synthetic series; compute it the same way
        let probe = Nondimensionalization::new(
            20.0,
            geometry.d,
            table.rho_at(20.0),
            table.cp_at(20.0),
            table.k_at(20.0),
        )
        .unwrap();
        let series = synthetic_boundary_series(geometry.t_end * probe.t0);
        let (p, nd) = make_coffee_problem(&table, &series, geometry).unwrap();
        p.validate().unwrap();
        assert_eq!(p.domain, (0.0, 1.0));
        assert_eq!((p.n_time, p.n_test, p.n_int), (128, 64, 256));
        assert_eq!(p.basis_kind, BasisKind::H1Fourier);
        // C(1) = K(1) = 1 by construction of the reference values
        assert!((p.capacity.eval(1.0) - 1.0).abs() < 1e-12);
        assert!((p.conductivity.eval(1.0) - 1.0).abs() < 1e-12);
        // a constant -25 C boundary maps to -1.25
        assert!((nd.temp_to_dimensionless(-25.0) + 1.25).abs() < 1e-15);
        // boundary cooling is well under way by the end of the horizon
        let (l, _) = p.boundary_values_at(p.n_time);
        assert!((-1.25..=-0.7).contains(&l), "late boundary {l}");
    }

    #[test]
    fn constant_properties_reduce_to_unit_coefficients() {
        let table = properties::constant_property_table(1050.0, 3300.0, 1.1).unwrap();
        let geometry = CoffeeGeometry::default();
        let probe = Nondimensionalization::new(20.0, geometry.d, 1050.0, 3300.0, 1.1).unwrap();
        let series = synthetic_boundary_series(geometry.t_end * probe.t0);
        let (p, _) = make_coffee_problem(&table, &series, geometry).unwrap();
        for i in 0..=50 {
            let u = -1.3 + 2.4 * i as f64 / 50.0;
            assert!((p.capacity.eval(u) - 1.0).abs() < 1e-12);
            assert!((p.conductivity.eval(u) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_scaling_gives_unit_time_scale() {
        let nd = Nondimensionalization::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(nd.t0, 1.0);
        assert_eq!(nd.time_to_physical(0.7), 0.7);
    }

    #[test]
    fn temperature_round_trip_is_identity() {
        let nd = Nondimensionalization::new(20.0, 0.1, 1100.0, 3200.0, 0.5).unwrap();
        assert!(nd.t0 > 0.0);
        for t in [-25.0, -3.0, 0.0, 7.3, 20.0] {
            let back = nd.temp_to_physical(nd.temp_to_dimensionless(t));
            assert!((back - t).abs() <= 1e-12 * t.abs().max(1.0));
        }
    }

    #[test]
    fn series_must_cover_horizon() {
        let table = synthetic_property_table();
        let geometry = CoffeeGeometry::default();
        let short = synthetic_boundary_series(10.0); // far less than t_end * t0
        assert!(make_coffee_problem(&table, &short, geometry).is_err());
    }

    #[test]
    fn synthetic_capacity_has_single_interior_peak() {
        let table = synthetic_property_table();
        let geometry = CoffeeGeometry::default();
        let probe = Nondimensionalization::new(
            20.0,
            geometry.d,
            table.rho_at(20.0),
            table.cp_at(20.0),
            table.k_at(20.0),
        )
        .unwrap();
        let series = synthetic_boundary_series(geometry.t_end * probe.t0);
        let (p, nd) = make_coffee_problem(&table, &series, geometry).unwrap();
        // scan C(u) over the simulated range and count strict local maxima
        let n = 1000;
        let (lo, hi) = (-1.3, 1.05);
        let vals: Vec<f64> = (0..=n)
            .map(|i| p.capacity.eval(lo + (hi - lo) * i as f64 / n as f64))
            .collect();
        let mut maxima = Vec::new();
        for i in 1..n {
            if vals[i] > vals[i - 1] && vals[i] > vals[i + 1] {
                maxima.push(lo + (hi - lo) * i as f64 / n as f64);
            }
        }
        assert_eq!(maxima.len(), 1, "maxima at {maxima:?}");
        // the peak sits near the freezing plateau (-3 C in dimensionless form)
        let peak_t = nd.temp_to_physical(maxima[0]);
        assert!((peak_t + 3.0).abs() < 2.0, "peak at {peak_t} C");
    }

    #[test]
    fn coefficient_bounds_are_positive_over_state_range() {
        let table = synthetic_property_table();
        let geometry = CoffeeGeometry::default();
        let probe = Nondimensionalization::new(
            20.0,
            geometry.d,
            table.rho_at(20.0),
            table.cp_at(20.0),
            table.k_at(20.0),
        )
        .unwrap();
        let series = synthetic_boundary_series(geometry.t_end * probe.t0);
        let (p, _) = make_coffee_problem(&table, &series, geometry).unwrap();
        let (c_min, c_max) = p.capacity.bounds_on((-1.5, 1.25), 2000);
        let (k_min, k_max) = p.conductivity.bounds_on((-1.5, 1.25), 2000);
        assert!(c_min > 0.0 && c_max >= c_min);
        assert!(k_min > 0.0 && k_max >= k_min);
        // conductivity rises across freezing, capacity peaks above both ends
        assert!(k_max > 2.0 && c_max > 1.5);
        // the internal energy C(u) u stays monotone over the state range
        let mut min_de = f64::INFINITY;
        for i in 0..=2000 {
            let u = -1.4 + 2.6 * i as f64 / 2000.0;
            let h = 1e-5;
            let e = |v: f64| p.capacity.eval(v) * v;
            min_de = min_de.min((e(u + h) - e(u - h)) / (2.0 * h));
        }
        assert!(min_de > 0.0, "internal energy non-monotone: {min_de}");
    }

    #[test]
    fn coefficient_tape_and_value_paths_agree() {
        use crate::autodiff::{Scope, Tape};
        let table = synthetic_property_table();
        let coeff = Coefficient::VolumetricHeat {
            rho: table.rho_curve().clone(),
            cp: table.cp_curve().clone(),
            t_ref: 20.0,
            inv_scale: 1.0 / (table.rho_at(20.0) * table.cp_at(20.0)),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..200 {
            let u: f64 = rng.random_range(-1.4..1.2);
            let mut tape = Tape::new();
            let uv = tape.input(u);
            let c = coeff.eval_scope(&mut tape, uv);
            assert_eq!(tape.value(c), coeff.eval(u));
            // gradient through the interpolant matches finite differences
            let adj = tape.backward(c);
            let grad = adj[uv.0 as usize];
            let fd = (coeff.eval(u + h) - coeff.eval(u - h)) / (2.0 * h);
            // floor the denominator: where the curve is flat the finite
            // difference is pure roundoff
            let denom = grad.abs().max(fd.abs()).max(1e-3);
            // points straddling a knot see one-sided derivatives; skip those
            let t = u * 20.0;
            let near_knot = (t + h * 40.0).floor() != (t - h * 40.0).floor();
            if !near_knot {
                assert!(
                    (grad - fd).abs() / denom < 1e-5,
                    "at u = {u}: {grad} vs {fd}"
                );
            }
        }
    }
}
