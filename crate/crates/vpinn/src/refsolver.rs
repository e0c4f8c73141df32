//! Independent classical oracle: backward-Euler finite differences on a
//! uniform grid, tridiagonal solves via the Thomas algorithm, and Picard
//! iteration for solution-dependent coefficients.
//!
//! Deliberately shares nothing with the variational training path (second
//! order central differences instead of test functions, Picard instead of
//! native nonlinear evaluation), so agreement between the two is meaningful.

use crate::error::{Error, Result};
use crate::problems::{Coefficient, ProblemSpec};

/// Uniform space-time grid for the oracle.
#[derive(Clone, Copy, Debug)]
pub struct Grid1d {
    pub a: f64,
    pub b: f64,
    pub n_cells: usize,
    pub h: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl Grid1d {
    pub fn new(domain: (f64, f64), n_cells: usize, t_end: f64, n_steps: usize) -> Result<Self> {
        if domain.1 <= domain.0 {
            return Err(Error::Config("degenerate domain".into()));
        }
        if n_cells < 8 {
            return Err(Error::Config(format!(
                "oracle grid needs at least 8 cells, got {n_cells}"
            )));
        }
        if n_steps == 0 || t_end <= 0.0 {
            return Err(Error::Config("oracle needs a positive horizon".into()));
        }
        Ok(Grid1d {
            a: domain.0,
            b: domain.1,
            n_cells,
            h: (domain.1 - domain.0) / n_cells as f64,
            dt: t_end / n_steps as f64,
            n_steps,
        })
    }

    pub fn node(&self, j: usize) -> f64 {
        self.a + j as f64 * self.h
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }
}

/// Nodal solution values for every time level, plus per-step Picard counts.
#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub grid: Grid1d,
    values: Vec<f64>,
    pub picard_iterations: Vec<usize>,
}

impl OracleSolution {
    /// Value at time level n (0 = initial) and node j.
    pub fn at(&self, n: usize, j: usize) -> f64 {
        self.values[n * self.grid.n_nodes() + j]
    }

    pub fn step_values(&self, n: usize) -> &[f64] {
        let w = self.grid.n_nodes();
        &self.values[n * w..(n + 1) * w]
    }

    /// Linear interpolation in space at time level n.
    pub fn interp(&self, n: usize, x: f64) -> f64 {
        let g = &self.grid;
        let frac = ((x - g.a) / g.h).clamp(0.0, g.n_cells as f64);
        let j = (frac.floor() as usize).min(g.n_cells - 1);
        let t = frac - j as f64;
        let row = self.step_values(n);
        row[j] + t * (row[j + 1] - row[j])
    }

    /// Slope of the spatial interpolant at time level n (piecewise constant).
    pub fn interp_dx(&self, n: usize, x: f64) -> f64 {
        let g = &self.grid;
        let frac = ((x - g.a) / g.h).clamp(0.0, g.n_cells as f64);
        let j = (frac.floor() as usize).min(g.n_cells - 1);
        let row = self.step_values(n);
        (row[j + 1] - row[j]) / g.h
    }

    /// Solution at the domain midpoint for every time level.
    pub fn midpoint_trace(&self) -> Vec<f64> {
        let mid = 0.5 * (self.grid.a + self.grid.b);
        (0..=self.grid.n_steps)
            .map(|n| self.interp(n, mid))
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// In-place Thomas solve of a tridiagonal system; `diag` and `rhs` are
/// consumed as scratch. All systems here are strictly diagonally dominant.
fn thomas(lower: &[f64], diag: &mut [f64], upper: &[f64], rhs: &mut [f64], out: &mut [f64]) {
    let n = diag.len();
    for i in 1..n {
        let w = lower[i - 1] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    out[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = (rhs[i] - upper[i] * out[i + 1]) / diag[i];
    }
}

struct StepWorkspace {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    solution: Vec<f64>,
}

/// One frozen-coefficient backward-Euler solve:
/// C(w_j) u_j - (dt/h^2) d/dx(K(w) du) = C(u_prev) u_prev + dt f(x, t_n),
/// with K at cell faces by arithmetic averaging of nodal values.
#[allow(clippy::too_many_arguments)]
fn linearized_step(
    problem: &ProblemSpec,
    grid: &Grid1d,
    frozen: &[f64],
    u_prev: &[f64],
    t_n: f64,
    bc: (f64, f64),
    ws: &mut StepWorkspace,
    out: &mut [f64],
) {
    let m = grid.n_cells;
    let lam = grid.dt / (grid.h * grid.h);
    let interior = m - 1;
    ws.lower.resize(interior.saturating_sub(1), 0.0);
    ws.diag.resize(interior, 0.0);
    ws.upper.resize(interior.saturating_sub(1), 0.0);
    ws.rhs.resize(interior, 0.0);
    ws.solution.resize(interior, 0.0);

    let k_at = |u: f64| problem.conductivity.eval(u);
    let c_at = |u: f64| problem.capacity.eval(u);

    for j in 1..m {
        let i = j - 1;
        let k_minus = 0.5 * (k_at(frozen[j - 1]) + k_at(frozen[j]));
        let k_plus = 0.5 * (k_at(frozen[j]) + k_at(frozen[j + 1]));
        let x = grid.node(j);
        ws.diag[i] = c_at(frozen[j]) + lam * (k_minus + k_plus);
        let mut rhs = c_at(u_prev[j]) * u_prev[j] + grid.dt * problem.source.eval(x, t_n);
        if j == 1 {
            rhs += lam * k_minus * bc.0;
        } else {
            ws.lower[i - 1] = -lam * k_minus;
        }
        if j == m - 1 {
            rhs += lam * k_plus * bc.1;
        } else {
            ws.upper[i] = -lam * k_plus;
        }
        ws.rhs[i] = rhs;
    }
    thomas(
        &ws.lower,
        &mut ws.diag,
        &ws.upper,
        &mut ws.rhs,
        &mut ws.solution,
    );
    out[0] = bc.0;
    out[m] = bc.1;
    out[1..m].copy_from_slice(&ws.solution);
}

fn initial_row(problem: &ProblemSpec, grid: &Grid1d) -> Vec<f64> {
    (0..=grid.n_cells)
        .map(|j| problem.initial.eval(grid.node(j)))
        .collect()
}

/// Backward-Euler solve for constant coefficients: one tridiagonal system per
/// step, no iteration.
pub fn solve_linear(problem: &ProblemSpec, grid: &Grid1d) -> Result<OracleSolution> {
    if !matches!(problem.capacity, Coefficient::Constant(_))
        || !matches!(problem.conductivity, Coefficient::Constant(_))
    {
        return Err(Error::Config(
            "solve_linear requires constant coefficients".into(),
        ));
    }
    let width = grid.n_nodes();
    let mut values = Vec::with_capacity((grid.n_steps + 1) * width);
    let mut current = initial_row(problem, grid);
    values.extend_from_slice(&current);
    let mut next = vec![0.0; width];
    let mut ws = StepWorkspace {
        lower: Vec::new(),
        diag: Vec::new(),
        upper: Vec::new(),
        rhs: Vec::new(),
        solution: Vec::new(),
    };
    for n in 1..=grid.n_steps {
        let t_n = n as f64 * grid.dt;
        let bc = problem.boundary.at(t_n);
        linearized_step(problem, grid, &current, &current, t_n, bc, &mut ws, &mut next);
        values.extend_from_slice(&next);
        std::mem::swap(&mut current, &mut next);
    }
    Ok(OracleSolution {
        grid: *grid,
        values,
        picard_iterations: vec![1; grid.n_steps],
    })
}

/// Backward-Euler solve with Picard iteration on the coefficients: freeze
/// C, K at the current iterate, solve, repeat until the max nodal change
/// drops below `picard_tol` or `picard_max` is reached.
pub fn solve_nonlinear(
    problem: &ProblemSpec,
    grid: &Grid1d,
    picard_tol: f64,
    picard_max: usize,
) -> Result<OracleSolution> {
    let width = grid.n_nodes();
    let mut values = Vec::with_capacity((grid.n_steps + 1) * width);
    let mut current = initial_row(problem, grid);
    values.extend_from_slice(&current);
    let mut iterate = vec![0.0; width];
    let mut next = vec![0.0; width];
    let mut counts = Vec::with_capacity(grid.n_steps);
    let mut ws = StepWorkspace {
        lower: Vec::new(),
        diag: Vec::new(),
        upper: Vec::new(),
        rhs: Vec::new(),
        solution: Vec::new(),
    };
    for n in 1..=grid.n_steps {
        let t_n = n as f64 * grid.dt;
        let bc = problem.boundary.at(t_n);
        iterate.copy_from_slice(&current);
        let mut converged = false;
        let mut last_change = f64::INFINITY;
        for it in 1..=picard_max {
            linearized_step(problem, grid, &iterate, &current, t_n, bc, &mut ws, &mut next);
            last_change = iterate
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            iterate.copy_from_slice(&next);
            if last_change < picard_tol {
                counts.push(it);
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::PicardDiverged {
                step: n,
                last_change,
            });
        }
        values.extend_from_slice(&iterate);
        current.copy_from_slice(&iterate);
    }
    Ok(OracleSolution {
        grid: *grid,
        values,
        picard_iterations: counts,
    })
}

pub const DEFAULT_PICARD_TOL: f64 = 1e-8;
pub const DEFAULT_PICARD_MAX: usize = 50;
