//! Orthonormal test bases and the stochastic midpoint quadrature.
//!
//! Two bases are supported: sines that vanish at the endpoints, scaled to
//! unit gradient norm (the natural test space for homogeneous Dirichlet
//! problems), and a constant-plus-cosine family scaled to unit full H1 norm
//! for problems with inhomogeneous boundary data. Both are orthonormal in
//! closed form, so no Gram inversion is ever needed; [`gram_matrix`] exists
//! as a diagnostic of that fact.

use crate::error::{Error, Result};
use rand::Rng;
use std::f64::consts::PI;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BasisKind {
    /// sin(k pi (x-a)/(b-a)) scaled so the gradient seminorm of each mode is 1.
    H10Sine,
    /// {1, cos(k pi (x-a)/(b-a))} scaled to unit H1 norm.
    H1Fourier,
}

/// Orthonormal basis descriptor; mode evaluation is closed-form.
#[derive(Clone, Debug)]
pub struct Basis {
    pub kind: BasisKind,
    pub a: f64,
    pub b: f64,
    pub n_modes: usize,
}

impl Basis {
    pub fn new(kind: BasisKind, domain: (f64, f64), n_modes: usize) -> Result<Self> {
        if domain.1 <= domain.0 {
            return Err(Error::Config(format!(
                "degenerate domain ({}, {})",
                domain.0, domain.1
            )));
        }
        if n_modes == 0 {
            return Err(Error::Config("basis needs at least one mode".into()));
        }
        Ok(Basis {
            kind,
            a: domain.0,
            b: domain.1,
            n_modes,
        })
    }

    /// Valid mode indices: 1..=n for the sine basis, 0..n for the H1 family.
    pub fn mode_indices(&self) -> std::ops::Range<usize> {
        match self.kind {
            BasisKind::H10Sine => 1..self.n_modes + 1,
            BasisKind::H1Fourier => 0..self.n_modes,
        }
    }

    /// (phi_k(x), phi_k'(x)).
    pub fn eval(&self, k: usize, x: f64) -> Result<(f64, f64)> {
        if !self.mode_indices().contains(&k) {
            return Err(Error::Structural(format!(
                "mode index {k} out of range {:?}",
                self.mode_indices()
            )));
        }
        Ok(self.eval_unchecked(k, x))
    }

    fn eval_unchecked(&self, k: usize, x: f64) -> (f64, f64) {
        let len = self.b - self.a;
        match self.kind {
            BasisKind::H10Sine => {
                // Unit gradient norm: phi = sqrt(2/L) * L/(k pi) * sin(k pi (x-a)/L),
                // so phi' = sqrt(2/L) cos(...) and int (phi')^2 = 1 for every k.
                let omega = k as f64 * PI / len;
                let root = (2.0 / len).sqrt();
                let arg = omega * (x - self.a);
                (root / omega * arg.sin(), root * arg.cos())
            }
            BasisKind::H1Fourier => {
                if k == 0 {
                    ((1.0 / len).sqrt(), 0.0)
                } else {
                    let omega = k as f64 * PI / len;
                    // ||cos(k pi (x-a)/L)||_{H1}^2 = L/2 * (1 + omega^2)
                    let norm = (len / 2.0 * (1.0 + omega * omega)).sqrt();
                    let arg = omega * (x - self.a);
                    (arg.cos() / norm, -omega * arg.sin() / norm)
                }
            }
        }
    }

    /// Tabulated values and derivatives of every mode at the given points,
    /// mode-major.
    pub fn tabulate(&self, xs: &[f64]) -> BasisTable {
        let mut phi = Vec::with_capacity(self.n_modes);
        let mut dphi = Vec::with_capacity(self.n_modes);
        for k in self.mode_indices() {
            let mut row = Vec::with_capacity(xs.len());
            let mut drow = Vec::with_capacity(xs.len());
            for &x in xs {
                let (p, d) = self.eval_unchecked(k, x);
                row.push(p);
                drow.push(d);
            }
            phi.push(row);
            dphi.push(drow);
        }
        BasisTable { phi, dphi }
    }
}

/// Dense mode-by-point tables of basis values and derivatives.
pub struct BasisTable {
    pub phi: Vec<Vec<f64>>,
    pub dphi: Vec<Vec<f64>>,
}

/// Midpoint-type quadrature: one point per cell of the uniform partition,
/// equal weights (b-a)/n.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Quadrature estimate of the integral of `f`.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Stratified random rule: point i uniform in cell [a + i h, a + (i+1) h).
pub fn sample_quadrature(
    domain: (f64, f64),
    n_points: usize,
    rng: &mut impl Rng,
) -> Result<QuadratureRule> {
    let (a, b) = domain;
    if b <= a {
        return Err(Error::Config(format!("degenerate domain ({a}, {b})")));
    }
    if n_points < 2 {
        return Err(Error::Config("quadrature needs at least 2 points".into()));
    }
    let h = (b - a) / n_points as f64;
    let points = (0..n_points)
        .map(|i| a + (i as f64 + rng.random::<f64>()) * h)
        .collect();
    Ok(QuadratureRule {
        points,
        weights: vec![h; n_points],
    })
}

/// Deterministic midpoint rule, used for metrics and diagnostics so that
/// verification noise is decoupled from training noise.
pub fn midpoint_rule(domain: (f64, f64), n_points: usize) -> QuadratureRule {
    let (a, b) = domain;
    assert!(b > a, "degenerate domain");
    let h = (b - a) / n_points as f64;
    QuadratureRule {
        points: (0..n_points).map(|i| a + (i as f64 + 0.5) * h).collect(),
        weights: vec![h; n_points],
    }
}

/// Quadrature estimate of the basis Gram matrix in the inner product matching
/// the basis kind (gradient seminorm for the sine family, full H1 product for
/// the cosine family). Orthonormal bases should return the identity.
pub fn gram_matrix(basis: &Basis, quad: &QuadratureRule) -> Vec<Vec<f64>> {
    let table = basis.tabulate(&quad.points);
    let n = basis.n_modes;
    let with_mass = matches!(basis.kind, BasisKind::H1Fourier);
    let mut g = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in j..n {
            let mut acc = 0.0;
            for i in 0..quad.len() {
                let mut integrand = table.dphi[j][i] * table.dphi[k][i];
                if with_mass {
                    integrand += table.phi[j][i] * table.phi[k][i];
                }
                acc += quad.weights[i] * integrand;
            }
            g[j][k] = acc;
            g[k][j] = acc;
        }
    }
    g
}

/// max |G - I| over all entries.
pub fn gram_identity_deviation(g: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (j, row) in g.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            let target = if j == k { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
    }
    worst
}
