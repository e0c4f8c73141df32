//! The trial solution: a fully-connected tanh network mapping a spatial
//! coordinate to one output per time step, wrapped by a fixed cutoff/lift pair
//! that enforces the Dirichlet data exactly.
//!
//! The spatial derivative of the trial solution is propagated through the
//! layers alongside the values (d z_j = s'(pre_j) * (W_j d z_{j-1})), with
//! every step recorded on the active [`Scope`], so reverse mode differentiates
//! through it. Nested reverse-over-reverse is never needed.

use crate::autodiff::Scope;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One dense layer, weights row-major `(out, in)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub n_in: usize,
    pub n_out: usize,
}

/// Trainable state of the trial network. Hidden activations are tanh, the
/// output layer is linear, and the output width equals the number of time
/// steps of the configured problem.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpState {
    pub widths: Vec<usize>,
    pub layers: Vec<Layer>,
}

impl MlpState {
    /// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases,
    /// deterministic for a given seed.
    pub fn init(seed: u64, widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config(
                "network needs at least an input and an output layer".into(),
            ));
        }
        if widths[0] != 1 {
            return Err(Error::Config(format!(
                "input width must be 1, got {}",
                widths[0]
            )));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("zero layer width".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for pair in widths.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            let bound = (6.0 / (n_in + n_out) as f64).sqrt();
            let weights = (0..n_in * n_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            layers.push(Layer {
                weights,
                biases: vec![0.0; n_out],
                n_in,
                n_out,
            });
        }
        Ok(MlpState {
            widths: widths.to_vec(),
            layers,
        })
    }

    pub fn out_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// All parameters in a fixed order: per layer, weights row-major, then
    /// biases. [`MlpState::lift`] and the optimizer share this order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Structural(format!(
                "parameter vector has length {}, expected {}",
                params.len(),
                self.n_params()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = layer.biases.len();
            layer.biases.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    /// Register every parameter on the scope (as trainable leaves when the
    /// scope is a tape), in `flat_params` order.
    pub fn lift<S: Scope>(&self, scope: &mut S) -> LiftedMlp<S::Num> {
        let layers = self
            .layers
            .iter()
            .map(|layer| LiftedLayer {
                weights: layer.weights.iter().map(|&w| scope.input(w)).collect(),
                biases: layer.biases.iter().map(|&b| scope.input(b)).collect(),
                n_in: layer.n_in,
                n_out: layer.n_out,
            })
            .collect();
        LiftedMlp { layers }
    }

    /// Versioned text checkpoint: header, widths, then per layer one line of
    /// row-major weights and one of biases. Floats use the shortest exact
    /// decimal form, so the round trip is lossless.
    pub fn to_checkpoint_string(&self) -> String {
        let mut out = String::from("vpinn-checkpoint v1\n");
        out.push_str(
            &self
                .widths
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push('\n');
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        for layer in &self.layers {
            out.push_str(&join(&layer.weights));
            out.push('\n');
            out.push_str(&join(&layer.biases));
            out.push('\n');
        }
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        // leading '#' lines are artifact metadata written by the CLI
        let mut lines = text.lines().filter(|l| !l.trim_start().starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Ingestion("empty checkpoint".into()))?;
        if header.trim() != "vpinn-checkpoint v1" {
            return Err(Error::Ingestion(format!(
                "unrecognized checkpoint header '{header}'"
            )));
        }
        let widths: Vec<usize> = lines
            .next()
            .ok_or_else(|| Error::Ingestion("missing widths line".into()))?
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse()
                    .map_err(|_| Error::Ingestion(format!("bad width '{tok}'")))
            })
            .collect::<Result<_>>()?;
        let parse_row = |line: Option<&str>, what: &str, expect: usize| -> Result<Vec<f64>> {
            let line = line.ok_or_else(|| Error::Ingestion(format!("missing {what} line")))?;
            let row: Vec<f64> = line
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse()
                        .map_err(|_| Error::Ingestion(format!("bad float '{tok}' in {what}")))
                })
                .collect::<Result<_>>()?;
            if row.len() != expect {
                return Err(Error::Ingestion(format!(
                    "{what} has {} entries, expected {expect}",
                    row.len()
                )));
            }
            Ok(row)
        };
        let mut layers = Vec::new();
        for pair in widths.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            let weights = parse_row(lines.next(), "weights", n_in * n_out)?;
            let biases = parse_row(lines.next(), "biases", n_out)?;
            layers.push(Layer {
                weights,
                biases,
                n_in,
                n_out,
            });
        }
        if layers.is_empty() {
            return Err(Error::Ingestion("checkpoint has no layers".into()));
        }
        Ok(MlpState { widths, layers })
    }
}

/// Network parameters registered on a scope.
pub struct LiftedMlp<V> {
    pub layers: Vec<LiftedLayer<V>>,
}

pub struct LiftedLayer<V> {
    pub weights: Vec<V>,
    pub biases: Vec<V>,
    pub n_in: usize,
    pub n_out: usize,
}

/// Cutoff chi(x) = (x - a)(b - x): zero exactly at the endpoints, positive
/// inside. Covers x(pi - x) on (0, pi) and x(1 - x) on (0, 1).
#[derive(Clone, Copy, Debug)]
pub struct Cutoff {
    pub a: f64,
    pub b: f64,
}

impl Cutoff {
    pub fn eval(&self, x: f64) -> f64 {
        (x - self.a) * (self.b - x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (self.a + self.b) - 2.0 * x
    }
}

/// Boundary lift g(x, n) added to the cutoff product. For data-driven
/// Dirichlet values the lift interpolates linearly between the two endpoint
/// values at each step.
#[derive(Clone, Debug)]
pub enum Lift {
    Zero,
    /// Per-step boundary values, index n-1 for step n.
    Linear { left: Vec<f64>, right: Vec<f64> },
}

/// Exact boundary-condition enforcement: u^n(x) = chi(x) * raw^n(x) + g(x, n).
#[derive(Clone, Debug)]
pub struct BcEnforcer {
    pub cutoff: Cutoff,
    pub lift: Lift,
}

impl BcEnforcer {
    pub fn homogeneous(domain: (f64, f64)) -> Self {
        BcEnforcer {
            cutoff: Cutoff {
                a: domain.0,
                b: domain.1,
            },
            lift: Lift::Zero,
        }
    }

    /// Lift value and spatial slope at step `n` (1-based).
    pub fn lift_at(&self, x: f64, n: usize) -> (f64, f64) {
        match &self.lift {
            Lift::Zero => (0.0, 0.0),
            Lift::Linear { left, right } => {
                let (a, b) = (self.cutoff.a, self.cutoff.b);
                let len = b - a;
                let (l, r) = (left[n - 1], right[n - 1]);
                (l * ((b - x) / len) + r * ((x - a) / len), (r - l) / len)
            }
        }
    }
}

/// Evaluate the trial solution and its exact spatial derivative at `x`.
///
/// Returns one (value, derivative) pair per time step; all operations go
/// through the scope, so on a tape the full computation is differentiable
/// with respect to the lifted parameters.
pub fn forward_with_derivative<S: Scope>(
    scope: &mut S,
    net: &LiftedMlp<S::Num>,
    bc: &BcEnforcer,
    x: f64,
) -> (Vec<S::Num>, Vec<S::Num>) {
    let n_layers = net.layers.len();
    let mut z: Vec<S::Num> = Vec::new();
    let mut dz: Vec<S::Num> = Vec::new();
    let mut pairs: Vec<(S::Num, S::Num)> = Vec::new();

    // First layer from the scalar coordinate: z = tanh(w x + b), dz = s' w.
    {
        let layer = &net.layers[0];
        debug_assert_eq!(layer.n_in, 1);
        for i in 0..layer.n_out {
            let wx = scope.mul_const(layer.weights[i], x);
            let pre = scope.add(wx, layer.biases[i]);
            if n_layers == 1 {
                z.push(pre);
                dz.push(layer.weights[i]);
            } else {
                let act = scope.tanh(pre);
                let sq = scope.mul(act, act);
                let sp = scope.sub_from_const(sq, 1.0);
                z.push(act);
                dz.push(scope.mul(sp, layer.weights[i]));
            }
        }
    }

    for (li, layer) in net.layers.iter().enumerate().skip(1) {
        let last = li == n_layers - 1;
        let mut z_next = Vec::with_capacity(layer.n_out);
        let mut dz_next = Vec::with_capacity(layer.n_out);
        for i in 0..layer.n_out {
            let row = &layer.weights[i * layer.n_in..(i + 1) * layer.n_in];
            pairs.clear();
            pairs.extend(row.iter().copied().zip(z.iter().copied()));
            let wz = scope.dot(&pairs);
            let pre = scope.add(wz, layer.biases[i]);
            pairs.clear();
            pairs.extend(row.iter().copied().zip(dz.iter().copied()));
            let wdz = scope.dot(&pairs);
            if last {
                // identity output activation
                z_next.push(pre);
                dz_next.push(wdz);
            } else {
                let act = scope.tanh(pre);
                let sq = scope.mul(act, act);
                let sp = scope.sub_from_const(sq, 1.0);
                z_next.push(act);
                dz_next.push(scope.mul(sp, wdz));
            }
        }
        z = z_next;
        dz = dz_next;
    }

    // Boundary enforcement: u = chi * raw + g, du = chi' * raw + chi * raw' + g'.
    let chi = bc.cutoff.eval(x);
    let dchi = bc.cutoff.derivative(x);
    let homogeneous = matches!(bc.lift, Lift::Zero);
    let mut u = Vec::with_capacity(z.len());
    let mut du = Vec::with_capacity(z.len());
    for (idx, (&raw, &draw)) in z.iter().zip(&dz).enumerate() {
        let step = idx + 1;
        let chi_raw = scope.mul_const(raw, chi);
        let dchi_raw = scope.mul_const(raw, dchi);
        let slope = scope.mul_add_const(dchi_raw, draw, chi);
        if homogeneous {
            u.push(chi_raw);
            du.push(slope);
        } else {
            let (g, dg) = bc.lift_at(x, step);
            u.push(scope.add_const(chi_raw, g));
            du.push(scope.add_const(slope, dg));
        }
    }
    (u, du)
}
