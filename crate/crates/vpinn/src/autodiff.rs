//! Reverse-mode automatic differentiation on a flat tape of scalar operations.
//!
//! A forward evaluation appends nodes in topological order; [`Tape::backward`]
//! sweeps the tape once in reverse and accumulates adjoints through the stored
//! local partials. Problem sizes here are small (a few thousand parameters,
//! a few hundred quadrature points), so a scalar tape is simpler to test than
//! tensor-level autodiff. The fused [`Op::Dot`] and [`Op::LinComb`] nodes are an
//! internal evaluation optimization: they compute the same left-to-right
//! mul/add folds as the two-parent primitives would, one node per reduction.

use crate::error::{Error, Result};

/// Sentinel for an absent parent slot.
const NO_PARENT: u32 = u32::MAX;

/// Handle to a node on a tape.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Var(pub u32);

impl Var {
    #[inline]
    fn idx(self) -> usize {
        self.0 as usize
    }
}

/// Operation tag of a recorded node.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Op {
    /// Literal value, no gradient.
    Const,
    /// Trainable leaf; collected into the tape's parameter list.
    Input,
    Add,
    Sub,
    Mul,
    Neg,
    Tanh,
    Recip,
    /// Integer power with a constant exponent.
    Pow,
    /// `a + c` with constant `c`.
    AddConst,
    /// `c * a` with constant `c`.
    MulConst,
    /// `acc + c * x` with constant `c`.
    MulAddConst,
    /// `c - a` with constant `c`.
    SubFromConst,
    /// Fused pairwise product reduction `sum_i a_i * b_i`.
    Dot,
    /// Fused reduction `sum_i c_i * x_i` with constant coefficients.
    LinComb,
}

/// Recorded scalar computation graph.
///
/// Storage is struct-of-arrays so the reverse sweep touches values and
/// partials in separate contiguous streams. A tape is single-use per loss
/// evaluation; [`Tape::clear`] keeps the allocations for the next one.
pub struct Tape {
    values: Vec<f64>,
    partials: Vec<[f64; 2]>,
    parents: Vec<[u32; 2]>,
    ops: Vec<Op>,
    param_ids: Vec<u32>,
    dot_pairs: Vec<(u32, u32)>,
    lin_terms: Vec<(u32, f64)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::with_capacity(0)
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Tape {
            values: Vec::with_capacity(nodes),
            partials: Vec::with_capacity(nodes),
            parents: Vec::with_capacity(nodes),
            ops: Vec::with_capacity(nodes),
            param_ids: Vec::new(),
            dot_pairs: Vec::new(),
            lin_terms: Vec::new(),
        }
    }

    /// Number of nodes currently on the tape.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Drop all nodes but keep the allocations.
    pub fn clear(&mut self) {
        self.values.clear();
        self.partials.clear();
        self.parents.clear();
        self.ops.clear();
        self.param_ids.clear();
        self.dot_pairs.clear();
        self.lin_terms.clear();
    }

    /// Forward value of a node.
    #[inline]
    pub fn value(&self, v: Var) -> f64 {
        self.values[v.idx()]
    }

    pub fn op(&self, v: Var) -> Op {
        self.ops[v.idx()]
    }

    /// Ids of nodes flagged trainable, in registration order.
    pub fn param_ids(&self) -> &[u32] {
        &self.param_ids
    }

    #[inline]
    fn push(&mut self, op: Op, parents: [u32; 2], value: f64, partials: [f64; 2]) -> Var {
        let id = self.values.len() as u32;
        self.values.push(value);
        self.partials.push(partials);
        self.parents.push(parents);
        self.ops.push(op);
        Var(id)
    }

    /// Append a node with explicit parents and local partials.
    ///
    /// Parents must already be on the tape, so topological order holds by
    /// construction. The fused reductions cannot be recorded this way; use
    /// [`Scope::dot`] and [`Scope::linear_combination`].
    pub fn record(&mut self, op: Op, parents: &[Var], value: f64, partials: &[f64]) -> Result<Var> {
        if matches!(op, Op::Dot | Op::LinComb) {
            return Err(Error::Structural(
                "fused reductions must be recorded through dot/linear_combination".into(),
            ));
        }
        if parents.len() > 2 || parents.len() != partials.len() {
            return Err(Error::Structural(format!(
                "record expects up to 2 parents with matching partials, got {}/{}",
                parents.len(),
                partials.len()
            )));
        }
        let mut par = [NO_PARENT; 2];
        let mut part = [0.0; 2];
        for (slot, &p) in par.iter_mut().zip(parents) {
            if p.idx() >= self.len() {
                return Err(Error::Structural(format!(
                    "parent id {} out of range (tape has {} nodes)",
                    p.0,
                    self.len()
                )));
            }
            *slot = p.0;
        }
        for (slot, &d) in part.iter_mut().zip(partials) {
            *slot = d;
        }
        Ok(self.push(op, par, value, part))
    }

    /// Reverse sweep: adjoint of `output` with respect to every node.
    ///
    /// The gradient of the output with respect to itself is 1; nodes after
    /// `output` get adjoint 0.
    pub fn backward(&self, output: Var) -> Vec<f64> {
        assert!(output.idx() < self.len(), "output id not on tape");
        let mut adj = vec![0.0; self.len()];
        adj[output.idx()] = 1.0;
        for i in (0..=output.idx()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            match self.ops[i] {
                Op::Const | Op::Input => {}
                Op::Dot => {
                    let (start, len) = (self.parents[i][0] as usize, self.parents[i][1] as usize);
                    for &(x, y) in &self.dot_pairs[start..start + len] {
                        adj[x as usize] += a * self.values[y as usize];
                        adj[y as usize] += a * self.values[x as usize];
                    }
                }
                Op::LinComb => {
                    let (start, len) = (self.parents[i][0] as usize, self.parents[i][1] as usize);
                    for &(x, c) in &self.lin_terms[start..start + len] {
                        adj[x as usize] += a * c;
                    }
                }
                _ => {
                    let parents = self.parents[i];
                    let partials = self.partials[i];
                    if parents[0] != NO_PARENT {
                        adj[parents[0] as usize] += a * partials[0];
                    }
                    if parents[1] != NO_PARENT {
                        adj[parents[1] as usize] += a * partials[1];
                    }
                }
            }
        }
        adj
    }

    /// Extract the gradient entries of the trainable leaves, in registration
    /// order, from a full adjoint vector.
    pub fn param_gradients(&self, adjoints: &[f64]) -> Vec<f64> {
        self.param_ids
            .iter()
            .map(|&id| adjoints[id as usize])
            .collect()
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

/// Shared surface for recording a computation on a [`Tape`] or evaluating it
/// directly on `f64` via [`ValueScope`]. A single generic implementation of
/// the network and loss assembly keeps the two evaluation paths arithmetically
/// identical.
pub trait Scope {
    type Num: Copy;

    /// Non-trainable literal.
    fn constant(&mut self, c: f64) -> Self::Num;
    /// Trainable leaf.
    fn input(&mut self, v: f64) -> Self::Num;
    fn value_of(&self, v: Self::Num) -> f64;

    fn add(&mut self, a: Self::Num, b: Self::Num) -> Self::Num;
    fn sub(&mut self, a: Self::Num, b: Self::Num) -> Self::Num;
    fn mul(&mut self, a: Self::Num, b: Self::Num) -> Self::Num;
    fn neg(&mut self, a: Self::Num) -> Self::Num;
    fn tanh(&mut self, a: Self::Num) -> Self::Num;
    fn recip(&mut self, a: Self::Num) -> Self::Num;
    fn powi(&mut self, a: Self::Num, k: i32) -> Self::Num;
    fn add_const(&mut self, a: Self::Num, c: f64) -> Self::Num;
    fn mul_const(&mut self, a: Self::Num, c: f64) -> Self::Num;
    /// `acc + c * x`, the running term of a quadrature sum.
    fn mul_add_const(&mut self, acc: Self::Num, x: Self::Num, c: f64) -> Self::Num;
    /// `c - a`.
    fn sub_from_const(&mut self, a: Self::Num, c: f64) -> Self::Num;

    /// Left-to-right fold of `sum_i a_i * b_i` starting from zero.
    fn dot(&mut self, pairs: &[(Self::Num, Self::Num)]) -> Self::Num {
        let mut acc = self.constant(0.0);
        for &(a, b) in pairs {
            acc = self.mul_add(acc, a, b);
        }
        acc
    }

    /// Left-to-right fold of `sum_i c_i * x_i` starting from zero.
    fn linear_combination(&mut self, terms: &[(Self::Num, f64)]) -> Self::Num {
        let mut acc = self.constant(0.0);
        for &(x, c) in terms {
            acc = self.mul_add_const(acc, x, c);
        }
        acc
    }

    /// `acc + a * b` as two primitive ops.
    fn mul_add(&mut self, acc: Self::Num, a: Self::Num, b: Self::Num) -> Self::Num {
        let p = self.mul(a, b);
        self.add(acc, p)
    }
}

impl Scope for Tape {
    type Num = Var;

    #[inline]
    fn constant(&mut self, c: f64) -> Var {
        self.push(Op::Const, [NO_PARENT; 2], c, [0.0; 2])
    }

    #[inline]
    fn input(&mut self, v: f64) -> Var {
        let id = self.push(Op::Input, [NO_PARENT; 2], v, [0.0; 2]);
        self.param_ids.push(id.0);
        id
    }

    #[inline]
    fn value_of(&self, v: Var) -> f64 {
        self.values[v.idx()]
    }

    #[inline]
    fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.idx()] + self.values[b.idx()];
        self.push(Op::Add, [a.0, b.0], v, [1.0, 1.0])
    }

    #[inline]
    fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.idx()] - self.values[b.idx()];
        self.push(Op::Sub, [a.0, b.0], v, [1.0, -1.0])
    }

    #[inline]
    fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.values[a.idx()], self.values[b.idx()]);
        self.push(Op::Mul, [a.0, b.0], va * vb, [vb, va])
    }

    #[inline]
    fn neg(&mut self, a: Var) -> Var {
        let v = -self.values[a.idx()];
        self.push(Op::Neg, [a.0, NO_PARENT], v, [-1.0, 0.0])
    }

    #[inline]
    fn tanh(&mut self, a: Var) -> Var {
        // partial from the stored activation output: tanh' = 1 - tanh^2
        let y = self.values[a.idx()].tanh();
        self.push(Op::Tanh, [a.0, NO_PARENT], y, [1.0 - y * y, 0.0])
    }

    #[inline]
    fn recip(&mut self, a: Var) -> Var {
        let y = self.values[a.idx()].recip();
        self.push(Op::Recip, [a.0, NO_PARENT], y, [-y * y, 0.0])
    }

    #[inline]
    fn powi(&mut self, a: Var, k: i32) -> Var {
        let x = self.values[a.idx()];
        let d = if k == 0 {
            0.0
        } else {
            f64::from(k) * x.powi(k - 1)
        };
        self.push(Op::Pow, [a.0, NO_PARENT], x.powi(k), [d, 0.0])
    }

    #[inline]
    fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.values[a.idx()] + c;
        self.push(Op::AddConst, [a.0, NO_PARENT], v, [1.0, 0.0])
    }

    #[inline]
    fn mul_const(&mut self, a: Var, c: f64) -> Var {
        let v = c * self.values[a.idx()];
        self.push(Op::MulConst, [a.0, NO_PARENT], v, [c, 0.0])
    }

    #[inline]
    fn mul_add_const(&mut self, acc: Var, x: Var, c: f64) -> Var {
        let v = self.values[acc.idx()] + c * self.values[x.idx()];
        self.push(Op::MulAddConst, [acc.0, x.0], v, [1.0, c])
    }

    #[inline]
    fn sub_from_const(&mut self, a: Var, c: f64) -> Var {
        let v = c - self.values[a.idx()];
        self.push(Op::SubFromConst, [a.0, NO_PARENT], v, [-1.0, 0.0])
    }

    fn dot(&mut self, pairs: &[(Var, Var)]) -> Var {
        let start = self.dot_pairs.len() as u32;
        let mut acc = 0.0;
        for &(a, b) in pairs {
            acc += self.values[a.idx()] * self.values[b.idx()];
            self.dot_pairs.push((a.0, b.0));
        }
        self.push(Op::Dot, [start, pairs.len() as u32], acc, [0.0; 2])
    }

    fn linear_combination(&mut self, terms: &[(Var, f64)]) -> Var {
        let start = self.lin_terms.len() as u32;
        let mut acc = 0.0;
        for &(x, c) in terms {
            acc += c * self.values[x.idx()];
            self.lin_terms.push((x.0, c));
        }
        self.push(Op::LinComb, [start, terms.len() as u32], acc, [0.0; 2])
    }
}

/// Plain `f64` evaluation with the same operation order as the tape.
///
/// Used wherever only values are needed: finite-difference probes, metric
/// quadrature, deterministic residual recomputation at checkpoints.
#[derive(Default, Clone, Copy)]
pub struct ValueScope;

impl Scope for ValueScope {
    type Num = f64;

    #[inline]
    fn constant(&mut self, c: f64) -> f64 {
        c
    }
    #[inline]
    fn input(&mut self, v: f64) -> f64 {
        v
    }
    #[inline]
    fn value_of(&self, v: f64) -> f64 {
        v
    }
    #[inline]
    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }
    #[inline]
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }
    #[inline]
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
    #[inline]
    fn neg(&mut self, a: f64) -> f64 {
        -a
    }
    #[inline]
    fn tanh(&mut self, a: f64) -> f64 {
        a.tanh()
    }
    #[inline]
    fn recip(&mut self, a: f64) -> f64 {
        a.recip()
    }
    #[inline]
    fn powi(&mut self, a: f64, k: i32) -> f64 {
        a.powi(k)
    }
    #[inline]
    fn add_const(&mut self, a: f64, c: f64) -> f64 {
        a + c
    }
    #[inline]
    fn mul_const(&mut self, a: f64, c: f64) -> f64 {
        c * a
    }
    #[inline]
    fn mul_add_const(&mut self, acc: f64, x: f64, c: f64) -> f64 {
        acc + c * x
    }
    #[inline]
    fn sub_from_const(&mut self, a: f64, c: f64) -> f64 {
        c - a
    }
}
