//! Reverse-mode automatic differentiation on a recording tape.
//!
//! Every node holds a flat vector of values; scalars are vectors of length
//! one. Binary elementwise ops broadcast a length-one operand against the
//! other side. Nodes are appended in creation order, which is a valid
//! topological order, so [`Tape::backward`] is a single reverse sweep.
//!
//! ```
//! use mixw2::autodiff::Tape;
//!
//! let tape = Tape::<f64>::new();
//! let x = tape.param(vec![0.0]);
//! let y = x * x.cos();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.wrt(x), vec![1.0]);
//! ```

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::{round_half_away, Scalar};

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, T),
    Offset(usize),
    Square(usize),
    Abs(usize),
    Cos(usize),
    Sin(usize),
    Exp(usize),
    Gelu(usize),
    Relu(usize),
    Elu(usize, T),
    LeakyRelu(usize, T),
    Sum(usize),
    Mean(usize),
    Index(usize, usize),
    Concat(Vec<usize>),
    MatVec {
        mat: usize,
        vec: usize,
        rows: usize,
        cols: usize,
    },
    StochasticLinear {
        mean: usize,
        scale: usize,
        bias: usize,
        input: usize,
        rows: usize,
        cols: usize,
        noise: Vec<T>,
    },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Vec<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recording tape. Confined to one thread; build one per training step.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
    params: RefCell<Vec<usize>>,
    fault: RefCell<Option<Error>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy)]
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    id: usize,
}

/// Adjoints produced by one backward sweep.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    adjoints: Vec<Vec<T>>,
    lens: Vec<usize>,
    params: Vec<usize>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(Vec::new()),
            fault: RefCell::new(None),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a trainable leaf.
    pub fn param(&self, value: Vec<T>) -> Var<'_, T> {
        let id = self.push(value, Op::Leaf, true);
        self.params.borrow_mut().push(id);
        Var { tape: self, id }
    }

    /// A leaf that never receives gradient.
    pub fn constant(&self, value: Vec<T>) -> Var<'_, T> {
        let id = self.push(value, Op::Leaf, false);
        Var { tape: self, id }
    }

    pub fn scalar(&self, value: T) -> Var<'_, T> {
        self.constant(vec![value])
    }

    /// Concatenates several nodes into one vector.
    pub fn concat(&self, parts: &[Var<'_, T>]) -> Var<'_, T> {
        let nodes = self.nodes.borrow();
        let mut value = Vec::new();
        let mut needs = false;
        for p in parts {
            value.extend_from_slice(&nodes[p.id].value);
            needs |= nodes[p.id].needs_grad;
        }
        drop(nodes);
        let ids = parts.iter().map(|p| p.id).collect();
        let id = self.push(value, Op::Concat(ids), needs);
        Var { tape: self, id }
    }

    /// Row-major `rows x cols` matrix node times a vector node.
    pub fn matvec<'t>(
        &'t self,
        mat: Var<'t, T>,
        rows: usize,
        cols: usize,
        vec: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let nodes = self.nodes.borrow();
        let m = &nodes[mat.id].value;
        let v = &nodes[vec.id].value;
        if m.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: m.len(),
            });
        }
        if v.len() != cols {
            return Err(Error::DimensionMismatch {
                expected: cols,
                got: v.len(),
            });
        }
        let value = (0..rows)
            .map(|r| dot(&m[r * cols..(r + 1) * cols], v))
            .collect();
        let needs = nodes[mat.id].needs_grad || nodes[vec.id].needs_grad;
        drop(nodes);
        let id = self.push(
            value,
            Op::MatVec {
                mat: mat.id,
                vec: vec.id,
                rows,
                cols,
            },
            needs,
        );
        Ok(Var { tape: self, id })
    }

    /// `(mean + |scale| * noise) @ input + bias` with the noise held fixed.
    ///
    /// This is the reparameterized layer of a stochastic network: gradients
    /// reach `mean`, `scale` and `bias` while `noise` is a frozen draw.
    pub fn stochastic_linear<'t>(
        &'t self,
        mean: Var<'t, T>,
        scale: Var<'t, T>,
        bias: Var<'t, T>,
        input: Var<'t, T>,
        noise: Vec<T>,
    ) -> Result<Var<'t, T>> {
        let nodes = self.nodes.borrow();
        let a = &nodes[mean.id].value;
        let rho = &nodes[scale.id].value;
        let b = &nodes[bias.id].value;
        let h = &nodes[input.id].value;
        let rows = b.len();
        let cols = h.len();
        for len in [a.len(), rho.len(), noise.len()] {
            if len != rows * cols {
                return Err(Error::DimensionMismatch {
                    expected: rows * cols,
                    got: len,
                });
            }
        }
        let mut value = Vec::with_capacity(rows);
        for r in 0..rows {
            let base = r * cols;
            let mut acc = b[r];
            for c in 0..cols {
                let w = a[base + c] + rho[base + c].abs() * noise[base + c];
                acc = acc + w * h[c];
            }
            value.push(acc);
        }
        let needs = [mean.id, scale.id, bias.id, input.id]
            .iter()
            .any(|&i| nodes[i].needs_grad);
        drop(nodes);
        let id = self.push(
            value,
            Op::StochasticLinear {
                mean: mean.id,
                scale: scale.id,
                bias: bias.id,
                input: input.id,
                rows,
                cols,
                noise,
            },
            needs,
        );
        Ok(Var { tape: self, id })
    }

    /// First recorded fault (e.g. division by zero), if any.
    pub fn fault(&self) -> Option<Error> {
        self.fault.borrow().clone()
    }

    /// Reverse sweep from a scalar root.
    ///
    /// Adjoints are freshly allocated on every call, so repeated sweeps over
    /// the same tape return identical results.
    pub fn backward(&self, root: Var<'_, T>) -> Result<Gradients<T>> {
        if let Some(e) = self.fault() {
            return Err(e);
        }
        let nodes = self.nodes.borrow();
        let root_len = nodes[root.id].value.len();
        if root_len != 1 {
            return Err(Error::NonScalarRoot(root_len));
        }
        let mut adj: Vec<Vec<T>> = vec![Vec::new(); nodes.len()];
        adj[root.id] = vec![T::one()];

        for id in (0..=root.id).rev() {
            if adj[id].is_empty() || !nodes[id].needs_grad {
                continue;
            }
            let g = std::mem::take(&mut adj[id]);
            let node = &nodes[id];
            let val = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&nodes, &mut adj, *a, &g, |_, gi| gi);
                    accumulate(&nodes, &mut adj, *b, &g, |_, gi| gi);
                }
                Op::Sub(a, b) => {
                    accumulate(&nodes, &mut adj, *a, &g, |_, gi| gi);
                    accumulate(&nodes, &mut adj, *b, &g, |_, gi| -gi);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
                    accumulate(&nodes, &mut adj, *a, &g, |i, gi| gi * bcast(bv, i));
                    accumulate(&nodes, &mut adj, *b, &g, |i, gi| gi * bcast(av, i));
                }
                Op::Div(a, b) => {
                    let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
                    accumulate(&nodes, &mut adj, *a, &g, |i, gi| gi / bcast(bv, i));
                    accumulate(&nodes, &mut adj, *b, &g, |i, gi| {
                        let d = bcast(bv, i);
                        -gi * bcast(av, i) / (d * d)
                    });
                }
                Op::Neg(a) => accumulate(&nodes, &mut adj, *a, &g, |_, gi| -gi),
                Op::Scale(a, k) => accumulate(&nodes, &mut adj, *a, &g, |_, gi| gi * *k),
                Op::Offset(a) => accumulate(&nodes, &mut adj, *a, &g, |_, gi| gi),
                Op::Square(a) => {
                    let x = &nodes[*a].value;
                    let two = T::one() + T::one();
                    accumulate(&nodes, &mut adj, *a, &g, |i, gi| gi * two * x[i]);
                }
                Op::Abs(a) => {
                    let x = &nodes[*a].value;
                    accumulate(&nodes, &mut adj, *a, &g, |i, gi| gi * sign0(x[i]));
                }
                Op::Cos(a) => {
                    let x = &nodes[*a].value;
                    accumulate(&nodes, &mut adj, *a, &g, |i, gi| -gi * x[i].sin());
                }
                Op::Sin(a) => {
                    let x = &nodes[*a].value;
                    accumulate(&nodes, &mut adj, *a, &g, |i, gi| gi * x[i].cos());
                }
                Op::Exp(a) => accumulate(&nodes, &mut adj, *a, &g, |i, gi| gi * val[i]),
                Op::Gelu(a) => {
                    let x = &nodes[*a].value;
                    accumulate(&nodes, &mut adj, *a, &g, |i, gi| gi * gelu_grad(x[i]));
                }
                Op::Relu(a) => {
                    let x = &nodes[*a].value;
                    accumulate(&nodes, &mut adj, *a, &g, |i, gi| {
                        if x[i] > T::zero() {
                            gi
                        } else {
                            T::zero()
                        }
                    });
                }
                Op::Elu(a, alpha) => {
                    let x = &nodes[*a].value;
                    accumulate(&nodes, &mut adj, *a, &g, |i, gi| {
                        if x[i] > T::zero() {
                            gi
                        } else {
                            gi * *alpha * x[i].exp()
                        }
                    });
                }
                Op::LeakyRelu(a, slope) => {
                    let x = &nodes[*a].value;
                    accumulate(&nodes, &mut adj, *a, &g, |i, gi| {
                        if x[i] > T::zero() {
                            gi
                        } else {
                            gi * *slope
                        }
                    });
                }
                Op::Sum(a) => spread(&nodes, &mut adj, *a, g[0]),
                Op::Mean(a) => {
                    let n = T::from_usize(nodes[*a].value.len()).unwrap();
                    spread(&nodes, &mut adj, *a, g[0] / n);
                }
                Op::Index(a, k) => {
                    if nodes[*a].needs_grad {
                        let slot = ensure(&mut adj, *a, nodes[*a].value.len());
                        slot[*k] = slot[*k] + g[0];
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = nodes[p].value.len();
                        if nodes[p].needs_grad {
                            let slot = ensure(&mut adj, p, len);
                            for (s, gi) in slot.iter_mut().zip(&g[offset..offset + len]) {
                                *s = *s + *gi;
                            }
                        }
                        offset += len;
                    }
                }
                Op::MatVec {
                    mat,
                    vec,
                    rows,
                    cols,
                } => {
                    let (m, v) = (&nodes[*mat].value, &nodes[*vec].value);
                    if nodes[*mat].needs_grad {
                        let slot = ensure(&mut adj, *mat, rows * cols);
                        for r in 0..*rows {
                            for c in 0..*cols {
                                let k = r * cols + c;
                                slot[k] = slot[k] + g[r] * v[c];
                            }
                        }
                    }
                    if nodes[*vec].needs_grad {
                        let slot = ensure(&mut adj, *vec, *cols);
                        for r in 0..*rows {
                            for c in 0..*cols {
                                slot[c] = slot[c] + m[r * cols + c] * g[r];
                            }
                        }
                    }
                }
                Op::StochasticLinear {
                    mean,
                    scale,
                    bias,
                    input,
                    rows,
                    cols,
                    noise,
                } => {
                    let (rows, cols) = (*rows, *cols);
                    let a = &nodes[*mean].value;
                    let rho = &nodes[*scale].value;
                    let h = &nodes[*input].value;
                    if nodes[*mean].needs_grad {
                        let slot = ensure(&mut adj, *mean, rows * cols);
                        for r in 0..rows {
                            let row = &mut slot[r * cols..(r + 1) * cols];
                            for (s, hc) in row.iter_mut().zip(h) {
                                *s = *s + g[r] * *hc;
                            }
                        }
                    }
                    if nodes[*scale].needs_grad {
                        let slot = ensure(&mut adj, *scale, rows * cols);
                        for r in 0..rows {
                            for c in 0..cols {
                                let k = r * cols + c;
                                slot[k] = slot[k] + g[r] * h[c] * noise[k] * sign0(rho[k]);
                            }
                        }
                    }
                    if nodes[*bias].needs_grad {
                        let slot = ensure(&mut adj, *bias, rows);
                        for r in 0..rows {
                            slot[r] = slot[r] + g[r];
                        }
                    }
                    if nodes[*input].needs_grad {
                        let slot = ensure(&mut adj, *input, cols);
                        for r in 0..rows {
                            for c in 0..cols {
                                let k = r * cols + c;
                                let w = a[k] + rho[k].abs() * noise[k];
                                slot[c] = slot[c] + w * g[r];
                            }
                        }
                    }
                }
            }
            adj[id] = g;
        }

        let lens = nodes.iter().map(|n| n.value.len()).collect();
        Ok(Gradients {
            adjoints: adj,
            lens,
            params: self.params.borrow().clone(),
        })
    }

    fn push(&self, value: Vec<T>, op: Op<T>, needs_grad: bool) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        nodes.len() - 1
    }

    fn unary<'t>(&'t self, a: usize, op: Op<T>, f: impl Fn(T) -> T) -> Var<'t, T> {
        let nodes = self.nodes.borrow();
        let value = nodes[a].value.iter().map(|&x| f(x)).collect();
        let needs = nodes[a].needs_grad;
        drop(nodes);
        let id = self.push(value, op, needs);
        Var { tape: self, id }
    }

    fn binary<'t>(&'t self, a: usize, b: usize, op: Op<T>, f: impl Fn(T, T) -> T) -> Var<'t, T> {
        let nodes = self.nodes.borrow();
        let (av, bv) = (&nodes[a].value, &nodes[b].value);
        let n = av.len().max(bv.len());
        assert!(
            av.len() == bv.len() || av.len() == 1 || bv.len() == 1,
            "operand lengths {} and {} do not broadcast",
            av.len(),
            bv.len()
        );
        let value = (0..n).map(|i| f(bcast(av, i), bcast(bv, i))).collect();
        let needs = nodes[a].needs_grad || nodes[b].needs_grad;
        drop(nodes);
        let id = self.push(value, op, needs);
        Var { tape: self, id }
    }

    fn record_fault(&self, e: Error) {
        let mut f = self.fault.borrow_mut();
        if f.is_none() {
            *f = Some(e);
        }
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Vec<T> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    /// First component; the value of a scalar node.
    pub fn item(&self) -> T {
        self.tape.nodes.borrow()[self.id].value[0]
    }

    pub fn len(&self) -> usize {
        self.tape.nodes.borrow()[self.id].value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same value, no gradient flows back through the result.
    pub fn detach(self) -> Var<'t, T> {
        self.tape.constant(self.value())
    }

    pub fn square(self) -> Var<'t, T> {
        self.tape.unary(self.id, Op::Square(self.id), |x| x * x)
    }

    /// Subgradient 0 at 0.
    pub fn abs(self) -> Var<'t, T> {
        self.tape.unary(self.id, Op::Abs(self.id), |x| x.abs())
    }

    pub fn cos(self) -> Var<'t, T> {
        self.tape.unary(self.id, Op::Cos(self.id), |x| x.cos())
    }

    pub fn sin(self) -> Var<'t, T> {
        self.tape.unary(self.id, Op::Sin(self.id), |x| x.sin())
    }

    pub fn exp(self) -> Var<'t, T> {
        self.tape.unary(self.id, Op::Exp(self.id), |x| x.exp())
    }

    /// Exact GELU, `x * Phi(x)`.
    pub fn gelu(self) -> Var<'t, T> {
        self.tape.unary(self.id, Op::Gelu(self.id), gelu)
    }

    /// Subgradient 0 at 0.
    pub fn relu(self) -> Var<'t, T> {
        self.tape.unary(self.id, Op::Relu(self.id), |x| x.max(T::zero()))
    }

    pub fn elu(self, alpha: T) -> Var<'t, T> {
        self.tape
            .unary(self.id, Op::Elu(self.id, alpha), move |x| elu(x, alpha))
    }

    pub fn leaky_relu(self, slope: T) -> Var<'t, T> {
        self.tape
            .unary(self.id, Op::LeakyRelu(self.id, slope), move |x| {
                if x > T::zero() {
                    x
                } else {
                    slope * x
                }
            })
    }

    pub fn scale(self, k: T) -> Var<'t, T> {
        self.tape.unary(self.id, Op::Scale(self.id, k), move |x| k * x)
    }

    pub fn offset(self, k: T) -> Var<'t, T> {
        self.tape.unary(self.id, Op::Offset(self.id), move |x| x + k)
    }

    pub fn sum(self) -> Var<'t, T> {
        let nodes = self.tape.nodes.borrow();
        let s = nodes[self.id].value.iter().copied().sum();
        let needs = nodes[self.id].needs_grad;
        drop(nodes);
        let id = self.tape.push(vec![s], Op::Sum(self.id), needs);
        Var { tape: self.tape, id }
    }

    pub fn mean(self) -> Var<'t, T> {
        let nodes = self.tape.nodes.borrow();
        let v = &nodes[self.id].value;
        let m = v.iter().copied().sum::<T>() / T::from_usize(v.len()).unwrap();
        let needs = nodes[self.id].needs_grad;
        drop(nodes);
        let id = self.tape.push(vec![m], Op::Mean(self.id), needs);
        Var { tape: self.tape, id }
    }

    /// Component `k` as a scalar node.
    pub fn index(self, k: usize) -> Var<'t, T> {
        let nodes = self.tape.nodes.borrow();
        let v = nodes[self.id].value[k];
        let needs = nodes[self.id].needs_grad;
        drop(nodes);
        let id = self.tape.push(vec![v], Op::Index(self.id, k), needs);
        Var { tape: self.tape, id }
    }

    /// Forward value `round(v)` (half away from zero), gradient 1.
    ///
    /// Built as `v - detach(v - round(v))`.
    pub fn straight_through_round(self) -> Var<'t, T> {
        let residual = self.value().into_iter().map(|x| x - round_half_away(x)).collect();
        self - self.tape.constant(residual)
    }

    /// Forward value `clip(round(v), lo, hi)`, gradient 1.
    pub fn straight_through_clamp_round(self, lo: i64, hi: i64) -> Var<'t, T> {
        let (l, u) = (T::from_i64(lo).unwrap(), T::from_i64(hi).unwrap());
        let residual = self
            .value()
            .into_iter()
            .map(|x| x - round_half_away(x).max(l).min(u))
            .collect();
        self - self.tape.constant(residual)
    }

    /// Division that reports a zero denominator as an error.
    pub fn try_div(self, rhs: Var<'t, T>) -> Result<Var<'t, T>> {
        let out = self / rhs;
        match self.tape.fault() {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }
}

impl<T: Scalar> Gradients<T> {
    /// Adjoint of `v`, zero-filled when no gradient reached it.
    pub fn wrt(&self, v: Var<'_, T>) -> Vec<T> {
        self.by_id(v.id)
    }

    pub fn by_id(&self, id: usize) -> Vec<T> {
        let a = &self.adjoints[id];
        if a.is_empty() {
            vec![T::zero(); self.lens[id]]
        } else {
            a.clone()
        }
    }

    /// `(node id, gradient)` for every registered parameter, in registration order.
    pub fn params(&self) -> impl Iterator<Item = (usize, Vec<T>)> + '_ {
        self.params.iter().map(|&id| (id, self.by_id(id)))
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:ident, $f:expr) => {
        impl<'t, T: Scalar> $trait for Var<'t, T> {
            type Output = Var<'t, T>;
            fn $method(self, rhs: Var<'t, T>) -> Var<'t, T> {
                self.tape.binary(self.id, rhs.id, Op::$op(self.id, rhs.id), $f)
            }
        }
    };
}

binop!(Add, add, Add, |a, b| a + b);
binop!(Sub, sub, Sub, |a, b| a - b);
binop!(Mul, mul, Mul, |a, b| a * b);

impl<'t, T: Scalar> Div for Var<'t, T> {
    type Output = Var<'t, T>;
    fn div(self, rhs: Var<'t, T>) -> Var<'t, T> {
        let out = self
            .tape
            .binary(self.id, rhs.id, Op::Div(self.id, rhs.id), |a, b| a / b);
        if rhs.value().iter().any(|d| d.is_zero()) {
            self.tape.record_fault(Error::DivisionByZero { node: out.id });
        }
        out
    }
}

impl<'t, T: Scalar> Neg for Var<'t, T> {
    type Output = Var<'t, T>;
    fn neg(self) -> Var<'t, T> {
        self.tape.unary(self.id, Op::Neg(self.id), |x| -x)
    }
}

impl<'t, T: Scalar> Add<T> for Var<'t, T> {
    type Output = Var<'t, T>;
    fn add(self, rhs: T) -> Var<'t, T> {
        self.offset(rhs)
    }
}

impl<'t, T: Scalar> Sub<T> for Var<'t, T> {
    type Output = Var<'t, T>;
    fn sub(self, rhs: T) -> Var<'t, T> {
        self.offset(-rhs)
    }
}

impl<'t, T: Scalar> Mul<T> for Var<'t, T> {
    type Output = Var<'t, T>;
    fn mul(self, rhs: T) -> Var<'t, T> {
        self.scale(rhs)
    }
}

#[inline]
fn bcast<T: Copy>(v: &[T], i: usize) -> T {
    if v.len() == 1 {
        v[0]
    } else {
        v[i]
    }
}

#[inline]
fn sign0<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn ensure<T: Scalar>(adj: &mut [Vec<T>], id: usize, len: usize) -> &mut Vec<T> {
    if adj[id].is_empty() {
        adj[id] = vec![T::zero(); len];
    }
    &mut adj[id]
}

/// Adds `f(i, g_i)` into the adjoint of `parent`, summing when the parent was broadcast.
fn accumulate<T: Scalar>(
    nodes: &[Node<T>],
    adj: &mut [Vec<T>],
    parent: usize,
    g: &[T],
    f: impl Fn(usize, T) -> T,
) {
    if !nodes[parent].needs_grad {
        return;
    }
    let len = nodes[parent].value.len();
    let slot = ensure(adj, parent, len);
    if len == g.len() {
        for (i, s) in slot.iter_mut().enumerate() {
            *s = *s + f(i, g[i]);
        }
    } else {
        // length-one operand broadcast over g
        let mut acc = T::zero();
        for (i, gi) in g.iter().enumerate() {
            acc = acc + f(i, *gi);
        }
        slot[0] = slot[0] + acc;
    }
}

fn spread<T: Scalar>(nodes: &[Node<T>], adj: &mut [Vec<T>], parent: usize, g: T) {
    if nodes[parent].needs_grad {
        let len = nodes[parent].value.len();
        ensure(adj, parent, len).iter_mut().for_each(|s| *s = *s + g);
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// Exact GELU, `x * Phi(x)`.
pub fn gelu<T: Scalar>(x: T) -> T {
    let half = T::of(0.5);
    x * half * (T::one() + (x * T::FRAC_1_SQRT_2()).erf())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let half = T::of(0.5);
    let cdf = half * (T::one() + (x * T::FRAC_1_SQRT_2()).erf());
    let pdf = (-half * x * x).exp() / (T::PI() + T::PI()).sqrt();
    cdf + x * pdf
}

pub fn elu<T: Scalar>(x: T, alpha: T) -> T {
    if x > T::zero() {
        x
    } else {
        alpha * (x.exp() - T::one())
    }
}
