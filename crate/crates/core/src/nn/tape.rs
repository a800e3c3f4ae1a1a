//! Minimal reverse-mode automatic differentiation over dense matrices.
//!
//! The tape is eager: each op computes its value when recorded. It supports
//! exactly the primitives the PPO losses need (affine layers, tanh, exp, ln,
//! square, elementwise min, clamp, broadcasting, reductions).

use crate::error::{Error, Result};

/// Dense row-major matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Tensor { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    /// Position of this node on the tape; indexes the gradient table
    /// returned by [`Tape::backward`].
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf { requires_grad: bool },
    Linear { x: usize, w: usize, b: usize },
    Tanh(usize),
    Exp(usize),
    Ln(usize),
    Square(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Min(usize, usize),
    Clamp { x: usize, lo: f64, hi: f64 },
    Scale { x: usize, k: f64 },
    AddScalar { x: usize },
    BroadcastRows { x: usize, n: usize },
    SumCols(usize),
    Mean(usize),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Gradient tape. Record ops, then call [`Tape::backward`] on a scalar loss.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// `y = x * w^T + b`, broadcasting the bias row over the batch.
fn linear_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!(x.cols, w.cols);
    debug_assert_eq!(b.cols, w.rows);
    let mut out = Tensor::zeros(x.rows, w.rows);
    for r in 0..x.rows {
        let xr = x.row(r);
        let or = out.row_mut(r);
        for (n, o) in or.iter_mut().enumerate() {
            let wr = w.row(n);
            let mut acc = b.data[n];
            for (xi, wi) in xr.iter().zip(wr) {
                acc += xi * wi;
            }
            *o = acc;
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf { requires_grad: false }, t)
    }

    /// Trainable parameter leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf { requires_grad: true }, t)
    }

    /// `x * w^T + b` with `x: B x in`, `w: out x in`, `b: 1 x out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let value = linear_forward(self.value(x), self.value(w), self.value(b));
        self.push(
            Op::Linear {
                x: x.0,
                w: w.0,
                b: b.0,
            },
            value,
        )
    }

    fn map(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let mut value = self.value(x).clone();
        for v in &mut value.data {
            *v = f(*v);
        }
        self.push(op, value)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, Op::Tanh(x.0), f64::tanh)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map(x, Op::Exp(x.0), f64::exp)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.map(x, Op::Ln(x.0), f64::ln)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.map(x, Op::Square(x.0), |v| v * v)
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        self.map(x, Op::Scale { x: x.0, k }, |v| v * k)
    }

    pub fn add_scalar(&mut self, x: Var, k: f64) -> Var {
        self.map(x, Op::AddScalar { x: x.0 }, |v| v + k)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.map(x, Op::Clamp { x: x.0, lo, hi }, |v| v.clamp(lo, hi))
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        debug_assert_eq!((va.rows, va.cols), (vb.rows, vb.cols));
        let data = va
            .data
            .iter()
            .zip(&vb.data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::from_vec(va.rows, va.cols, data);
        self.push(op, t)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Add(a.0, b.0), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Sub(a.0, b.0), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Mul(a.0, b.0), |x, y| x * y)
    }

    /// Elementwise minimum; ties route the gradient to the first operand.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Min(a.0, b.0), f64::min)
    }

    /// Replicate a `1 x c` row over `n` rows.
    pub fn broadcast_rows(&mut self, x: Var, n: usize) -> Var {
        let v = self.value(x);
        debug_assert_eq!(v.rows, 1);
        let mut data = Vec::with_capacity(n * v.cols);
        for _ in 0..n {
            data.extend_from_slice(&v.data);
        }
        let t = Tensor::from_vec(n, v.cols, data);
        self.push(Op::BroadcastRows { x: x.0, n }, t)
    }

    /// Row-wise sum: `B x c` -> `B x 1`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = (0..v.rows).map(|r| v.row(r).iter().sum()).collect();
        let t = Tensor::from_vec(v.rows, 1, data);
        self.push(Op::SumCols(x.0), t)
    }

    /// Mean over all elements: `-> 1 x 1`.
    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = v.data.iter().sum::<f64>() / v.numel() as f64;
        self.push(Op::Mean(x.0), Tensor::scalar(m))
    }

    /// Reverse pass from a `1 x 1` loss. Returns one gradient slot per node;
    /// slots that received no gradient are `None`.
    pub fn backward(&self, loss: Var) -> Result<Vec<Option<Tensor>>> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "loss must be scalar, got {}x{}",
                lv.rows, lv.cols
            )));
        }
        if !lv.data[0].is_finite() {
            return Err(Error::NonFiniteLoss);
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let dy = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[i];
            let accum = |idx: usize, contrib: Tensor, grads: &mut Vec<Option<Tensor>>| {
                match &mut grads[idx] {
                    Some(g) => {
                        for (a, b) in g.data.iter_mut().zip(&contrib.data) {
                            *a += b;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            };
            match node.op {
                Op::Leaf { requires_grad } => {
                    if requires_grad {
                        grads[i] = Some(dy);
                    }
                    continue;
                }
                Op::Linear { x, w, b } => {
                    let xv = &self.nodes[x].value;
                    let wv = &self.nodes[w].value;
                    // dx = dy * w
                    let mut dx = Tensor::zeros(xv.rows, xv.cols);
                    for r in 0..dy.rows {
                        let dyr = dy.row(r);
                        let dxr = dx.row_mut(r);
                        for (n, &g) in dyr.iter().enumerate() {
                            let wr = wv.row(n);
                            for (d, wi) in dxr.iter_mut().zip(wr) {
                                *d += g * wi;
                            }
                        }
                    }
                    // dw = dy^T * x
                    let mut dw = Tensor::zeros(wv.rows, wv.cols);
                    for r in 0..dy.rows {
                        let dyr = dy.row(r);
                        let xr = xv.row(r);
                        for (n, &g) in dyr.iter().enumerate() {
                            let dwr = dw.row_mut(n);
                            for (d, xi) in dwr.iter_mut().zip(xr) {
                                *d += g * xi;
                            }
                        }
                    }
                    // db = column sums of dy
                    let mut db = Tensor::zeros(1, wv.rows);
                    for r in 0..dy.rows {
                        for (d, &g) in db.data.iter_mut().zip(dy.row(r)) {
                            *d += g;
                        }
                    }
                    accum(x, dx, &mut grads);
                    accum(w, dw, &mut grads);
                    accum(b, db, &mut grads);
                }
                Op::Tanh(x) => {
                    let y = &node.value;
                    let mut dx = dy.clone();
                    for (d, &yv) in dx.data.iter_mut().zip(&y.data) {
                        *d *= 1.0 - yv * yv;
                    }
                    accum(x, dx, &mut grads);
                }
                Op::Exp(x) => {
                    let y = &node.value;
                    let mut dx = dy.clone();
                    for (d, &yv) in dx.data.iter_mut().zip(&y.data) {
                        *d *= yv;
                    }
                    accum(x, dx, &mut grads);
                }
                Op::Ln(x) => {
                    let xv = &self.nodes[x].value;
                    let mut dx = dy.clone();
                    for (d, &v) in dx.data.iter_mut().zip(&xv.data) {
                        *d /= v;
                    }
                    accum(x, dx, &mut grads);
                }
                Op::Square(x) => {
                    let xv = &self.nodes[x].value;
                    let mut dx = dy.clone();
                    for (d, &v) in dx.data.iter_mut().zip(&xv.data) {
                        *d *= 2.0 * v;
                    }
                    accum(x, dx, &mut grads);
                }
                Op::Add(a, b) => {
                    accum(a, dy.clone(), &mut grads);
                    accum(b, dy, &mut grads);
                }
                Op::Sub(a, b) => {
                    let mut neg = dy.clone();
                    for v in &mut neg.data {
                        *v = -*v;
                    }
                    accum(a, dy, &mut grads);
                    accum(b, neg, &mut grads);
                }
                Op::Mul(a, b) => {
                    let av = &self.nodes[a].value;
                    let bv = &self.nodes[b].value;
                    let mut da = dy.clone();
                    for (d, &v) in da.data.iter_mut().zip(&bv.data) {
                        *d *= v;
                    }
                    let mut db = dy;
                    for (d, &v) in db.data.iter_mut().zip(&av.data) {
                        *d *= v;
                    }
                    accum(a, da, &mut grads);
                    accum(b, db, &mut grads);
                }
                Op::Min(a, b) => {
                    let av = &self.nodes[a].value;
                    let bv = &self.nodes[b].value;
                    let mut da = Tensor::zeros(dy.rows, dy.cols);
                    let mut db = Tensor::zeros(dy.rows, dy.cols);
                    for k in 0..dy.data.len() {
                        if av.data[k] <= bv.data[k] {
                            da.data[k] = dy.data[k];
                        } else {
                            db.data[k] = dy.data[k];
                        }
                    }
                    accum(a, da, &mut grads);
                    accum(b, db, &mut grads);
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = &self.nodes[x].value;
                    let mut dx = dy;
                    for (d, &v) in dx.data.iter_mut().zip(&xv.data) {
                        if v < lo || v > hi {
                            *d = 0.0;
                        }
                    }
                    accum(x, dx, &mut grads);
                }
                Op::Scale { x, k } => {
                    let mut dx = dy;
                    for v in &mut dx.data {
                        *v *= k;
                    }
                    accum(x, dx, &mut grads);
                }
                Op::AddScalar { x } => {
                    accum(x, dy, &mut grads);
                }
                Op::BroadcastRows { x, n } => {
                    let cols = dy.cols;
                    let mut dx = Tensor::zeros(1, cols);
                    for r in 0..n {
                        for (d, &g) in dx.data.iter_mut().zip(dy.row(r)) {
                            *d += g;
                        }
                    }
                    accum(x, dx, &mut grads);
                }
                Op::SumCols(x) => {
                    let xv = &self.nodes[x].value;
                    let mut dx = Tensor::zeros(xv.rows, xv.cols);
                    for r in 0..xv.rows {
                        let g = dy.data[r];
                        for d in dx.row_mut(r) {
                            *d = g;
                        }
                    }
                    accum(x, dx, &mut grads);
                }
                Op::Mean(x) => {
                    let xv = &self.nodes[x].value;
                    let g = dy.data[0] / xv.numel() as f64;
                    let dx = Tensor::from_vec(xv.rows, xv.cols, vec![g; xv.numel()]);
                    accum(x, dx, &mut grads);
                }
            }
        }
        Ok(grads)
    }
}
