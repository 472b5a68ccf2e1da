//! Reverse-mode gradient accumulation over an explicit computation tape.
//!
//! Every trainable model in this crate is a small feed-forward composition of
//! the operations below, so a flat tape with eager forward evaluation and one
//! reverse sweep is all that is needed: record the forward pass, call
//! [`Tape::backward`] on a scalar loss node, read gradients off leaf nodes.
//!
//! The gradient-penalty term of the critic loss needs the gradient of the
//! critic output with respect to its *input* as an on-tape expression. That
//! input gradient is built from [`Op::ActGrad`] nodes (the derivative of an
//! activation, recorded as a first-class value), so one ordinary reverse sweep
//! over the tape differentiates the penalty with respect to the critic
//! parameters, second-derivative terms included.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor2;

/// Elementwise activation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

/// Negative-side slope of `LeakyRelu`.
pub const LEAKY_SLOPE: f64 = 0.2;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    pub fn grad(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }

    /// Second derivative, needed when an [`Op::ActGrad`] node is itself
    /// differentiated (gradient penalty). Zero almost everywhere for the
    /// piecewise-linear kinds.
    pub fn grad2(self, x: f64) -> f64 {
        match self {
            Activation::Identity | Activation::Relu | Activation::LeakyRelu => 0.0,
            Activation::Tanh => {
                let t = x.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    MulElem(usize, usize),
    DivElem(usize, usize),
    MatMul(usize, usize),
    /// Broadcast a 1 x cols vector over every row.
    AddRowVec(usize, usize),
    /// Subtract a rows x 1 column from every column.
    SubColVec(usize, usize),
    /// Divide every column by a rows x 1 column.
    DivColVec(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    /// Per-column affine with constant coefficients: `y = x * scale + shift`.
    AffineCols {
        a: usize,
        scale: Vec<f64>,
    },
    Act(usize, Activation),
    ActGrad(usize, Activation),
    Softplus(usize),
    Log(usize),
    Log1p(usize),
    Sqrt(usize),
    Square(usize),
    CumsumCols(usize),
    SliceCols(usize, usize, usize),
    ConcatCols(usize, usize),
    Transpose(usize),
    SoftmaxRows(usize),
    SumAll(usize),
    MeanAll(usize),
    SumCols(usize),
    /// Piecewise-linear read-out: per row, the interpolated value of the
    /// (tau, p) polyline at a fixed threshold.
    Interp {
        tau: usize,
        p: usize,
        t: Vec<f64>,
    },
}

struct Node {
    value: Tensor2,
    op: Op,
}

/// Computation tape. Records forward values eagerly; one reverse sweep
/// produces gradients for every node.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor2 {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor2, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Insert a leaf (parameter or input constant).
    pub fn leaf(&mut self, value: Tensor2) -> NodeId {
        self.push(value, Op::Leaf)
    }

    fn binary_same_shape(&mut self, a: NodeId, b: NodeId, name: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Shape(format!(
                "{name}: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "add")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(v, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "sub")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(v, Op::Sub(a.0, b.0)))
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "mul_elem")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(v, Op::MulElem(a.0, b.0)))
    }

    pub fn div_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "div_elem")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x / y);
        Ok(self.push(v, Op::DivElem(a.0, b.0)))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a.0, b.0)))
    }

    pub fn add_row_vec(&mut self, a: NodeId, v: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.value(a).shape();
        if self.value(v).shape() != (1, cols) {
            return Err(Error::Shape(format!(
                "add_row_vec: vector {:?} against {rows}x{cols}",
                self.value(v).shape()
            )));
        }
        let mut out = self.value(a).clone();
        let vv = self.value(v).data().to_vec();
        for r in 0..rows {
            for c in 0..cols {
                let t = out.get(r, c) + vv[c];
                out.set(r, c, t);
            }
        }
        Ok(self.push(out, Op::AddRowVec(a.0, v.0)))
    }

    pub fn sub_col_vec(&mut self, a: NodeId, v: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.value(a).shape();
        if self.value(v).shape() != (rows, 1) {
            return Err(Error::Shape(format!(
                "sub_col_vec: column {:?} against {rows}x{cols}",
                self.value(v).shape()
            )));
        }
        let mut out = self.value(a).clone();
        for r in 0..rows {
            let s = self.value(v).get(r, 0);
            for c in 0..cols {
                let t = out.get(r, c) - s;
                out.set(r, c, t);
            }
        }
        Ok(self.push(out, Op::SubColVec(a.0, v.0)))
    }

    pub fn div_col_vec(&mut self, a: NodeId, v: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.value(a).shape();
        if self.value(v).shape() != (rows, 1) {
            return Err(Error::Shape(format!(
                "div_col_vec: column {:?} against {rows}x{cols}",
                self.value(v).shape()
            )));
        }
        let mut out = self.value(a).clone();
        for r in 0..rows {
            let s = self.value(v).get(r, 0);
            for c in 0..cols {
                let t = out.get(r, c) / s;
                out.set(r, c, t);
            }
        }
        Ok(self.push(out, Op::DivColVec(a.0, v.0)))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let v = self.value(a).map(|x| x * k);
        self.push(v, Op::Scale(a.0, k))
    }

    pub fn add_scalar(&mut self, a: NodeId, k: f64) -> NodeId {
        let v = self.value(a).map(|x| x + k);
        self.push(v, Op::AddScalar(a.0))
    }

    /// Column-wise affine map with constant coefficients.
    pub fn affine_cols(&mut self, a: NodeId, scale: &[f64], shift: &[f64]) -> Result<NodeId> {
        let (rows, cols) = self.value(a).shape();
        if scale.len() != cols || shift.len() != cols {
            return Err(Error::Shape(format!(
                "affine_cols: {} scales / {} shifts for {cols} columns",
                scale.len(),
                shift.len()
            )));
        }
        let mut out = self.value(a).clone();
        for r in 0..rows {
            for c in 0..cols {
                let v = out.get(r, c) * scale[c] + shift[c];
                out.set(r, c, v);
            }
        }
        Ok(self.push(
            out,
            Op::AffineCols {
                a: a.0,
                scale: scale.to_vec(),
            },
        ))
    }

    pub fn activation(&mut self, a: NodeId, kind: Activation) -> NodeId {
        let v = self.value(a).map(|x| kind.apply(x));
        self.push(v, Op::Act(a.0, kind))
    }

    /// Elementwise derivative of an activation, as a differentiable value.
    pub fn activation_grad(&mut self, a: NodeId, kind: Activation) -> NodeId {
        let v = self.value(a).map(|x| kind.grad(x));
        self.push(v, Op::ActGrad(a.0, kind))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a.0))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Log(a.0))
    }

    pub fn log1p(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::ln_1p);
        self.push(v, Op::Log1p(a.0))
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::sqrt);
        self.push(v, Op::Sqrt(a.0))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a.0))
    }

    pub fn cumsum_cols(&mut self, a: NodeId) -> NodeId {
        let (rows, cols) = self.value(a).shape();
        let mut out = Tensor2::zeros(rows, cols);
        for r in 0..rows {
            let mut acc = 0.0;
            for c in 0..cols {
                acc += self.value(a).get(r, c);
                out.set(r, c, acc);
            }
        }
        self.push(out, Op::CumsumCols(a.0))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (rows, cols) = self.value(a).shape();
        if start + len > cols {
            return Err(Error::Shape(format!(
                "slice_cols: [{start}, {}) out of width {cols}",
                start + len
            )));
        }
        let mut out = Tensor2::zeros(rows, len);
        for r in 0..rows {
            for c in 0..len {
                out.set(r, c, self.value(a).get(r, start + c));
            }
        }
        Ok(self.push(out, Op::SliceCols(a.0, start, len)))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ra, ca) = self.value(a).shape();
        let (rb, cb) = self.value(b).shape();
        if ra != rb {
            return Err(Error::Shape(format!(
                "concat_cols: {ra} rows vs {rb} rows"
            )));
        }
        let mut out = Tensor2::zeros(ra, ca + cb);
        for r in 0..ra {
            for c in 0..ca {
                out.set(r, c, self.value(a).get(r, c));
            }
            for c in 0..cb {
                out.set(r, ca + c, self.value(b).get(r, c));
            }
        }
        Ok(self.push(out, Op::ConcatCols(a.0, b.0)))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a.0))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let (rows, cols) = self.value(a).shape();
        let mut out = Tensor2::zeros(rows, cols);
        for r in 0..rows {
            let row = self.value(a).row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for c in 0..cols {
                let e = (row[c] - m).exp();
                out.set(r, c, e);
                z += e;
            }
            for c in 0..cols {
                let v = out.get(r, c) / z;
                out.set(r, c, v);
            }
        }
        self.push(out, Op::SoftmaxRows(a.0))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor2::scalar(s), Op::SumAll(a.0))
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).data().len().max(1);
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor2::scalar(s / n as f64), Op::MeanAll(a.0))
    }

    pub fn sum_cols(&mut self, a: NodeId) -> NodeId {
        let (rows, _) = self.value(a).shape();
        let mut out = Tensor2::zeros(rows, 1);
        for r in 0..rows {
            out.set(r, 0, self.value(a).row(r).iter().sum());
        }
        self.push(out, Op::SumCols(a.0))
    }

    /// Piecewise-linear interpolation of each row's (tau, p) polyline at a
    /// fixed per-row threshold. Thresholds at or beyond the final knot clamp
    /// to the endpoint value.
    pub fn interpolate(&mut self, tau: NodeId, p: NodeId, t: &[f64]) -> Result<NodeId> {
        let (rows, cols) = self.value(tau).shape();
        if self.value(p).shape() != (rows, cols) {
            return Err(Error::Shape("interpolate: tau and p differ".into()));
        }
        if t.len() != rows {
            return Err(Error::Shape(format!(
                "interpolate: {} thresholds for {rows} rows",
                t.len()
            )));
        }
        let mut out = Tensor2::zeros(rows, 1);
        for r in 0..rows {
            let (y, _) = interp_row(self.value(tau).row(r), self.value(p).row(r), t[r]);
            out.set(r, 0, y);
        }
        Ok(self.push(
            out,
            Op::Interp {
                tau: tau.0,
                p: p.0,
                t: t.to_vec(),
            },
        ))
    }

    /// Reverse sweep from a finite scalar loss node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<'_>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::Shape(format!(
                "backward needs a 1x1 loss, got {:?}",
                lv.shape()
            )));
        }
        if !lv.scalar_value().is_finite() {
            return Err(Error::Numeric("loss is not finite".into()));
        }

        let mut grads: Vec<Option<Tensor2>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor2::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        Ok(Gradients { tape: self, grads })
    }

    fn accumulate(&self, i: usize, g: &Tensor2, grads: &mut Vec<Option<Tensor2>>) {
        let add_to = |grads: &mut Vec<Option<Tensor2>>, idx: usize, delta: Tensor2| {
            match &mut grads[idx] {
                Some(acc) => acc.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };

        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                add_to(grads, *a, g.clone());
                add_to(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                add_to(grads, *a, g.clone());
                add_to(grads, *b, g.map(|x| -x));
            }
            Op::MulElem(a, b) => {
                add_to(grads, *a, g.zip_map(&self.nodes[*b].value, |gv, bv| gv * bv));
                add_to(grads, *b, g.zip_map(&self.nodes[*a].value, |gv, av| gv * av));
            }
            Op::DivElem(a, b) => {
                let bv = &self.nodes[*b].value;
                add_to(grads, *a, g.zip_map(bv, |gv, b| gv / b));
                let av = &self.nodes[*a].value;
                let mut db = g.zip_map(av, |gv, a| gv * a);
                db = db.zip_map(bv, |x, b| -x / (b * b));
                add_to(grads, *b, db);
            }
            Op::MatMul(a, b) => {
                let bt = self.nodes[*b].value.transpose();
                add_to(grads, *a, g.matmul(&bt).expect("recorded shapes"));
                let at = self.nodes[*a].value.transpose();
                add_to(grads, *b, at.matmul(g).expect("recorded shapes"));
            }
            Op::AddRowVec(a, v) => {
                add_to(grads, *a, g.clone());
                let (rows, cols) = g.shape();
                let mut dv = Tensor2::zeros(1, cols);
                for r in 0..rows {
                    for c in 0..cols {
                        let t = dv.get(0, c) + g.get(r, c);
                        dv.set(0, c, t);
                    }
                }
                add_to(grads, *v, dv);
            }
            Op::SubColVec(a, v) => {
                add_to(grads, *a, g.clone());
                let (rows, cols) = g.shape();
                let mut dv = Tensor2::zeros(rows, 1);
                for r in 0..rows {
                    let mut s = 0.0;
                    for c in 0..cols {
                        s += g.get(r, c);
                    }
                    dv.set(r, 0, -s);
                }
                add_to(grads, *v, dv);
            }
            Op::DivColVec(a, v) => {
                let (rows, cols) = g.shape();
                let vv = &self.nodes[*v].value;
                let av = &self.nodes[*a].value;
                let mut da = Tensor2::zeros(rows, cols);
                let mut dv = Tensor2::zeros(rows, 1);
                for r in 0..rows {
                    let s = vv.get(r, 0);
                    let mut acc = 0.0;
                    for c in 0..cols {
                        da.set(r, c, g.get(r, c) / s);
                        acc += g.get(r, c) * (-av.get(r, c) / (s * s));
                    }
                    dv.set(r, 0, acc);
                }
                add_to(grads, *a, da);
                add_to(grads, *v, dv);
            }
            Op::Scale(a, k) => add_to(grads, *a, g.map(|x| x * k)),
            Op::AddScalar(a) => add_to(grads, *a, g.clone()),
            Op::AffineCols { a, scale } => {
                let (rows, cols) = g.shape();
                let mut da = Tensor2::zeros(rows, cols);
                for r in 0..rows {
                    for c in 0..cols {
                        da.set(r, c, g.get(r, c) * scale[c]);
                    }
                }
                add_to(grads, *a, da);
            }
            Op::Act(a, kind) => {
                let av = &self.nodes[*a].value;
                add_to(grads, *a, g.zip_map(av, |gv, x| gv * kind.grad(x)));
            }
            Op::ActGrad(a, kind) => {
                let av = &self.nodes[*a].value;
                add_to(grads, *a, g.zip_map(av, |gv, x| gv * kind.grad2(x)));
            }
            Op::Softplus(a) => {
                let av = &self.nodes[*a].value;
                add_to(grads, *a, g.zip_map(av, |gv, x| gv * sigmoid(x)));
            }
            Op::Log(a) => {
                let av = &self.nodes[*a].value;
                add_to(grads, *a, g.zip_map(av, |gv, x| gv / x));
            }
            Op::Log1p(a) => {
                let av = &self.nodes[*a].value;
                add_to(grads, *a, g.zip_map(av, |gv, x| gv / (1.0 + x)));
            }
            Op::Sqrt(a) => {
                let out = &self.nodes[i].value;
                add_to(grads, *a, g.zip_map(out, |gv, y| gv / (2.0 * y)));
            }
            Op::Square(a) => {
                let av = &self.nodes[*a].value;
                add_to(grads, *a, g.zip_map(av, |gv, x| gv * 2.0 * x));
            }
            Op::CumsumCols(a) => {
                let (rows, cols) = g.shape();
                let mut da = Tensor2::zeros(rows, cols);
                for r in 0..rows {
                    let mut acc = 0.0;
                    for c in (0..cols).rev() {
                        acc += g.get(r, c);
                        da.set(r, c, acc);
                    }
                }
                add_to(grads, *a, da);
            }
            Op::SliceCols(a, start, len) => {
                let (rows, cols) = self.nodes[*a].value.shape();
                let mut da = Tensor2::zeros(rows, cols);
                for r in 0..rows {
                    for c in 0..*len {
                        da.set(r, start + c, g.get(r, c));
                    }
                }
                add_to(grads, *a, da);
            }
            Op::ConcatCols(a, b) => {
                let (rows, ca) = self.nodes[*a].value.shape();
                let (_, cb) = self.nodes[*b].value.shape();
                let mut da = Tensor2::zeros(rows, ca);
                let mut db = Tensor2::zeros(rows, cb);
                for r in 0..rows {
                    for c in 0..ca {
                        da.set(r, c, g.get(r, c));
                    }
                    for c in 0..cb {
                        db.set(r, c, g.get(r, ca + c));
                    }
                }
                add_to(grads, *a, da);
                add_to(grads, *b, db);
            }
            Op::Transpose(a) => {
                add_to(grads, *a, g.transpose());
            }
            Op::SoftmaxRows(a) => {
                let out = &self.nodes[i].value;
                let (rows, cols) = g.shape();
                let mut da = Tensor2::zeros(rows, cols);
                for r in 0..rows {
                    let mut dot = 0.0;
                    for c in 0..cols {
                        dot += g.get(r, c) * out.get(r, c);
                    }
                    for c in 0..cols {
                        da.set(r, c, out.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                add_to(grads, *a, da);
            }
            Op::SumAll(a) => {
                let (rows, cols) = self.nodes[*a].value.shape();
                let gv = g.scalar_value();
                add_to(grads, *a, Tensor2::zeros(rows, cols).map(|_| gv));
            }
            Op::MeanAll(a) => {
                let (rows, cols) = self.nodes[*a].value.shape();
                let n = (rows * cols).max(1) as f64;
                let gv = g.scalar_value() / n;
                add_to(grads, *a, Tensor2::zeros(rows, cols).map(|_| gv));
            }
            Op::SumCols(a) => {
                let (rows, cols) = self.nodes[*a].value.shape();
                let mut da = Tensor2::zeros(rows, cols);
                for r in 0..rows {
                    for c in 0..cols {
                        da.set(r, c, g.get(r, 0));
                    }
                }
                add_to(grads, *a, da);
            }
            Op::Interp { tau, p, t } => {
                let tv = &self.nodes[*tau].value;
                let pv = &self.nodes[*p].value;
                let (rows, cols) = tv.shape();
                let mut dtau = Tensor2::zeros(rows, cols);
                let mut dp = Tensor2::zeros(rows, cols);
                for r in 0..rows {
                    let gr = g.get(r, 0);
                    let taus = tv.row(r);
                    let ps = pv.row(r);
                    match interp_segment(taus, t[r]) {
                        Segment::Clamped(idx) => {
                            dp.set(r, idx, dp.get(r, idx) + gr);
                        }
                        Segment::Interior(idx) => {
                            let (t0, t1) = (taus[idx - 1], taus[idx]);
                            let (p0, p1) = (ps[idx - 1], ps[idx]);
                            let dt = t1 - t0;
                            let w = (t[r] - t0) / dt;
                            dp.set(r, idx - 1, dp.get(r, idx - 1) + gr * (1.0 - w));
                            dp.set(r, idx, dp.get(r, idx) + gr * w);
                            let dpdiff = p1 - p0;
                            dtau.set(
                                r,
                                idx - 1,
                                dtau.get(r, idx - 1) + gr * dpdiff * (t[r] - t1) / (dt * dt),
                            );
                            dtau.set(
                                r,
                                idx,
                                dtau.get(r, idx) + gr * dpdiff * -(t[r] - t0) / (dt * dt),
                            );
                        }
                    }
                }
                add_to(grads, *tau, dtau);
                add_to(grads, *p, dp);
            }
        }
    }
}

fn softplus(x: f64) -> f64 {
    // numerically stable log(1 + e^x)
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

enum Segment {
    /// t fell in `[tau[idx-1], tau[idx])`.
    Interior(usize),
    /// t was outside the knot range; read p at this index directly.
    Clamped(usize),
}

fn interp_segment(taus: &[f64], t: f64) -> Segment {
    let last = taus.len() - 1;
    if t < taus[0] {
        return Segment::Clamped(0);
    }
    if t >= taus[last] {
        return Segment::Clamped(last);
    }
    // knot counts are small (L+2); linear scan
    for idx in 1..=last {
        if t < taus[idx] {
            return Segment::Interior(idx);
        }
    }
    Segment::Clamped(last)
}

/// Free-function interpolation used outside the tape. Returns the value and
/// whether the threshold had to be clamped to an endpoint.
pub fn interp_row(taus: &[f64], ps: &[f64], t: f64) -> (f64, bool) {
    match interp_segment(taus, t) {
        Segment::Clamped(idx) => (ps[idx], true),
        Segment::Interior(idx) => {
            let w = (t - taus[idx - 1]) / (taus[idx] - taus[idx - 1]);
            (ps[idx - 1] + w * (ps[idx] - ps[idx - 1]), false)
        }
    }
}

/// Gradients of one reverse sweep, addressable by node.
pub struct Gradients<'t> {
    tape: &'t Tape,
    grads: Vec<Option<Tensor2>>,
}

impl Gradients<'_> {
    /// d(loss)/d(node). Nodes the loss does not depend on get a zero gradient.
    pub fn wrt(&self, id: NodeId) -> Tensor2 {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.tape.value(id).shape();
                Tensor2::zeros(r, c)
            }
        }
    }
}
