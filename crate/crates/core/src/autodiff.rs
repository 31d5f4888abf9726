//! Reverse-mode differentiation over a flat tape of tensor nodes.
//!
//! A [`Graph`] owns all nodes; [`Var`] is a copyable handle. Operations
//! validate shapes when the node is built, so a malformed graph fails before
//! any backward pass runs. `backward` walks the tape once in reverse
//! topological order (tape order is topological by construction) and
//! accumulates exact gradients into `requires_grad` leaves. Repeated backward
//! calls keep accumulating until [`Graph::zero_grads`] resets them.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    op: Op,
}

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    /// Elementwise a*x + b with scalar constants; backward only needs the
    /// multiplicative part.
    AffineConst {
        x: usize,
        mul: f64,
    },
    /// x (N x I) * w (I x O) + row-broadcast b (O).
    Affine {
        x: usize,
        w: usize,
        b: usize,
    },
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    MeanAll(usize),
    SumAll(usize),
    /// Single column of a matrix as a vector.
    Column {
        x: usize,
        col: usize,
    },
    /// Vector (or scalar) minus a broadcast scalar node.
    SubBroadcast {
        x: usize,
        s: usize,
    },
    /// Fused class-weighted softmax cross-entropy with weighted-mean
    /// reduction; produces a scalar.
    SoftmaxCe {
        logits: usize,
        targets: Vec<usize>,
        sample_weights: Vec<f64>,
        probs: Tensor,
        weight_sum: f64,
    },
    /// Fused positive-weighted binary cross-entropy over logits, mean over
    /// all N*K entries; produces a scalar.
    BcePosWeighted {
        logits: usize,
        targets: Tensor,
        pos_weights: Vec<f64>,
        sigmoids: Tensor,
    },
}

/// Numerically stable ln(1 + exp(x)).
fn softplus(x: f64) -> f64 {
    if x >= 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Largest magnitude a tanh output may take. f64 tanh saturates to exactly
/// 1.0 near |x| = 19; bounding keeps the codomain a true open interval, which
/// downstream concordance denominators rely on.
pub const TANH_BOUND: f64 = 1.0 - f64::EPSILON;

/// tanh clamped to the open interval (-1, 1).
pub fn bounded_tanh(x: f64) -> f64 {
    x.tanh().clamp(-TANH_BOUND, TANH_BOUND)
}

/// Reverse-mode differentiation tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Adds a leaf node. Gradients accumulate here when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Adds a non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf, if backward has reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Clears accumulated gradients on every node.
    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn binary_same_shape(&mut self, op_name: &str, a: Var, b: Var) -> Result<()> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if !va.same_shape(vb) {
            return Err(Error::Shape {
                op: op_name.into(),
                details: format!("{:?} vs {:?}", va.shape(), vb.shape()),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("add", a, b)?;
        let value = self.nodes[a.0].value.zip(&self.nodes[b.0].value, |x, y| x + y)?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, rg, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("sub", a, b)?;
        let value = self.nodes[a.0].value.zip(&self.nodes[b.0].value, |x, y| x - y)?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, rg, Op::Sub(a.0, b.0)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("mul", a, b)?;
        let value = self.nodes[a.0].value.zip(&self.nodes[b.0].value, |x, y| x * y)?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, rg, Op::Mul(a.0, b.0)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("div", a, b)?;
        let value = self.nodes[a.0].value.zip(&self.nodes[b.0].value, |x, y| x / y)?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, rg, Op::Div(a.0, b.0)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.nodes[x.0].value.scale(factor);
        let rg = self.requires(x);
        self.push(value, rg, Op::Scale(x.0, factor))
    }

    /// Elementwise `mul * x + add` with scalar constants.
    pub fn affine_const(&mut self, x: Var, mul: f64, add: f64) -> Var {
        let value = self.nodes[x.0].value.map(|v| mul * v + add);
        let rg = self.requires(x);
        self.push(value, rg, Op::AffineConst { x: x.0, mul })
    }

    /// Dense layer: `x` (N x I) times `w` (I x O) plus row-broadcast `b` (O).
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[b.0].value,
        );
        if xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 {
            return Err(Error::Shape {
                op: "affine".into(),
                details: format!(
                    "expected ranks (2, 2, 1), got shapes {:?}, {:?}, {:?}",
                    xv.shape(),
                    wv.shape(),
                    bv.shape()
                ),
            });
        }
        if xv.cols() != wv.rows() || wv.cols() != bv.len() {
            return Err(Error::Shape {
                op: "affine".into(),
                details: format!(
                    "x {:?} * w {:?} + b {:?}",
                    xv.shape(),
                    wv.shape(),
                    bv.shape()
                ),
            });
        }
        let mut value = xv.matmul(wv)?;
        let cols = value.cols();
        for row in 0..value.rows() {
            for col in 0..cols {
                let v = value.at(row, col) + bv.data()[col];
                value.set(row, col, v);
            }
        }
        let rg = self.requires(x) || self.requires(w) || self.requires(b);
        Ok(self.push(
            value,
            rg,
            Op::Affine {
                x: x.0,
                w: w.0,
                b: b.0,
            },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.map(|v| v.max(0.0));
        let rg = self.requires(x);
        self.push(value, rg, Op::Relu(x.0))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.map(bounded_tanh);
        let rg = self.requires(x);
        self.push(value, rg, Op::Tanh(x.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.map(sigmoid);
        let rg = self.requires(x);
        self.push(value, rg, Op::Sigmoid(x.0))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.nodes[x.0].value.mean());
        let rg = self.requires(x);
        self.push(value, rg, Op::MeanAll(x.0))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.nodes[x.0].value.sum());
        let rg = self.requires(x);
        self.push(value, rg, Op::SumAll(x.0))
    }

    /// Column `col` of a matrix node as a vector node.
    pub fn column(&mut self, x: Var, col: usize) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        if xv.rank() != 2 || col >= xv.cols() {
            return Err(Error::Shape {
                op: "column".into(),
                details: format!("column {col} of shape {:?}", xv.shape()),
            });
        }
        let value = Tensor::vector(xv.column(col));
        let rg = self.requires(x);
        Ok(self.push(value, rg, Op::Column { x: x.0, col }))
    }

    /// `x - s` where `s` is a scalar node broadcast over `x`.
    pub fn sub_broadcast(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = &self.nodes[s.0].value;
        if !sv.is_scalar() {
            return Err(Error::Shape {
                op: "sub_broadcast".into(),
                details: format!("subtrahend has shape {:?}, expected scalar", sv.shape()),
            });
        }
        let sval = sv.scalar_value();
        let value = self.nodes[x.0].value.map(|v| v - sval);
        let rg = self.requires(x) || self.requires(s);
        Ok(self.push(value, rg, Op::SubBroadcast { x: x.0, s: s.0 }))
    }

    /// Class-weighted softmax cross-entropy, reduced as a weighted mean:
    /// sum_i w_{y_i} * (-log softmax(l_i)_{y_i}) / sum_i w_{y_i}.
    pub fn softmax_ce(&mut self, logits: Var, targets: &[usize], class_weights: &[f64]) -> Result<Var> {
        let lv = &self.nodes[logits.0].value;
        if lv.rank() != 2 {
            return Err(Error::Shape {
                op: "softmax_ce".into(),
                details: format!("logits have shape {:?}", lv.shape()),
            });
        }
        let (n, k) = (lv.rows(), lv.cols());
        if targets.len() != n {
            return Err(Error::Shape {
                op: "softmax_ce".into(),
                details: format!("{} targets for {n} rows", targets.len()),
            });
        }
        if class_weights.len() != k {
            return Err(Error::Shape {
                op: "softmax_ce".into(),
                details: format!("{} class weights for {k} classes", class_weights.len()),
            });
        }
        if !lv.all_finite() {
            return Err(Error::NonFinite {
                context: "softmax_ce logits".into(),
            });
        }
        for &t in targets {
            if t >= k {
                return Err(Error::Label {
                    index: t,
                    num_classes: k,
                });
            }
        }

        let mut probs = Tensor::zeros(&[n, k]);
        let mut loss_sum = 0.0;
        let mut weight_sum = 0.0;
        for i in 0..n {
            let row = lv.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for &l in row {
                z += (l - max).exp();
            }
            let log_z = max + z.ln();
            for (j, &l) in row.iter().enumerate() {
                probs.set(i, j, (l - max).exp() / z);
            }
            let w = class_weights[targets[i]];
            loss_sum += w * (log_z - row[targets[i]]);
            weight_sum += w;
        }
        let value = Tensor::scalar(loss_sum / weight_sum);
        let sample_weights = targets.iter().map(|&t| class_weights[t]).collect();
        let rg = self.requires(logits);
        Ok(self.push(
            value,
            rg,
            Op::SoftmaxCe {
                logits: logits.0,
                targets: targets.to_vec(),
                sample_weights,
                probs,
                weight_sum,
            },
        ))
    }

    /// Positive-weighted binary cross-entropy over logits in the stable
    /// softplus form, averaged over all N*K entries:
    /// mean( p_k * t * softplus(-z) + (1 - t) * softplus(z) ).
    pub fn bce_pos_weighted(&mut self, logits: Var, targets: &Tensor, pos_weights: &[f64]) -> Result<Var> {
        let lv = &self.nodes[logits.0].value;
        if lv.rank() != 2 || !lv.same_shape(targets) {
            return Err(Error::Shape {
                op: "bce_pos_weighted".into(),
                details: format!("logits {:?} vs targets {:?}", lv.shape(), targets.shape()),
            });
        }
        let (n, k) = (lv.rows(), lv.cols());
        if pos_weights.len() != k {
            return Err(Error::Shape {
                op: "bce_pos_weighted".into(),
                details: format!("{} pos weights for {k} classes", pos_weights.len()),
            });
        }
        if !lv.all_finite() {
            return Err(Error::NonFinite {
                context: "bce logits".into(),
            });
        }
        if targets.data().iter().any(|&t| t != 0.0 && t != 1.0) {
            return Err(Error::LabelData(
                "multi-label targets must be 0 or 1".into(),
            ));
        }

        let mut sigmoids = Tensor::zeros(&[n, k]);
        let mut total = 0.0;
        for i in 0..n {
            for (j, &p) in pos_weights.iter().enumerate() {
                let z = lv.at(i, j);
                let t = targets.at(i, j);
                sigmoids.set(i, j, sigmoid(z));
                total += p * t * softplus(-z) + (1.0 - t) * softplus(z);
            }
        }
        let value = Tensor::scalar(total / (n * k) as f64);
        let rg = self.requires(logits);
        Ok(self.push(
            value,
            rg,
            Op::BcePosWeighted {
                logits: logits.0,
                targets: targets.clone(),
                pos_weights: pos_weights.to_vec(),
                sigmoids,
            },
        ))
    }

    /// Accumulates gradients of `root` into every `requires_grad` leaf.
    ///
    /// Without an intervening [`Graph::zero_grads`], a second backward call
    /// adds its gradients on top of the first.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if !self.nodes[root.0].value.is_scalar() {
            return Err(Error::Shape {
                op: "backward".into(),
                details: format!(
                    "root must be scalar, got shape {:?}",
                    self.nodes[root.0].value.shape()
                ),
            });
        }

        let mut adjoints: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adjoints[root.0] = Some(Tensor::scalar(1.0));

        for id in (0..=root.0).rev() {
            let Some(upstream) = adjoints[id].take() else {
                continue;
            };
            if !self.nodes[id].requires_grad {
                continue;
            }
            let accumulate = |adjoints: &mut Vec<Option<Tensor>>, parent: usize, grad: Tensor| {
                match &mut adjoints[parent] {
                    Some(existing) => existing.add_assign(&grad),
                    slot => *slot = Some(grad),
                }
            };
            match &self.nodes[id].op {
                Op::Leaf => {
                    let node = &mut self.nodes[id];
                    match &mut node.grad {
                        Some(g) => g.add_assign(&upstream),
                        slot => *slot = Some(upstream),
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut adjoints, a, upstream.clone());
                    accumulate(&mut adjoints, b, upstream);
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut adjoints, b, upstream.scale(-1.0));
                    accumulate(&mut adjoints, a, upstream);
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let ga = upstream.zip(&self.nodes[b].value, |u, v| u * v)?;
                    let gb = upstream.zip(&self.nodes[a].value, |u, v| u * v)?;
                    accumulate(&mut adjoints, a, ga);
                    accumulate(&mut adjoints, b, gb);
                }
                Op::Div(a, b) => {
                    let (a, b) = (*a, *b);
                    let ga = upstream.zip(&self.nodes[b].value, |u, v| u / v)?;
                    let num = upstream.zip(&self.nodes[a].value, |u, v| u * v)?;
                    let gb = num.zip(&self.nodes[b].value, |u, v| -u / (v * v))?;
                    accumulate(&mut adjoints, a, ga);
                    accumulate(&mut adjoints, b, gb);
                }
                Op::Scale(x, c) => {
                    let (x, c) = (*x, *c);
                    accumulate(&mut adjoints, x, upstream.scale(c));
                }
                Op::AffineConst { x, mul } => {
                    let (x, mul) = (*x, *mul);
                    accumulate(&mut adjoints, x, upstream.scale(mul));
                }
                Op::Affine { x, w, b } => {
                    let (x, w, b) = (*x, *w, *b);
                    let gx = upstream.matmul(&self.nodes[w].value.transpose())?;
                    let gw = self.nodes[x].value.transpose().matmul(&upstream)?;
                    let cols = upstream.cols();
                    let mut gb = vec![0.0; cols];
                    for row in 0..upstream.rows() {
                        for (col, g) in gb.iter_mut().enumerate() {
                            *g += upstream.at(row, col);
                        }
                    }
                    accumulate(&mut adjoints, x, gx);
                    accumulate(&mut adjoints, w, gw);
                    accumulate(&mut adjoints, b, Tensor::vector(gb));
                }
                Op::Relu(x) => {
                    let x = *x;
                    let gate = self.nodes[x].value.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    accumulate(&mut adjoints, x, upstream.zip(&gate, |u, g| u * g)?);
                }
                Op::Tanh(x) => {
                    let x = *x;
                    let y = &self.nodes[id].value;
                    let gx = upstream.zip(y, |u, t| u * (1.0 - t * t))?;
                    accumulate(&mut adjoints, x, gx);
                }
                Op::Sigmoid(x) => {
                    let x = *x;
                    let y = &self.nodes[id].value;
                    let gx = upstream.zip(y, |u, s| u * s * (1.0 - s))?;
                    accumulate(&mut adjoints, x, gx);
                }
                Op::MeanAll(x) => {
                    let x = *x;
                    let scale = upstream.scalar_value() / self.nodes[x].value.len() as f64;
                    let gx = self.nodes[x].value.map(|_| scale);
                    accumulate(&mut adjoints, x, gx);
                }
                Op::SumAll(x) => {
                    let x = *x;
                    let scale = upstream.scalar_value();
                    let gx = self.nodes[x].value.map(|_| scale);
                    accumulate(&mut adjoints, x, gx);
                }
                Op::Column { x, col } => {
                    let (x, col) = (*x, *col);
                    let mut gx = Tensor::zeros(self.nodes[x].value.shape());
                    for (row, &u) in upstream.data().iter().enumerate() {
                        gx.set(row, col, u);
                    }
                    accumulate(&mut adjoints, x, gx);
                }
                Op::SubBroadcast { x, s } => {
                    let (x, s) = (*x, *s);
                    let gs = Tensor::scalar(-upstream.sum());
                    accumulate(&mut adjoints, x, upstream);
                    accumulate(&mut adjoints, s, gs);
                }
                Op::SoftmaxCe {
                    logits,
                    targets,
                    sample_weights,
                    probs,
                    weight_sum,
                } => {
                    let logits = *logits;
                    let u = upstream.scalar_value();
                    let (n, k) = (probs.rows(), probs.cols());
                    let mut gx = Tensor::zeros(&[n, k]);
                    for i in 0..n {
                        let scale = u * sample_weights[i] / weight_sum;
                        for j in 0..k {
                            let indicator = if j == targets[i] { 1.0 } else { 0.0 };
                            gx.set(i, j, scale * (probs.at(i, j) - indicator));
                        }
                    }
                    accumulate(&mut adjoints, logits, gx);
                }
                Op::BcePosWeighted {
                    logits,
                    targets,
                    pos_weights,
                    sigmoids,
                } => {
                    let logits = *logits;
                    let u = upstream.scalar_value();
                    let (n, k) = (sigmoids.rows(), sigmoids.cols());
                    let scale = u / (n * k) as f64;
                    let mut gx = Tensor::zeros(&[n, k]);
                    for i in 0..n {
                        for (j, &p) in pos_weights.iter().enumerate() {
                            let s = sigmoids.at(i, j);
                            let t = targets.at(i, j);
                            let g = p * t * (s - 1.0) + (1.0 - t) * s;
                            gx.set(i, j, scale * g);
                        }
                    }
                    accumulate(&mut adjoints, logits, gx);
                }
            }
        }
        Ok(())
    }
}
