//! Reverse-mode automatic differentiation over 2-D arrays.
//!
//! Every node value is an `Array2<f64>`; scalars are `(1, 1)` and vectors
//! are single-row or single-column matrices. Operations append nodes to the
//! tape, and [`Tape::backward`] walks the recorded graph in reverse,
//! accumulating exact derivatives.

use ndarray::{Array1, Array2, Axis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    AddConst(NodeId),
    MulConst(NodeId, Array2<f64>),
    AddScalar(NodeId),
    MulScalar(NodeId, f64),
    MatMul(NodeId, NodeId),
    /// `a . b^T`
    MatMulT(NodeId, NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Sqrt(NodeId),
    Softplus(NodeId),
    Sigmoid(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    AddRowBroadcast(NodeId, NodeId),
    SoftmaxRows(NodeId),
    LogSumExpRows(NodeId),
    PickColumns(NodeId, Vec<usize>),
    GatherRows(NodeId, Vec<usize>),
    Row(NodeId, usize),
    Rows(NodeId, usize, usize),
    ConcatRows(Vec<NodeId>),
    Reshape(NodeId),
    /// Adds `bias[[head, 0]]` to `scores[[i, i-1]]` and `bias[[head, 1]]`
    /// to `scores[[i, i+1]]`.
    AddRelBias {
        scores: NodeId,
        bias: NodeId,
        head: usize,
    },
    /// Straight-through Gumbel-Softmax: the forward value is the hard
    /// one-hot argmax of `(logits + noise) / temp` per row; the backward
    /// pass uses the soft row softmax.
    StGumbel {
        logits: NodeId,
        temp: f64,
        soft: Array2<f64>,
    },
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Gradient store indexed by node id.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Array2<f64>> {
        self.grads[id.0].as_ref()
    }

    /// Gradient of a node, defaulting to zeros of its shape.
    pub fn get_or_zero(&self, id: NodeId, shape: (usize, usize)) -> Array2<f64> {
        self.grads[id.0]
            .clone()
            .unwrap_or_else(|| Array2::zeros(shape))
    }
}

/// The computation record. Acyclic by construction: operations only
/// reference earlier nodes.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.len(), 1, "expected scalar node");
        v[[0, 0]]
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn leaf_vec(&mut self, value: &[f64]) -> NodeId {
        self.leaf(Array2::from_shape_vec((1, value.len()), value.to_vec()).unwrap())
    }

    pub fn leaf_scalar(&mut self, value: f64) -> NodeId {
        self.leaf(Array2::from_elem((1, 1), value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a) / self.value(b);
        self.push(value, Op::Div(a, b))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let value = -self.value(a);
        self.push(value, Op::Neg(a))
    }

    pub fn add_const(&mut self, a: NodeId, c: Array2<f64>) -> NodeId {
        let value = self.value(a) + &c;
        self.push(value, Op::AddConst(a))
    }

    pub fn mul_const(&mut self, a: NodeId, c: Array2<f64>) -> NodeId {
        let value = self.value(a) * &c;
        self.push(value, Op::MulConst(a, c))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.value(a) + c;
        self.push(value, Op::AddScalar(a))
    }

    pub fn mul_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.value(a) * c;
        self.push(value, Op::MulScalar(a, c))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    /// `a . b^T` without materializing a transpose node.
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).dot(&self.value(b).t());
        self.push(value, Op::MatMulT(a, b))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(|v| v.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(f64::exp);
        self.push(value, Op::Exp(a))
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(f64::ln);
        self.push(value, Op::Ln(a))
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(f64::sqrt);
        self.push(value, Op::Sqrt(a))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(crate::codes::softplus);
        self.push(value, Op::Softplus(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(value, Op::Sigmoid(a))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(value, Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let value = Array2::from_elem((1, 1), self.value(a).mean().unwrap());
        self.push(value, Op::MeanAll(a))
    }

    /// Adds a `(1, d)` row to every row of an `(n, d)` matrix.
    pub fn add_row_broadcast(&mut self, mat: NodeId, row: NodeId) -> NodeId {
        let r = self.value(row).row(0).to_owned();
        let value = self.value(mat) + &r;
        self.push(value, Op::AddRowBroadcast(mat, row))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let value = softmax_rows(self.value(a));
        self.push(value, Op::SoftmaxRows(a))
    }

    /// Row-wise `ln sum exp`, an `(n, 1)` column.
    pub fn logsumexp_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mut out = Array2::zeros((x.nrows(), 1));
        for (i, row) in x.rows().into_iter().enumerate() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            out[[i, 0]] = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        }
        self.push(out, Op::LogSumExpRows(a))
    }

    /// Picks `a[i, labels[i]]` per row into an `(n, 1)` column.
    pub fn pick_columns(&mut self, a: NodeId, labels: Vec<usize>) -> NodeId {
        let x = self.value(a);
        assert_eq!(labels.len(), x.nrows());
        let mut out = Array2::zeros((x.nrows(), 1));
        for (i, l) in labels.iter().enumerate() {
            out[[i, 0]] = x[[i, *l]];
        }
        self.push(out, Op::PickColumns(a, labels))
    }

    /// Row lookup (embedding select); the backward pass scatter-adds.
    pub fn gather_rows(&mut self, a: NodeId, ids: Vec<usize>) -> NodeId {
        let x = self.value(a);
        let mut out = Array2::zeros((ids.len(), x.ncols()));
        for (i, id) in ids.iter().enumerate() {
            out.row_mut(i).assign(&x.row(*id));
        }
        self.push(out, Op::GatherRows(a, ids))
    }

    pub fn row(&mut self, a: NodeId, i: usize) -> NodeId {
        let value = self.value(a).row(i).to_owned().insert_axis(Axis(0));
        self.push(value, Op::Row(a, i))
    }

    /// Contiguous row slice `a[start..start+count, :]`.
    pub fn rows(&mut self, a: NodeId, start: usize, count: usize) -> NodeId {
        let value = self
            .value(a)
            .slice(ndarray::s![start..start + count, ..])
            .to_owned();
        self.push(value, Op::Rows(a, start, count))
    }

    /// Vertical stack of same-width nodes.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).ncols();
        let total: usize = parts.iter().map(|p| self.value(*p).nrows()).sum();
        let mut value = Array2::zeros((total, cols));
        let mut row = 0;
        for p in parts {
            let v = self.value(*p);
            value
                .slice_mut(ndarray::s![row..row + v.nrows(), ..])
                .assign(v);
            row += v.nrows();
        }
        self.push(value, Op::ConcatRows(parts.to_vec()))
    }

    pub fn reshape(&mut self, a: NodeId, shape: (usize, usize)) -> NodeId {
        let v = self.value(a);
        assert_eq!(v.len(), shape.0 * shape.1, "reshape length mismatch");
        let value = Array2::from_shape_vec(shape, v.iter().cloned().collect()).unwrap();
        self.push(value, Op::Reshape(a))
    }

    pub fn add_rel_bias(&mut self, scores: NodeId, bias: NodeId, head: usize) -> NodeId {
        let mut value = self.value(scores).clone();
        let n = value.nrows();
        let left = self.value(bias)[[head, 0]];
        let right = self.value(bias)[[head, 1]];
        for i in 0..n {
            if i >= 1 {
                value[[i, i - 1]] += left;
            }
            if i + 1 < n {
                value[[i, i + 1]] += right;
            }
        }
        self.push(value, Op::AddRelBias { scores, bias, head })
    }

    /// Straight-through Gumbel-Softmax over rows.
    pub fn st_gumbel(&mut self, logits: NodeId, noise: Array2<f64>, temp: f64) -> NodeId {
        let x = self.value(logits);
        let mut perturbed = (x + &noise) / temp;
        let soft = softmax_rows(&perturbed);
        for mut row in perturbed.rows_mut() {
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            for (j, v) in row.iter_mut().enumerate() {
                *v = if j == argmax { 1.0 } else { 0.0 };
            }
        }
        self.push(
            perturbed,
            Op::StGumbel { logits, temp, soft },
        )
    }

    /// Reverse pass from a scalar loss node.
    pub fn backward(&self, loss: NodeId) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "loss must be a scalar");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2::from_elem((1, 1), 1.0));

        let add_grad = |grads: &mut Vec<Option<Array2<f64>>>, id: NodeId, g: Array2<f64>| {
            match &mut grads[id.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        };

        for idx in (0..self.nodes.len()).rev() {
            let Some(upstream) = grads[idx].clone() else {
                continue;
            };
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    add_grad(&mut grads, *a, upstream.clone());
                    add_grad(&mut grads, *b, upstream);
                }
                Op::Sub(a, b) => {
                    add_grad(&mut grads, *a, upstream.clone());
                    add_grad(&mut grads, *b, -upstream);
                }
                Op::Mul(a, b) => {
                    add_grad(&mut grads, *a, &upstream * self.value(*b));
                    add_grad(&mut grads, *b, &upstream * self.value(*a));
                }
                Op::Div(a, b) => {
                    let bv = self.value(*b);
                    add_grad(&mut grads, *a, &upstream / bv);
                    let av = self.value(*a);
                    add_grad(&mut grads, *b, -(&upstream * av) / (bv * bv));
                }
                Op::Neg(a) => add_grad(&mut grads, *a, -upstream),
                Op::AddConst(a) | Op::AddScalar(a) => add_grad(&mut grads, *a, upstream),
                Op::MulConst(a, c) => add_grad(&mut grads, *a, &upstream * c),
                Op::MulScalar(a, c) => add_grad(&mut grads, *a, upstream * *c),
                Op::MatMul(a, b) => {
                    add_grad(&mut grads, *a, upstream.dot(&self.value(*b).t()));
                    add_grad(&mut grads, *b, self.value(*a).t().dot(&upstream));
                }
                Op::MatMulT(a, b) => {
                    add_grad(&mut grads, *a, upstream.dot(self.value(*b)));
                    add_grad(&mut grads, *b, upstream.t().dot(self.value(*a)));
                }
                Op::Relu(a) => {
                    let mask = self.value(*a).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    add_grad(&mut grads, *a, upstream * mask);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[idx].value;
                    add_grad(&mut grads, *a, upstream * y.mapv(|t| 1.0 - t * t));
                }
                Op::Exp(a) => {
                    add_grad(&mut grads, *a, upstream * &self.nodes[idx].value);
                }
                Op::Ln(a) => {
                    add_grad(&mut grads, *a, upstream / self.value(*a));
                }
                Op::Sqrt(a) => {
                    let y = &self.nodes[idx].value;
                    add_grad(&mut grads, *a, upstream * y.mapv(|s| 0.5 / s));
                }
                Op::Softplus(a) => {
                    let s = self.value(*a).mapv(|v| 1.0 / (1.0 + (-v).exp()));
                    add_grad(&mut grads, *a, upstream * s);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[idx].value;
                    add_grad(&mut grads, *a, upstream * y.mapv(|s| s * (1.0 - s)));
                }
                Op::SumAll(a) => {
                    let g = upstream[[0, 0]];
                    add_grad(
                        &mut grads,
                        *a,
                        Array2::from_elem(self.value(*a).raw_dim(), g),
                    );
                }
                Op::MeanAll(a) => {
                    let n = self.value(*a).len() as f64;
                    let g = upstream[[0, 0]] / n;
                    add_grad(
                        &mut grads,
                        *a,
                        Array2::from_elem(self.value(*a).raw_dim(), g),
                    );
                }
                Op::AddRowBroadcast(mat, row) => {
                    let row_grad = upstream.sum_axis(Axis(0)).insert_axis(Axis(0));
                    add_grad(&mut grads, *mat, upstream);
                    add_grad(&mut grads, *row, row_grad);
                }
                Op::SoftmaxRows(a) => {
                    let p = &self.nodes[idx].value;
                    let mut g = upstream * p;
                    let row_dots: Array1<f64> = g.sum_axis(Axis(1));
                    for (i, mut row) in g.rows_mut().into_iter().enumerate() {
                        let d = row_dots[i];
                        let p_row = p.row(i);
                        for (j, v) in row.iter_mut().enumerate() {
                            *v -= d * p_row[j];
                        }
                    }
                    add_grad(&mut grads, *a, g);
                }
                Op::LogSumExpRows(a) => {
                    let soft = softmax_rows(self.value(*a));
                    let mut g = soft;
                    for (i, mut row) in g.rows_mut().into_iter().enumerate() {
                        row *= upstream[[i, 0]];
                    }
                    add_grad(&mut grads, *a, g);
                }
                Op::PickColumns(a, labels) => {
                    let mut g = Array2::zeros(self.value(*a).raw_dim());
                    for (i, l) in labels.iter().enumerate() {
                        g[[i, *l]] = upstream[[i, 0]];
                    }
                    add_grad(&mut grads, *a, g);
                }
                Op::GatherRows(a, ids) => {
                    let mut g = Array2::zeros(self.value(*a).raw_dim());
                    for (i, id) in ids.iter().enumerate() {
                        let mut row = g.row_mut(*id);
                        row += &upstream.row(i);
                    }
                    add_grad(&mut grads, *a, g);
                }
                Op::Rows(a, start, count) => {
                    let mut g = Array2::zeros(self.value(*a).raw_dim());
                    g.slice_mut(ndarray::s![*start..*start + *count, ..])
                        .assign(&upstream);
                    add_grad(&mut grads, *a, g);
                }
                Op::ConcatRows(parts) => {
                    let mut row = 0;
                    for p in parts {
                        let n = self.value(*p).nrows();
                        let g = upstream.slice(ndarray::s![row..row + n, ..]).to_owned();
                        add_grad(&mut grads, *p, g);
                        row += n;
                    }
                }
                Op::Reshape(a) => {
                    let shape = self.value(*a).raw_dim();
                    let g = Array2::from_shape_vec(shape, upstream.iter().cloned().collect())
                        .unwrap();
                    add_grad(&mut grads, *a, g);
                }
                Op::Row(a, i) => {
                    let mut g = Array2::zeros(self.value(*a).raw_dim());
                    g.row_mut(*i).assign(&upstream.row(0));
                    add_grad(&mut grads, *a, g);
                }
                Op::AddRelBias { scores, bias, head } => {
                    let n = upstream.nrows();
                    let mut bias_grad = Array2::zeros(self.value(*bias).raw_dim());
                    for i in 0..n {
                        if i >= 1 {
                            bias_grad[[*head, 0]] += upstream[[i, i - 1]];
                        }
                        if i + 1 < n {
                            bias_grad[[*head, 1]] += upstream[[i, i + 1]];
                        }
                    }
                    add_grad(&mut grads, *scores, upstream);
                    add_grad(&mut grads, *bias, bias_grad);
                }
                Op::StGumbel { logits, temp, soft } => {
                    // Gradient of the soft sample routed around the hard
                    // forward value.
                    let mut g = upstream * soft;
                    let row_dots: Array1<f64> = g.sum_axis(Axis(1));
                    for (i, mut row) in g.rows_mut().into_iter().enumerate() {
                        let d = row_dots[i];
                        let s_row = soft.row(i);
                        for (j, v) in row.iter_mut().enumerate() {
                            *v -= d * s_row[j];
                        }
                    }
                    add_grad(&mut grads, *logits, g / *temp);
                }
            }
        }
        Gradients { grads }
    }
}
