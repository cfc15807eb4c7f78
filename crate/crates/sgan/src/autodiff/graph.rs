use matrixmultiply::dgemm;

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    /// `a^(ta) · b^(tb)`; transposes are stride tricks, never copies.
    Matmul { ta: bool, tb: bool },
    Add,
    Sub,
    Mul,
    Div,
    Scale(f64),
    AddScalar(f64),
    LeakyRelu(f64),
    Sqrt,
    Ln,
    /// All elements to a `[1]` scalar.
    Sum,
    BroadcastScalar { shape: Vec<usize> },
    /// `[r×c] -> [c]` column sums.
    SumAxis0,
    BroadcastRows { rows: usize },
    /// `[r×c] -> [r×1]` row sums.
    SumAxis1,
    BroadcastCols { cols: usize },
    /// `(x: [r×c], bias: [c]) -> [r×c]`, bias added to every row.
    AddRowBroadcast,
    /// Column-wise concatenation; rank 1 inputs concatenate as vectors.
    ConcatCols,
    SliceCols { start: usize, len: usize },
    /// Inverse of SliceCols: place into a zero matrix of `total` columns.
    PadCols { start: usize, total: usize },
}

pub(crate) fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Matmul { .. } => "matmul",
        Op::Add => "add",
        Op::Sub => "sub",
        Op::Mul => "mul",
        Op::Div => "div",
        Op::Scale(_) => "scale",
        Op::AddScalar(_) => "add_scalar",
        Op::LeakyRelu(_) => "leaky_relu",
        Op::Sqrt => "sqrt",
        Op::Ln => "ln",
        Op::Sum => "sum",
        Op::BroadcastScalar { .. } => "broadcast_scalar",
        Op::SumAxis0 => "sum_axis0",
        Op::BroadcastRows { .. } => "broadcast_rows",
        Op::SumAxis1 => "sum_axis1",
        Op::BroadcastCols { .. } => "broadcast_cols",
        Op::AddRowBroadcast => "add_row_broadcast",
        Op::ConcatCols => "concat",
        Op::SliceCols { .. } => "slice_cols",
        Op::PadCols { .. } => "pad_cols",
    }
}

pub(crate) struct Node {
    pub op: Op,
    pub parents: Vec<NodeId>,
    pub value: Tensor,
}

/// Append-only define-by-run computation graph; parents always precede
/// children, so node-id order is a topological order.
#[derive(Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn elementwise(a: &Tensor, b: &Tensor, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    same_shape(a, b, what)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data)
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Result<Tensor> {
    Tensor::new(a.shape().to_vec(), a.data().iter().map(|&x| f(x)).collect())
}

fn matmul_value(a: &Tensor, b: &Tensor, ta: bool, tb: bool) -> Result<Tensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 {
        return Err(Error::shape("matmul needs rank-2 operands".to_string()));
    }
    let (ar, ac) = a.matrix_dims();
    let (br, bc) = b.matrix_dims();
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (kb, n) = if tb { (bc, br) } else { (br, bc) };
    if k != kb {
        return Err(Error::shape(format!(
            "matmul inner dims: {m}x{k} · {kb}x{n} (ta={ta}, tb={tb})"
        )));
    }
    let mut out = vec![0.0; m * n];
    // Row-major strides; a transpose swaps them.
    let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
    let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.data().as_ptr(),
            rsa,
            csa,
            b.data().as_ptr(),
            rsb,
            csb,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Tensor::matrix(m, n, out)
}

/// Forward kernel shared by op construction and graph replay.
pub(crate) fn eval_op(op: &Op, parents: &[&Tensor]) -> Result<Tensor> {
    match op {
        Op::Leaf => Err(Error::contract("leaf has no forward rule".to_string())),
        Op::Matmul { ta, tb } => matmul_value(parents[0], parents[1], *ta, *tb),
        Op::Add => elementwise(parents[0], parents[1], "add", |x, y| x + y),
        Op::Sub => elementwise(parents[0], parents[1], "sub", |x, y| x - y),
        Op::Mul => elementwise(parents[0], parents[1], "mul", |x, y| x * y),
        Op::Div => {
            if parents[1].data().iter().any(|&v| v == 0.0) {
                return Err(Error::DegenerateInput("division by exact zero".to_string()));
            }
            elementwise(parents[0], parents[1], "div", |x, y| x / y)
        }
        Op::Scale(c) => map(parents[0], |x| x * c),
        Op::AddScalar(c) => map(parents[0], |x| x + c),
        Op::LeakyRelu(slope) => map(parents[0], |x| if x >= 0.0 { x } else { slope * x }),
        Op::Sqrt => {
            if parents[0].data().iter().any(|&v| v < 0.0) {
                return Err(Error::DegenerateInput("sqrt of negative value".to_string()));
            }
            map(parents[0], f64::sqrt)
        }
        Op::Ln => {
            if parents[0].data().iter().any(|&v| v <= 0.0) {
                return Err(Error::DegenerateInput("ln of non-positive value".to_string()));
            }
            map(parents[0], f64::ln)
        }
        Op::Sum => Ok(Tensor::scalar(parents[0].data().iter().sum())),
        Op::BroadcastScalar { shape } => {
            let v = parents[0].item()?;
            Ok(Tensor::filled(shape.clone(), v))
        }
        Op::SumAxis0 => {
            let x = parents[0];
            if x.shape().len() != 2 {
                return Err(Error::shape("sum_axis0 needs rank 2".to_string()));
            }
            let (r, c) = x.matrix_dims();
            let mut out = vec![0.0; c];
            for i in 0..r {
                for (o, v) in out.iter_mut().zip(x.row(i)) {
                    *o += v;
                }
            }
            Ok(Tensor::vector(out))
        }
        Op::BroadcastRows { rows } => {
            let x = parents[0];
            if x.shape().len() != 1 {
                return Err(Error::shape("broadcast_rows needs rank 1".to_string()));
            }
            let c = x.len();
            let mut out = Vec::with_capacity(rows * c);
            for _ in 0..*rows {
                out.extend_from_slice(x.data());
            }
            Tensor::matrix(*rows, c, out)
        }
        Op::SumAxis1 => {
            let x = parents[0];
            if x.shape().len() != 2 {
                return Err(Error::shape("sum_axis1 needs rank 2".to_string()));
            }
            let (r, _) = x.matrix_dims();
            let out = (0..r).map(|i| x.row(i).iter().sum()).collect();
            Tensor::matrix(r, 1, out)
        }
        Op::BroadcastCols { cols } => {
            let x = parents[0];
            let (r, c) = x.matrix_dims();
            if x.shape().len() != 2 || c != 1 {
                return Err(Error::shape("broadcast_cols needs a [r×1] input".to_string()));
            }
            let mut out = Vec::with_capacity(r * cols);
            for i in 0..r {
                out.extend(std::iter::repeat(x.data()[i]).take(*cols));
            }
            Tensor::matrix(r, *cols, out)
        }
        Op::AddRowBroadcast => {
            let (x, b) = (parents[0], parents[1]);
            let (r, c) = x.matrix_dims();
            if x.shape().len() != 2 || b.shape().len() != 1 || b.len() != c {
                return Err(Error::shape(format!(
                    "add_row_broadcast: {:?} with bias {:?}",
                    x.shape(),
                    b.shape()
                )));
            }
            let mut out = Vec::with_capacity(r * c);
            for i in 0..r {
                out.extend(x.row(i).iter().zip(b.data()).map(|(&v, &bias)| v + bias));
            }
            Tensor::matrix(r, c, out)
        }
        Op::ConcatCols => {
            let (a, b) = (parents[0], parents[1]);
            if a.shape().len() != b.shape().len() {
                return Err(Error::shape("concat needs equal ranks".to_string()));
            }
            let (ra, ca) = a.matrix_dims();
            let (rb, cb) = b.matrix_dims();
            if ra != rb {
                return Err(Error::shape(format!("concat rows: {ra} vs {rb}")));
            }
            let mut out = Vec::with_capacity(ra * (ca + cb));
            for i in 0..ra {
                out.extend_from_slice(a.row(i));
                out.extend_from_slice(b.row(i));
            }
            if a.shape().len() == 1 {
                Ok(Tensor::vector(out))
            } else {
                Tensor::matrix(ra, ca + cb, out)
            }
        }
        Op::SliceCols { start, len } => {
            let x = parents[0];
            let (r, c) = x.matrix_dims();
            if start + len > c {
                return Err(Error::shape(format!("slice [{start}, {start}+{len}) of {c} cols")));
            }
            let mut out = Vec::with_capacity(r * len);
            for i in 0..r {
                out.extend_from_slice(&x.row(i)[*start..start + len]);
            }
            if x.shape().len() == 1 {
                Ok(Tensor::vector(out))
            } else {
                Tensor::matrix(r, *len, out)
            }
        }
        Op::PadCols { start, total } => {
            let x = parents[0];
            let (r, c) = x.matrix_dims();
            if start + c > *total {
                return Err(Error::shape(format!("pad [{start}, {start}+{c}) into {total} cols")));
            }
            let mut out = vec![0.0; r * total];
            for i in 0..r {
                out[i * total + start..i * total + start + c].copy_from_slice(x.row(i));
            }
            if x.shape().len() == 1 {
                Ok(Tensor::vector(out))
            } else {
                Tensor::matrix(r, *total, out)
            }
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    /// Inserts caller-owned data as a differentiation root. Leaves are
    /// trusted to be finite; every derived op re-checks its output.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node { op: Op::Leaf, parents: vec![], value });
        self.nodes.len() - 1
    }

    pub fn scalar_leaf(&mut self, v: f64) -> NodeId {
        self.leaf(Tensor::scalar(v))
    }

    pub(crate) fn push(&mut self, op: Op, parents: Vec<NodeId>) -> Result<NodeId> {
        for &p in &parents {
            if p >= self.nodes.len() {
                return Err(Error::contract(format!("parent id {p} out of range")));
            }
        }
        let pvals: Vec<&Tensor> = parents.iter().map(|&p| &self.nodes[p].value).collect();
        let value = eval_op(&op, &pvals)?;
        if !value.all_finite() {
            return Err(Error::NonFinite {
                op: op_name(&op),
                detail: format!("output shape {:?}", value.shape()),
            });
        }
        self.nodes.push(Node { op, parents, value });
        Ok(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.matmul_t(a, b, false, false)
    }

    pub fn matmul_t(&mut self, a: NodeId, b: NodeId, ta: bool, tb: bool) -> Result<NodeId> {
        self.push(Op::Matmul { ta, tb }, vec![a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add, vec![a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Sub, vec![a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul, vec![a, b])
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Div, vec![a, b])
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.push(Op::Scale(c), vec![a])
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.push(Op::AddScalar(c), vec![a])
    }

    pub fn leaky_relu(&mut self, a: NodeId, negative_slope: f64) -> Result<NodeId> {
        if negative_slope < 0.0 {
            return Err(Error::contract("leaky_relu slope must be >= 0".to_string()));
        }
        self.push(Op::LeakyRelu(negative_slope), vec![a])
    }

    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sqrt, vec![a])
    }

    pub fn ln(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Ln, vec![a])
    }

    /// ln(1 + x).
    pub fn log1p(&mut self, a: NodeId) -> Result<NodeId> {
        let shifted = self.add_scalar(a, 1.0)?;
        self.ln(shifted)
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sum, vec![a])
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(Error::shape("mean of empty tensor".to_string()));
        }
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.mul(a, a)
    }

    /// √(Σ x²) over all elements. The gradient at the exact zero vector is a
    /// degenerate-input error (division by zero in the √ backward rule);
    /// callers must guard.
    pub fn l2_norm(&mut self, a: NodeId) -> Result<NodeId> {
        if self.value(a).is_empty() {
            return Err(Error::shape("l2_norm of empty tensor".to_string()));
        }
        let sq = self.square(a)?;
        let s = self.sum(sq)?;
        self.sqrt(s)
    }

    pub fn sum_axis0(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::SumAxis0, vec![a])
    }

    pub fn broadcast_rows(&mut self, a: NodeId, rows: usize) -> Result<NodeId> {
        self.push(Op::BroadcastRows { rows }, vec![a])
    }

    pub fn sum_axis1(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::SumAxis1, vec![a])
    }

    pub fn broadcast_cols(&mut self, a: NodeId, cols: usize) -> Result<NodeId> {
        self.push(Op::BroadcastCols { cols }, vec![a])
    }

    pub fn broadcast_scalar(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        self.push(Op::BroadcastScalar { shape }, vec![a])
    }

    pub fn add_row_broadcast(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        self.push(Op::AddRowBroadcast, vec![x, bias])
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::ConcatCols, vec![a, b])
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.push(Op::SliceCols { start, len }, vec![a])
    }

    pub(crate) fn pad_cols(&mut self, a: NodeId, start: usize, total: usize) -> Result<NodeId> {
        self.push(Op::PadCols { start, total }, vec![a])
    }

    /// Recomputes every non-leaf value from the leaves; used to check that a
    /// recorded graph replays bit-identically.
    pub fn replay_values(&self) -> Result<Vec<Tensor>> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Leaf => node.value.clone(),
                _ => {
                    let pvals: Vec<&Tensor> = node.parents.iter().map(|&p| &values[p]).collect();
                    eval_op(&node.op, &pvals)?
                }
            };
            values.push(v);
        }
        Ok(values)
    }
}
