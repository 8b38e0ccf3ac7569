use crate::kernels::{axpy, matmul_nn, matmul_nt, matmul_tn};
use crate::TensorError;
use std::cell::RefCell;

/// Handle to a node in a [`Graph`]. Cheap to copy; only meaningful together
/// with the graph that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    pub(crate) id: usize,
}

/// Convolution padding mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pad {
    Valid,
    Same,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvMeta {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub h_out: usize,
    pub w_out: usize,
}

pub(crate) enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    /// Broadcast a column vector (r x 1) across all columns.
    AddCol(usize, usize),
    MulCol(usize, usize),
    /// Broadcast a row vector (1 x c) across all rows.
    MulRow(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Sigmoid(usize),
    Exp(usize),
    Ln(usize),
    Sqrt(usize),
    Abs(usize),
    Clamp(usize, f64, f64),
    /// Pointwise smooth function; only the derivative is kept for backward.
    Apply { p: usize, df: fn(f64) -> f64 },
    /// axis 0: normalize each column; axis 1: normalize each row.
    Softmax { p: usize, axis: usize },
    /// Normalize each column over the row axis: y = (x - mu) / sqrt(var + eps).
    LayerNormCols { p: usize, eps: f64 },
    MatMul(usize, usize),
    Transpose(usize),
    Reshape(usize),
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    SliceRows { p: usize, start: usize },
    SliceCols { p: usize, start: usize },
    GatherCols { p: usize, idx: Vec<usize> },
    Sum(usize),
    /// axis 0 -> (1 x c) column sums; axis 1 -> (r x 1) row sums.
    SumAxis { p: usize, axis: usize },
    Conv2d {
        input: usize,
        weight: usize,
        bias: usize,
        meta: ConvMeta,
        /// im2col matrix, kept for the weight gradient.
        cols: Vec<f64>,
        /// Flat source index per cols entry, -1 for zero padding.
        idx: Vec<i64>,
    },
    /// feat (C x H x W), points (N x 2) as (x, y) pixel coords -> (C x N).
    GridSample { feat: usize, points: usize },
}

pub(crate) struct Node {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub op: Op,
    pub needs_grad: bool,
}

/// A computation arena: append-only list of nodes, each storing its forward
/// values and the recipe (op + parents) to backpropagate through it.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Per-node gradients produced by [`Graph::backward`]. Interior-node buffers
/// are dropped as backpropagation retires them; leaf gradients survive.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`, if `v` was reached.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.id).and_then(|g| g.as_deref())
    }
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, shape: Vec<usize>, values: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            shape,
            values,
            op,
            needs_grad,
        });
        Var {
            id: nodes.len() - 1,
        }
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.id].shape.clone()
    }

    /// Copy of the node's forward values.
    pub fn values(&self, v: Var) -> Vec<f64> {
        self.nodes.borrow()[v.id].values.clone()
    }

    /// The single value of a 1-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        let nodes = self.nodes.borrow();
        debug_assert_eq!(nodes[v.id].values.len(), 1);
        nodes[v.id].values[0]
    }

    /// Returns an error naming `what` if any value of `v` is NaN/Inf.
    pub fn check_finite(&self, v: Var, what: &str) -> Result<(), TensorError> {
        if self.nodes.borrow()[v.id].values.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(TensorError::NonFinite { what: what.into() })
        }
    }

    fn rc(&self, v: Var) -> (usize, usize) {
        let nodes = self.nodes.borrow();
        let s = &nodes[v.id].shape;
        match s.len() {
            1 => (s[0], 1),
            2 => (s[0], s[1]),
            _ => panic!("expected a matrix, got shape {s:?}"),
        }
    }

    // ---- leaves ------------------------------------------------------

    /// Constant leaf: participates in forward only.
    pub fn input(&self, shape: &[usize], values: Vec<f64>) -> Var {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "input shape {shape:?} does not match {} values",
            values.len()
        );
        self.push(shape.to_vec(), values, Op::Leaf, false)
    }

    /// Trainable leaf: gradients are tracked through it.
    pub fn param(&self, shape: &[usize], values: Vec<f64>) -> Var {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "param shape {shape:?} does not match {} values",
            values.len()
        );
        self.push(shape.to_vec(), values, Op::Leaf, true)
    }

    // ---- elementwise binary ------------------------------------------

    fn zip_op(
        &self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op: name,
                lhs: sa,
                rhs: sb,
            });
        }
        let nodes = self.nodes.borrow();
        let values = nodes[a.id]
            .values
            .iter()
            .zip(&nodes[b.id].values)
            .map(|(&x, &y)| f(x, y))
            .collect();
        drop(nodes);
        Ok(self.push(sa, values, op, self.needs(a.id) || self.needs(b.id)))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_op("add", a, b, |x, y| x + y, Op::Add(a.id, b.id))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_op("sub", a, b, |x, y| x - y, Op::Sub(a.id, b.id))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_op("mul", a, b, |x, y| x * y, Op::Mul(a.id, b.id))
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_op("div", a, b, |x, y| x / y, Op::Div(a.id, b.id))
    }

    // ---- broadcasts --------------------------------------------------

    /// `a + col`, the (r x 1) column broadcast across every column of a.
    pub fn add_col(&self, a: Var, col: Var) -> Result<Var, TensorError> {
        let (r, c) = self.rc(a);
        if self.rc(col) != (r, 1) {
            return Err(TensorError::ShapeMismatch {
                op: "add_col",
                lhs: self.shape(a),
                rhs: self.shape(col),
            });
        }
        let nodes = self.nodes.borrow();
        let av = &nodes[a.id].values;
        let cv = &nodes[col.id].values;
        let mut values = Vec::with_capacity(r * c);
        for i in 0..r {
            let add = cv[i];
            values.extend(av[i * c..(i + 1) * c].iter().map(|&x| x + add));
        }
        drop(nodes);
        Ok(self.push(
            vec![r, c],
            values,
            Op::AddCol(a.id, col.id),
            self.needs(a.id) || self.needs(col.id),
        ))
    }

    /// `a * col`, the (r x 1) column broadcast across every column of a.
    pub fn mul_col(&self, a: Var, col: Var) -> Result<Var, TensorError> {
        let (r, c) = self.rc(a);
        if self.rc(col) != (r, 1) {
            return Err(TensorError::ShapeMismatch {
                op: "mul_col",
                lhs: self.shape(a),
                rhs: self.shape(col),
            });
        }
        let nodes = self.nodes.borrow();
        let av = &nodes[a.id].values;
        let cv = &nodes[col.id].values;
        let mut values = Vec::with_capacity(r * c);
        for i in 0..r {
            let m = cv[i];
            values.extend(av[i * c..(i + 1) * c].iter().map(|&x| x * m));
        }
        drop(nodes);
        Ok(self.push(
            vec![r, c],
            values,
            Op::MulCol(a.id, col.id),
            self.needs(a.id) || self.needs(col.id),
        ))
    }

    /// `a * row`, the (1 x c) row broadcast across every row of a.
    pub fn mul_row(&self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (r, c) = self.rc(a);
        if self.rc(row) != (1, c) {
            return Err(TensorError::ShapeMismatch {
                op: "mul_row",
                lhs: self.shape(a),
                rhs: self.shape(row),
            });
        }
        let nodes = self.nodes.borrow();
        let av = &nodes[a.id].values;
        let rv = &nodes[row.id].values;
        let mut values = Vec::with_capacity(r * c);
        for i in 0..r {
            values.extend(
                av[i * c..(i + 1) * c]
                    .iter()
                    .zip(rv)
                    .map(|(&x, &m)| x * m),
            );
        }
        drop(nodes);
        Ok(self.push(
            vec![r, c],
            values,
            Op::MulRow(a.id, row.id),
            self.needs(a.id) || self.needs(row.id),
        ))
    }

    /// `a * s` where `s` is a 1x1 node: broadcast multiply by a traced
    /// scalar. Composite (ones-column matmul + mul_col), so no new op.
    pub fn mul_scalar(&self, a: Var, s: Var) -> Result<Var, TensorError> {
        if self.rc(s) != (1, 1) {
            return Err(TensorError::ShapeMismatch {
                op: "mul_scalar",
                lhs: self.shape(a),
                rhs: self.shape(s),
            });
        }
        let (r, _) = self.rc(a);
        let ones = self.input(&[r, 1], vec![1.0; r]);
        let col = self.matmul(ones, s)?;
        self.mul_col(a, col)
    }

    // ---- elementwise unary -------------------------------------------

    fn map_op(&self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let nodes = self.nodes.borrow();
        let values = nodes[a.id].values.iter().map(|&x| f(x)).collect();
        let shape = nodes[a.id].shape.clone();
        drop(nodes);
        self.push(shape, values, op, self.needs(a.id))
    }

    pub fn scale(&self, a: Var, k: f64) -> Var {
        self.map_op(a, |x| k * x, Op::Scale(a.id, k))
    }

    pub fn add_scalar(&self, a: Var, k: f64) -> Var {
        self.map_op(a, |x| x + k, Op::AddScalar(a.id))
    }

    pub fn neg(&self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn relu(&self, a: Var) -> Var {
        self.map_op(a, |x| x.max(0.0), Op::Relu(a.id))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        self.map_op(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a.id))
    }

    pub fn exp(&self, a: Var) -> Var {
        self.map_op(a, f64::exp, Op::Exp(a.id))
    }

    pub fn ln(&self, a: Var) -> Var {
        self.map_op(a, f64::ln, Op::Ln(a.id))
    }

    pub fn sqrt(&self, a: Var) -> Var {
        self.map_op(a, f64::sqrt, Op::Sqrt(a.id))
    }

    pub fn abs(&self, a: Var) -> Var {
        self.map_op(a, f64::abs, Op::Abs(a.id))
    }

    pub fn clamp(&self, a: Var, lo: f64, hi: f64) -> Var {
        self.map_op(a, |x| x.clamp(lo, hi), Op::Clamp(a.id, lo, hi))
    }

    /// Pointwise smooth function with its derivative. The function pair must
    /// be deterministic; it is applied to every entry.
    pub fn apply(&self, a: Var, f: fn(f64) -> f64, df: fn(f64) -> f64) -> Var {
        self.map_op(a, f, Op::Apply { p: a.id, df })
    }

    // ---- normalization -----------------------------------------------

    /// Numerically stable softmax along `axis` (0 = down each column,
    /// 1 = across each row). The reduced axis sums to 1.
    pub fn softmax(&self, a: Var, axis: usize) -> Result<Var, TensorError> {
        if axis > 1 {
            return Err(TensorError::BadOp {
                op: "softmax",
                msg: format!("axis must be 0 or 1, got {axis}"),
            });
        }
        let (r, c) = self.rc(a);
        let nodes = self.nodes.borrow();
        let av = &nodes[a.id].values;
        let mut values = vec![0.0; r * c];
        let (vecs, len, stride, step) = if axis == 1 { (r, c, 1, c) } else { (c, r, c, 1) };
        for vi in 0..vecs {
            let base = vi * step;
            let mut mx = f64::NEG_INFINITY;
            for i in 0..len {
                mx = mx.max(av[base + i * stride]);
            }
            let mut total = 0.0;
            for i in 0..len {
                let e = (av[base + i * stride] - mx).exp();
                values[base + i * stride] = e;
                total += e;
            }
            for i in 0..len {
                values[base + i * stride] /= total;
            }
        }
        drop(nodes);
        Ok(self.push(
            vec![r, c],
            values,
            Op::Softmax { p: a.id, axis },
            self.needs(a.id),
        ))
    }

    /// Layer normalization down each column (over the row/feature axis):
    /// `y = (x - mean) / sqrt(var + eps)`, without affine parameters —
    /// compose with [`Graph::mul_col`] / [`Graph::add_col`] for gain/bias.
    pub fn layernorm_cols(&self, a: Var, eps: f64) -> Var {
        let (r, c) = self.rc(a);
        let nodes = self.nodes.borrow();
        let av = &nodes[a.id].values;
        let mut values = vec![0.0; r * c];
        for j in 0..c {
            let mut mean = 0.0;
            for i in 0..r {
                mean += av[i * c + j];
            }
            mean /= r as f64;
            let mut var = 0.0;
            for i in 0..r {
                let d = av[i * c + j] - mean;
                var += d * d;
            }
            var /= r as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for i in 0..r {
                values[i * c + j] = (av[i * c + j] - mean) * inv;
            }
        }
        drop(nodes);
        self.push(
            vec![r, c],
            values,
            Op::LayerNormCols { p: a.id, eps },
            self.needs(a.id),
        )
    }

    // ---- linear algebra ----------------------------------------------

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, ka) = self.rc(a);
        let (kb, n) = self.rc(b);
        if ka != kb {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(a),
                rhs: self.shape(b),
            });
        }
        let nodes = self.nodes.borrow();
        let values = matmul_nn(&nodes[a.id].values, &nodes[b.id].values, m, ka, n);
        drop(nodes);
        Ok(self.push(
            vec![m, n],
            values,
            Op::MatMul(a.id, b.id),
            self.needs(a.id) || self.needs(b.id),
        ))
    }

    pub fn transpose(&self, a: Var) -> Var {
        let (r, c) = self.rc(a);
        let nodes = self.nodes.borrow();
        let av = &nodes[a.id].values;
        let mut values = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                values[j * r + i] = av[i * c + j];
            }
        }
        drop(nodes);
        self.push(vec![c, r], values, Op::Transpose(a.id), self.needs(a.id))
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let nodes = self.nodes.borrow();
        if shape.iter().product::<usize>() != nodes[a.id].values.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: nodes[a.id].shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        let values = nodes[a.id].values.clone();
        drop(nodes);
        Ok(self.push(shape.to_vec(), values, Op::Reshape(a.id), self.needs(a.id)))
    }

    // ---- concatenation / slicing / gathering --------------------------

    /// Stacks matrices with equal column counts along the row axis.
    pub fn concat_rows(&self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::BadOp {
                op: "concat_rows",
                msg: "no inputs".into(),
            });
        }
        let (_, c0) = self.rc(parts[0]);
        let mut rows = 0;
        for p in parts {
            let (r, c) = self.rc(*p);
            if c != c0 {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.shape(parts[0]),
                    rhs: self.shape(*p),
                });
            }
            rows += r;
        }
        let nodes = self.nodes.borrow();
        let mut values = Vec::with_capacity(rows * c0);
        for p in parts {
            values.extend_from_slice(&nodes[p.id].values);
        }
        drop(nodes);
        let needs = parts.iter().any(|p| self.needs(p.id));
        Ok(self.push(
            vec![rows, c0],
            values,
            Op::ConcatRows(parts.iter().map(|p| p.id).collect()),
            needs,
        ))
    }

    /// Stacks matrices with equal row counts along the column axis.
    pub fn concat_cols(&self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::BadOp {
                op: "concat_cols",
                msg: "no inputs".into(),
            });
        }
        let (r0, _) = self.rc(parts[0]);
        let mut cols = 0;
        for p in parts {
            let (r, c) = self.rc(*p);
            if r != r0 {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.shape(parts[0]),
                    rhs: self.shape(*p),
                });
            }
            cols += c;
        }
        let nodes = self.nodes.borrow();
        let mut values = vec![0.0; r0 * cols];
        let mut off = 0;
        for p in parts {
            let (_, c) = {
                let s = &nodes[p.id].shape;
                (s[0], if s.len() == 2 { s[1] } else { 1 })
            };
            let pv = &nodes[p.id].values;
            for i in 0..r0 {
                values[i * cols + off..i * cols + off + c]
                    .copy_from_slice(&pv[i * c..(i + 1) * c]);
            }
            off += c;
        }
        drop(nodes);
        let needs = parts.iter().any(|p| self.needs(p.id));
        Ok(self.push(
            vec![r0, cols],
            values,
            Op::ConcatCols(parts.iter().map(|p| p.id).collect()),
            needs,
        ))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&self, a: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let (r, c) = self.rc(a);
        if start >= end || end > r {
            return Err(TensorError::BadOp {
                op: "slice_rows",
                msg: format!("range {start}..{end} out of bounds for {r} rows"),
            });
        }
        let nodes = self.nodes.borrow();
        let values = nodes[a.id].values[start * c..end * c].to_vec();
        drop(nodes);
        Ok(self.push(
            vec![end - start, c],
            values,
            Op::SliceRows { p: a.id, start },
            self.needs(a.id),
        ))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&self, a: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let (r, c) = self.rc(a);
        if start >= end || end > c {
            return Err(TensorError::BadOp {
                op: "slice_cols",
                msg: format!("range {start}..{end} out of bounds for {c} columns"),
            });
        }
        let nodes = self.nodes.borrow();
        let av = &nodes[a.id].values;
        let width = end - start;
        let mut values = Vec::with_capacity(r * width);
        for i in 0..r {
            values.extend_from_slice(&av[i * c + start..i * c + end]);
        }
        drop(nodes);
        Ok(self.push(
            vec![r, width],
            values,
            Op::SliceCols { p: a.id, start },
            self.needs(a.id),
        ))
    }

    /// Selects columns by index (duplicates allowed; gradients accumulate).
    pub fn gather_cols(&self, a: Var, idx: &[usize]) -> Result<Var, TensorError> {
        let (r, c) = self.rc(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= c) {
            return Err(TensorError::BadOp {
                op: "gather_cols",
                msg: format!("index {bad} out of bounds for {c} columns"),
            });
        }
        let nodes = self.nodes.borrow();
        let av = &nodes[a.id].values;
        let mut values = Vec::with_capacity(r * idx.len());
        for i in 0..r {
            for &j in idx {
                values.push(av[i * c + j]);
            }
        }
        drop(nodes);
        Ok(self.push(
            vec![r, idx.len()],
            values,
            Op::GatherCols {
                p: a.id,
                idx: idx.to_vec(),
            },
            self.needs(a.id),
        ))
    }

    // ---- reductions ----------------------------------------------------

    /// Sum of all entries, as a 1x1 node.
    pub fn sum(&self, a: Var) -> Var {
        let nodes = self.nodes.borrow();
        let total: f64 = nodes[a.id].values.iter().sum();
        drop(nodes);
        self.push(vec![1, 1], vec![total], Op::Sum(a.id), self.needs(a.id))
    }

    /// Mean of all entries, as a 1x1 node.
    pub fn mean(&self, a: Var) -> Var {
        let n = self.nodes.borrow()[a.id].values.len();
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Sum along `axis`: 0 -> (1 x c) column sums, 1 -> (r x 1) row sums.
    pub fn sum_axis(&self, a: Var, axis: usize) -> Result<Var, TensorError> {
        if axis > 1 {
            return Err(TensorError::BadOp {
                op: "sum_axis",
                msg: format!("axis must be 0 or 1, got {axis}"),
            });
        }
        let (r, c) = self.rc(a);
        let nodes = self.nodes.borrow();
        let av = &nodes[a.id].values;
        let (shape, values) = if axis == 0 {
            let mut out = vec![0.0; c];
            for i in 0..r {
                axpy(&mut out, &av[i * c..(i + 1) * c]);
            }
            (vec![1, c], out)
        } else {
            let values = (0..r)
                .map(|i| av[i * c..(i + 1) * c].iter().sum())
                .collect();
            (vec![r, 1], values)
        };
        drop(nodes);
        Ok(self.push(shape, values, Op::SumAxis { p: a.id, axis }, self.needs(a.id)))
    }

    /// Mean along `axis` (same shapes as [`Graph::sum_axis`]).
    pub fn mean_axis(&self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let (r, c) = self.rc(a);
        let denom = if axis == 0 { r } else { c };
        let s = self.sum_axis(a, axis)?;
        Ok(self.scale(s, 1.0 / denom as f64))
    }

    // ---- structured ops -------------------------------------------------

    /// 2D cross-correlation. `input` is (C_in x H x W), `weight` is
    /// (C_out x C_in x k x k) with odd k, `bias` is (C_out x 1).
    /// Output height is `(H + 2p - k)/stride + 1`, which must be integral.
    pub fn conv2d(
        &self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        pad: Pad,
    ) -> Result<Var, TensorError> {
        let in_shape = self.shape(input);
        let w_shape = self.shape(weight);
        if in_shape.len() != 3 || w_shape.len() != 4 {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: in_shape,
                rhs: w_shape,
            });
        }
        let (c_in, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
        let (c_out, wc_in, k, k2) = (w_shape[0], w_shape[1], w_shape[2], w_shape[3]);
        if wc_in != c_in || k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: in_shape,
                rhs: w_shape,
            });
        }
        if k % 2 == 0 {
            return Err(TensorError::BadOp {
                op: "conv2d",
                msg: format!("kernel size must be odd, got {k}"),
            });
        }
        if stride == 0 {
            return Err(TensorError::BadOp {
                op: "conv2d",
                msg: "stride must be positive".into(),
            });
        }
        if self.rc(bias) != (c_out, 1) {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: self.shape(bias),
                rhs: vec![c_out, 1],
            });
        }
        let p = match pad {
            Pad::Valid => 0,
            Pad::Same => (k - 1) / 2,
        };
        if h + 2 * p < k || w + 2 * p < k {
            return Err(TensorError::BadOp {
                op: "conv2d",
                msg: format!("kernel {k} larger than padded input {h}x{w}"),
            });
        }
        if (h + 2 * p - k) % stride != 0 || (w + 2 * p - k) % stride != 0 {
            return Err(TensorError::BadOp {
                op: "conv2d",
                msg: format!(
                    "non-integral output size for input {h}x{w}, kernel {k}, stride {stride}, pad {p}"
                ),
            });
        }
        let h_out = (h + 2 * p - k) / stride + 1;
        let w_out = (w + 2 * p - k) / stride + 1;

        // im2col with an index map for the backward scatter.
        let rows = c_in * k * k;
        let n_out = h_out * w_out;
        let mut cols = vec![0.0; rows * n_out];
        let mut idx = vec![-1i64; rows * n_out];
        {
            let nodes = self.nodes.borrow();
            let iv = &nodes[input.id].values;
            for oy in 0..h_out {
                for ox in 0..w_out {
                    let q = oy * w_out + ox;
                    for c in 0..c_in {
                        for di in 0..k {
                            let y = (oy * stride + di) as i64 - p as i64;
                            for dj in 0..k {
                                let x = (ox * stride + dj) as i64 - p as i64;
                                let row = (c * k + di) * k + dj;
                                if y >= 0 && (y as usize) < h && x >= 0 && (x as usize) < w {
                                    let src = (c * h + y as usize) * w + x as usize;
                                    cols[row * n_out + q] = iv[src];
                                    idx[row * n_out + q] = src as i64;
                                }
                            }
                        }
                    }
                }
            }
        }

        let nodes = self.nodes.borrow();
        let mut values = matmul_nn(&nodes[weight.id].values, &cols, c_out, rows, n_out);
        let bv = &nodes[bias.id].values;
        for c in 0..c_out {
            let b = bv[c];
            for v in &mut values[c * n_out..(c + 1) * n_out] {
                *v += b;
            }
        }
        drop(nodes);

        let needs = self.needs(input.id) || self.needs(weight.id) || self.needs(bias.id);
        Ok(self.push(
            vec![c_out, h_out, w_out],
            values,
            Op::Conv2d {
                input: input.id,
                weight: weight.id,
                bias: bias.id,
                meta: ConvMeta {
                    c_in,
                    c_out,
                    k,
                    h_out,
                    w_out,
                },
                cols,
                idx,
            },
            needs,
        ))
    }

    /// Bilinear sampling of `feat` (C x H x W) at `points` (N x 2, each row
    /// an (x, y) pixel coordinate). Coordinates are clamped to
    /// `[0, W-1] x [0, H-1]`; output is (C x N). Differentiable in both the
    /// features and the points (clamped points get zero coordinate gradient).
    pub fn grid_sample(&self, feat: Var, points: Var) -> Result<Var, TensorError> {
        let f_shape = self.shape(feat);
        if f_shape.len() != 3 {
            return Err(TensorError::ShapeMismatch {
                op: "grid_sample",
                lhs: f_shape,
                rhs: vec![0, 0, 0],
            });
        }
        let (pn, pc) = self.rc(points);
        if pc != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "grid_sample",
                lhs: self.shape(points),
                rhs: vec![pn, 2],
            });
        }
        let (c, h, w) = (f_shape[0], f_shape[1], f_shape[2]);
        let nodes = self.nodes.borrow();
        let fv = &nodes[feat.id].values;
        let pv = &nodes[points.id].values;
        let mut values = vec![0.0; c * pn];
        for pidx in 0..pn {
            let s = bilinear_setup(pv[pidx * 2], pv[pidx * 2 + 1], w, h);
            for ch in 0..c {
                let base = ch * h * w;
                let f00 = fv[base + s.y0 * w + s.x0];
                let f10 = fv[base + s.y0 * w + s.x1];
                let f01 = fv[base + s.y1 * w + s.x0];
                let f11 = fv[base + s.y1 * w + s.x1];
                values[ch * pn + pidx] = (1.0 - s.ty) * ((1.0 - s.tx) * f00 + s.tx * f10)
                    + s.ty * ((1.0 - s.tx) * f01 + s.tx * f11);
            }
        }
        drop(nodes);
        let needs = self.needs(feat.id) || self.needs(points.id);
        Ok(self.push(
            vec![c, pn],
            values,
            Op::GridSample {
                feat: feat.id,
                points: points.id,
            },
            needs,
        ))
    }

    /// Soft-argmax over a (D x H x W) logit volume: softmax over all cells,
    /// then the expected (x, y, z) coordinate in (pixel, pixel, depth-bin)
    /// units, as a (3 x 1) node. Composite of existing ops, so it inherits
    /// their backward rules.
    pub fn soft_argmax_3d(&self, logits: Var) -> Result<Var, TensorError> {
        let s = self.shape(logits);
        if s.len() != 3 {
            return Err(TensorError::ShapeMismatch {
                op: "soft_argmax_3d",
                lhs: s,
                rhs: vec![0, 0, 0],
            });
        }
        let (d, h, w) = (s[0], s[1], s[2]);
        let n = d * h * w;
        let flat = self.reshape(logits, &[n, 1])?;
        let p = self.softmax(flat, 0)?;
        let mut coords = Vec::with_capacity(3 * n);
        for zyx in 0..3 {
            for di in 0..d {
                for yi in 0..h {
                    for xi in 0..w {
                        coords.push(match zyx {
                            0 => xi as f64,
                            1 => yi as f64,
                            _ => di as f64,
                        });
                    }
                }
            }
        }
        let cmat = self.input(&[3, n], coords);
        self.matmul(cmat, p)
    }
}

struct Bilinear {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    tx: f64,
    ty: f64,
    /// Whether the x (resp. y) coordinate was strictly inside the clamp
    /// range, i.e. whether it carries gradient.
    dx_live: bool,
    dy_live: bool,
}

fn bilinear_setup(x: f64, y: f64, w: usize, h: usize) -> Bilinear {
    let (x0, x1, tx, dx_live) = axis_setup(x, w);
    let (y0, y1, ty, dy_live) = axis_setup(y, h);
    Bilinear {
        x0,
        x1,
        y0,
        y1,
        tx,
        ty,
        dx_live,
        dy_live,
    }
}

fn axis_setup(coord: f64, extent: usize) -> (usize, usize, f64, bool) {
    let max = (extent - 1) as f64;
    let clamped = coord.clamp(0.0, max);
    let live = coord > 0.0 && coord < max;
    if extent == 1 {
        return (0, 0, 0.0, false);
    }
    let i0 = clamped.floor().min(max - 1.0);
    let t = clamped - i0;
    (i0 as usize, i0 as usize + 1, t, live)
}

// ---- backward ---------------------------------------------------------

impl Graph {
    /// Reverse-mode sweep from a scalar `loss`. Gradients are accumulated
    /// for every node on a differentiable path from the loss; fetch them for
    /// leaves of interest from the returned [`Gradients`].
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let nodes = self.nodes.borrow();
        if nodes[loss.id].values.len() != 1 {
            return Err(TensorError::BadOp {
                op: "backward",
                msg: format!(
                    "loss must be scalar, got shape {:?}",
                    nodes[loss.id].shape
                ),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            if !nodes[id].needs_grad {
                grads[id] = None;
                continue;
            }
            // A node's gradient is complete once we reach it; take it so the
            // buffer is freed after its parents are updated (leaves keep
            // theirs — they have no parents and are skipped here).
            if matches!(nodes[id].op, Op::Leaf) {
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            backprop_node(&nodes, id, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }
}

fn grad_buf<'a>(
    grads: &'a mut [Option<Vec<f64>>],
    nodes: &[Node],
    id: usize,
) -> Option<&'a mut Vec<f64>> {
    if !nodes[id].needs_grad {
        return None;
    }
    Some(grads[id].get_or_insert_with(|| vec![0.0; nodes[id].values.len()]))
}

fn backprop_node(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let node = &nodes[id];
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            if let Some(da) = grad_buf(grads, nodes, *a) {
                axpy(da, g);
            }
            if let Some(db) = grad_buf(grads, nodes, *b) {
                axpy(db, g);
            }
        }
        Op::Sub(a, b) => {
            if let Some(da) = grad_buf(grads, nodes, *a) {
                axpy(da, g);
            }
            if let Some(db) = grad_buf(grads, nodes, *b) {
                for (d, &gv) in db.iter_mut().zip(g) {
                    *d -= gv;
                }
            }
        }
        Op::Mul(a, b) => {
            let (av, bv) = (&nodes[*a].values, &nodes[*b].values);
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for ((d, &gv), &y) in da.iter_mut().zip(g).zip(bv) {
                    *d += gv * y;
                }
            }
            if let Some(db) = grad_buf(grads, nodes, *b) {
                for ((d, &gv), &x) in db.iter_mut().zip(g).zip(av) {
                    *d += gv * x;
                }
            }
        }
        Op::Div(a, b) => {
            let (av, bv) = (&nodes[*a].values, &nodes[*b].values);
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for ((d, &gv), &y) in da.iter_mut().zip(g).zip(bv) {
                    *d += gv / y;
                }
            }
            if let Some(db) = grad_buf(grads, nodes, *b) {
                for (((d, &gv), &x), &y) in db.iter_mut().zip(g).zip(av).zip(bv) {
                    *d -= gv * x / (y * y);
                }
            }
        }
        Op::AddCol(a, col) => {
            let (r, c) = rc_of(node);
            if let Some(da) = grad_buf(grads, nodes, *a) {
                axpy(da, g);
            }
            if let Some(dc) = grad_buf(grads, nodes, *col) {
                for i in 0..r {
                    dc[i] += g[i * c..(i + 1) * c].iter().sum::<f64>();
                }
            }
        }
        Op::MulCol(a, col) => {
            let (r, c) = rc_of(node);
            let (av, cv) = (&nodes[*a].values, &nodes[*col].values);
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for i in 0..r {
                    let m = cv[i];
                    for (d, &gv) in da[i * c..(i + 1) * c].iter_mut().zip(&g[i * c..(i + 1) * c]) {
                        *d += gv * m;
                    }
                }
            }
            if let Some(dc) = grad_buf(grads, nodes, *col) {
                for i in 0..r {
                    let mut acc = 0.0;
                    for (gv, x) in g[i * c..(i + 1) * c].iter().zip(&av[i * c..(i + 1) * c]) {
                        acc += gv * x;
                    }
                    dc[i] += acc;
                }
            }
        }
        Op::MulRow(a, row) => {
            let (r, c) = rc_of(node);
            let (av, rv) = (&nodes[*a].values, &nodes[*row].values);
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for i in 0..r {
                    for ((d, &gv), &m) in da[i * c..(i + 1) * c]
                        .iter_mut()
                        .zip(&g[i * c..(i + 1) * c])
                        .zip(rv)
                    {
                        *d += gv * m;
                    }
                }
            }
            if let Some(dr) = grad_buf(grads, nodes, *row) {
                for i in 0..r {
                    for ((d, &gv), &x) in dr
                        .iter_mut()
                        .zip(&g[i * c..(i + 1) * c])
                        .zip(&av[i * c..(i + 1) * c])
                    {
                        *d += gv * x;
                    }
                }
            }
        }
        Op::Scale(a, k) => {
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for (d, &gv) in da.iter_mut().zip(g) {
                    *d += k * gv;
                }
            }
        }
        Op::AddScalar(a) => {
            if let Some(da) = grad_buf(grads, nodes, *a) {
                axpy(da, g);
            }
        }
        Op::Relu(a) => {
            let av = &nodes[*a].values;
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for ((d, &gv), &x) in da.iter_mut().zip(g).zip(av) {
                    if x > 0.0 {
                        *d += gv;
                    }
                }
            }
        }
        Op::Sigmoid(a) => {
            let yv = &node.values;
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for ((d, &gv), &y) in da.iter_mut().zip(g).zip(yv) {
                    *d += gv * y * (1.0 - y);
                }
            }
        }
        Op::Exp(a) => {
            let yv = &node.values;
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for ((d, &gv), &y) in da.iter_mut().zip(g).zip(yv) {
                    *d += gv * y;
                }
            }
        }
        Op::Ln(a) => {
            let av = &nodes[*a].values;
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for ((d, &gv), &x) in da.iter_mut().zip(g).zip(av) {
                    *d += gv / x;
                }
            }
        }
        Op::Sqrt(a) => {
            let yv = &node.values;
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for ((d, &gv), &y) in da.iter_mut().zip(g).zip(yv) {
                    *d += gv * 0.5 / y;
                }
            }
        }
        Op::Abs(a) => {
            let av = &nodes[*a].values;
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for ((d, &gv), &x) in da.iter_mut().zip(g).zip(av) {
                    *d += gv * if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
                }
            }
        }
        Op::Clamp(a, lo, hi) => {
            let av = &nodes[*a].values;
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for ((d, &gv), &x) in da.iter_mut().zip(g).zip(av) {
                    if x > *lo && x < *hi {
                        *d += gv;
                    }
                }
            }
        }
        Op::Apply { p, df } => {
            let av = &nodes[*p].values;
            if let Some(da) = grad_buf(grads, nodes, *p) {
                for ((d, &gv), &x) in da.iter_mut().zip(g).zip(av) {
                    *d += gv * df(x);
                }
            }
        }
        Op::Softmax { p, axis } => {
            let yv = &node.values;
            let (r, c) = rc_of(node);
            let (vecs, len, stride, step) = if *axis == 1 {
                (r, c, 1, c)
            } else {
                (c, r, c, 1)
            };
            if let Some(dp) = grad_buf(grads, nodes, *p) {
                for vi in 0..vecs {
                    let base = vi * step;
                    let mut dot = 0.0;
                    for i in 0..len {
                        dot += g[base + i * stride] * yv[base + i * stride];
                    }
                    for i in 0..len {
                        let j = base + i * stride;
                        dp[j] += yv[j] * (g[j] - dot);
                    }
                }
            }
        }
        Op::LayerNormCols { p, eps } => {
            let (r, c) = rc_of(node);
            let xv = &nodes[*p].values;
            let yv = &node.values;
            if let Some(dp) = grad_buf(grads, nodes, *p) {
                for j in 0..c {
                    let mut mean = 0.0;
                    for i in 0..r {
                        mean += xv[i * c + j];
                    }
                    mean /= r as f64;
                    let mut var = 0.0;
                    for i in 0..r {
                        let d = xv[i * c + j] - mean;
                        var += d * d;
                    }
                    var /= r as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    let mut g_mean = 0.0;
                    let mut gy_mean = 0.0;
                    for i in 0..r {
                        g_mean += g[i * c + j];
                        gy_mean += g[i * c + j] * yv[i * c + j];
                    }
                    g_mean /= r as f64;
                    gy_mean /= r as f64;
                    for i in 0..r {
                        dp[i * c + j] +=
                            inv * (g[i * c + j] - g_mean - yv[i * c + j] * gy_mean);
                    }
                }
            }
        }
        Op::MatMul(a, b) => {
            let (m, n) = rc_of(node);
            let (_, k) = rc_of(&nodes[*a]);
            let (av, bv) = (&nodes[*a].values, &nodes[*b].values);
            if nodes[*a].needs_grad {
                let da_inc = matmul_nt(g, bv, m, n, k);
                if let Some(da) = grad_buf(grads, nodes, *a) {
                    axpy(da, &da_inc);
                }
            }
            if nodes[*b].needs_grad {
                let db_inc = matmul_tn(av, g, k, m, n);
                if let Some(db) = grad_buf(grads, nodes, *b) {
                    axpy(db, &db_inc);
                }
            }
        }
        Op::Transpose(a) => {
            let (r, c) = rc_of(node); // shape of the transposed output
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for i in 0..r {
                    for j in 0..c {
                        da[j * r + i] += g[i * c + j];
                    }
                }
            }
        }
        Op::Reshape(a) => {
            if let Some(da) = grad_buf(grads, nodes, *a) {
                axpy(da, g);
            }
        }
        Op::ConcatRows(parts) => {
            let mut off = 0;
            for pid in parts {
                let len = nodes[*pid].values.len();
                if let Some(dp) = grad_buf(grads, nodes, *pid) {
                    axpy(dp, &g[off..off + len]);
                }
                off += len;
            }
        }
        Op::ConcatCols(parts) => {
            let (r, total_c) = rc_of(node);
            let mut off = 0;
            for pid in parts {
                let (_, pc) = rc_of(&nodes[*pid]);
                if let Some(dp) = grad_buf(grads, nodes, *pid) {
                    for i in 0..r {
                        axpy(
                            &mut dp[i * pc..(i + 1) * pc],
                            &g[i * total_c + off..i * total_c + off + pc],
                        );
                    }
                }
                off += pc;
            }
        }
        Op::SliceRows { p, start } => {
            let (_, c) = rc_of(&nodes[*p]);
            if let Some(dp) = grad_buf(grads, nodes, *p) {
                axpy(&mut dp[start * c..start * c + g.len()], g);
            }
        }
        Op::SliceCols { p, start } => {
            let (r, width) = rc_of(node);
            let (_, c) = rc_of(&nodes[*p]);
            if let Some(dp) = grad_buf(grads, nodes, *p) {
                for i in 0..r {
                    axpy(
                        &mut dp[i * c + start..i * c + start + width],
                        &g[i * width..(i + 1) * width],
                    );
                }
            }
        }
        Op::GatherCols { p, idx } => {
            let (r, _) = rc_of(node);
            let (_, c) = rc_of(&nodes[*p]);
            if let Some(dp) = grad_buf(grads, nodes, *p) {
                for i in 0..r {
                    for (q, &j) in idx.iter().enumerate() {
                        dp[i * c + j] += g[i * idx.len() + q];
                    }
                }
            }
        }
        Op::Sum(a) => {
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for d in da.iter_mut() {
                    *d += g[0];
                }
            }
        }
        Op::SumAxis { p, axis } => {
            let (r, c) = rc_of(&nodes[*p]);
            if let Some(dp) = grad_buf(grads, nodes, *p) {
                if *axis == 0 {
                    for i in 0..r {
                        axpy(&mut dp[i * c..(i + 1) * c], g);
                    }
                } else {
                    for i in 0..r {
                        for d in dp[i * c..(i + 1) * c].iter_mut() {
                            *d += g[i];
                        }
                    }
                }
            }
        }
        Op::Conv2d {
            input,
            weight,
            bias,
            meta,
            cols,
            idx,
        } => {
            let rows = meta.c_in * meta.k * meta.k;
            let n_out = meta.h_out * meta.w_out;
            if nodes[*weight].needs_grad {
                let dw_inc = matmul_nt(g, cols, meta.c_out, n_out, rows);
                if let Some(dw) = grad_buf(grads, nodes, *weight) {
                    axpy(dw, &dw_inc);
                }
            }
            if let Some(db) = grad_buf(grads, nodes, *bias) {
                for c in 0..meta.c_out {
                    db[c] += g[c * n_out..(c + 1) * n_out].iter().sum::<f64>();
                }
            }
            if nodes[*input].needs_grad {
                let wv = &nodes[*weight].values;
                let dcols = matmul_tn(wv, g, rows, meta.c_out, n_out);
                if let Some(di) = grad_buf(grads, nodes, *input) {
                    for (q, &src) in idx.iter().enumerate() {
                        if src >= 0 {
                            di[src as usize] += dcols[q];
                        }
                    }
                }
            }
        }
        Op::GridSample { feat, points } => {
            let f_shape = &nodes[*feat].shape;
            let (c, h, w) = (f_shape[0], f_shape[1], f_shape[2]);
            let pn = nodes[*points].shape[0];
            let pv = &nodes[*points].values;
            let fv = &nodes[*feat].values;
            for pidx in 0..pn {
                let s = bilinear_setup(pv[pidx * 2], pv[pidx * 2 + 1], w, h);
                if nodes[*feat].needs_grad {
                    if let Some(df) = grad_buf(grads, nodes, *feat) {
                        for ch in 0..c {
                            let gv = g[ch * pn + pidx];
                            let base = ch * h * w;
                            df[base + s.y0 * w + s.x0] += gv * (1.0 - s.ty) * (1.0 - s.tx);
                            df[base + s.y0 * w + s.x1] += gv * (1.0 - s.ty) * s.tx;
                            df[base + s.y1 * w + s.x0] += gv * s.ty * (1.0 - s.tx);
                            df[base + s.y1 * w + s.x1] += gv * s.ty * s.tx;
                        }
                    }
                }
                if nodes[*points].needs_grad {
                    let mut du = 0.0;
                    let mut dv = 0.0;
                    for ch in 0..c {
                        let gv = g[ch * pn + pidx];
                        let base = ch * h * w;
                        let f00 = fv[base + s.y0 * w + s.x0];
                        let f10 = fv[base + s.y0 * w + s.x1];
                        let f01 = fv[base + s.y1 * w + s.x0];
                        let f11 = fv[base + s.y1 * w + s.x1];
                        if s.dx_live {
                            du += gv * ((1.0 - s.ty) * (f10 - f00) + s.ty * (f11 - f01));
                        }
                        if s.dy_live {
                            dv += gv * ((1.0 - s.tx) * (f01 - f00) + s.tx * (f11 - f10));
                        }
                    }
                    if let Some(dp) = grad_buf(grads, nodes, *points) {
                        dp[pidx * 2] += du;
                        dp[pidx * 2 + 1] += dv;
                    }
                }
            }
        }
    }
}

fn rc_of(node: &Node) -> (usize, usize) {
    match node.shape.len() {
        1 => (node.shape[0], 1),
        2 => (node.shape[0], node.shape[1]),
        3 => (node.shape[0], node.shape[1] * node.shape[2]),
        _ => panic!("unexpected shape {:?}", node.shape),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let g = Graph::new();
        let x = g.input(&[2, 1], vec![0.0, 0.0]);
        let y = g.softmax(x, 0).unwrap();
        assert_eq!(g.values(y), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_rows_and_cols_normalize_the_right_axis() {
        let g = Graph::new();
        let x = g.input(&[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.5, 2.0]);
        let rows = g.softmax(x, 1).unwrap();
        let cols = g.softmax(x, 0).unwrap();
        let rv = g.values(rows);
        let cv = g.values(cols);
        for i in 0..2 {
            let s: f64 = rv[i * 3..(i + 1) * 3].iter().sum();
            assert_relative_eq!(s, 1.0, max_relative = 1e-12);
        }
        for j in 0..3 {
            assert_relative_eq!(cv[j] + cv[3 + j], 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn softmax_is_stable_for_huge_logits() {
        let g = Graph::new();
        let x = g.input(&[2, 1], vec![1e4, 1e4 - 2.0]);
        let y = g.softmax(x, 0).unwrap();
        let v = g.values(y);
        assert!(v.iter().all(|p| p.is_finite()));
        assert_relative_eq!(v[0], 1.0 / (1.0 + (-2.0f64).exp()), max_relative = 1e-12);
    }

    #[test]
    fn sigmoid_of_zero_is_one_half() {
        let g = Graph::new();
        let x = g.input(&[1, 1], vec![0.0]);
        let y = g.sigmoid(x);
        assert_eq!(g.scalar(y), 0.5);
    }

    #[test]
    fn layernorm_of_a_constant_column_is_zero() {
        let g = Graph::new();
        let x = g.input(&[4, 2], vec![3.0, -1.0, 3.0, -1.0, 3.0, -1.0, 3.0, -1.0]);
        let y = g.layernorm_cols(x, 1e-5);
        for v in g.values(y) {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn layernorm_standardizes_each_column() {
        let g = Graph::new();
        let x = g.input(&[3, 1], vec![1.0, 2.0, 6.0]);
        let y = g.layernorm_cols(x, 0.0);
        let v = g.values(y);
        // mean 3, var (4+1+9)/3 = 14/3
        let s = (14.0f64 / 3.0).sqrt();
        assert_relative_eq!(v[0], -2.0 / s, max_relative = 1e-12);
        assert_relative_eq!(v[1], -1.0 / s, max_relative = 1e-12);
        assert_relative_eq!(v[2], 3.0 / s, max_relative = 1e-12);
    }

    #[test]
    fn one_by_one_conv_with_unit_weight_is_identity() {
        let g = Graph::new();
        let x = g.input(&[1, 3, 4], (0..12).map(f64::from).collect());
        let w = g.input(&[1, 1, 1, 1], vec![1.0]);
        let b = g.input(&[1, 1], vec![0.0]);
        let y = g.conv2d(x, w, b, 1, Pad::Valid).unwrap();
        assert_eq!(g.shape(y), vec![1, 3, 4]);
        assert_eq!(g.values(y), g.values(x));
    }

    #[test]
    fn one_by_one_conv_scales_the_checker_input() {
        let g = Graph::new();
        let x = g.input(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let w = g.input(&[1, 1, 1, 1], vec![2.0]);
        let b = g.input(&[1, 1], vec![0.0]);
        let y = g.conv2d(x, w, b, 1, Pad::Valid).unwrap();
        assert_eq!(g.values(y), vec![2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn box_filter_preserves_a_constant_image_interior() {
        let g = Graph::new();
        let x = g.input(&[1, 5, 5], vec![7.0; 25]);
        let w = g.input(&[1, 1, 3, 3], vec![1.0 / 9.0; 9]);
        let b = g.input(&[1, 1], vec![0.0]);
        let valid = g.conv2d(x, w, b, 1, Pad::Valid).unwrap();
        assert_eq!(g.shape(valid), vec![1, 3, 3]);
        for v in g.values(valid) {
            assert_relative_eq!(v, 7.0, max_relative = 1e-12);
        }
        let same = g.conv2d(x, w, b, 1, Pad::Same).unwrap();
        assert_eq!(g.shape(same), vec![1, 5, 5]);
        let sv = g.values(same);
        for y in 1..4 {
            for xx in 1..4 {
                assert_relative_eq!(sv[y * 5 + xx], 7.0, max_relative = 1e-12);
            }
        }
        // padded corner sees four zeros: 7 * 4/9
        assert_relative_eq!(sv[0], 7.0 * 4.0 / 9.0, max_relative = 1e-12);
    }

    #[test]
    fn strided_conv_computes_the_expected_output_size() {
        let g = Graph::new();
        let x = g.input(&[1, 64, 64], vec![1.0; 64 * 64]);
        let w = g.input(&[1, 1, 3, 3], vec![1.0; 9]);
        let b = g.input(&[1, 1], vec![0.0]);
        let y = g.conv2d(x, w, b, 3, Pad::Same).unwrap();
        assert_eq!(g.shape(y), vec![1, 22, 22]);
        let z = g.conv2d(y, w, b, 3, Pad::Same).unwrap();
        assert_eq!(g.shape(z), vec![1, 8, 8]);
    }

    #[test]
    fn conv_rejects_non_integral_output_sizes() {
        let g = Graph::new();
        let x = g.input(&[1, 6, 6], vec![0.0; 36]);
        let w = g.input(&[1, 1, 3, 3], vec![0.0; 9]);
        let b = g.input(&[1, 1], vec![0.0]);
        let err = g.conv2d(x, w, b, 2, Pad::Same).unwrap_err();
        assert!(err.to_string().contains("non-integral output size"), "{err}");
    }

    #[test]
    fn conv_rejects_even_kernels_and_bad_bias() {
        let g = Graph::new();
        let x = g.input(&[1, 4, 4], vec![0.0; 16]);
        let w_even = g.input(&[1, 1, 2, 2], vec![0.0; 4]);
        let b = g.input(&[1, 1], vec![0.0]);
        assert!(g.conv2d(x, w_even, b, 1, Pad::Valid).is_err());
        let w = g.input(&[2, 1, 3, 3], vec![0.0; 18]);
        let b_short = g.input(&[1, 1], vec![0.0]);
        assert!(g.conv2d(x, w, b_short, 1, Pad::Valid).is_err());
    }

    #[test]
    fn grid_sample_hits_texels_exactly_at_integer_coordinates() {
        let g = Graph::new();
        let feat = g.input(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let pts = g.input(&[4, 2], vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y = g.grid_sample(feat, pts).unwrap();
        assert_eq!(g.values(y), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn grid_sample_midpoint_averages_four_texels() {
        let g = Graph::new();
        let feat = g.input(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let pts = g.input(&[1, 2], vec![0.5, 0.5]);
        let y = g.grid_sample(feat, pts).unwrap();
        assert_eq!(g.values(y), vec![2.5]);
    }

    #[test]
    fn grid_sample_clamps_out_of_range_points_to_the_border() {
        let g = Graph::new();
        let feat = g.input(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let pts = g.input(&[2, 2], vec![-5.0, -5.0, 9.0, 9.0]);
        let y = g.grid_sample(feat, pts).unwrap();
        assert_eq!(g.values(y), vec![1.0, 4.0]);
    }

    #[test]
    fn grid_sample_reproduces_bilinear_functions_exactly() {
        // f(x, y) = 2x + 3y + 1 stored per texel; bilinear interpolation of a
        // function that is affine in each axis is exact everywhere.
        let g = Graph::new();
        let mut vals = Vec::new();
        for y in 0..4 {
            for x in 0..5 {
                vals.push(2.0 * x as f64 + 3.0 * y as f64 + 1.0);
            }
        }
        let feat = g.input(&[1, 4, 5], vals);
        let pts = g.input(&[3, 2], vec![1.25, 2.75, 0.5, 0.0, 3.999, 2.001]);
        let y = g.grid_sample(feat, pts).unwrap();
        let v = g.values(y);
        assert_relative_eq!(v[0], 2.0 * 1.25 + 3.0 * 2.75 + 1.0, max_relative = 1e-12);
        assert_relative_eq!(v[1], 2.0 * 0.5 + 1.0, max_relative = 1e-12);
        assert_relative_eq!(v[2], 2.0 * 3.999 + 3.0 * 2.001 + 1.0, max_relative = 1e-12);
    }

    #[test]
    fn soft_argmax_of_a_uniform_volume_is_the_center() {
        let g = Graph::new();
        let x = g.input(&[4, 3, 5], vec![0.3; 60]);
        let y = g.soft_argmax_3d(x).unwrap();
        let v = g.values(y);
        assert_relative_eq!(v[0], 2.0, max_relative = 1e-12); // (5-1)/2
        assert_relative_eq!(v[1], 1.0, max_relative = 1e-12); // (3-1)/2
        assert_relative_eq!(v[2], 1.5, max_relative = 1e-12); // (4-1)/2
    }

    #[test]
    fn soft_argmax_saturates_onto_a_dominant_cell() {
        let g = Graph::new();
        let mut vals = vec![0.0; 3 * 4 * 5];
        // cell (z=2, y=1, x=3)
        vals[(2 * 4 + 1) * 5 + 3] = 1000.0;
        let x = g.input(&[3, 4, 5], vals);
        let y = g.soft_argmax_3d(x).unwrap();
        let v = g.values(y);
        assert!((v[0] - 3.0).abs() < 1e-6);
        assert!((v[1] - 1.0).abs() < 1e-6);
        assert!((v[2] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn soft_argmax_two_bin_example() {
        // p = softmax([0, ln 3]) = [1/4, 3/4]; expected depth = 0.75.
        let g = Graph::new();
        let x = g.input(&[2, 1, 1], vec![0.0, 3.0f64.ln()]);
        let y = g.soft_argmax_3d(x).unwrap();
        let v = g.values(y);
        assert_relative_eq!(v[2], 0.75, max_relative = 1e-12);
        assert_relative_eq!(v[0], 0.0, max_relative = 1e-12);
        assert_relative_eq!(v[1], 0.0, max_relative = 1e-12);
    }

    #[test]
    fn soft_argmax_stays_inside_the_coordinate_hull() {
        let g = Graph::new();
        let mut vals = Vec::with_capacity(2 * 3 * 4);
        let mut state = 1u64;
        for _ in 0..24 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            vals.push(((state >> 33) as f64 / (1u64 << 31) as f64 - 0.5) * 20.0);
        }
        let x = g.input(&[2, 3, 4], vals);
        let y = g.soft_argmax_3d(x).unwrap();
        let v = g.values(y);
        assert!(v[0] >= 0.0 && v[0] <= 3.0);
        assert!(v[1] >= 0.0 && v[1] <= 2.0);
        assert!(v[2] >= 0.0 && v[2] <= 1.0);
    }

    #[test]
    fn backward_of_sum_of_squares_doubles_the_input() {
        let g = Graph::new();
        let x = g.param(&[1, 1], vec![3.0]);
        let y = g.mul(x, x).unwrap();
        let loss = g.sum(y);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[6.0]);
    }

    #[test]
    fn backward_matches_hand_worked_matmul_gradients() {
        // loss = sum(A B) with A = [[1, 2]], B = [[3], [4]].
        // dA = [[3, 4]] (row sums of B), dB = [[1], [2]].
        let g = Graph::new();
        let a = g.param(&[1, 2], vec![1.0, 2.0]);
        let b = g.param(&[2, 1], vec![3.0, 4.0]);
        let y = g.matmul(a, b).unwrap();
        let loss = g.sum(y);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(a).unwrap(), &[3.0, 4.0]);
        assert_eq!(grads.get(b).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn backward_ignores_branches_detached_from_the_loss() {
        let g = Graph::new();
        let p = g.param(&[1, 1], vec![5.0]);
        let q = g.param(&[1, 1], vec![2.0]);
        let _dead = g.scale(p, 3.0);
        let loss = g.sum(g.mul(q, q).unwrap());
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(p).is_none());
        assert_eq!(grads.get(q).unwrap(), &[4.0]);
    }

    #[test]
    fn backward_requires_a_scalar_loss() {
        let g = Graph::new();
        let x = g.param(&[2, 1], vec![1.0, 2.0]);
        let err = g.backward(x).unwrap_err();
        assert!(err.to_string().contains("scalar"), "{err}");
    }

    #[test]
    fn backward_accumulates_when_a_value_feeds_two_paths() {
        // loss = sum(x * x) + sum(3 x) => dx = 2x + 3 = 9 at x = 3.
        let g = Graph::new();
        let x = g.param(&[1, 1], vec![3.0]);
        let sq = g.sum(g.mul(x, x).unwrap());
        let lin = g.sum(g.scale(x, 3.0));
        let loss = g.add(sq, lin).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[9.0]);
    }

    #[test]
    fn clamp_blocks_gradient_outside_the_window() {
        let g = Graph::new();
        let x = g.param(&[3, 1], vec![-2.0, 0.5, 2.0]);
        let y = g.clamp(x, 0.0, 1.0);
        let loss = g.sum(y);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn concat_slice_and_gather_round_trip() {
        let g = Graph::new();
        let a = g.input(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = g.input(&[2, 1], vec![5.0, 6.0]);
        let cat = g.concat_cols(&[a, b]).unwrap();
        assert_eq!(g.values(cat), vec![1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let back = g.slice_cols(cat, 0, 2).unwrap();
        assert_eq!(g.values(back), g.values(a));
        let rows = g.concat_rows(&[a, a]).unwrap();
        assert_eq!(g.shape(rows), vec![4, 2]);
        let mid = g.slice_rows(rows, 1, 3).unwrap();
        assert_eq!(g.values(mid), vec![3.0, 4.0, 1.0, 2.0]);
        let picked = g.gather_cols(cat, &[2, 0, 2]).unwrap();
        assert_eq!(g.values(picked), vec![5.0, 1.0, 5.0, 6.0, 3.0, 6.0]);
    }

    #[test]
    fn gather_cols_accumulates_gradients_for_repeated_indices() {
        let g = Graph::new();
        let x = g.param(&[1, 3], vec![1.0, 2.0, 3.0]);
        let y = g.gather_cols(x, &[0, 0, 2]).unwrap();
        let loss = g.sum(y);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[2.0, 0.0, 1.0]);
    }

    #[test]
    fn sum_axis_matches_hand_sums() {
        let g = Graph::new();
        let x = g.input(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let cols = g.sum_axis(x, 0).unwrap();
        assert_eq!(g.shape(cols), vec![1, 3]);
        assert_eq!(g.values(cols), vec![5.0, 7.0, 9.0]);
        let rows = g.sum_axis(x, 1).unwrap();
        assert_eq!(g.shape(rows), vec![2, 1]);
        assert_eq!(g.values(rows), vec![6.0, 15.0]);
        let m = g.mean_axis(x, 1).unwrap();
        assert_eq!(g.values(m), vec![2.0, 5.0]);
    }

    #[test]
    fn broadcast_ops_apply_per_row_and_per_column() {
        let g = Graph::new();
        let x = g.input(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let col = g.input(&[2, 1], vec![10.0, 20.0]);
        let row = g.input(&[1, 2], vec![2.0, 3.0]);
        assert_eq!(g.values(g.add_col(x, col).unwrap()), vec![11.0, 12.0, 23.0, 24.0]);
        assert_eq!(g.values(g.mul_col(x, col).unwrap()), vec![10.0, 20.0, 60.0, 80.0]);
        assert_eq!(g.values(g.mul_row(x, row).unwrap()), vec![2.0, 6.0, 6.0, 12.0]);
        let s = g.input(&[1, 1], vec![5.0]);
        assert_eq!(g.values(g.mul_scalar(x, s).unwrap()), vec![5.0, 10.0, 15.0, 20.0]);
    }

    #[test]
    fn shape_mismatches_name_the_operation() {
        let g = Graph::new();
        let a = g.input(&[2, 2], vec![0.0; 4]);
        let b = g.input(&[2, 3], vec![0.0; 6]);
        let err = g.add(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("add") && msg.contains("[2, 2]") && msg.contains("[2, 3]"), "{msg}");
        assert!(g.matmul(b, b).is_err());
        assert!(g.gather_cols(a, &[5]).is_err());
        assert!(g.slice_rows(a, 1, 1).is_err());
        assert!(g.reshape(a, &[3, 3]).is_err());
    }

    #[test]
    fn transpose_reverses_row_major_layout() {
        let g = Graph::new();
        let x = g.input(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let t = g.transpose(x);
        assert_eq!(g.shape(t), vec![3, 2]);
        assert_eq!(g.values(t), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn check_finite_flags_nan_and_infinity() {
        let g = Graph::new();
        let ok = g.input(&[1, 1], vec![1.0]);
        assert!(g.check_finite(ok, "x").is_ok());
        let bad = g.input(&[1, 1], vec![f64::NAN]);
        let err = g.check_finite(bad, "loss").unwrap_err();
        assert!(err.to_string().contains("loss"), "{err}");
    }
}
