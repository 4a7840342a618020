use std::sync::Arc;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Norm floor used by [`Tape::cosine_similarity`].
pub const COSINE_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    AddRowBroadcast(Var, Var),
    MatMul(Var, Var),
    Affine { x: Var, w: Var, b: Option<Var> },
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    Concat(Vec<Var>),
    StackRows(Vec<Var>),
    Row(Var, usize),
    Slice(Var, usize),
    Reshape(Var),
    Softmax(Var),
    LogSoftmax(Var),
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
    MaxOverTime { x: Var, argmax: Vec<usize> },
    Cosine { a: Var, b: Var, na: f64, nb: f64 },
    Gather { table: Var, ids: Vec<usize> },
    Conv1d { x: Var, w: Var, b: Var, width: usize },
    Dropout { x: Var, mask: Vec<f64> },
    StraightThrough(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::AddRowBroadcast(..) => "add_row_broadcast",
            Op::MatMul(..) => "matmul",
            Op::Affine { .. } => "affine",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Abs(..) => "abs",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::MeanRows(..) => "mean_rows",
            Op::Concat(..) => "concat",
            Op::StackRows(..) => "stack_rows",
            Op::Row(..) => "row",
            Op::Slice(..) => "slice",
            Op::Reshape(..) => "reshape",
            Op::Softmax(..) => "softmax",
            Op::LogSoftmax(..) => "log_softmax",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::MaxOverTime { .. } => "max_over_time",
            Op::Cosine { .. } => "cosine",
            Op::Gather { .. } => "gather",
            Op::Conv1d { .. } => "conv1d",
            Op::Dropout { .. } => "dropout",
            Op::StraightThrough(..) => "straight_through",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => vec![*a, *b],
            Op::AddRowBroadcast(a, b) => vec![*a, *b],
            Op::Cosine { a, b, .. } => vec![*a, *b],
            Op::Affine { x, w, b } => {
                let mut v = vec![*x, *w];
                v.extend(b);
                v
            }
            Op::Conv1d { x, w, b, .. } => vec![*x, *w, *b],
            Op::Concat(vs) | Op::StackRows(vs) => vs.clone(),
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Abs(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::MeanRows(a)
            | Op::Row(a, _)
            | Op::Slice(a, _)
            | Op::Reshape(a)
            | Op::Softmax(a)
            | Op::LogSoftmax(a)
            | Op::StraightThrough(a) => vec![*a],
            Op::CrossEntropy { logits, .. } => vec![*logits],
            Op::MaxOverTime { x, .. } => vec![*x],
            Op::Gather { table, .. } => vec![*table],
            Op::Dropout { x, .. } => vec![*x],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Arc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run operation record.
///
/// Every op appends one node whose inputs were recorded earlier, so the node
/// list is already in topological order and `backward` walks it in reverse.
/// Build a fresh tape for every forward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Op names in recording order.
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes.iter().map(|n| n.op.name()).collect()
    }

    /// Input handles of a recorded op.
    pub fn op_inputs(&self, v: Var) -> Vec<Var> {
        self.nodes[v.0].op.inputs()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.shared_leaf(Arc::new(value), requires_grad)
    }

    /// Leaf backed by an existing shared buffer (parameters are registered this way).
    pub fn shared_leaf(&mut self, value: Arc<Tensor>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` root with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    // ---- elementwise -------------------------------------------------------

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return dim_err(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            ));
        }
        Ok(())
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(a, b, op.name())?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(out, op))
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let x = self.value(a);
        let out = Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())
            .expect("map preserves shape");
        self.push(out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Add(a, b), |p, q| p + q)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Sub(a, b), |p, q| p - q)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Mul(a, b), |p, q| p * q)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |v| v * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::AddScalar(a), |v| v + c)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Numeric("log of a non-positive value".into()));
        }
        Ok(self.map(a, Op::Log(a), f64::ln))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.map(a, Op::Abs(a), f64::abs)
    }

    /// `m[i, :] + v` for every row of a matrix.
    pub fn add_row_broadcast(&mut self, m: Var, v: Var) -> Result<Var> {
        let (rows, cols) = self.value(m).rows_cols()?;
        if self.value(v).len() != cols {
            return dim_err(format!("row broadcast: {} vs {cols} columns", self.value(v).len()));
        }
        let (x, y) = (self.value(m), self.value(v));
        let mut data = x.data().to_vec();
        for r in 0..rows {
            for (d, &b) in data[r * cols..(r + 1) * cols].iter_mut().zip(y.data()) {
                *d += b;
            }
        }
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(out, Op::AddRowBroadcast(m, v)))
    }

    // ---- linear algebra ----------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return dim_err(format!("matmul {sa:?} x {sb:?}"));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let xv = x[i * k + p];
                if xv == 0.0 {
                    continue;
                }
                for (o, &yv) in orow.iter_mut().zip(&y[p * n..(p + 1) * n]) {
                    *o += xv * yv;
                }
            }
        }
        let out = Tensor::matrix(m, n, out)?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `x Wᵀ + b` where `w` is `[out × in]` and `x` is `[in]` or `[rows × in]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let sw = self.shape(w).to_vec();
        if sw.len() != 2 {
            return dim_err(format!("affine weight must be a matrix, got {sw:?}"));
        }
        let (n_out, n_in) = (sw[0], sw[1]);
        let xs = self.value(x);
        let (rows, cols) = xs.rows_cols()?;
        if cols != n_in {
            return dim_err(format!("affine input width {cols} vs weight {sw:?}"));
        }
        if let Some(b) = b {
            if self.value(b).len() != n_out {
                return dim_err(format!("affine bias length {} vs {n_out}", self.value(b).len()));
            }
        }
        let wd = self.value(w).data();
        let xd = xs.data();
        let mut out = vec![0.0; rows * n_out];
        for r in 0..rows {
            let xr = &xd[r * n_in..(r + 1) * n_in];
            for o in 0..n_out {
                let wr = &wd[o * n_in..(o + 1) * n_in];
                out[r * n_out + o] = dot(wr, xr);
            }
        }
        if let Some(b) = b {
            let bd = self.value(b).data();
            for r in 0..rows {
                for o in 0..n_out {
                    out[r * n_out + o] += bd[o];
                }
            }
        }
        let shape = if xs.ndim() == 2 { vec![rows, n_out] } else { vec![n_out] };
        let out = Tensor::new(shape, out)?;
        Ok(self.push(out, Op::Affine { x, w, b }))
    }

    // ---- reductions and reshaping -----------------------------------------

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let s = x.data().iter().sum::<f64>() / x.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Column means of `[T × d]`, giving `[d]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = x.rows_cols()?;
        let mut out = vec![0.0; cols];
        for r in 0..rows {
            for (o, &v) in out.iter_mut().zip(x.row(r)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= rows as f64);
        Ok(self.push(Tensor::vector(out), Op::MeanRows(a)))
    }

    /// Concatenate vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return dim_err("concat of nothing");
        }
        let mut data = Vec::new();
        for &p in parts {
            if self.value(p).ndim() > 1 {
                return dim_err("concat expects vectors");
            }
            data.extend_from_slice(self.value(p).data());
        }
        Ok(self.push(Tensor::vector(data), Op::Concat(parts.to_vec())))
    }

    /// Stack equal-length vectors into the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let Some(&first) = rows.first() else {
            return dim_err("stack of no rows");
        };
        let cols = self.value(first).len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            let v = self.value(r);
            if v.ndim() > 1 || v.len() != cols {
                return dim_err(format!("stack_rows: row of shape {:?}, expected [{cols}]", v.shape()));
            }
            data.extend_from_slice(v.data());
        }
        let out = Tensor::matrix(rows.len(), cols, data)?;
        Ok(self.push(out, Op::StackRows(rows.to_vec())))
    }

    pub fn row(&mut self, m: Var, i: usize) -> Result<Var> {
        let x = self.value(m);
        let (rows, _) = x.rows_cols()?;
        if x.ndim() != 2 || i >= rows {
            return Err(Error::Index(format!("row {i} of {:?}", x.shape())));
        }
        let out = Tensor::vector(x.row(i).to_vec());
        Ok(self.push(out, Op::Row(m, i)))
    }

    /// `len` entries of a vector starting at `start`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if x.ndim() > 1 || start + len > x.len() || len == 0 {
            return dim_err(format!("slice [{start}, {}) of {:?}", start + len, x.shape()));
        }
        let out = Tensor::vector(x.data()[start..start + len].to_vec());
        Ok(self.push(out, Op::Slice(a, start)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    // ---- softmax family ----------------------------------------------------

    fn check_finite(&self, a: Var, what: &str) -> Result<()> {
        if self.value(a).data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("{what}: non-finite input")));
        }
        Ok(())
    }

    /// Row-wise softmax (a vector is one row), max-subtracted.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        self.check_finite(a, "softmax")?;
        let x = self.value(a);
        let (rows, cols) = x.rows_cols()?;
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.extend(softmax(x.row_view(r, cols)));
        }
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Softmax(a)))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        self.check_finite(a, "log_softmax")?;
        let x = self.value(a);
        let (rows, cols) = x.rows_cols()?;
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.extend(log_softmax(x.row_view(r, cols)));
        }
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(out, Op::LogSoftmax(a)))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of `logits`.
    pub fn cross_entropy_logits(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        self.check_finite(logits, "cross_entropy")?;
        let x = self.value(logits);
        let (rows, cols) = x.rows_cols()?;
        if targets.len() != rows {
            return dim_err(format!("{} targets for {rows} rows", targets.len()));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= cols) {
            return Err(Error::Index(format!("target {t} out of range for {cols} classes")));
        }
        let mut probs = Vec::with_capacity(rows * cols);
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let lp = log_softmax(x.row_view(r, cols));
            loss -= lp[t];
            probs.extend(lp.iter().map(|v| v.exp()));
        }
        let out = Tensor::scalar(loss / rows as f64);
        Ok(self.push(
            out,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    // ---- sequence ops ------------------------------------------------------

    /// Per-column maximum of `[T × d]`; gradient goes to the first argmax.
    pub fn max_over_time(&mut self, x: Var) -> Result<Var> {
        let xs = self.value(x);
        if xs.ndim() != 2 {
            return dim_err(format!("max_over_time expects [T × d], got {:?}", xs.shape()));
        }
        let (rows, cols) = xs.rows_cols()?;
        let mut best = vec![0usize; cols];
        let mut out = xs.row(0).to_vec();
        for r in 1..rows {
            for (c, &v) in xs.row(r).iter().enumerate() {
                if v > out[c] {
                    out[c] = v;
                    best[c] = r;
                }
            }
        }
        Ok(self.push(Tensor::vector(out), Op::MaxOverTime { x, argmax: best }))
    }

    /// Cosine similarity of two vectors; norms are floored at [`COSINE_EPS`].
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "cosine")?;
        if self.value(a).ndim() > 1 {
            return dim_err("cosine expects vectors");
        }
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let na = dot(x, x).sqrt().max(COSINE_EPS);
        let nb = dot(y, y).sqrt().max(COSINE_EPS);
        let c = dot(x, y) / (na * nb);
        Ok(self.push(Tensor::scalar(c), Op::Cosine { a, b, na, nb }))
    }

    /// Row lookup into `[V × d]`, giving `[ids.len() × d]`.
    pub fn embedding_gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if t.ndim() != 2 {
            return dim_err("embedding table must be a matrix");
        }
        if ids.is_empty() {
            return dim_err("gather of no ids");
        }
        let (rows, cols) = t.rows_cols()?;
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(Error::Index(format!("id {id} outside table of {rows} rows")));
            }
            data.extend_from_slice(t.row(id));
        }
        let out = Tensor::matrix(ids.len(), cols, data)?;
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Valid 1-D convolution over time.
    ///
    /// `x` is `[T × d]`, `w` is `[filters × (width·d)]` laid out window-row-major,
    /// `b` is `[filters]`. Output is `[(T − width + 1) × filters]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, width: usize) -> Result<Var> {
        let xs = self.value(x);
        if xs.ndim() != 2 {
            return dim_err("conv1d input must be [T × d]");
        }
        let (t, d) = xs.rows_cols()?;
        let sw = self.shape(w);
        if width == 0 || sw.len() != 2 || sw[1] != width * d {
            return dim_err(format!("conv1d weight {sw:?} for width {width}, dim {d}"));
        }
        let filters = sw[0];
        if self.value(b).len() != filters {
            return dim_err("conv1d bias length");
        }
        if t < width {
            return dim_err(format!("sequence of {t} shorter than filter width {width}"));
        }
        let steps = t - width + 1;
        let (xd, wd, bd) = (xs.data(), self.value(w).data(), self.value(b).data());
        let span = width * d;
        let mut out = vec![0.0; steps * filters];
        for s in 0..steps {
            let window = &xd[s * d..s * d + span];
            for f in 0..filters {
                out[s * filters + f] = bd[f] + dot(&wd[f * span..(f + 1) * span], window);
            }
        }
        let out = Tensor::matrix(steps, filters, out)?;
        Ok(self.push(out, Op::Conv1d { x, w, b, width }))
    }

    /// Multiply by a fixed mask (already scaled by `1 / (1 − p)` where kept).
    pub fn dropout_with_mask(&mut self, x: Var, mask: &[f64]) -> Result<Var> {
        if mask.len() != self.value(x).len() {
            return dim_err("dropout mask length");
        }
        let xs = self.value(x);
        let data = xs.data().iter().zip(mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(xs.shape().to_vec(), data)?;
        Ok(self.push(
            out,
            Op::Dropout {
                x,
                mask: mask.to_vec(),
            },
        ))
    }

    /// Forward: `one_hot(argmax(y))`. Backward: identity.
    pub fn straight_through(&mut self, y: Var) -> Result<Var> {
        let ys = self.value(y);
        if ys.ndim() > 1 {
            return dim_err("straight_through expects a vector");
        }
        let out = Tensor::one_hot(ys.len(), ys.argmax());
        Ok(self.push(out, Op::StraightThrough(y)))
    }

    // ---- backward ----------------------------------------------------------

    /// Reverse-mode sweep from a scalar `root`.
    ///
    /// Every `requires_grad` node gets a gradient buffer, zeroed first, so nodes
    /// the root does not depend on end with zeros. Calling this twice on the
    /// same tape gives bit-identical results.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if root.0 >= self.nodes.len() {
            return Err(Error::Contract("backward root is not on this tape".into()));
        }
        if !self.value(root).is_scalar() {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = self
            .nodes
            .iter()
            .map(|n| n.requires_grad.then(|| Tensor::zeros(n.value.shape())))
            .collect();
        if let Some(g) = grads[root.0].as_mut() {
            g.data_mut()[0] = 1.0;
        }
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !matches!(self.nodes[i].op, Op::Leaf) {
                self.propagate(i, g.data(), &mut grads);
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        let val = |v: Var| self.nodes[v.0].value.data();
        // Adds into an input's buffer if that input tracks gradients.
        macro_rules! acc {
            ($v:expr, |$buf:ident| $body:expr) => {
                if let Some(t) = grads[$v.0].as_mut() {
                    let $buf = t.data_mut();
                    $body
                }
            };
        }
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc!(a, |d| axpy(d, g, 1.0));
                acc!(b, |d| axpy(d, g, 1.0));
            }
            Op::Sub(a, b) => {
                acc!(a, |d| axpy(d, g, 1.0));
                acc!(b, |d| axpy(d, g, -1.0));
            }
            Op::Mul(a, b) => {
                let (x, y) = (val(*a), val(*b));
                acc!(a, |d| for k in 0..d.len() {
                    d[k] += g[k] * y[k];
                });
                acc!(b, |d| for k in 0..d.len() {
                    d[k] += g[k] * x[k];
                });
            }
            Op::Scale(a, c) => acc!(a, |d| axpy(d, g, *c)),
            Op::AddScalar(a) => acc!(a, |d| axpy(d, g, 1.0)),
            Op::AddRowBroadcast(m, v) => {
                acc!(m, |d| axpy(d, g, 1.0));
                acc!(v, |d| {
                    let cols = d.len();
                    for (k, gv) in g.iter().enumerate() {
                        d[k % cols] += gv;
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (x, y) = (val(*a), val(*b));
                acc!(a, |d| for r in 0..m {
                    for p in 0..k {
                        d[r * k + p] += dot(&g[r * n..(r + 1) * n], &y[p * n..(p + 1) * n]);
                    }
                });
                acc!(b, |d| for r in 0..m {
                    for p in 0..k {
                        let xv = x[r * k + p];
                        if xv != 0.0 {
                            axpy(&mut d[p * n..(p + 1) * n], &g[r * n..(r + 1) * n], xv);
                        }
                    }
                });
            }
            Op::Affine { x, w, b } => {
                let sw = self.nodes[w.0].value.shape();
                let (n_out, n_in) = (sw[0], sw[1]);
                let rows = g.len() / n_out;
                let (xd, wd) = (val(*x), val(*w));
                acc!(x, |d| for r in 0..rows {
                    for o in 0..n_out {
                        let go = g[r * n_out + o];
                        if go != 0.0 {
                            axpy(&mut d[r * n_in..(r + 1) * n_in], &wd[o * n_in..(o + 1) * n_in], go);
                        }
                    }
                });
                acc!(w, |d| for r in 0..rows {
                    for o in 0..n_out {
                        let go = g[r * n_out + o];
                        if go != 0.0 {
                            axpy(&mut d[o * n_in..(o + 1) * n_in], &xd[r * n_in..(r + 1) * n_in], go);
                        }
                    }
                });
                if let Some(b) = b {
                    acc!(b, |d| for r in 0..rows {
                        axpy(d, &g[r * n_out..(r + 1) * n_out], 1.0);
                    });
                }
            }
            Op::Sigmoid(a) => acc!(a, |d| for k in 0..d.len() {
                d[k] += g[k] * out[k] * (1.0 - out[k]);
            }),
            Op::Tanh(a) => acc!(a, |d| for k in 0..d.len() {
                d[k] += g[k] * (1.0 - out[k] * out[k]);
            }),
            Op::Exp(a) => acc!(a, |d| for k in 0..d.len() {
                d[k] += g[k] * out[k];
            }),
            Op::Log(a) => {
                let x = val(*a);
                acc!(a, |d| for k in 0..d.len() {
                    d[k] += g[k] / x[k];
                })
            }
            Op::Abs(a) => {
                let x = val(*a);
                acc!(a, |d| for k in 0..d.len() {
                    d[k] += g[k] * sign(x[k]);
                })
            }
            Op::Sum(a) => acc!(a, |d| d.iter_mut().for_each(|v| *v += g[0])),
            Op::Mean(a) => acc!(a, |d| {
                let s = g[0] / d.len() as f64;
                d.iter_mut().for_each(|v| *v += s);
            }),
            Op::MeanRows(a) => acc!(a, |d| {
                let cols = g.len();
                let rows = d.len() / cols;
                for r in 0..rows {
                    axpy(&mut d[r * cols..(r + 1) * cols], g, 1.0 / rows as f64);
                }
            }),
            Op::Concat(parts) | Op::StackRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.nodes[p.0].value.len();
                    acc!(p, |d| axpy(d, &g[off..off + n], 1.0));
                    off += n;
                }
            }
            Op::Row(m, r) => acc!(m, |d| {
                let cols = g.len();
                axpy(&mut d[r * cols..(r + 1) * cols], g, 1.0);
            }),
            Op::Slice(a, start) => acc!(a, |d| axpy(&mut d[*start..*start + g.len()], g, 1.0)),
            Op::Reshape(a) => acc!(a, |d| axpy(d, g, 1.0)),
            Op::Softmax(a) => acc!(a, |d| {
                let cols = *node.value.shape().last().unwrap_or(&1);
                for r in 0..g.len() / cols {
                    let (gr, yr) = (&g[r * cols..(r + 1) * cols], &out[r * cols..(r + 1) * cols]);
                    let s = dot(gr, yr);
                    for c in 0..cols {
                        d[r * cols + c] += yr[c] * (gr[c] - s);
                    }
                }
            }),
            Op::LogSoftmax(a) => acc!(a, |d| {
                let cols = *node.value.shape().last().unwrap_or(&1);
                for r in 0..g.len() / cols {
                    let gr = &g[r * cols..(r + 1) * cols];
                    let s: f64 = gr.iter().sum();
                    for c in 0..cols {
                        d[r * cols + c] += gr[c] - out[r * cols + c].exp() * s;
                    }
                }
            }),
            Op::CrossEntropy { logits, targets, probs } => acc!(logits, |d| {
                let rows = targets.len();
                let cols = probs.len() / rows;
                let scale = g[0] / rows as f64;
                for (r, &t) in targets.iter().enumerate() {
                    for c in 0..cols {
                        let onehot = if c == t { 1.0 } else { 0.0 };
                        d[r * cols + c] += scale * (probs[r * cols + c] - onehot);
                    }
                }
            }),
            Op::MaxOverTime { x, argmax } => acc!(x, |d| {
                let cols = argmax.len();
                for (c, &r) in argmax.iter().enumerate() {
                    d[r * cols + c] += g[c];
                }
            }),
            Op::Cosine { a, b, na, nb } => {
                let (x, y) = (val(*a), val(*b));
                let c = out[0];
                let gc = g[0];
                acc!(a, |d| cosine_grad(d, x, y, *na, *nb, c, gc));
                acc!(b, |d| cosine_grad(d, y, x, *nb, *na, c, gc));
            }
            Op::Gather { table, ids } => acc!(table, |d| {
                let cols = g.len() / ids.len();
                for (t, &id) in ids.iter().enumerate() {
                    axpy(&mut d[id * cols..(id + 1) * cols], &g[t * cols..(t + 1) * cols], 1.0);
                }
            }),
            Op::Conv1d { x, w, b, width } => {
                let (t, dim) = (self.nodes[x.0].value.shape()[0], self.nodes[x.0].value.shape()[1]);
                let filters = self.nodes[b.0].value.len();
                let span = width * dim;
                let steps = t - width + 1;
                let (xd, wd) = (val(*x), val(*w));
                acc!(x, |d| for s in 0..steps {
                    for f in 0..filters {
                        let gv = g[s * filters + f];
                        if gv != 0.0 {
                            axpy(&mut d[s * dim..s * dim + span], &wd[f * span..(f + 1) * span], gv);
                        }
                    }
                });
                acc!(w, |d| for s in 0..steps {
                    for f in 0..filters {
                        let gv = g[s * filters + f];
                        if gv != 0.0 {
                            axpy(&mut d[f * span..(f + 1) * span], &xd[s * dim..s * dim + span], gv);
                        }
                    }
                });
                acc!(b, |d| for s in 0..steps {
                    axpy(d, &g[s * filters..(s + 1) * filters], 1.0);
                });
            }
            Op::Dropout { x, mask } => acc!(x, |d| for k in 0..d.len() {
                d[k] += g[k] * mask[k];
            }),
            Op::StraightThrough(a) => acc!(a, |d| axpy(d, g, 1.0)),
        }
    }
}

trait RowView {
    fn row_view(&self, r: usize, cols: usize) -> &[f64];
}

impl RowView for Tensor {
    fn row_view(&self, r: usize, cols: usize) -> &[f64] {
        &self.data()[r * cols..(r + 1) * cols]
    }
}

fn cosine_grad(d: &mut [f64], x: &[f64], y: &[f64], nx: f64, ny: f64, c: f64, g: f64) {
    // The norm only varies with x when it is above the floor.
    let norm_live = dot(x, x).sqrt() >= COSINE_EPS;
    for k in 0..d.len() {
        let mut v = y[k] / (nx * ny);
        if norm_live {
            v -= c * x[k] / (nx * nx);
        }
        d[k] += g * v;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(d: &mut [f64], x: &[f64], a: f64) {
    for (o, v) in d.iter_mut().zip(x) {
        *o += a * v;
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
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

/// Max-subtracted softmax of one row.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}
