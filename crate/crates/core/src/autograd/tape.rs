use std::sync::Arc;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One term of a [`Tape::scatter_blocks`] map:
/// `out[dst, block*d + c] += coef * input[src, c]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockEntry {
    pub dst: usize,
    pub src: usize,
    pub block: usize,
    pub coef: f64,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRowBias(Var, Var),
    Scale(Var, f64),
    ScaleRows(Var, Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    SegmentSoftmax {
        input: Var,
        segments: Arc<[usize]>,
        num_segments: usize,
    },
    SegmentMean {
        input: Var,
        segments: Arc<[usize]>,
        counts: Vec<usize>,
    },
    GatherRows {
        input: Var,
        index: Arc<[usize]>,
    },
    ScatterAddRows {
        input: Var,
        index: Arc<[usize]>,
    },
    ScatterBlocks {
        input: Var,
        entries: Arc<[BlockEntry]>,
    },
    ScatterWeightedRows {
        weights: Var,
        input: Var,
        dst: Arc<[usize]>,
        src: Arc<[usize]>,
    },
    GatherPairSum {
        input: Var,
        first: Arc<[usize]>,
        second: Arc<[usize]>,
    },
    Transpose(Var),
    ConcatCols(Vec<Var>),
    MeanAll(Var),
    SumAll(Var),
    Reshape(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        label: usize,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    keep_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Reverse-mode tape. Every primitive appends one node; `backward` walks the
/// nodes in reverse recording order, so inputs always precede outputs.
///
/// Gradients are kept for leaves created with `requires_grad` and for any
/// node marked with [`Tape::retain_grad`]. Repeated `backward` calls
/// accumulate into those buffers.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn c_gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the strides describe in-bounds views of `a` (m×k), `b` (k×n)
    // and the row-major `c` (m×n); callers derive them from tensor shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn accumulator<'a>(adj: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'a mut Vec<f64> {
    let len = nodes[v.0].value.len();
    adj[v.0].get_or_insert_with(|| vec![0.0; len])
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

    /// Records a leaf. Leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: requires_grad,
            keep_grad: requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
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

    /// Keep the gradient of an intermediate node after `backward`.
    pub fn retain_grad(&mut self, v: Var) {
        self.nodes[v.0].keep_grad = true;
    }

    /// Accumulated gradient of `v` (zeros if nothing reached it).
    pub fn grad(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        match &node.grad {
            Some(g) => Tensor::new(node.value.shape().to_vec(), g.clone())
                .expect("gradient buffer matches value shape"),
            None => Tensor::zeros(node.value.shape().to_vec()),
        }
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    /// Smallest `|x|` fed into any ReLU or LeakyReLU on this tape. Finite
    /// difference checks need this margin to stay clear of the kinks.
    pub fn min_abs_kink_input(&self) -> f64 {
        let mut min = f64::INFINITY;
        for node in &self.nodes {
            if let Op::Relu(a) | Op::LeakyRelu(a, _) = node.op {
                for &x in self.nodes[a.0].value.data() {
                    min = min.min(x.abs());
                }
            }
        }
        min
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if cfg!(debug_assertions) && !value.is_finite() {
            return Err(Error::NonFinite(op_name.to_string()));
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            keep_grad: false,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn matrix_dims(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    fn require_matrix(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let shape = self.shape(v);
        if shape.len() != 2 {
            return Err(Error::shape(op, shape, &[0, 0]));
        }
        Ok((shape[0], shape[1]))
    }

    fn check_same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.require_matrix("matmul", a)?;
        let (k2, n) = self.require_matrix("matmul", b)?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        c_gemm(
            m,
            k,
            n,
            self.value(a).data(),
            k as isize,
            1,
            self.value(b).data(),
            n as isize,
            1,
            &mut out,
            0.0,
        );
        let value = Tensor::new(vec![m, n], out)?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("add", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        self.push("add", value, Op::Add(a, b), &[a, b])
    }

    /// Adds a bias vector (any shape with `cols` elements) to every row.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (_, cols) = self.require_matrix("add_row_bias", a)?;
        if self.value(bias).len() != cols {
            return Err(Error::shape("add_row_bias", self.shape(a), self.shape(bias)));
        }
        let b = self.value(bias).data();
        let data = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + b[i % cols])
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        self.push("add_row_bias", value, Op::AddRowBias(a, bias), &[a, bias])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x * s);
        self.push("scale", value, Op::Scale(a, s), &[a])
    }

    /// Multiplies row `r` of `a` by `s[r]`; `s` has one entry per row.
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Result<Var> {
        let (rows, cols) = self.require_matrix("scale_rows", a)?;
        if self.value(s).len() != rows {
            return Err(Error::shape("scale_rows", self.shape(a), self.shape(s)));
        }
        let sv = self.value(s).data();
        let data = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x * sv[i / cols.max(1)])
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        self.push("scale_rows", value, Op::ScaleRows(a, s), &[a, s])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push("relu", value, Op::Relu(a), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push("leaky_relu", value, Op::LeakyRelu(a, slope), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::exp);
        self.push("exp", value, Op::Exp(a), &[a])
    }

    fn check_segments(&self, op: &'static str, a: Var, segments: &[usize], num_segments: usize) -> Result<()> {
        let rows = self.value(a).rows();
        if segments.len() != rows {
            return Err(Error::shape(op, self.shape(a), &[segments.len()]));
        }
        if let Some((pos, &s)) = segments.iter().enumerate().find(|(_, &s)| s >= num_segments) {
            return Err(Error::Index(format!(
                "{op}: segment id {s} at row {pos} out of range for {num_segments} segments"
            )));
        }
        Ok(())
    }

    /// Softmax over the rows sharing a segment id, independently per column.
    pub fn segment_softmax(&mut self, a: Var, segments: Arc<[usize]>, num_segments: usize) -> Result<Var> {
        self.require_matrix("segment_softmax", a)?;
        self.check_segments("segment_softmax", a, &segments, num_segments)?;
        let (rows, cols) = self.matrix_dims(a);
        let x = self.value(a).data();
        let mut max = vec![f64::NEG_INFINITY; num_segments * cols];
        for r in 0..rows {
            let s = segments[r];
            for c in 0..cols {
                let m = &mut max[s * cols + c];
                *m = m.max(x[r * cols + c]);
            }
        }
        let mut out = vec![0.0; rows * cols];
        let mut denom = vec![0.0; num_segments * cols];
        for r in 0..rows {
            let s = segments[r];
            for c in 0..cols {
                let e = (x[r * cols + c] - max[s * cols + c]).exp();
                out[r * cols + c] = e;
                denom[s * cols + c] += e;
            }
        }
        for r in 0..rows {
            let s = segments[r];
            for c in 0..cols {
                out[r * cols + c] /= denom[s * cols + c];
            }
        }
        let value = Tensor::new(self.shape(a).to_vec(), out)?;
        self.push(
            "segment_softmax",
            value,
            Op::SegmentSoftmax {
                input: a,
                segments,
                num_segments,
            },
            &[a],
        )
    }

    /// Row mean per segment; empty segments produce zero rows.
    pub fn segment_mean(&mut self, a: Var, segments: Arc<[usize]>, num_segments: usize) -> Result<Var> {
        self.require_matrix("segment_mean", a)?;
        self.check_segments("segment_mean", a, &segments, num_segments)?;
        let (rows, cols) = self.matrix_dims(a);
        let x = self.value(a).data();
        let mut counts = vec![0usize; num_segments];
        let mut out = vec![0.0; num_segments * cols];
        for r in 0..rows {
            let s = segments[r];
            counts[s] += 1;
            for c in 0..cols {
                out[s * cols + c] += x[r * cols + c];
            }
        }
        for s in 0..num_segments {
            if counts[s] > 0 {
                let inv = counts[s] as f64;
                for v in &mut out[s * cols..(s + 1) * cols] {
                    *v /= inv;
                }
            }
        }
        let value = Tensor::new(vec![num_segments, cols], out)?;
        self.push(
            "segment_mean",
            value,
            Op::SegmentMean {
                input: a,
                segments,
                counts,
            },
            &[a],
        )
    }

    pub fn gather_rows(&mut self, a: Var, index: Arc<[usize]>) -> Result<Var> {
        let (rows, cols) = self.require_matrix("gather_rows", a)?;
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(Error::Index(format!("gather_rows: row {bad} out of range for {rows} rows")));
        }
        let x = self.value(a).data();
        let mut out = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            out.extend_from_slice(&x[i * cols..(i + 1) * cols]);
        }
        let value = Tensor::new(vec![index.len(), cols], out)?;
        self.push("gather_rows", value, Op::GatherRows { input: a, index }, &[a])
    }

    /// `out[index[r]] += a[r]` into a zero matrix with `num_rows` rows.
    pub fn scatter_add_rows(&mut self, a: Var, index: Arc<[usize]>, num_rows: usize) -> Result<Var> {
        let (rows, cols) = self.require_matrix("scatter_add_rows", a)?;
        if index.len() != rows {
            return Err(Error::shape("scatter_add_rows", self.shape(a), &[index.len()]));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= num_rows) {
            return Err(Error::Index(format!(
                "scatter_add_rows: row {bad} out of range for {num_rows} rows"
            )));
        }
        let x = self.value(a).data();
        let mut out = vec![0.0; num_rows * cols];
        for (r, &i) in index.iter().enumerate() {
            for c in 0..cols {
                out[i * cols + c] += x[r * cols + c];
            }
        }
        let value = Tensor::new(vec![num_rows, cols], out)?;
        self.push("scatter_add_rows", value, Op::ScatterAddRows { input: a, index }, &[a])
    }

    /// Sparse linear map into a `num_rows × (num_blocks·cols)` matrix,
    /// applying `entries` in order.
    pub fn scatter_blocks(
        &mut self,
        a: Var,
        entries: Arc<[BlockEntry]>,
        num_rows: usize,
        num_blocks: usize,
    ) -> Result<Var> {
        let (rows, cols) = self.require_matrix("scatter_blocks", a)?;
        for e in entries.iter() {
            if e.src >= rows || e.dst >= num_rows || e.block >= num_blocks {
                return Err(Error::Index(format!(
                    "scatter_blocks: entry {e:?} out of range ({rows} input rows, {num_rows} output rows, {num_blocks} blocks)"
                )));
            }
        }
        let width = num_blocks * cols;
        let x = self.value(a).data();
        let mut out = vec![0.0; num_rows * width];
        for e in entries.iter() {
            let src = &x[e.src * cols..(e.src + 1) * cols];
            let dst = &mut out[e.dst * width + e.block * cols..e.dst * width + (e.block + 1) * cols];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += e.coef * s;
            }
        }
        let value = Tensor::new(vec![num_rows, width], out)?;
        self.push("scatter_blocks", value, Op::ScatterBlocks { input: a, entries }, &[a])
    }

    /// Sparse-dense product: `out[dst[e]] += weights[e] * input[src[e]]` into
    /// a zero matrix with `num_rows` rows; `weights` has one entry per edge.
    pub fn scatter_weighted_rows(
        &mut self,
        weights: Var,
        input: Var,
        dst: Arc<[usize]>,
        src: Arc<[usize]>,
        num_rows: usize,
    ) -> Result<Var> {
        let (rows, cols) = self.require_matrix("scatter_weighted_rows", input)?;
        if dst.len() != src.len() || self.value(weights).len() != dst.len() {
            return Err(Error::shape("scatter_weighted_rows", self.shape(weights), &[dst.len(), src.len()]));
        }
        if let Some(&bad) = src.iter().find(|&&i| i >= rows) {
            return Err(Error::Index(format!("scatter_weighted_rows: source row {bad} out of range for {rows} rows")));
        }
        if let Some(&bad) = dst.iter().find(|&&i| i >= num_rows) {
            return Err(Error::Index(format!(
                "scatter_weighted_rows: target row {bad} out of range for {num_rows} rows"
            )));
        }
        let x = self.value(input).data();
        let w = self.value(weights).data();
        let mut out = vec![0.0; num_rows * cols];
        for e in 0..dst.len() {
            let row = &x[src[e] * cols..(src[e] + 1) * cols];
            for (o, v) in out[dst[e] * cols..(dst[e] + 1) * cols].iter_mut().zip(row) {
                *o += w[e] * v;
            }
        }
        let value = Tensor::new(vec![num_rows, cols], out)?;
        self.push(
            "scatter_weighted_rows",
            value,
            Op::ScatterWeightedRows {
                weights,
                input,
                dst,
                src,
            },
            &[weights, input],
        )
    }

    /// `out[e] = input[first[e], 0] + input[second[e], 1]` for an `N × 2`
    /// input; the result is a column with one row per index pair.
    pub fn gather_pair_sum(&mut self, input: Var, first: Arc<[usize]>, second: Arc<[usize]>) -> Result<Var> {
        let (rows, cols) = self.require_matrix("gather_pair_sum", input)?;
        if cols != 2 || first.len() != second.len() {
            return Err(Error::shape("gather_pair_sum", self.shape(input), &[first.len(), second.len()]));
        }
        if let Some(&bad) = first.iter().chain(second.iter()).find(|&&i| i >= rows) {
            return Err(Error::Index(format!("gather_pair_sum: row {bad} out of range for {rows} rows")));
        }
        let x = self.value(input).data();
        let out = first.iter().zip(second.iter()).map(|(&i, &j)| x[2 * i] + x[2 * j + 1]).collect();
        let value = Tensor::new(vec![first.len(), 1], out)?;
        self.push("gather_pair_sum", value, Op::GatherPairSum { input, first, second }, &[input])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (rows, cols) = self.require_matrix("transpose", a)?;
        let x = self.value(a).data();
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                out[c * rows + r] = x[r * cols + c];
            }
        }
        let value = Tensor::new(vec![cols, rows], out)?;
        self.push("transpose", value, Op::Transpose(a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat_cols needs at least one input".into()))?;
        let (rows, _) = self.require_matrix("concat_cols", first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.require_matrix("concat_cols", p)?;
            if r != rows {
                return Err(Error::shape("concat_cols", self.shape(first), self.shape(p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let value = Tensor::new(vec![rows, total], out)?;
        self.push("concat_cols", value, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::InvalidArgument("mean_all of an empty tensor".into()));
        }
        let mean = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push("mean_all", Tensor::scalar(mean), Op::MeanAll(a), &[a])
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let sum = self.value(a).data().iter().sum::<f64>();
        self.push("sum_all", Tensor::scalar(sum), Op::SumAll(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(a).reshaped(shape)?;
        self.push("reshape", value, Op::Reshape(a), &[a])
    }

    /// `-log softmax(logits)[label]` for a single row of logits, stabilised by
    /// max subtraction.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let (rows, classes) = self.require_matrix("softmax_cross_entropy", logits)?;
        if rows != 1 {
            return Err(Error::shape("softmax_cross_entropy", self.shape(logits), &[1, classes]));
        }
        if label >= classes {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let z = self.value(logits).data();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let loss = sum.ln() - (z[label] - max);
        let probs = exps.iter().map(|e| e / sum).collect();
        self.push(
            "softmax_cross_entropy",
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy { logits, label, probs },
            &[logits],
        )
    }

    /// Propagates d(loss)/d(node) to every node that needs it and adds the
    /// result into the kept gradient buffers.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.propagate(i, &g, &mut adj);
            let node = &mut self.nodes[i];
            if node.keep_grad {
                match &mut node.grad {
                    Some(buf) => buf.iter_mut().zip(&g).for_each(|(b, x)| *b += x),
                    None => node.grad = Some(g),
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].needs_grad;
        macro_rules! acc {
            ($v:expr) => {
                accumulator(adj, nodes, $v)
            };
        }
        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.matrix_dims(*a);
                let n = self.value(*b).cols();
                if wants(*a) {
                    let bv = self.value(*b).data();
                    c_gemm(m, n, k, g, n as isize, 1, bv, 1, n as isize, acc!(*a), 1.0);
                }
                if wants(*b) {
                    let av = self.value(*a).data();
                    c_gemm(k, m, n, av, 1, k as isize, g, n as isize, 1, acc!(*b), 1.0);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if wants(v) {
                        acc!(v).iter_mut().zip(g).for_each(|(d, x)| *d += x);
                    }
                }
            }
            Op::AddRowBias(a, bias) => {
                if wants(*a) {
                    acc!(*a).iter_mut().zip(g).for_each(|(d, x)| *d += x);
                }
                if wants(*bias) {
                    let cols = self.value(*a).cols();
                    let gb = acc!(*bias);
                    for (idx, x) in g.iter().enumerate() {
                        gb[idx % cols] += x;
                    }
                }
            }
            Op::Scale(a, s) => {
                if wants(*a) {
                    acc!(*a).iter_mut().zip(g).for_each(|(d, x)| *d += s * x);
                }
            }
            Op::ScaleRows(a, s) => {
                let cols = self.value(*a).cols().max(1);
                if wants(*a) {
                    let sv = self.value(*s).data();
                    let ga = acc!(*a);
                    for (idx, x) in g.iter().enumerate() {
                        ga[idx] += x * sv[idx / cols];
                    }
                }
                if wants(*s) {
                    let av = self.value(*a).data();
                    let gs = acc!(*s);
                    for (idx, x) in g.iter().enumerate() {
                        gs[idx / cols] += x * av[idx];
                    }
                }
            }
            Op::Relu(a) => {
                if wants(*a) {
                    let x = self.value(*a).data();
                    let ga = acc!(*a);
                    for idx in 0..g.len() {
                        if x[idx] > 0.0 {
                            ga[idx] += g[idx];
                        }
                    }
                }
            }
            Op::LeakyRelu(a, slope) => {
                if wants(*a) {
                    let x = self.value(*a).data();
                    let ga = acc!(*a);
                    for idx in 0..g.len() {
                        ga[idx] += if x[idx] > 0.0 { g[idx] } else { slope * g[idx] };
                    }
                }
            }
            Op::Exp(a) => {
                if wants(*a) {
                    let y = nodes[i].value.data();
                    let ga = acc!(*a);
                    for idx in 0..g.len() {
                        ga[idx] += g[idx] * y[idx];
                    }
                }
            }
            Op::SegmentSoftmax {
                input,
                segments,
                num_segments,
            } => {
                if wants(*input) {
                    let y = nodes[i].value.data();
                    let cols = nodes[i].value.cols();
                    let mut dot = vec![0.0; num_segments * cols];
                    for (r, &s) in segments.iter().enumerate() {
                        for c in 0..cols {
                            dot[s * cols + c] += g[r * cols + c] * y[r * cols + c];
                        }
                    }
                    let ga = acc!(*input);
                    for (r, &s) in segments.iter().enumerate() {
                        for c in 0..cols {
                            let idx = r * cols + c;
                            ga[idx] += y[idx] * (g[idx] - dot[s * cols + c]);
                        }
                    }
                }
            }
            Op::SegmentMean {
                input,
                segments,
                counts,
            } => {
                if wants(*input) {
                    let cols = self.value(*input).cols();
                    let ga = acc!(*input);
                    for (r, &s) in segments.iter().enumerate() {
                        let inv = counts[s] as f64;
                        for c in 0..cols {
                            ga[r * cols + c] += g[s * cols + c] / inv;
                        }
                    }
                }
            }
            Op::GatherRows { input, index } => {
                if wants(*input) {
                    let cols = self.value(*input).cols();
                    let ga = acc!(*input);
                    for (r, &src) in index.iter().enumerate() {
                        for c in 0..cols {
                            ga[src * cols + c] += g[r * cols + c];
                        }
                    }
                }
            }
            Op::ScatterAddRows { input, index } => {
                if wants(*input) {
                    let cols = self.value(*input).cols();
                    let ga = acc!(*input);
                    for (r, &dst) in index.iter().enumerate() {
                        for c in 0..cols {
                            ga[r * cols + c] += g[dst * cols + c];
                        }
                    }
                }
            }
            Op::ScatterBlocks { input, entries } => {
                if wants(*input) {
                    let cols = self.value(*input).cols();
                    let width = nodes[i].value.cols();
                    let ga = acc!(*input);
                    for e in entries.iter() {
                        let go = &g[e.dst * width + e.block * cols..e.dst * width + (e.block + 1) * cols];
                        let gi = &mut ga[e.src * cols..(e.src + 1) * cols];
                        for (d, x) in gi.iter_mut().zip(go) {
                            *d += e.coef * x;
                        }
                    }
                }
            }
            Op::ScatterWeightedRows {
                weights,
                input,
                dst,
                src,
            } => {
                let cols = self.value(*input).cols();
                if wants(*input) {
                    let w = self.value(*weights).data();
                    let gi = acc!(*input);
                    for e in 0..dst.len() {
                        let go = &g[dst[e] * cols..(dst[e] + 1) * cols];
                        for (d, x) in gi[src[e] * cols..(src[e] + 1) * cols].iter_mut().zip(go) {
                            *d += w[e] * x;
                        }
                    }
                }
                if wants(*weights) {
                    let x = self.value(*input).data();
                    let gw = acc!(*weights);
                    for e in 0..dst.len() {
                        let go = &g[dst[e] * cols..(dst[e] + 1) * cols];
                        let row = &x[src[e] * cols..(src[e] + 1) * cols];
                        gw[e] += go.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
            Op::GatherPairSum { input, first, second } => {
                if wants(*input) {
                    let gi = acc!(*input);
                    for (e, (&i, &j)) in first.iter().zip(second.iter()).enumerate() {
                        gi[2 * i] += g[e];
                        gi[2 * j + 1] += g[e];
                    }
                }
            }
            Op::Transpose(a) => {
                if wants(*a) {
                    let (rows, cols) = self.matrix_dims(*a);
                    let ga = acc!(*a);
                    for r in 0..rows {
                        for c in 0..cols {
                            ga[r * cols + c] += g[c * rows + r];
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let rows = nodes[i].value.rows();
                let total = nodes[i].value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if wants(p) {
                        let gp = acc!(p);
                        for r in 0..rows {
                            for c in 0..w {
                                gp[r * w + c] += g[r * total + offset + c];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::MeanAll(a) => {
                if wants(*a) {
                    let n = self.value(*a).len() as f64;
                    acc!(*a).iter_mut().for_each(|d| *d += g[0] / n);
                }
            }
            Op::SumAll(a) => {
                if wants(*a) {
                    acc!(*a).iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Reshape(a) => {
                if wants(*a) {
                    acc!(*a).iter_mut().zip(g).for_each(|(d, x)| *d += x);
                }
            }
            Op::SoftmaxCrossEntropy { logits, label, probs } => {
                if wants(*logits) {
                    let gl = acc!(*logits);
                    for (c, p) in probs.iter().enumerate() {
                        let target = if c == *label { 1.0 } else { 0.0 };
                        gl[c] += g[0] * (p - target);
                    }
                }
            }
        }
    }
}
