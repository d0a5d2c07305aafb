use std::ops::Range;

use crate::kernels;
use crate::norm::{BatchStats, NormMode};
use crate::{AutodiffError, Result, Scalar, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, T),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Relu(Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        train: bool,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    LogSumExp {
        x: Var,
        axis: usize,
    },
    SubBroadcast {
        x: Var,
        v: Var,
        axis: usize,
    },
    Slice {
        x: Var,
        rows: Range<usize>,
        cols: Range<usize>,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Augment {
        x: Var,
        fill: Var,
    },
    Gather {
        x: Var,
        index: Vec<usize>,
    },
    Sum(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Computation tape. Single-threaded; build one per forward pass.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn check_axis(op: &'static str, axis: usize) -> Result<()> {
    if axis > 1 {
        return Err(AutodiffError::shape(op, format!("axis {axis} out of range")));
    }
    Ok(())
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dims2()
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.as_slice()
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if !value.all_finite() {
            return Err(AutodiffError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Result<Var> {
        if !value.all_finite() {
            return Err(AutodiffError::NonFinite { op: "leaf" });
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, false)
    }

    /// Learnable input; its gradient is reported by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, true)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(AutodiffError::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| x + y).collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        self.push("add", value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| x - y).collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        self.push("sub", value, Op::Sub(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        let value = self.value(a).map(|x| x * c);
        self.push("scale", value, Op::Scale(a, c), &[a])
    }

    /// `a (r x k) * b (k x c)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, k) = self.dims(a);
        let (k2, c) = self.dims(b);
        if k != k2 {
            return Err(AutodiffError::shape("matmul", format!("{r}x{k} * {k2}x{c}")));
        }
        let data = kernels::matmul(self.data(a), self.data(b), r, k, c);
        self.push("matmul", Tensor::matrix(r, c, data)?, Op::MatMul(a, b), &[a, b])
    }

    /// `a (r x k) * b^T` with `b` stored as `c x k`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, k) = self.dims(a);
        let (c, k2) = self.dims(b);
        if k != k2 {
            return Err(AutodiffError::shape("matmul_nt", format!("{r}x{k} * ({c}x{k2})^T")));
        }
        let data = kernels::matmul_nt(self.data(a), self.data(b), r, k, c);
        self.push("matmul_nt", Tensor::matrix(r, c, data)?, Op::MatMulNt(a, b), &[a, b])
    }

    /// `x (rows x in) * w^T + b` with `w` stored as `out x in`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (rows, fan_in) = self.dims(x);
        let ws = self.value(w).shape().to_vec();
        if ws.len() != 2 || ws[1] != fan_in {
            return Err(AutodiffError::shape(
                "linear",
                format!("input [{rows}, {fan_in}] with weight {ws:?}"),
            ));
        }
        let out = ws[0];
        let mut data = kernels::matmul_nt(self.data(x), self.data(w), rows, fan_in, out);
        if let Some(b) = b {
            if self.value(b).len() != out {
                return Err(AutodiffError::shape(
                    "linear",
                    format!("bias of {} for {out} outputs", self.value(b).len()),
                ));
            }
            let bias = self.data(b);
            for row in data.chunks_mut(out) {
                for (o, &bv) in row.iter_mut().zip(bias) {
                    *o = *o + bv;
                }
            }
        }
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push("linear", Tensor::matrix(rows, out, data)?, Op::Linear { x, w, b }, &inputs)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| v.max(T::zero()));
        self.push("relu", value, Op::Relu(x), &[x])
    }

    /// Per-channel normalization of an `N x C` input followed by the affine
    /// map `gamma * xhat + beta`. Training mode pools statistics over all `N`
    /// rows and returns them for the caller to fold into running statistics.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: NormMode<'_, T>,
        eps: T,
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        let (n, c) = self.dims(x);
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(AutodiffError::shape("batch_norm", format!("{c} channels vs affine params")));
        }
        let xs = self.data(x);
        let (mean, var_biased, stats) = match mode {
            NormMode::Train => {
                if n < 2 {
                    return Err(AutodiffError::Argument(format!(
                        "batch normalization in training mode needs at least 2 rows, got {n}"
                    )));
                }
                let nt = T::from_f64(n as f64);
                let mut mean = vec![T::zero(); c];
                for row in xs.chunks(c) {
                    for (m, &v) in mean.iter_mut().zip(row) {
                        *m = *m + v;
                    }
                }
                mean.iter_mut().for_each(|m| *m = *m / nt);
                let mut var = vec![T::zero(); c];
                for row in xs.chunks(c) {
                    for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                        *s = *s + (v - m) * (v - m);
                    }
                }
                let biased: Vec<T> = var.iter().map(|&s| s / nt).collect();
                let unbiased = var.iter().map(|&s| s / (nt - T::one())).collect();
                let stats = BatchStats {
                    mean: mean.clone(),
                    var: unbiased,
                };
                (mean, biased, Some(stats))
            }
            NormMode::Eval(running) => {
                if running.channels() != c {
                    return Err(AutodiffError::shape(
                        "batch_norm",
                        format!("{c} channels vs {} running", running.channels()),
                    ));
                }
                (running.mean.clone(), running.var.clone(), None)
            }
        };
        let inv_std: Vec<T> = var_biased.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); n * c];
        for (i, row) in xs.chunks(c).enumerate() {
            for j in 0..c {
                xhat[i * c + j] = (row[j] - mean[j]) * inv_std[j];
            }
        }
        let (g, b) = (self.data(gamma), self.data(beta));
        let out: Vec<T> = xhat
            .iter()
            .enumerate()
            .map(|(k, &h)| g[k % c] * h + b[k % c])
            .collect();
        let value = Tensor::matrix(n, c, out)?;
        let op = Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            train: stats.is_some(),
        };
        let var = self.push("batch_norm", value, op, &[x, gamma, beta])?;
        Ok((var, stats))
    }

    /// Softmax along `axis` (1: within each row, 0: within each column).
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        check_axis("softmax", axis)?;
        let (r, c) = self.dims(x);
        let data = kernels::softmax(self.data(x), r, c, axis);
        let value = Tensor::new(self.value(x).shape().to_vec(), data)?;
        self.push("softmax", value, Op::Softmax { x, axis }, &[x])
    }

    /// Log-sum-exp along `axis`; yields one value per row (`axis == 1`) or
    /// per column (`axis == 0`).
    pub fn logsumexp(&mut self, x: Var, axis: usize) -> Result<Var> {
        check_axis("logsumexp", axis)?;
        let (r, c) = self.dims(x);
        let data = kernels::logsumexp(self.data(x), r, c, axis);
        self.push("logsumexp", Tensor::vector(data), Op::LogSumExp { x, axis }, &[x])
    }

    /// Subtracts `v[i]` from row `i` (`axis == 1`) or `v[j]` from column `j`
    /// (`axis == 0`).
    pub fn sub_broadcast(&mut self, x: Var, v: Var, axis: usize) -> Result<Var> {
        check_axis("sub_broadcast", axis)?;
        let (r, c) = self.dims(x);
        let want = if axis == 1 { r } else { c };
        if self.value(v).len() != want {
            return Err(AutodiffError::shape(
                "sub_broadcast",
                format!("{r}x{c} along axis {axis} needs {want} values, got {}", self.value(v).len()),
            ));
        }
        let data = kernels::sub_broadcast(self.data(x), self.data(v), r, c, axis);
        let value = Tensor::new(self.value(x).shape().to_vec(), data)?;
        self.push("sub_broadcast", value, Op::SubBroadcast { x, v, axis }, &[x, v])
    }

    /// Rectangular block `rows x cols` of a matrix.
    pub fn slice(&mut self, x: Var, rows: Range<usize>, cols: Range<usize>) -> Result<Var> {
        let (r, c) = self.dims(x);
        if rows.end > r || cols.end > c || rows.start > rows.end || cols.start > cols.end {
            return Err(AutodiffError::shape(
                "slice",
                format!("{rows:?} x {cols:?} out of {r}x{c}"),
            ));
        }
        let src = self.data(x);
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for i in rows.clone() {
            data.extend_from_slice(&src[i * c + cols.start..i * c + cols.end]);
        }
        let value = Tensor::matrix(rows.len(), cols.len(), data)?;
        self.push("slice", value, Op::Slice { x, rows, cols }, &[x])
    }

    pub fn slice_rows(&mut self, x: Var, rows: Range<usize>) -> Result<Var> {
        let c = self.dims(x).1;
        self.slice(x, rows, 0..c)
    }

    pub fn slice_cols(&mut self, x: Var, cols: Range<usize>) -> Result<Var> {
        let r = self.dims(x).0;
        self.slice(x, 0..r, cols)
    }

    /// Stacks matrices vertically (`axis == 0`) or side by side (`axis == 1`).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        check_axis("concat", axis)?;
        if parts.is_empty() {
            return Err(AutodiffError::Argument("concat of zero tensors".into()));
        }
        let dims: Vec<(usize, usize)> = parts.iter().map(|&p| self.dims(p)).collect();
        let value = if axis == 0 {
            let c = dims[0].1;
            if dims.iter().any(|d| d.1 != c) {
                return Err(AutodiffError::shape("concat", format!("column counts {dims:?}")));
            }
            let mut data = Vec::new();
            for &p in parts {
                data.extend_from_slice(self.data(p));
            }
            Tensor::matrix(dims.iter().map(|d| d.0).sum(), c, data)?
        } else {
            let r = dims[0].0;
            if dims.iter().any(|d| d.0 != r) {
                return Err(AutodiffError::shape("concat", format!("row counts {dims:?}")));
            }
            let total: usize = dims.iter().map(|d| d.1).sum();
            let mut data = Vec::with_capacity(r * total);
            for i in 0..r {
                for (&p, d) in parts.iter().zip(&dims) {
                    data.extend_from_slice(&self.data(p)[i * d.1..(i + 1) * d.1]);
                }
            }
            Tensor::matrix(r, total, data)?
        };
        let op = Op::Concat {
            parts: parts.to_vec(),
            axis,
        };
        self.push("concat", value, op, parts)
    }

    /// Appends one row and one column filled with the scalar `fill`.
    pub fn augment(&mut self, x: Var, fill: Var) -> Result<Var> {
        if self.value(fill).len() != 1 {
            return Err(AutodiffError::shape("augment", "fill must be a scalar"));
        }
        let (r, c) = self.dims(x);
        let w = self.data(fill)[0];
        let src = self.data(x);
        let mut data = Vec::with_capacity((r + 1) * (c + 1));
        for i in 0..r {
            data.extend_from_slice(&src[i * c..(i + 1) * c]);
            data.push(w);
        }
        data.extend(std::iter::repeat_n(w, c + 1));
        let value = Tensor::matrix(r + 1, c + 1, data)?;
        self.push("augment", value, Op::Augment { x, fill }, &[x, fill])
    }

    /// Picks flat (row-major) entries into a vector.
    pub fn gather(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let src = self.data(x);
        if let Some(&bad) = index.iter().find(|&&k| k >= src.len()) {
            return Err(AutodiffError::shape("gather", format!("index {bad} of {}", src.len())));
        }
        let data = index.iter().map(|&k| src[k]).collect();
        let op = Op::Gather {
            x,
            index: index.to_vec(),
        };
        self.push("gather", Tensor::vector(data), op, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: T = self.data(x).iter().copied().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Sum of scalar nodes.
    pub fn sum_scalars(&mut self, xs: &[Var]) -> Result<Var> {
        let stacked = self.concat(xs, 1)?;
        self.sum(stacked)
    }

    /// Reverse pass from a scalar node.
    ///
    /// The tape is not modified, so calling this twice on the same graph
    /// returns identical gradients. Gradients are retained only for leaves.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(AutodiffError::NotScalar(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        let mut leaves: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads)?;
            if let Op::Leaf = node.op {
                leaves[idx] = Some(Tensor::new(node.value.shape().to_vec(), g)?);
            }
        }
        Ok(Gradients { leaves })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, g: Vec<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a = *a + b),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.iter().map(|&x| -x).collect());
            }
            Op::Scale(a, c) => {
                self.accumulate(grads, *a, g.iter().map(|&x| x * *c).collect());
            }
            Op::MatMul(a, b) => {
                let (r, k) = self.dims(*a);
                let c = self.dims(*b).1;
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, kernels::matmul_nt(g, self.data(*b), r, c, k));
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, kernels::matmul_tn(self.data(*a), g, r, k, c));
                }
            }
            Op::MatMulNt(a, b) => {
                let (r, k) = self.dims(*a);
                let c = self.dims(*b).0;
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, kernels::matmul(g, self.data(*b), r, c, k));
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, kernels::matmul_tn(g, self.data(*a), r, c, k));
                }
            }
            Op::Linear { x, w, b } => {
                let (rows, fan_in) = self.dims(*x);
                let out = self.dims(*w).0;
                if self.requires_grad(*x) {
                    self.accumulate(grads, *x, kernels::matmul(g, self.data(*w), rows, out, fan_in));
                }
                if self.requires_grad(*w) {
                    self.accumulate(grads, *w, kernels::matmul_tn(g, self.data(*x), rows, out, fan_in));
                }
                if let Some(b) = b {
                    let mut db = vec![T::zero(); out];
                    for row in g.chunks(out) {
                        db.iter_mut().zip(row).for_each(|(d, &v)| *d = *d + v);
                    }
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Relu(x) => {
                let y = node.value.as_slice();
                let dx = g
                    .iter()
                    .zip(y)
                    .map(|(&gv, &yv)| if yv > T::zero() { gv } else { T::zero() })
                    .collect();
                self.accumulate(grads, *x, dx);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let (n, c) = self.dims(*x);
                let gam = self.data(*gamma);
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for (k, (&gv, &h)) in g.iter().zip(xhat).enumerate() {
                    dgamma[k % c] = dgamma[k % c] + gv * h;
                    dbeta[k % c] = dbeta[k % c] + gv;
                }
                if self.requires_grad(*x) {
                    let mut dx = vec![T::zero(); n * c];
                    if *train {
                        let nt = T::from_f64(n as f64);
                        // dxhat = g * gamma; sums per channel of dxhat and dxhat * xhat
                        let mut s1 = vec![T::zero(); c];
                        let mut s2 = vec![T::zero(); c];
                        for (k, (&gv, &h)) in g.iter().zip(xhat).enumerate() {
                            let d = gv * gam[k % c];
                            s1[k % c] = s1[k % c] + d;
                            s2[k % c] = s2[k % c] + d * h;
                        }
                        for (k, (&gv, &h)) in g.iter().zip(xhat).enumerate() {
                            let j = k % c;
                            let d = gv * gam[j];
                            dx[k] = inv_std[j] / nt * (nt * d - s1[j] - h * s2[j]);
                        }
                    } else {
                        for (k, &gv) in g.iter().enumerate() {
                            dx[k] = gv * gam[k % c] * inv_std[k % c];
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
                self.accumulate(grads, *gamma, dgamma);
                self.accumulate(grads, *beta, dbeta);
            }
            Op::Softmax { x, axis } => {
                let (r, c) = self.dims(*x);
                let y = node.value.as_slice();
                let lanes = if *axis == 1 { r } else { c };
                let mut dots = vec![T::zero(); lanes];
                for i in 0..r {
                    for j in 0..c {
                        let lane = if *axis == 1 { i } else { j };
                        dots[lane] = dots[lane] + g[i * c + j] * y[i * c + j];
                    }
                }
                let mut dx = vec![T::zero(); r * c];
                for i in 0..r {
                    for j in 0..c {
                        let lane = if *axis == 1 { i } else { j };
                        dx[i * c + j] = y[i * c + j] * (g[i * c + j] - dots[lane]);
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::LogSumExp { x, axis } => {
                let (r, c) = self.dims(*x);
                let xs = self.data(*x);
                let lse = node.value.as_slice();
                let mut dx = vec![T::zero(); r * c];
                for i in 0..r {
                    for j in 0..c {
                        let lane = if *axis == 1 { i } else { j };
                        dx[i * c + j] = g[lane] * (xs[i * c + j] - lse[lane]).exp();
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::SubBroadcast { x, v, axis } => {
                let (r, c) = self.dims(*x);
                self.accumulate(grads, *x, g.to_vec());
                if self.requires_grad(*v) {
                    let mut dv = vec![T::zero(); if *axis == 1 { r } else { c }];
                    for i in 0..r {
                        for j in 0..c {
                            let lane = if *axis == 1 { i } else { j };
                            dv[lane] = dv[lane] - g[i * c + j];
                        }
                    }
                    self.accumulate(grads, *v, dv);
                }
            }
            Op::Slice { x, rows, cols } => {
                let (r, c) = self.dims(*x);
                let mut dx = vec![T::zero(); r * c];
                let w = cols.len();
                for (k, i) in rows.clone().enumerate() {
                    dx[i * c + cols.start..i * c + cols.end].copy_from_slice(&g[k * w..(k + 1) * w]);
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Concat { parts, axis } => {
                if *axis == 0 {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        self.accumulate(grads, p, g[offset..offset + len].to_vec());
                        offset += len;
                    }
                } else {
                    let (r, total) = node.value.dims2();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.dims(p).1;
                        let mut dp = Vec::with_capacity(r * w);
                        for i in 0..r {
                            dp.extend_from_slice(&g[i * total + offset..i * total + offset + w]);
                        }
                        self.accumulate(grads, p, dp);
                        offset += w;
                    }
                }
            }
            Op::Augment { x, fill } => {
                let (r, c) = self.dims(*x);
                let mut dx = Vec::with_capacity(r * c);
                let mut dfill = T::zero();
                for i in 0..=r {
                    for j in 0..=c {
                        let gv = g[i * (c + 1) + j];
                        if i < r && j < c {
                            dx.push(gv);
                        } else {
                            dfill = dfill + gv;
                        }
                    }
                }
                self.accumulate(grads, *x, dx);
                self.accumulate(grads, *fill, vec![dfill]);
            }
            Op::Gather { x, index } => {
                let mut dx = vec![T::zero(); self.value(*x).len()];
                for (&k, &gv) in index.iter().zip(g) {
                    dx[k] = dx[k] + gv;
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Sum(x) => {
                self.accumulate(grads, *x, vec![g[0]; self.value(*x).len()]);
            }
        }
        Ok(())
    }
}

/// Leaf gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    leaves: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf; `None` for constants, intermediates, and leaves
    /// the loss does not depend on.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.leaves.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a parameter leaf, zero-filled when the loss does not
    /// depend on it.
    pub fn get_or_zeros(&self, v: Var, graph: &Graph<T>) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(graph.value(v).shape()))
    }
}
