//! Score matrices, dustbin augmentation, log-domain Sinkhorn and match readout.

use std::io::Write;

use pillarmatch_autodiff::{kernels, Graph, Scalar, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SinkhornMode {
    /// Row correction, recompute, column correction.
    #[default]
    Alternating,
    /// Row and column corrections both taken from the same iterate.
    Simultaneous,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Marginals {
    /// Every row and column of the augmented matrix totals 1.
    #[default]
    Uniform,
    /// Dustbin row totals `m`, dustbin column totals `n`, all others 1.
    DustbinWeighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinkhornConfig {
    pub iters: usize,
    pub mode: SinkhornMode,
    pub marginals: Marginals,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            iters: 100,
            mode: SinkhornMode::Alternating,
            marginals: Marginals::Uniform,
        }
    }
}

/// Log target sums for the `rows x cols` augmented matrix.
pub fn log_marginals<T: Scalar>(rows: usize, cols: usize, marginals: Marginals) -> (Vec<T>, Vec<T>) {
    let mut a = vec![T::zero(); rows];
    let mut b = vec![T::zero(); cols];
    if marginals == Marginals::DustbinWeighted && rows > 1 && cols > 1 {
        a[rows - 1] = T::from_f64(((cols - 1) as f64).ln());
        b[cols - 1] = T::from_f64(((rows - 1) as f64).ln());
    }
    (a, b)
}

/// Log-domain soft assignment with dustbin row and column.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentMatrix<T> {
    pub log_p: Tensor<T>,
    pub iterations: usize,
}

impl<T: Scalar> AssignmentMatrix<T> {
    /// Key-points in the source (rows excluding the dustbin).
    pub fn n(&self) -> usize {
        self.log_p.rows() - 1
    }

    pub fn m(&self) -> usize {
        self.log_p.cols() - 1
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.log_p.at(i, j).to_f64().exp()
    }
}

/// `m_k * m_l^T` for descriptor rows.
pub fn score_matrix_values<T: Scalar>(mk: &Tensor<T>, ml: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, dk) = mk.dims2();
    let (m, dl) = ml.dims2();
    if dk != dl {
        return Err(Error::Argument(format!("descriptor depths differ: {dk} vs {dl}")));
    }
    let data = kernels::matmul_nt(mk.as_slice(), ml.as_slice(), n, dk, m);
    Ok(Tensor::matrix(n, m, data)?)
}

pub fn score_matrix<T: Scalar>(g: &mut Graph<T>, mk: Var, ml: Var) -> Result<Var> {
    Ok(g.matmul_nt(mk, ml)?)
}

/// Appends the dustbin row and column, all equal to `w_v`.
pub fn augment_dustbin_values<T: Scalar>(raw: &Tensor<T>, w_v: T) -> Tensor<T> {
    let (r, c) = raw.dims2();
    let mut data = Vec::with_capacity((r + 1) * (c + 1));
    for i in 0..r {
        data.extend_from_slice(raw.row(i));
        data.push(w_v);
    }
    data.extend(std::iter::repeat_n(w_v, c + 1));
    Tensor::matrix(r + 1, c + 1, data).expect("consistent shape")
}

pub fn augment_dustbin<T: Scalar>(g: &mut Graph<T>, raw: Var, w_v: Var) -> Result<Var> {
    Ok(g.augment(raw, w_v)?)
}

fn check_config(cfg: &SinkhornConfig) -> Result<()> {
    if cfg.iters == 0 {
        return Err(Error::Argument("Sinkhorn needs at least one iteration".into()));
    }
    Ok(())
}

fn sinkhorn_step<T: Scalar>(x: &mut Vec<T>, r: usize, c: usize, a: &[T], b: &[T], mode: SinkhornMode) {
    let lse_r = kernels::logsumexp(x, r, c, 1);
    let row_shift: Vec<T> = lse_r.iter().zip(a).map(|(&l, &a)| l - a).collect();
    match mode {
        SinkhornMode::Alternating => {
            *x = kernels::sub_broadcast(x, &row_shift, r, c, 1);
            let lse_c = kernels::logsumexp(x, r, c, 0);
            let col_shift: Vec<T> = lse_c.iter().zip(b).map(|(&l, &b)| l - b).collect();
            *x = kernels::sub_broadcast(x, &col_shift, r, c, 0);
        }
        SinkhornMode::Simultaneous => {
            let lse_c = kernels::logsumexp(x, r, c, 0);
            let col_shift: Vec<T> = lse_c.iter().zip(b).map(|(&l, &b)| l - b).collect();
            let y = kernels::sub_broadcast(x, &row_shift, r, c, 1);
            *x = kernels::sub_broadcast(&y, &col_shift, r, c, 0);
        }
    }
}

/// Log-domain Sinkhorn normalization without gradients.
pub fn sinkhorn<T: Scalar>(augmented: &Tensor<T>, cfg: &SinkhornConfig) -> Result<AssignmentMatrix<T>> {
    Ok(sinkhorn_traced(augmented, cfg, |_, _, _| {})?)
}

/// As [`sinkhorn`], calling `observe(iteration, log_p, (rows, cols))` after every iteration.
pub fn sinkhorn_traced<T: Scalar>(
    augmented: &Tensor<T>,
    cfg: &SinkhornConfig,
    mut observe: impl FnMut(usize, &[T], (usize, usize)),
) -> Result<AssignmentMatrix<T>> {
    check_config(cfg)?;
    if !augmented.all_finite() {
        return Err(Error::Numeric("Sinkhorn input has non-finite entries".into()));
    }
    let (r, c) = augmented.dims2();
    let (a, b) = log_marginals::<T>(r, c, cfg.marginals);
    let mut x = augmented.as_slice().to_vec();
    for it in 0..cfg.iters {
        sinkhorn_step(&mut x, r, c, &a, &b, cfg.mode);
        observe(it + 1, &x, (r, c));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("Sinkhorn produced non-finite values".into()));
    }
    Ok(AssignmentMatrix {
        log_p: Tensor::matrix(r, c, x)?,
        iterations: cfg.iters,
    })
}

/// Largest deviation of a row or column sum of `exp(log_p)` from its target.
pub fn marginal_deviation<T: Scalar>(log_p: &[T], r: usize, c: usize, marginals: Marginals) -> f64 {
    let (a, b) = log_marginals::<f64>(r, c, marginals);
    let mut rows = vec![0.0f64; r];
    let mut cols = vec![0.0f64; c];
    for i in 0..r {
        for j in 0..c {
            let p = log_p[i * c + j].to_f64().exp();
            rows[i] += p;
            cols[j] += p;
        }
    }
    let dr = rows.iter().zip(&a).map(|(s, a)| (s - a.exp()).abs());
    let dc = cols.iter().zip(&b).map(|(s, b)| (s - b.exp()).abs());
    dr.chain(dc).fold(0.0, f64::max)
}

/// Differentiable Sinkhorn on the tape; same arithmetic as [`sinkhorn`].
pub fn sinkhorn_graph<T: Scalar>(g: &mut Graph<T>, augmented: Var, cfg: &SinkhornConfig) -> Result<Var> {
    check_config(cfg)?;
    let (r, c) = g.value(augmented).dims2();
    let (a, b) = log_marginals::<T>(r, c, cfg.marginals);
    let weighted = cfg.marginals == Marginals::DustbinWeighted;
    let (a, b) = (g.constant(Tensor::vector(a))?, g.constant(Tensor::vector(b))?);
    let shift = |g: &mut Graph<T>, x: Var, axis: usize| -> Result<Var> {
        let lse = g.logsumexp(x, axis)?;
        Ok(if weighted { g.sub(lse, if axis == 1 { a } else { b })? } else { lse })
    };
    let mut x = augmented;
    for _ in 0..cfg.iters {
        match cfg.mode {
            SinkhornMode::Alternating => {
                let rs = shift(g, x, 1)?;
                x = g.sub_broadcast(x, rs, 1)?;
                let cs = shift(g, x, 0)?;
                x = g.sub_broadcast(x, cs, 0)?;
            }
            SinkhornMode::Simultaneous => {
                let rs = shift(g, x, 1)?;
                let cs = shift(g, x, 0)?;
                let y = g.sub_broadcast(x, rs, 1)?;
                x = g.sub_broadcast(y, cs, 0)?;
            }
        }
    }
    Ok(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub i: usize,
    pub j: usize,
    pub confidence: f64,
}

/// Hard one-to-one matches with the leftover indices on each side.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub pairs: Vec<Match>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Builds a set from `(i, j, confidence)` pairs over an `n x m` problem.
    pub fn from_pairs(n: usize, m: usize, pairs: Vec<Match>) -> Self {
        let mut row_used = vec![false; n];
        let mut col_used = vec![false; m];
        for p in &pairs {
            row_used[p.i] = true;
            col_used[p.j] = true;
        }
        MatchSet {
            pairs,
            unmatched_rows: (0..n).filter(|&i| !row_used[i]).collect(),
            unmatched_cols: (0..m).filter(|&j| !col_used[j]).collect(),
        }
    }
}

fn argmax<T: Scalar>(values: impl Iterator<Item = T>) -> usize {
    let mut best = 0;
    let mut best_v = T::neg_infinity();
    for (k, v) in values.enumerate() {
        if v > best_v {
            best = k;
            best_v = v;
        }
    }
    best
}

/// Mutual-argmax readout: `(i, j)` pairs when `j` is the argmax of row `i`
/// over all `m + 1` columns, `i` the argmax of column `j` over all `n + 1`
/// rows, and `exp(log_p[i, j]) >= threshold`. Ties go to the smaller index.
pub fn extract_matches<T: Scalar>(log_p: &Tensor<T>, threshold: f64) -> Result<MatchSet> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Argument(format!("match threshold must lie in [0, 1], got {threshold}")));
    }
    let (r, c) = log_p.dims2();
    if r == 0 || c == 0 {
        return Err(Error::Argument("assignment matrix lacks dustbins".into()));
    }
    let (n, m) = (r - 1, c - 1);
    let col_best: Vec<usize> = (0..m).map(|j| argmax((0..r).map(|i| log_p.at(i, j)))).collect();
    let mut pairs = Vec::new();
    for i in 0..n {
        let j = argmax(log_p.row(i).iter().copied());
        if j < m && col_best[j] == i {
            let confidence = log_p.at(i, j).to_f64().exp();
            if confidence >= threshold {
                pairs.push(Match { i, j, confidence });
            }
        }
    }
    Ok(MatchSet::from_pairs(n, m, pairs))
}

/// Writes `exp(log_p)` as CSV with a header of target ids and a leading
/// column of source ids; the last row and column are labeled `dustbin`.
pub fn write_assignment_csv<T: Scalar, W: Write>(
    out: &mut W,
    log_p: &Tensor<T>,
    row_ids: &[usize],
    col_ids: &[usize],
) -> std::io::Result<()> {
    let (r, c) = log_p.dims2();
    assert_eq!(row_ids.len() + 1, r, "one id per source row");
    assert_eq!(col_ids.len() + 1, c, "one id per target column");
    write!(out, "source\\target")?;
    for id in col_ids {
        write!(out, ",{id}")?;
    }
    writeln!(out, ",dustbin")?;
    for i in 0..r {
        match row_ids.get(i) {
            Some(id) => write!(out, "{id}")?,
            None => write!(out, "dustbin")?,
        }
        for j in 0..c {
            write!(out, ",{}", log_p.at(i, j).to_f64().exp())?;
        }
        writeln!(out)?;
    }
    Ok(())
}
