use std::fmt;
use std::str::FromStr;

use pillarmatch_autodiff::{Graph, Scalar, Var};
use serde::{Deserialize, Serialize};

use crate::cloud::CorrespondenceLabels;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Negative log-likelihood of the ground-truth cells.
    Nll,
    /// NLL plus a row cross-entropy pushing unmatched rows into the dustbin.
    #[default]
    Nllp,
    /// Row and column cross-entropy at every ground-truth cell.
    Dce,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Nll, LossKind::Nllp, LossKind::Dce];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Nll => "nll",
            LossKind::Nllp => "nllp",
            LossKind::Dce => "dce",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Argument(format!("unknown loss {s:?}, expected nll, nllp or dce")))
    }
}

fn check<T: Scalar>(g: &Graph<T>, log_p: Var, labels: &CorrespondenceLabels) -> Result<(usize, usize)> {
    let (r, c) = g.value(log_p).dims2();
    if r != labels.n + 1 || c != labels.m + 1 {
        return Err(Error::Argument(format!(
            "labels for {}x{} key-points do not fit a {r}x{c} assignment",
            labels.n, labels.m
        )));
    }
    if labels.gt_count() == 0 {
        return Err(Error::Argument("no ground-truth cells".into()));
    }
    Ok((r, c))
}

fn sum_at<T: Scalar>(g: &mut Graph<T>, x: Var, index: &[usize]) -> Result<Option<Var>> {
    if index.is_empty() {
        return Ok(None);
    }
    let picked = g.gather(x, index)?;
    Ok(Some(g.sum(picked)?))
}

fn combine<T: Scalar>(g: &mut Graph<T>, plus: &[Option<Var>], minus: &[(Option<Var>, f64)]) -> Result<Var> {
    let mut terms: Vec<Var> = plus.iter().flatten().copied().collect();
    for &(v, w) in minus {
        if let Some(v) = v {
            terms.push(g.scale(v, T::from_f64(-w))?);
        }
    }
    Ok(g.sum_scalars(&terms)?)
}

/// `-sum log_p` over the ground-truth cells.
pub fn loss_nll<T: Scalar>(g: &mut Graph<T>, log_p: Var, labels: &CorrespondenceLabels) -> Result<Var> {
    let (_, c) = check(g, log_p, labels)?;
    let cells: Vec<usize> = labels.gt_cells().iter().map(|&(i, j)| i * c + j).collect();
    let s = sum_at(g, log_p, &cells)?;
    combine(g, &[], &[(s, 1.0)])
}

/// NLL plus `-log_p[i, dustbin] + logsumexp_j log_p[i, j]` for every
/// unmatched row `i`, the log-sum running over the whole row.
pub fn loss_nllp<T: Scalar>(g: &mut Graph<T>, log_p: Var, labels: &CorrespondenceLabels) -> Result<Var> {
    let nll = loss_nll(g, log_p, labels)?;
    if labels.unmatched_rows.is_empty() {
        return Ok(nll);
    }
    let c = labels.m + 1;
    let row_lse = g.logsumexp(log_p, 1)?;
    let lse = sum_at(g, row_lse, &labels.unmatched_rows)?;
    let cells: Vec<usize> = labels.unmatched_rows.iter().map(|&i| i * c + labels.m).collect();
    let s = sum_at(g, log_p, &cells)?;
    combine(g, &[Some(nll), lse], &[(s, 1.0)])
}

/// Row cross-entropy plus column cross-entropy at each matched cell; dustbin
/// cells contribute only the direction of their real index.
pub fn loss_dce<T: Scalar>(g: &mut Graph<T>, log_p: Var, labels: &CorrespondenceLabels) -> Result<Var> {
    let (_, c) = check(g, log_p, labels)?;
    let row_lse = g.logsumexp(log_p, 1)?;
    let col_lse = g.logsumexp(log_p, 0)?;
    let rows: Vec<usize> = labels
        .matched
        .iter()
        .map(|&(i, _)| i)
        .chain(labels.unmatched_rows.iter().copied())
        .collect();
    let cols: Vec<usize> = labels
        .matched
        .iter()
        .map(|&(_, j)| j)
        .chain(labels.unmatched_cols.iter().copied())
        .collect();
    let matched: Vec<usize> = labels.matched.iter().map(|&(i, j)| i * c + j).collect();
    let dustbin: Vec<usize> = labels
        .unmatched_rows
        .iter()
        .map(|&i| i * c + labels.m)
        .chain(labels.unmatched_cols.iter().map(|&j| labels.n * c + j))
        .collect();
    let r = sum_at(g, row_lse, &rows)?;
    let cl = sum_at(g, col_lse, &cols)?;
    let sm = sum_at(g, log_p, &matched)?;
    let sd = sum_at(g, log_p, &dustbin)?;
    combine(g, &[r, cl], &[(sm, 2.0), (sd, 1.0)])
}

pub fn loss<T: Scalar>(g: &mut Graph<T>, kind: LossKind, log_p: Var, labels: &CorrespondenceLabels) -> Result<Var> {
    match kind {
        LossKind::Nll => loss_nll(g, log_p, labels),
        LossKind::Nllp => loss_nllp(g, log_p, labels),
        LossKind::Dce => loss_dce(g, log_p, labels),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pillarmatch_autodiff::Tensor;

    fn eval(kind: LossKind, lp: &Tensor<f64>, labels: &CorrespondenceLabels) -> f64 {
        let mut g = Graph::new();
        let v = g.constant(lp.clone()).unwrap();
        let l = loss(&mut g, kind, v, labels).unwrap();
        g.value(l).as_slice()[0]
    }

    #[test]
    fn names_parse() {
        for k in LossKind::ALL {
            assert_eq!(k.name().parse::<LossKind>().unwrap(), k);
        }
        assert!("hinge".parse::<LossKind>().is_err());
    }

    #[test]
    fn empty_labels_rejected() {
        let lp = Tensor::<f64>::zeros(&[2, 2]);
        let labels = CorrespondenceLabels { n: 1, m: 1, ignored_rows: vec![0], ignored_cols: vec![0], ..Default::default() };
        let mut g = Graph::new();
        let v = g.constant(lp).unwrap();
        for k in LossKind::ALL {
            assert!(matches!(loss(&mut g, k, v, &labels), Err(Error::Argument(_))));
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let lp = Tensor::<f64>::zeros(&[3, 3]);
        let labels = CorrespondenceLabels { n: 1, m: 1, matched: vec![(0, 0)], ..Default::default() };
        let mut g = Graph::new();
        let v = g.constant(lp).unwrap();
        assert!(loss_nll(&mut g, v, &labels).is_err());
    }

    #[test]
    fn nllp_without_unmatched_rows_equals_nll() {
        let lp = Tensor::from_fn(&[3, 3], |k| -(k as f64) * 0.3 - 0.1);
        let labels = CorrespondenceLabels { n: 2, m: 2, matched: vec![(0, 1)], unmatched_cols: vec![0], ignored_rows: vec![1], ..Default::default() };
        assert_eq!(eval(LossKind::Nllp, &lp, &labels), eval(LossKind::Nll, &lp, &labels));
    }
}
