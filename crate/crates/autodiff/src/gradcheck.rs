use crate::{AutodiffError, Graph, Result, Tensor, Var};

/// Outcome of comparing reverse-mode gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest `|a - b| / max(|a|, |b|, 1e-8)` over all checked elements.
    pub max_rel_error: f64,
    /// `(parameter, element)` where the largest error occurred.
    pub worst: Option<(usize, usize)>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    /// Number of elements compared.
    pub checked: usize,
}

fn evaluate<F>(f: &F, params: &[Tensor<f64>]) -> Result<(Graph<f64>, Vec<Var>, Var)>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars = params
        .iter()
        .map(|p| g.param(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut g, &vars)?;
    let value = g.value(out);
    if value.len() != 1 {
        return Err(AutodiffError::NotScalar(value.shape().to_vec()));
    }
    if !value.as_slice()[0].is_finite() {
        return Err(AutodiffError::NonFinite { op: "grad_check" });
    }
    Ok((g, vars, out))
}

fn scalar_at<F>(f: &F, params: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let (g, _, out) = evaluate(f, params)?;
    Ok(g.value(out).as_slice()[0])
}

/// Compares the tape gradient of the scalar function `f` with central
/// differences `(f(x + h) - f(x - h)) / 2h` for every element of every
/// parameter. `f` receives the parameters as graph leaves in order.
pub fn grad_check<F>(f: F, params: &[Tensor<f64>], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    if h <= 0.0 || !h.is_finite() {
        return Err(AutodiffError::Argument(format!("step must be positive, got {h}")));
    }
    let (g, vars, out) = evaluate(&f, params)?;
    let grads = g.backward(out)?;
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| grads.get_or_zeros(v, &g)).collect();
    drop(g);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        checked: 0,
    };
    let mut work = params.to_vec();
    for p in 0..params.len() {
        for e in 0..params[p].len() {
            let orig = params[p].as_slice()[e];
            work[p].as_mut_slice()[e] = orig + h;
            let plus = scalar_at(&f, &work)?;
            work[p].as_mut_slice()[e] = orig - h;
            let minus = scalar_at(&f, &work)?;
            work[p].as_mut_slice()[e] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[p].as_slice()[e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((p, e));
                report.analytic_at_worst = a;
                report.numeric_at_worst = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_matches_finite_difference() {
        let x = Tensor::scalar(3.0);
        let report = grad_check(
            |g, v| {
                let y = g.matmul(v[0], v[0])?;
                g.sum(y)
            },
            &[x.reshape(vec![1, 1]).unwrap()],
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-10, "{report:?}");
        assert!((report.analytic_at_worst - 6.0).abs() < 1e-12);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let x = Tensor::vector(vec![1.0, -2.0, 0.5]);
        let report = grad_check(
            |g, _| g.constant(Tensor::scalar(4.0)),
            &[x],
            1e-5,
        )
        .unwrap();
        assert_eq!(report.checked, 3);
        assert!(report.analytic_at_worst.abs() < 1e-10);
        assert!(report.numeric_at_worst.abs() < 1e-10);
    }

    #[test]
    fn non_finite_function_is_rejected() {
        let x = Tensor::vector(vec![1.0]);
        let err = grad_check(
            |g, v| {
                let big = g.scale(v[0], 1e308)?;
                let bigger = g.scale(big, 10.0)?;
                g.sum(bigger)
            },
            &[x],
            1e-5,
        )
        .unwrap_err();
        assert!(matches!(err, AutodiffError::NonFinite { .. }));
    }
}
