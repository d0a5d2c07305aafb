//! Plain forward kernels on row-major buffers.
//!
//! These are shared by the tape and by callers that only need values
//! (inference, Sinkhorn without gradients). All reductions along an axis use
//! the convention: `axis == 1` reduces within each row (over columns),
//! `axis == 0` reduces within each column (over rows).

use crate::Scalar;

/// `a (r x k) * b (k x c)`.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], r: usize, k: usize, c: usize) -> Vec<T> {
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        let out_row = &mut out[i * c..(i + 1) * c];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == T::zero() {
                continue;
            }
            let b_row = &b[p * c..(p + 1) * c];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + aip * bv;
            }
        }
    }
    out
}

/// `a (r x k) * b^T` where `b` is `c x k`.
pub fn matmul_nt<T: Scalar>(a: &[T], b: &[T], r: usize, k: usize, c: usize) -> Vec<T> {
    let bt = transpose(b, c, k);
    matmul(a, &bt, r, k, c)
}

/// `a^T * b` where `a` is `k x r` and `b` is `k x c`.
pub fn matmul_tn<T: Scalar>(a: &[T], b: &[T], k: usize, r: usize, c: usize) -> Vec<T> {
    let mut out = vec![T::zero(); r * c];
    for p in 0..k {
        let a_row = &a[p * r..(p + 1) * r];
        let b_row = &b[p * c..(p + 1) * c];
        for (i, &api) in a_row.iter().enumerate() {
            if api == T::zero() {
                continue;
            }
            let out_row = &mut out[i * c..(i + 1) * c];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + api * bv;
            }
        }
    }
    out
}

pub fn transpose<T: Scalar>(a: &[T], r: usize, c: usize) -> Vec<T> {
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

/// Stable log-sum-exp of a strided lane.
fn lse_lane<T: Scalar>(lane: impl Iterator<Item = T> + Clone) -> T {
    let max = lane.clone().fold(T::neg_infinity(), |m, x| m.max(x));
    if max == T::neg_infinity() {
        return max;
    }
    let sum: T = lane.map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Log-sum-exp along `axis` of an `r x c` matrix. Returns `r` values for
/// `axis == 1`, `c` values for `axis == 0`.
pub fn logsumexp<T: Scalar>(x: &[T], r: usize, c: usize, axis: usize) -> Vec<T> {
    if axis == 1 {
        (0..r)
            .map(|i| lse_lane(x[i * c..(i + 1) * c].iter().copied()))
            .collect()
    } else {
        (0..c)
            .map(|j| lse_lane((0..r).map(move |i| x[i * c + j])))
            .collect()
    }
}

/// Softmax along `axis` with max subtraction.
pub fn softmax<T: Scalar>(x: &[T], r: usize, c: usize, axis: usize) -> Vec<T> {
    let lse = logsumexp(x, r, c, axis);
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        for j in 0..c {
            let shift = if axis == 1 { lse[i] } else { lse[j] };
            out[i * c + j] = (x[i * c + j] - shift).exp();
        }
    }
    out
}

/// Subtracts `v` from every row (`axis == 1`, `v` has `r` entries, one per
/// row) or from every column (`axis == 0`, `v` has `c` entries).
pub fn sub_broadcast<T: Scalar>(x: &[T], v: &[T], r: usize, c: usize, axis: usize) -> Vec<T> {
    let mut out = x.to_vec();
    for i in 0..r {
        for j in 0..c {
            let s = if axis == 1 { v[i] } else { v[j] };
            out[i * c + j] = out[i * c + j] - s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a: Vec<f64> = (0..6).map(|x| x as f64 - 2.0).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|x| (x as f64 * 0.5).sin()).collect(); // 3x4
        let ab = matmul(&a, &b, 2, 3, 4);
        let bt = transpose(&b, 3, 4);
        assert_eq!(matmul_nt(&a, &bt, 2, 3, 4), ab);
        let at = transpose(&a, 2, 3);
        let tn = matmul_tn(&at, &b, 3, 2, 4);
        for (x, y) in tn.iter().zip(&ab) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn logsumexp_handles_large_values() {
        let x = [1000.0f64, 0.0];
        let lse = logsumexp(&x, 1, 2, 1);
        assert!((lse[0] - 1000.0).abs() < 1e-12);
        let s = softmax(&x, 1, 2, 1);
        assert_eq!(s, vec![1.0, (-1000.0f64).exp()]);
    }

    #[test]
    fn column_axis_reduces_over_rows() {
        let x = [0.0f64, 1.0, 0.0, 1.0]; // 2x2
        let lse = logsumexp(&x, 2, 2, 0);
        assert!((lse[0] - 2f64.ln()).abs() < 1e-15);
        assert!((lse[1] - (1.0 + 2f64.ln())).abs() < 1e-15);
    }
}
