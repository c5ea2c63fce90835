//! Host-side reference implementations used to produce expected outputs.
//! All matrices are dense row-major `f64` slices.

use crate::error::{Error, Result};

/// Smallest pivot magnitude accepted by [`lu_partial_pivot`].
pub const PIVOT_FLOOR: f64 = 1e-300;

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Dot product in twice the working precision (error-free products and
/// sums), rounded once at the end.
pub fn dot2(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for (&a, &b) in x.iter().zip(y) {
        let p = a * b;
        let ep = a.mul_add(b, -p);
        let (t, es) = two_sum(s, p);
        s = t;
        c += ep + es;
    }
    s + c
}

pub fn matvec(a: &[f64], x: &[f64], m: usize, n: usize) -> Vec<f64> {
    (0..m).map(|i| dot2(&a[i * n..(i + 1) * n], x)).collect()
}

/// `C = A B` with `A` m×k and `B` k×n.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut col = vec![0.0; k];
    let mut c = vec![0.0; m * n];
    for j in 0..n {
        for (l, v) in col.iter_mut().enumerate() {
            *v = b[l * n + j];
        }
        for i in 0..m {
            c[i * n + j] = dot2(&a[i * k..(i + 1) * k], &col);
        }
    }
    c
}

pub fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Unblocked Householder QR in place. On return the upper triangle holds
/// R, the part below the diagonal holds the reflector vectors (unit
/// leading entry implied) and the result is `tau`, with
/// `H_j = I - tau_j v_j v_j^T`.
///
/// Every floating-point operation is performed in a fixed order (serial
/// sums, sign chosen to avoid cancellation), so a straight-line program
/// that follows the same order reproduces the result bit for bit.
pub fn householder_qr(a: &mut [f64], m: usize, n: usize) -> Result<Vec<f64>> {
    assert!(m >= n && a.len() == m * n);
    let mut tau = vec![0.0; n];
    for j in 0..n {
        let mut s = a[j * n + j] * a[j * n + j];
        for i in j + 1..m {
            s += a[i * n + j] * a[i * n + j];
        }
        let norm = s.sqrt();
        if norm < PIVOT_FLOOR {
            return Err(Error::OracleCheck(format!("column {j} is numerically zero")));
        }
        let alpha = a[j * n + j];
        let (denom, beta, t) = if alpha >= 0.0 {
            let denom = alpha + norm;
            (denom, 0.0 - norm, denom / norm)
        } else {
            (alpha - norm, norm, (norm - alpha) / norm)
        };
        for i in j + 1..m {
            a[i * n + j] /= denom;
        }
        a[j * n + j] = beta;
        tau[j] = t;
        for k in j + 1..n {
            let mut w = a[j * n + k];
            for i in j + 1..m {
                w += a[i * n + j] * a[i * n + k];
            }
            let tw = t * w;
            a[j * n + k] -= tw;
            for i in j + 1..m {
                a[i * n + k] -= a[i * n + j] * tw;
            }
        }
    }
    Ok(tau)
}

/// `‖A − QR‖_F` for a factorization produced by [`householder_qr`].
pub fn qr_residual(a: &[f64], factored: &[f64], tau: &[f64], m: usize, n: usize) -> f64 {
    // X = R, then X = H_j X for j = n-1..0
    let mut x = vec![0.0; m * n];
    for i in 0..n {
        for k in i..n {
            x[i * n + k] = factored[i * n + k];
        }
    }
    for j in (0..n).rev() {
        let v = |i: usize| if i == j { 1.0 } else { factored[i * n + j] };
        for k in 0..n {
            let w: f64 = (j..m).map(|i| v(i) * x[i * n + k]).sum();
            for i in j..m {
                x[i * n + k] -= tau[j] * v(i) * w;
            }
        }
    }
    let diff: Vec<f64> = a.iter().zip(&x).map(|(p, q)| p - q).collect();
    frobenius(&diff)
}

/// Right-looking Doolittle LU with partial pivoting (rows physically
/// swapped). Returns the combined L\U factors and `perm`, where row `i`
/// of the factors corresponds to row `perm[i]` of the input.
pub fn lu_partial_pivot(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    assert_eq!(a.len(), n * n);
    let mut lu = a.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..n {
        let mut p = j;
        for i in j + 1..n {
            if lu[i * n + j].abs() > lu[p * n + j].abs() {
                p = i;
            }
        }
        let magnitude = lu[p * n + j].abs();
        if magnitude < PIVOT_FLOOR {
            return Err(Error::SingularPivot { step: j, magnitude });
        }
        if p != j {
            for k in 0..n {
                lu.swap(j * n + k, p * n + k);
            }
            perm.swap(j, p);
        }
        let pivot = lu[j * n + j];
        for i in j + 1..n {
            let l = lu[i * n + j] / pivot;
            lu[i * n + j] = l;
            for k in j + 1..n {
                lu[i * n + k] -= l * lu[j * n + k];
            }
        }
    }
    Ok((lu, perm))
}

/// `‖PA − LU‖_F`.
pub fn lu_residual(a: &[f64], lu: &[f64], perm: &[usize], n: usize) -> f64 {
    let mut sq = 0.0;
    for i in 0..n {
        for k in 0..n {
            let mut s = 0.0;
            for t in 0..=i.min(k) {
                let l = if t == i { 1.0 } else { lu[i * n + t] };
                s += l * lu[t * n + k];
            }
            let d = a[perm[i] * n + k] - s;
            sq += d * d;
        }
    }
    sq.sqrt()
}
