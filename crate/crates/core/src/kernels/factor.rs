//! Householder QR and partially pivoted LU as straight-line programs.
//!
//! Both generators run the reference factorization on the concrete input
//! first: LU needs the pivot sequence, QR needs the sign of each diagonal
//! element (the reflector is built to avoid cancellation). The emitted
//! code then performs the same floating-point operations in the same order.

use std::collections::BTreeMap;

use super::builder::{KernelBuilder, VReg};
use super::reference::{self, frobenius};
use super::{random_values, KernelBundle, KernelSpec};
use crate::error::{Error, Result};
use crate::isa::{Addr, PerClass};

const CHUNK: usize = 16;
const RESIDUAL_TOL: f64 = 1e-10;

/// Serial sum `start + Σ x_i * y_i`, emitting products a chunk at a time
/// before folding them into the running sum. With no `start` the first
/// product seeds the sum.
fn chained_dot(
    b: &mut KernelBuilder,
    start: Option<VReg>,
    terms: impl IntoIterator<Item = (VReg, VReg)>,
) -> VReg {
    let terms: Vec<(VReg, VReg)> = terms.into_iter().collect();
    let mut acc = start;
    for chunk in terms.chunks(CHUNK) {
        let prods: Vec<VReg> = chunk.iter().map(|&(x, y)| b.mul(x, y)).collect();
        for p in prods {
            acc = Some(match acc {
                None => p,
                Some(a) => b.add(a, p),
            });
        }
    }
    acc.expect("empty dot product")
}

/// Per-class counts for the QR program on an m×n matrix.
pub fn qr_counts(m: usize, n: usize) -> PerClass<usize> {
    let mut c = PerClass([0, 0, n, 0]);
    for j in 0..n {
        let len = m - j;
        let below = len - 1;
        let cols = n - 1 - j;
        c.0[0] += len + cols * (2 * below + 1);
        c.0[1] += (len - 1) + 2 + cols * (2 * below + 1);
        c.0[3] += len;
    }
    c
}

/// Per-class counts for the LU program on an n×n matrix.
pub fn lu_counts(n: usize) -> PerClass<usize> {
    let update: usize = (0..n).map(|j| (n - 1 - j) * (n - 1 - j)).sum();
    PerClass([update, update, 0, n * (n - 1) / 2])
}

/// A (m×n, row-major) at 0, overwritten by R and the reflectors; tau at
/// `m·n`. One square root per column.
pub(super) fn dgeqrf(spec: &KernelSpec, m: usize, n: usize) -> Result<KernelBundle> {
    let a = random_values(spec.seed, m * n);
    let mut f = a.clone();
    let tau = reference::householder_qr(&mut f, m, n)?;
    let residual = reference::qr_residual(&a, &f, &tau, m, n);
    if residual > RESIDUAL_TOL * frobenius(&a) {
        return Err(Error::OracleCheck(format!(
            "QR residual {residual:e} exceeds {RESIDUAL_TOL:e} * ||A||"
        )));
    }

    let mut b = KernelBuilder::new();
    b.alloc_words(&a);
    let tau_base = b.reserve(n);
    let zero = b.constant(0.0);
    let at = |i: usize, k: usize| Addr((i * n + k) as u32);

    for j in 0..n {
        let mut col = Vec::with_capacity(m - j);
        let mut norm2: Option<VReg> = None;
        let rows: Vec<usize> = (j..m).collect();
        for chunk in rows.chunks(CHUNK) {
            let squares: Vec<VReg> = chunk
                .iter()
                .map(|&i| {
                    let v = b.load(at(i, j));
                    col.push(v);
                    b.mul(v, v)
                })
                .collect();
            for s in squares {
                norm2 = Some(match norm2 {
                    None => s,
                    Some(acc) => b.add(acc, s),
                });
            }
        }
        let norm = b.sqrt(norm2.unwrap());
        let alpha = col[0];
        // R_jj = -norm exactly when the diagonal entry was non-negative
        let (denom, beta, t) = if f[j * n + j] < 0.0 {
            let denom = b.add(alpha, norm);
            let z = b.load(zero);
            let beta = b.sub(z, norm);
            (denom, beta, b.div(denom, norm))
        } else {
            let denom = b.sub(alpha, norm);
            let num = b.sub(norm, alpha);
            (denom, norm, b.div(num, norm))
        };
        let v: Vec<VReg> = col[1..]
            .iter()
            .zip(j + 1..m)
            .map(|(&x, i)| {
                let vi = b.div(x, denom);
                b.store(vi, at(i, j));
                vi
            })
            .collect();
        b.store(beta, at(j, j));
        b.store(t, Addr(tau_base.0 + j as u32));

        for k in j + 1..n {
            let ajk = b.load(at(j, k));
            let aik: Vec<VReg> = (j + 1..m).map(|i| b.load(at(i, k))).collect();
            let w = chained_dot(&mut b, Some(ajk), v.iter().copied().zip(aik.iter().copied()));
            let tw = b.mul(t, w);
            let r = b.sub(ajk, tw);
            b.store(r, at(j, k));
            for (idx, i) in (j + 1..m).enumerate() {
                let u = b.mul(v[idx], tw);
                let s = b.sub(aik[idx], u);
                b.store(s, at(i, k));
            }
        }
    }

    let (program, inputs) = b.finish(spec.registers);
    let mut expected: BTreeMap<Addr, f64> = f.iter().enumerate().map(|(i, &v)| (Addr(i as u32), v)).collect();
    for (j, &t) in tau.iter().enumerate() {
        expected.insert(Addr(tau_base.0 + j as u32), t);
    }
    KernelBundle::assemble(spec.clone(), program, inputs, expected, qr_counts(m, n), None)
}

/// A (n×n, row-major) at 0, overwritten in place by L\U. Rows are never
/// moved: logical row `i` of the factors lives in physical row `pivots[i]`.
pub(super) fn dgetrf(spec: &KernelSpec, n: usize) -> Result<KernelBundle> {
    let a = random_values(spec.seed, n * n);
    let (lu, perm) = reference::lu_partial_pivot(&a, n)?;
    let residual = reference::lu_residual(&a, &lu, &perm, n);
    if residual > RESIDUAL_TOL * frobenius(&a) {
        return Err(Error::OracleCheck(format!(
            "LU residual {residual:e} exceeds {RESIDUAL_TOL:e} * ||A||"
        )));
    }

    let mut b = KernelBuilder::new();
    b.alloc_words(&a);
    let at = |row: usize, k: usize| Addr((row * n + k) as u32);

    for j in 0..n {
        let prow = perm[j];
        let pivot = b.load(at(prow, j));
        let u: Vec<VReg> = (j + 1..n).map(|k| b.load(at(prow, k))).collect();
        for &row in &perm[j + 1..] {
            let x = b.load(at(row, j));
            let l = b.div(x, pivot);
            b.store(l, at(row, j));
            for (idx, k) in (j + 1..n).enumerate() {
                let aik = b.load(at(row, k));
                let t = b.mul(l, u[idx]);
                let s = b.sub(aik, t);
                b.store(s, at(row, k));
            }
        }
    }

    let (program, inputs) = b.finish(spec.registers);
    let expected: BTreeMap<Addr, f64> = (0..n)
        .flat_map(|i| (0..n).map(move |k| (i, k)))
        .map(|(i, k)| (at(perm[i], k), lu[i * n + k]))
        .collect();
    KernelBundle::assemble(spec.clone(), program, inputs, expected, lu_counts(n), Some(perm))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_count_formula_small_cases() {
        // single column: norm of 4 values (4 mul, 3 add), sign fix-up (2 add),
        // one sqrt, tau plus 3 reflector entries (4 div)
        assert_eq!(qr_counts(4, 1).0, [4, 5, 1, 4]);
        assert_eq!(lu_counts(1).0, [0, 0, 0, 0]);
        assert_eq!(lu_counts(4).0, [14, 14, 0, 6]);
    }
}
