use std::collections::BTreeMap;

use super::builder::{KernelBuilder, VReg};
use super::reference;
use super::{random_values, KernelBundle, KernelSpec, Schedule};
use crate::error::Result;
use crate::isa::{Addr, PerClass};

/// Products emitted before their accumulation in program order. Keeps the
/// multiplies off the add chain without holding a whole row live.
const CHUNK: usize = 16;

/// Emits `Σ a_i * b_i` over the address pairs and returns the sum.
///
/// `ProgramOrder`: for each group of [`CHUNK`] elements, the loads and
/// multiplies, then the serial accumulation into one running sum.
/// `Asap`: every product first, then a balanced tree of adds, level by
/// level, pairing neighbours and carrying an odd element up.
pub(super) fn emit_dot(b: &mut KernelBuilder, pairs: &[(Addr, Addr)], schedule: Schedule) -> VReg {
    assert!(!pairs.is_empty());
    let product = |b: &mut KernelBuilder, (x, y): (Addr, Addr)| {
        let vx = b.load(x);
        let vy = b.load(y);
        b.mul(vx, vy)
    };
    match schedule {
        Schedule::ProgramOrder => {
            let mut acc: Option<VReg> = None;
            for chunk in pairs.chunks(CHUNK) {
                let prods: Vec<VReg> = chunk.iter().map(|&p| product(b, p)).collect();
                for p in prods {
                    acc = Some(match acc {
                        None => p,
                        Some(a) => b.add(a, p),
                    });
                }
            }
            acc.unwrap()
        }
        Schedule::Asap => {
            let mut level: Vec<VReg> = pairs.iter().map(|&p| product(b, p)).collect();
            reduce_tree(b, &mut level)
        }
    }
}

fn reduce_tree(b: &mut KernelBuilder, level: &mut Vec<VReg>) -> VReg {
    while level.len() > 1 {
        let next: Vec<VReg> = level
            .chunks(2)
            .map(|c| if c.len() == 2 { b.add(c[0], c[1]) } else { c[0] })
            .collect();
        *level = next;
    }
    level[0]
}

fn addrs(base: Addr, stride: usize, count: usize) -> impl Iterator<Item = Addr> {
    (0..count).map(move |i| Addr(base.0 + (i * stride) as u32))
}

fn hint(mul: usize, add: usize) -> PerClass<usize> {
    PerClass([mul, add, 0, 0])
}

fn finish(
    spec: &KernelSpec,
    b: KernelBuilder,
    out: Addr,
    values: Vec<f64>,
    stats_hint: PerClass<usize>,
) -> Result<KernelBundle> {
    let (program, inputs) = b.finish(spec.registers);
    let expected_outputs: BTreeMap<Addr, f64> = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| (Addr(out.0 + i as u32), v))
        .collect();
    KernelBundle::assemble(spec.clone(), program, inputs, expected_outputs, stats_hint, None)
}

/// `c = x · y`; x at `[0, n)`, y at `[n, 2n)`, c at `2n`.
pub(super) fn ddot(spec: &KernelSpec, n: usize) -> Result<KernelBundle> {
    let data = random_values(spec.seed, 2 * n);
    let (x, y) = data.split_at(n);
    let mut b = KernelBuilder::new();
    let xa = b.alloc_words(x);
    let ya = b.alloc_words(y);
    let c = b.reserve(1);
    let pairs: Vec<(Addr, Addr)> = addrs(xa, 1, n).zip(addrs(ya, 1, n)).collect();
    let s = emit_dot(&mut b, &pairs, spec.schedule);
    b.store(s, c);
    finish(spec, b, c, vec![reference::dot2(x, y)], hint(n, n - 1))
}

/// `y = A x`; A (m×n, row-major) at 0, then x, then y.
pub(super) fn dgemv(spec: &KernelSpec, m: usize, n: usize) -> Result<KernelBundle> {
    let data = random_values(spec.seed, m * n + n);
    let (a, x) = data.split_at(m * n);
    let mut b = KernelBuilder::new();
    let aa = b.alloc_words(a);
    let xa = b.alloc_words(x);
    let ya = b.reserve(m);
    for i in 0..m {
        let row = Addr(aa.0 + (i * n) as u32);
        let pairs: Vec<(Addr, Addr)> = addrs(row, 1, n).zip(addrs(xa, 1, n)).collect();
        let s = emit_dot(&mut b, &pairs, spec.schedule);
        b.store(s, Addr(ya.0 + i as u32));
    }
    let y = reference::matvec(a, x, m, n);
    finish(spec, b, ya, y, hint(m * n, m * (n - 1)))
}

/// `C = A B`; A (m×k) at 0, then B (k×n), then C (m×n), all row-major.
pub(super) fn dgemm(spec: &KernelSpec, m: usize, k: usize, n: usize) -> Result<KernelBundle> {
    let data = random_values(spec.seed, m * k + k * n);
    let (a, bm) = data.split_at(m * k);
    let mut b = KernelBuilder::new();
    let aa = b.alloc_words(a);
    let ba = b.alloc_words(bm);
    let ca = b.reserve(m * n);
    for i in 0..m {
        for j in 0..n {
            let row = Addr(aa.0 + (i * k) as u32);
            let col = Addr(ba.0 + j as u32);
            let pairs: Vec<(Addr, Addr)> = addrs(row, 1, k).zip(addrs(col, n, k)).collect();
            let s = emit_dot(&mut b, &pairs, spec.schedule);
            b.store(s, Addr(ca.0 + (i * n + j) as u32));
        }
    }
    let c = reference::matmul(a, bm, m, k, n);
    finish(spec, b, ca, c, hint(m * n * k, m * n * (k - 1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{class_counts, OpClass};

    #[test]
    fn program_order_ddot_interleaves_chunks() {
        let spec = KernelSpec::ddot(20);
        let bundle = ddot(&spec, 20).unwrap();
        let ops: Vec<OpClass> = bundle
            .program
            .instructions
            .iter()
            .map(|i| i.op)
            .filter(|c| c.is_arithmetic())
            .collect();
        // 16 products, 15 adds, 4 products, 4 adds
        assert!(ops[..16].iter().all(|&c| c == OpClass::Mul));
        assert!(ops[16..31].iter().all(|&c| c == OpClass::Add));
        assert!(ops[31..35].iter().all(|&c| c == OpClass::Mul));
        assert!(ops[35..].iter().all(|&c| c == OpClass::Add));
        assert_eq!(ops.len(), 39);
    }

    #[test]
    fn asap_tree_has_all_products_first() {
        let spec = KernelSpec::ddot(7).with_schedule(Schedule::Asap);
        let bundle = ddot(&spec, 7).unwrap();
        let fp: Vec<OpClass> = bundle
            .program
            .instructions
            .iter()
            .map(|i| i.op)
            .filter(|c| c.is_arithmetic())
            .collect();
        assert_eq!(fp, [[OpClass::Mul; 7].as_slice(), [OpClass::Add; 6].as_slice()].concat());
        let counts = class_counts(&bundle.program);
        assert_eq!(counts.get(OpClass::Load), 14);
        assert_eq!(counts.get(OpClass::Store), 1);
    }
}
