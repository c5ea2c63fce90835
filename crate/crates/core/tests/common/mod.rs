#![allow(dead_code)]

use pipedepth_core::isa::{Addr, Instruction, MemoryImage, OpClass, Program, Reg};
use proptest::prelude::*;

pub const REGS: u16 = 8;
pub const WORDS: u32 = 8;

fn instruction() -> impl Strategy<Value = Instruction> {
    let reg = || (0..REGS).prop_map(Reg);
    let addr = (0..WORDS).prop_map(Addr);
    (0usize..6, reg(), reg(), reg(), addr, any::<bool>()).prop_map(|(op, d, a, b, m, neg)| match op {
        0 => Instruction::mul(d, a, b),
        1 if neg => Instruction::sub(d, a, b),
        1 => Instruction::add(d, a, b),
        2 => Instruction::sqrt(d, a),
        3 => Instruction::div(d, a, b),
        4 => Instruction::load(d, m),
        _ => Instruction::store(a, m),
    })
}

/// Valid straight-line programs: every register is preloaded, so any
/// instruction sequence over them is well formed.
pub fn program() -> impl Strategy<Value = (Program, MemoryImage)> {
    (
        prop::collection::vec(instruction(), 0..60),
        prop::collection::vec(0.5f64..2.0, REGS as usize),
        prop::collection::vec(-4.0f64..4.0, WORDS as usize),
    )
        .prop_map(|(insts, pre, mem)| {
            let mut p = Program::new(REGS as usize, WORDS as usize);
            for (i, v) in pre.into_iter().enumerate() {
                p.preloaded.insert(Reg(i as u16), v);
            }
            p.instructions = insts;
            (p, MemoryImage { words: mem })
        })
}

pub fn depth() -> impl Strategy<Value = u32> {
    1u32..16
}

pub fn arithmetic_class() -> impl Strategy<Value = OpClass> {
    prop::sample::select(OpClass::ARITHMETIC.to_vec())
}
