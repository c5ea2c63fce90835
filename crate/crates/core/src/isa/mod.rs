//! Minimal three-address floating-point ISA shared by the kernel
//! generators, the characterizer and the simulator.
//!
//! Programs are straight-line: arithmetic instructions read and write a
//! flat register file, `LD`/`ST` move words between registers and a flat
//! local memory addressed by absolute word index.

mod asm;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Index, IndexMut};

pub use asm::{disassemble, parse};

/// Operation class. The first four are the floating-point pipes; loads and
/// stores go through the load-store pipe and never count as FP work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpClass {
    Mul,
    Add,
    Sqrt,
    Div,
    Load,
    Store,
}

impl OpClass {
    pub const ARITHMETIC: [OpClass; 4] = [OpClass::Mul, OpClass::Add, OpClass::Sqrt, OpClass::Div];
    pub const ALL: [OpClass; 6] = [
        OpClass::Mul,
        OpClass::Add,
        OpClass::Sqrt,
        OpClass::Div,
        OpClass::Load,
        OpClass::Store,
    ];

    pub fn is_arithmetic(self) -> bool {
        !matches!(self, OpClass::Load | OpClass::Store)
    }

    /// Position in [`OpClass::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            OpClass::Mul => "Mul",
            OpClass::Add => "Add",
            OpClass::Sqrt => "Sqrt",
            OpClass::Div => "Div",
            OpClass::Load => "Load",
            OpClass::Store => "Store",
        }
    }

    /// Case-insensitive lookup by class name (`mul`, `Add`, ...).
    pub fn from_name(s: &str) -> Option<OpClass> {
        OpClass::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for OpClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per arithmetic class. Indexing with `Load`/`Store` panics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerClass<T>(pub [T; 4]);

impl<T> PerClass<T> {
    pub fn from_fn(mut f: impl FnMut(OpClass) -> T) -> Self {
        PerClass([
            f(OpClass::Mul),
            f(OpClass::Add),
            f(OpClass::Sqrt),
            f(OpClass::Div),
        ])
    }

    pub fn get(&self, class: OpClass) -> Option<&T> {
        self.0.get(class.index())
    }

    pub fn iter(&self) -> impl Iterator<Item = (OpClass, &T)> {
        OpClass::ARITHMETIC.into_iter().zip(self.0.iter())
    }

    pub fn map<U>(&self, mut f: impl FnMut(OpClass, &T) -> U) -> PerClass<U> {
        PerClass::from_fn(|c| f(c, &self[c]))
    }
}

impl<T> Index<OpClass> for PerClass<T> {
    type Output = T;
    fn index(&self, class: OpClass) -> &T {
        assert!(class.is_arithmetic(), "{class} is not an arithmetic class");
        &self.0[class.index()]
    }
}

impl<T> IndexMut<OpClass> for PerClass<T> {
    fn index_mut(&mut self, class: OpClass) -> &mut T {
        assert!(class.is_arithmetic(), "{class} is not an arithmetic class");
        &mut self.0[class.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reg(pub u16);

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Addr(pub u32);

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.0)
    }
}

/// A single instruction. Fields that an opcode does not use are `None`;
/// [`validate`] reports arity mismatches instead of the type forbidding them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Instruction {
    pub op: OpClass,
    pub dst: Option<Reg>,
    pub src1: Option<Reg>,
    pub src2: Option<Reg>,
    pub addr: Option<Addr>,
    /// Add-class only: subtract `src2` instead of adding it.
    pub negate: bool,
}

impl Instruction {
    fn binary(op: OpClass, dst: Reg, a: Reg, b: Reg) -> Self {
        Instruction {
            op,
            dst: Some(dst),
            src1: Some(a),
            src2: Some(b),
            addr: None,
            negate: false,
        }
    }

    pub fn mul(dst: Reg, a: Reg, b: Reg) -> Self {
        Self::binary(OpClass::Mul, dst, a, b)
    }

    pub fn add(dst: Reg, a: Reg, b: Reg) -> Self {
        Self::binary(OpClass::Add, dst, a, b)
    }

    pub fn sub(dst: Reg, a: Reg, b: Reg) -> Self {
        Instruction {
            negate: true,
            ..Self::binary(OpClass::Add, dst, a, b)
        }
    }

    pub fn div(dst: Reg, a: Reg, b: Reg) -> Self {
        Self::binary(OpClass::Div, dst, a, b)
    }

    pub fn sqrt(dst: Reg, a: Reg) -> Self {
        Instruction {
            op: OpClass::Sqrt,
            dst: Some(dst),
            src1: Some(a),
            src2: None,
            addr: None,
            negate: false,
        }
    }

    pub fn load(dst: Reg, addr: Addr) -> Self {
        Instruction {
            op: OpClass::Load,
            dst: Some(dst),
            src1: None,
            src2: None,
            addr: Some(addr),
            negate: false,
        }
    }

    pub fn store(src: Reg, addr: Addr) -> Self {
        Instruction {
            op: OpClass::Store,
            dst: None,
            src1: Some(src),
            src2: None,
            addr: Some(addr),
            negate: false,
        }
    }

    /// Source registers in operand order.
    pub fn sources(&self) -> impl Iterator<Item = Reg> {
        self.src1.into_iter().chain(self.src2)
    }

    pub fn mnemonic(&self) -> &'static str {
        match self.op {
            OpClass::Mul => "MUL",
            OpClass::Add if self.negate => "SUB",
            OpClass::Add => "ADD",
            OpClass::Sqrt => "SQRT",
            OpClass::Div => "DIV",
            OpClass::Load => "LD",
            OpClass::Store => "ST",
        }
    }
}

/// A straight-line program over `num_registers` registers and
/// `memory_words` words of local memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub instructions: Vec<Instruction>,
    pub num_registers: usize,
    pub memory_words: usize,
    /// Registers holding a constant before the first instruction executes.
    pub preloaded: BTreeMap<Reg, f64>,
}

impl Program {
    pub fn new(num_registers: usize, memory_words: usize) -> Self {
        Program {
            instructions: Vec::new(),
            num_registers,
            memory_words,
            preloaded: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, inst: Instruction) -> &mut Self {
        self.instructions.push(inst);
        self
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Number of arithmetic (Mul/Add/Sqrt/Div) instructions.
    pub fn fp_len(&self) -> usize {
        self.instructions
            .iter()
            .filter(|i| i.op.is_arithmetic())
            .count()
    }
}

/// Local-memory contents, one `f64` per word.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryImage {
    pub words: Vec<f64>,
}

impl MemoryImage {
    pub fn zeroed(len: usize) -> Self {
        MemoryImage { words: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Little-endian IEEE-754 doubles, no header.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.words.iter().flat_map(|w| w.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Option<Self> {
        if !bytes.len().is_multiple_of(8) {
            return None;
        }
        let words = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Some(MemoryImage { words })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    MissingOperand(&'static str),
    UnexpectedOperand(&'static str),
    NegateOnNonAdd,
    RegisterOutOfRange(Reg),
    AddressOutOfRange(Addr),
    UseBeforeDef(Reg),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Instruction index, or `None` for program-level problems (preloads).
    pub index: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "instruction {i}: ")?,
            None => write!(f, "program: ")?,
        }
        match &self.kind {
            ViolationKind::MissingOperand(o) => write!(f, "missing {o}"),
            ViolationKind::UnexpectedOperand(o) => write!(f, "unexpected {o}"),
            ViolationKind::NegateOnNonAdd => write!(f, "negate flag on non-Add instruction"),
            ViolationKind::RegisterOutOfRange(r) => write!(f, "register {r} out of range"),
            ViolationKind::AddressOutOfRange(a) => write!(f, "address {a} out of range"),
            ViolationKind::UseBeforeDef(r) => write!(f, "use-before-def of {r}"),
        }
    }
}

/// Operand shape required by each opcode: (dst, src1, src2, addr).
fn shape(op: OpClass) -> (bool, bool, bool, bool) {
    match op {
        OpClass::Mul | OpClass::Add | OpClass::Div => (true, true, true, false),
        OpClass::Sqrt => (true, true, false, false),
        OpClass::Load => (true, false, false, true),
        OpClass::Store => (false, true, false, true),
    }
}

/// Checks every structural invariant and returns all violations, ordered
/// by instruction index (program-level ones first).
pub fn validate(program: &Program) -> Vec<Violation> {
    let mut out = Vec::new();
    let nregs = program.num_registers;
    let reg_ok = |r: Reg| (r.0 as usize) < nregs;

    let mut defined = vec![false; nregs];
    for &r in program.preloaded.keys() {
        if reg_ok(r) {
            defined[r.0 as usize] = true;
        } else {
            out.push(Violation {
                index: None,
                kind: ViolationKind::RegisterOutOfRange(r),
            });
        }
    }

    for (idx, inst) in program.instructions.iter().enumerate() {
        let mut push = |kind| {
            out.push(Violation {
                index: Some(idx),
                kind,
            })
        };
        let (want_dst, want_s1, want_s2, want_addr) = shape(inst.op);
        let fields = [
            ("dst", want_dst, inst.dst.is_some()),
            ("src1", want_s1, inst.src1.is_some()),
            ("src2", want_s2, inst.src2.is_some()),
            ("addr", want_addr, inst.addr.is_some()),
        ];
        for (name, want, have) in fields {
            match (want, have) {
                (true, false) => push(ViolationKind::MissingOperand(name)),
                (false, true) => push(ViolationKind::UnexpectedOperand(name)),
                _ => {}
            }
        }
        if inst.negate && inst.op != OpClass::Add {
            push(ViolationKind::NegateOnNonAdd);
        }
        for r in inst.sources() {
            if !reg_ok(r) {
                push(ViolationKind::RegisterOutOfRange(r));
            } else if !defined[r.0 as usize] {
                push(ViolationKind::UseBeforeDef(r));
            }
        }
        if let Some(a) = inst.addr {
            if a.0 as usize >= program.memory_words {
                push(ViolationKind::AddressOutOfRange(a));
            }
        }
        if let Some(d) = inst.dst {
            if reg_ok(d) {
                defined[d.0 as usize] = true;
            } else {
                push(ViolationKind::RegisterOutOfRange(d));
            }
        }
    }
    out
}

/// Per-class instruction counts, memory classes included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts(pub [usize; 6]);

impl ClassCounts {
    pub fn get(&self, class: OpClass) -> usize {
        self.0[class.index()]
    }

    pub fn set(&mut self, class: OpClass, n: usize) {
        self.0[class.index()] = n;
    }

    /// N_I: total arithmetic instructions.
    pub fn fp_total(&self) -> usize {
        OpClass::ARITHMETIC.iter().map(|&c| self.get(c)).sum()
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn arithmetic(&self) -> PerClass<usize> {
        PerClass::from_fn(|c| self.get(c))
    }
}

pub fn class_counts(program: &Program) -> ClassCounts {
    let mut counts = ClassCounts::default();
    for inst in &program.instructions {
        counts.0[inst.op.index()] += 1;
    }
    counts
}
