//! Virtual-register program builder and register allocator.
//!
//! Kernel generators emit code against an unbounded supply of single-
//! assignment virtual registers. [`KernelBuilder::finish`] maps them onto a
//! fixed register file in one forward pass: when no register is free the
//! value whose next use is furthest away is evicted. An evicted value that
//! still has a clean copy in local memory (it was loaded from, or stored to,
//! an address that is not overwritten before the value dies) is simply
//! reloaded from there; anything else is spilled with a `ST` to a scratch
//! word appended after the kernel's data and reloaded with `LD`.

use std::collections::{BTreeSet, HashMap};

use crate::isa::{Addr, Instruction, MemoryImage, OpClass, Program, Reg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VReg(u32);

#[derive(Debug, Clone, Copy)]
struct VInst {
    op: OpClass,
    negate: bool,
    dst: Option<VReg>,
    src1: Option<VReg>,
    src2: Option<VReg>,
    addr: Option<Addr>,
}

impl VInst {
    fn sources(&self) -> impl Iterator<Item = VReg> {
        self.src1.into_iter().chain(self.src2)
    }
}

#[derive(Debug, Default)]
pub struct KernelBuilder {
    insts: Vec<VInst>,
    next_vreg: u32,
    memory: Vec<f64>,
    constants: HashMap<u64, Addr>,
}

impl KernelBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `values` to the input image and returns the base address.
    pub fn alloc_words(&mut self, values: &[f64]) -> Addr {
        let base = Addr(self.memory.len() as u32);
        self.memory.extend_from_slice(values);
        base
    }

    /// Appends `n` zero words (output areas).
    pub fn reserve(&mut self, n: usize) -> Addr {
        let base = Addr(self.memory.len() as u32);
        self.memory.resize(self.memory.len() + n, 0.0);
        base
    }

    /// Address of a read-only constant word, shared between callers.
    pub fn constant(&mut self, value: f64) -> Addr {
        if let Some(&a) = self.constants.get(&value.to_bits()) {
            return a;
        }
        let a = self.alloc_words(&[value]);
        self.constants.insert(value.to_bits(), a);
        a
    }

    fn fresh(&mut self) -> VReg {
        let v = VReg(self.next_vreg);
        self.next_vreg += 1;
        v
    }

    fn arith(&mut self, op: OpClass, negate: bool, a: VReg, b: Option<VReg>) -> VReg {
        let dst = self.fresh();
        self.insts.push(VInst {
            op,
            negate,
            dst: Some(dst),
            src1: Some(a),
            src2: b,
            addr: None,
        });
        dst
    }

    pub fn load(&mut self, addr: Addr) -> VReg {
        let dst = self.fresh();
        self.insts.push(VInst {
            op: OpClass::Load,
            negate: false,
            dst: Some(dst),
            src1: None,
            src2: None,
            addr: Some(addr),
        });
        dst
    }

    pub fn store(&mut self, value: VReg, addr: Addr) {
        self.insts.push(VInst {
            op: OpClass::Store,
            negate: false,
            dst: None,
            src1: Some(value),
            src2: None,
            addr: Some(addr),
        });
    }

    pub fn mul(&mut self, a: VReg, b: VReg) -> VReg {
        self.arith(OpClass::Mul, false, a, Some(b))
    }

    pub fn add(&mut self, a: VReg, b: VReg) -> VReg {
        self.arith(OpClass::Add, false, a, Some(b))
    }

    pub fn sub(&mut self, a: VReg, b: VReg) -> VReg {
        self.arith(OpClass::Add, true, a, Some(b))
    }

    pub fn div(&mut self, a: VReg, b: VReg) -> VReg {
        self.arith(OpClass::Div, false, a, Some(b))
    }

    pub fn sqrt(&mut self, a: VReg) -> VReg {
        self.arith(OpClass::Sqrt, false, a, None)
    }

    /// Allocates registers and returns the program with its input image
    /// (kernel data followed by zeroed scratch words).
    pub fn finish(self, registers: usize) -> (Program, MemoryImage) {
        assert!(registers >= 3, "need at least three registers");
        let data_words = self.memory.len();
        let mut alloc = Allocator::new(&self.insts, self.next_vreg as usize, registers, data_words);
        alloc.run();
        let memory_words = data_words + alloc.scratch_high;
        let mut memory = self.memory;
        memory.resize(memory_words, 0.0);
        let program = Program {
            instructions: alloc.out,
            num_registers: registers,
            memory_words,
            preloaded: Default::default(),
        };
        (program, MemoryImage { words: memory })
    }
}

struct Allocator<'a> {
    insts: &'a [VInst],
    uses: Vec<Vec<usize>>,
    /// Addresses holding a copy of the value, with the position from which
    /// the copy exists.
    homes: Vec<Vec<(Addr, usize)>>,
    stores_to: HashMap<Addr, Vec<usize>>,

    reg_of: Vec<Option<u16>>,
    occupant: Vec<Option<VReg>>,
    free: BTreeSet<u16>,
    reload_from: Vec<Option<Addr>>,
    slot_of: Vec<Option<u32>>,
    free_slots: BTreeSet<u32>,
    scratch_base: usize,
    scratch_high: usize,
    out: Vec<Instruction>,
}

impl<'a> Allocator<'a> {
    fn new(insts: &'a [VInst], nvregs: usize, registers: usize, scratch_base: usize) -> Self {
        let mut uses = vec![Vec::new(); nvregs];
        let mut homes = vec![Vec::new(); nvregs];
        let mut stores_to: HashMap<Addr, Vec<usize>> = HashMap::new();
        for (i, inst) in insts.iter().enumerate() {
            for v in inst.sources() {
                let u: &mut Vec<usize> = &mut uses[v.0 as usize];
                if u.last() != Some(&i) {
                    u.push(i);
                }
            }
            match inst.op {
                OpClass::Load => homes[inst.dst.unwrap().0 as usize].push((inst.addr.unwrap(), i)),
                OpClass::Store => {
                    let a = inst.addr.unwrap();
                    homes[inst.src1.unwrap().0 as usize].push((a, i));
                    stores_to.entry(a).or_default().push(i);
                }
                _ => {}
            }
        }
        Allocator {
            insts,
            uses,
            homes,
            stores_to,
            reg_of: vec![None; nvregs],
            occupant: vec![None; registers],
            free: (0..registers as u16).collect(),
            reload_from: vec![None; nvregs],
            slot_of: vec![None; nvregs],
            free_slots: BTreeSet::new(),
            scratch_base,
            scratch_high: 0,
            out: Vec::with_capacity(insts.len()),
        }
    }

    fn last_use(&self, v: VReg) -> Option<usize> {
        self.uses[v.0 as usize].last().copied()
    }

    fn next_use(&self, v: VReg, at: usize) -> usize {
        let u = &self.uses[v.0 as usize];
        let k = u.partition_point(|&p| p < at);
        u.get(k).copied().unwrap_or(usize::MAX)
    }

    /// A memory copy of `v` valid from before `at` until `v` dies.
    fn clean_home(&self, v: VReg, at: usize) -> Option<Addr> {
        let last = self.last_use(v)?;
        self.homes[v.0 as usize]
            .iter()
            .find(|&&(addr, from)| {
                from < at
                    && self.stores_to.get(&addr).is_none_or(|s| {
                        let k = s.partition_point(|&p| p <= from);
                        s.get(k).is_none_or(|&p| p > last)
                    })
            })
            .map(|&(a, _)| a)
    }

    fn take_reg(&mut self, at: usize, pinned: &[VReg]) -> u16 {
        if let Some(r) = self.free.pop_first() {
            return r;
        }
        let mut victim: Option<(usize, u16)> = None;
        for (r, occ) in self.occupant.iter().enumerate() {
            let v = occ.expect("register file full but slot empty");
            if pinned.contains(&v) {
                continue;
            }
            let nu = self.next_use(v, at);
            if victim.is_none_or(|(best, _)| nu > best) {
                victim = Some((nu, r as u16));
            }
        }
        let (_, r) = victim.expect("no evictable register");
        let v = self.occupant[r as usize].take().unwrap();
        self.evict(v, r, at);
        r
    }

    fn evict(&mut self, v: VReg, r: u16, at: usize) {
        self.reg_of[v.0 as usize] = None;
        if self.reload_from[v.0 as usize].is_some() {
            return;
        }
        if let Some(home) = self.clean_home(v, at) {
            self.reload_from[v.0 as usize] = Some(home);
            return;
        }
        let slot = self.free_slots.pop_first().unwrap_or_else(|| {
            self.scratch_high += 1;
            (self.scratch_high - 1) as u32
        });
        let addr = Addr((self.scratch_base + slot as usize) as u32);
        self.out.push(Instruction::store(Reg(r), addr));
        self.slot_of[v.0 as usize] = Some(slot);
        self.reload_from[v.0 as usize] = Some(addr);
    }

    fn release_if_dead(&mut self, v: VReg, at: usize) {
        if self.last_use(v).is_none_or(|l| l <= at) {
            if let Some(r) = self.reg_of[v.0 as usize].take() {
                self.occupant[r as usize] = None;
                self.free.insert(r);
            }
            if let Some(slot) = self.slot_of[v.0 as usize].take() {
                self.free_slots.insert(slot);
            }
        }
    }

    fn run(&mut self) {
        for (i, inst) in self.insts.iter().enumerate() {
            let srcs: Vec<VReg> = inst.sources().collect();
            for &v in &srcs {
                if self.reg_of[v.0 as usize].is_none() {
                    let r = self.take_reg(i, &srcs);
                    let from = self.reload_from[v.0 as usize].expect("value used before definition");
                    self.out.push(Instruction::load(Reg(r), from));
                    self.reg_of[v.0 as usize] = Some(r);
                    self.occupant[r as usize] = Some(v);
                }
            }
            let phys = |v: Option<VReg>, s: &Self| v.map(|v| Reg(s.reg_of[v.0 as usize].unwrap()));
            let src1 = phys(inst.src1, self);
            let src2 = phys(inst.src2, self);
            for &v in &srcs {
                self.release_if_dead(v, i);
            }
            let dst = inst.dst.map(|d| {
                let r = self.take_reg(i, &[]);
                self.reg_of[d.0 as usize] = Some(r);
                self.occupant[r as usize] = Some(d);
                Reg(r)
            });
            self.out.push(Instruction {
                op: inst.op,
                dst,
                src1,
                src2,
                addr: inst.addr,
                negate: inst.negate,
            });
            if let Some(d) = inst.dst {
                self.release_if_dead(d, i);
            }
        }
    }
}
