//! Straight-line programs for the five dense kernels, with input images
//! and expected results computed on the host.
//!
//! | kernel  | dims      | layout (word addresses)                         |
//! |---------|-----------|-------------------------------------------------|
//! | ddot    | n         | x `[0,n)`, y `[n,2n)`, c `2n`                   |
//! | dgemv   | m, n      | A (m×n), x, y                                   |
//! | dgemm   | m, k, n   | A (m×k), B (k×n), C (m×n)                       |
//! | dgeqrf  | m, n      | A (m×n) in place, tau (n), constant 0.0         |
//! | dgetrf  | n         | A (n×n) in place, rows addressed through pivots |
//!
//! Matrices are row-major. Register spill slots follow the data.

mod blas;
pub mod builder;
mod factor;
pub mod reference;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::isa::{self, class_counts, Addr, MemoryImage, OpClass, PerClass, Program};

pub use factor::{lu_counts, qr_counts};

pub const DEFAULT_REGISTERS: usize = 64;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Ddot,
    Dgemv,
    Dgemm,
    Dgeqrf,
    Dgetrf,
}

impl KernelKind {
    pub const ALL: [KernelKind; 5] = [
        KernelKind::Ddot,
        KernelKind::Dgemv,
        KernelKind::Dgemm,
        KernelKind::Dgeqrf,
        KernelKind::Dgetrf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Ddot => "ddot",
            KernelKind::Dgemv => "dgemv",
            KernelKind::Dgemm => "dgemm",
            KernelKind::Dgeqrf => "dgeqrf",
            KernelKind::Dgetrf => "dgetrf",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }

    /// Number of dimensions the kernel takes, in `--dims` order.
    pub fn arity(self) -> usize {
        match self {
            KernelKind::Ddot | KernelKind::Dgetrf => 1,
            KernelKind::Dgemv | KernelKind::Dgeqrf => 2,
            KernelKind::Dgemm => 3,
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Order in which independent work is emitted. Only the reductions in
/// ddot/dgemv/dgemm are affected; the factorizations have one order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Schedule {
    /// Serial multiply-accumulate chains.
    #[default]
    ProgramOrder,
    /// All products first, then a balanced reduction tree.
    Asap,
}

impl Schedule {
    pub fn name(self) -> &'static str {
        match self {
            Schedule::ProgramOrder => "program-order",
            Schedule::Asap => "asap",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "program-order" | "programorder" => Some(Schedule::ProgramOrder),
            "asap" => Some(Schedule::Asap),
            _ => None,
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// `[n]`, `[m, n]`, `[m, k, n]`, `[m, n]` or `[n]` by kind.
    pub dims: Vec<usize>,
    pub schedule: Schedule,
    pub seed: u64,
    pub registers: usize,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, dims: Vec<usize>) -> Self {
        KernelSpec {
            kind,
            dims,
            schedule: Schedule::default(),
            seed: DEFAULT_SEED,
            registers: DEFAULT_REGISTERS,
        }
    }

    pub fn ddot(n: usize) -> Self {
        Self::new(KernelKind::Ddot, vec![n])
    }

    pub fn dgemv(m: usize, n: usize) -> Self {
        Self::new(KernelKind::Dgemv, vec![m, n])
    }

    pub fn dgemm(m: usize, k: usize, n: usize) -> Self {
        Self::new(KernelKind::Dgemm, vec![m, k, n])
    }

    pub fn dgeqrf(m: usize, n: usize) -> Self {
        Self::new(KernelKind::Dgeqrf, vec![m, n])
    }

    pub fn dgetrf(n: usize) -> Self {
        Self::new(KernelKind::Dgetrf, vec![n])
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_registers(mut self, registers: usize) -> Self {
        self.registers = registers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let want = self.kind.arity();
        if self.dims.len() != want {
            return Err(Error::Dimension(format!(
                "{} takes {want} dimension(s), got {}",
                self.kind,
                self.dims.len()
            )));
        }
        if self.dims.contains(&0) {
            return Err(Error::Dimension(format!("{} dimensions must be >= 1", self.kind)));
        }
        if self.kind == KernelKind::Dgeqrf && self.dims[0] < self.dims[1] {
            return Err(Error::Dimension(format!(
                "dgeqrf needs m >= n, got m={} n={}",
                self.dims[0], self.dims[1]
            )));
        }
        if self.registers < 3 {
            return Err(Error::Dimension(format!(
                "register file of {} is too small (need 3)",
                self.registers
            )));
        }
        Ok(())
    }
}

/// A generated program with everything needed to run and check it.
#[derive(Debug, Clone)]
pub struct KernelBundle {
    pub spec: KernelSpec,
    pub program: Program,
    pub inputs: MemoryImage,
    pub expected_outputs: BTreeMap<Addr, f64>,
    /// Arithmetic instruction counts predicted from the kernel dimensions.
    pub stats_hint: PerClass<usize>,
    /// LU only: physical row holding logical row `i` of the factors.
    pub pivots: Option<Vec<usize>>,
}

impl KernelBundle {
    fn assemble(
        spec: KernelSpec,
        program: Program,
        inputs: MemoryImage,
        expected_outputs: BTreeMap<Addr, f64>,
        stats_hint: PerClass<usize>,
        pivots: Option<Vec<usize>>,
    ) -> Result<Self> {
        let violations = isa::validate(&program);
        if !violations.is_empty() {
            return Err(Error::InvalidProgram(violations));
        }
        let counts = class_counts(&program).arithmetic();
        if counts != stats_hint {
            return Err(Error::OracleCheck(format!(
                "{} program has counts {:?}, expected {:?}",
                spec.kind, counts.0, stats_hint.0
            )));
        }
        Ok(KernelBundle {
            spec,
            program,
            inputs,
            expected_outputs,
            stats_hint,
            pivots,
        })
    }

    /// Largest `|got − want| / |want|` over the expected outputs (absolute
    /// difference where the expected value is zero).
    pub fn max_relative_error(&self, memory: &MemoryImage) -> f64 {
        self.expected_outputs
            .iter()
            .map(|(a, &want)| {
                let got = memory.words[a.0 as usize];
                let diff = (got - want).abs();
                if want == 0.0 {
                    diff
                } else {
                    diff / want.abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// Writes `program.asm`, `inputs.bin` (little-endian doubles) and
    /// `expected.csv` (`address,value`).
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("program.asm"), isa::disassemble(&self.program))?;
        fs::write(dir.join("inputs.bin"), self.inputs.to_le_bytes())?;
        let mut w = csv::Writer::from_path(dir.join("expected.csv"))?;
        w.write_record(["address", "value"])?;
        for (a, v) in &self.expected_outputs {
            w.write_record([a.0.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The three files written by [`KernelBundle::write_dir`], read back.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleFiles {
    pub program: Program,
    pub inputs: MemoryImage,
    pub expected_outputs: BTreeMap<Addr, f64>,
}

pub fn read_dir(dir: &Path) -> Result<BundleFiles> {
    let program = isa::parse(&fs::read_to_string(dir.join("program.asm"))?)?;
    let bytes = fs::read(dir.join("inputs.bin"))?;
    let inputs = MemoryImage::from_le_bytes(&bytes).ok_or(Error::MemorySize {
        expected: program.memory_words,
        got: bytes.len() / 8,
    })?;
    let mut expected_outputs = BTreeMap::new();
    let mut r = csv::Reader::from_path(dir.join("expected.csv"))?;
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Parse {
            line: line + 2,
            msg: "expected `address,value`".into(),
        };
        let addr: u32 = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let value: f64 = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        expected_outputs.insert(Addr(addr), value);
    }
    Ok(BundleFiles {
        program,
        inputs,
        expected_outputs,
    })
}

/// Uniform values in [−1, 1], reproducible from `seed`.
pub fn random_values(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

pub fn generate(spec: &KernelSpec) -> Result<KernelBundle> {
    spec.validate()?;
    let d = &spec.dims;
    match spec.kind {
        KernelKind::Ddot => blas::ddot(spec, d[0]),
        KernelKind::Dgemv => blas::dgemv(spec, d[0], d[1]),
        KernelKind::Dgemm => blas::dgemm(spec, d[0], d[1], d[2]),
        KernelKind::Dgeqrf => factor::dgeqrf(spec, d[0], d[1]),
        KernelKind::Dgetrf => factor::dgetrf(spec, d[0]),
    }
}

pub fn gen_ddot(n: usize, schedule: Schedule, seed: u64) -> Result<KernelBundle> {
    generate(&KernelSpec::ddot(n).with_schedule(schedule).with_seed(seed))
}

pub fn gen_dgemv(m: usize, n: usize, schedule: Schedule, seed: u64) -> Result<KernelBundle> {
    generate(&KernelSpec::dgemv(m, n).with_schedule(schedule).with_seed(seed))
}

pub fn gen_dgemm(m: usize, k: usize, n: usize, schedule: Schedule, seed: u64) -> Result<KernelBundle> {
    generate(&KernelSpec::dgemm(m, k, n).with_schedule(schedule).with_seed(seed))
}

pub fn gen_dgeqrf(m: usize, n: usize, seed: u64) -> Result<KernelBundle> {
    generate(&KernelSpec::dgeqrf(m, n).with_seed(seed))
}

pub fn gen_dgetrf(n: usize, seed: u64) -> Result<KernelBundle> {
    generate(&KernelSpec::dgetrf(n).with_seed(seed))
}

/// FP instruction total of a bundle's hint.
pub fn hinted_fp_total(hint: &PerClass<usize>) -> usize {
    OpClass::ARITHMETIC.iter().map(|&c| hint[c]).sum()
}
