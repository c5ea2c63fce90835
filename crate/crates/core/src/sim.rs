//! Cycle-approximate, single-issue, in-order simulator.
//!
//! Cycles are numbered from 1. An instruction issues one cycle after its
//! predecessor at the earliest, and not before every source register is
//! readable. A result produced by an instruction issued at cycle `c` on a
//! pipe of depth `d` is readable from cycle `c + d`; the instruction
//! completes at the end of cycle `c + d − 1`. Loads additionally wait for
//! the last store to the same address. Pipes are fully pipelined and the
//! register file has unlimited ports, so RAW dependences are the only
//! source of stalls.
//!
//! Values are computed in program order with ordinary IEEE-754 double
//! arithmetic, independently of timing.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::isa::{self, ClassCounts, MemoryImage, OpClass, PerClass, Program, Reg};
use crate::model::TechnologyParams;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub depths: PerClass<u32>,
    /// Latency of the load-store pipe.
    pub mem_latency: u32,
    pub registers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            depths: PerClass([4, 4, 12, 12]),
            mem_latency: 2,
            registers: 64,
        }
    }
}

impl PipelineConfig {
    /// Every pipe, the load-store pipe included, at depth `p`.
    pub fn uniform(p: u32) -> Self {
        PipelineConfig {
            depths: PerClass([p; 4]),
            mem_latency: p,
            ..Self::default()
        }
    }

    pub fn with_depth(mut self, class: OpClass, p: u32) -> Self {
        self.depths[class] = p;
        self
    }

    pub fn with_mem_latency(mut self, latency: u32) -> Self {
        self.mem_latency = latency;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (_, &d) in self.depths.iter() {
            if d < 1 {
                return Err(Error::InvalidDepth(d as f64));
            }
        }
        if self.mem_latency < 1 {
            return Err(Error::InvalidDepth(self.mem_latency as f64));
        }
        Ok(())
    }

    /// Cycles from issue until the result is readable.
    pub fn latency(&self, class: OpClass) -> u32 {
        if class.is_arithmetic() {
            self.depths[class]
        } else {
            self.mem_latency
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub total_cycles: u64,
    pub issued: ClassCounts,
    /// Cycles each class spent waiting at issue, indexed by `OpClass::index`.
    pub stalls: [u64; 6],
    /// Cycles after the last issue spent waiting for the pipes to empty.
    pub drain_cycles: u64,
    pub busy_cycles: u64,
    pub nonbusy_cycles: u64,
    /// Stall cycles charged to each instruction.
    pub instruction_stalls: Vec<u32>,
    pub fp_instructions: usize,
    pub cpi: f64,
    pub final_memory: MemoryImage,
}

impl SimReport {
    pub fn stall(&self, class: OpClass) -> u64 {
        self.stalls[class.index()]
    }

    pub fn total_stalls(&self) -> u64 {
        self.stalls.iter().sum()
    }
}

/// Runs `program` on `inputs` and reports cycle counts and final memory.
pub fn run(program: &Program, inputs: &MemoryImage, config: &PipelineConfig) -> Result<SimReport> {
    execute(program, inputs, config, None)
}

/// As [`run`], writing one `cycle,issued_idx,opclass,stall_reason` line per
/// cycle. Stall cycles show `-` for the index and the class of the waiting
/// instruction; drain cycles show `-` for both.
pub fn run_traced(
    program: &Program,
    inputs: &MemoryImage,
    config: &PipelineConfig,
    trace: &mut dyn Write,
) -> Result<SimReport> {
    writeln!(trace, "cycle,issued_idx,opclass,stall_reason")?;
    execute(program, inputs, config, Some(trace))
}

fn check(program: &Program, inputs: &MemoryImage, config: &PipelineConfig) -> Result<()> {
    config.validate()?;
    let violations = isa::validate(program);
    if !violations.is_empty() {
        return Err(Error::InvalidProgram(violations));
    }
    if inputs.len() != program.memory_words {
        return Err(Error::MemorySize {
            expected: program.memory_words,
            got: inputs.len(),
        });
    }
    if program.num_registers > config.registers {
        return Err(Error::RegisterFile {
            needed: program.num_registers,
            available: config.registers,
        });
    }
    Ok(())
}

fn execute(
    program: &Program,
    inputs: &MemoryImage,
    config: &PipelineConfig,
    mut trace: Option<&mut dyn Write>,
) -> Result<SimReport> {
    check(program, inputs, config)?;

    let mut regs = vec![0.0f64; program.num_registers];
    for (&r, &v) in &program.preloaded {
        regs[r.0 as usize] = v;
    }
    let mut mem = inputs.words.clone();
    // first cycle at which each register / address may be read
    let mut reg_ready = vec![0u64; program.num_registers];
    let mut mem_ready = vec![0u64; program.memory_words];

    let mut issued = ClassCounts::default();
    let mut stalls = [0u64; 6];
    let mut instruction_stalls = Vec::with_capacity(program.len());
    let mut prev_issue = 0u64;
    let mut total = 0u64;

    for (idx, inst) in program.instructions.iter().enumerate() {
        let earliest = prev_issue + 1;
        let mut ready = 0u64;
        let mut blocker = String::new();
        for r in inst.sources() {
            if reg_ready[r.0 as usize] > ready {
                ready = reg_ready[r.0 as usize];
                blocker = format!("raw({r})");
            }
        }
        if inst.op == OpClass::Load {
            let a = inst.addr.unwrap();
            if mem_ready[a.0 as usize] > ready {
                ready = mem_ready[a.0 as usize];
                blocker = format!("mem({a})");
            }
        }
        let issue = earliest.max(ready);
        let stall = issue - earliest;
        stalls[inst.op.index()] += stall;
        instruction_stalls.push(stall as u32);
        issued.0[inst.op.index()] += 1;

        if let Some(t) = trace.as_deref_mut() {
            for c in earliest..issue {
                writeln!(t, "{c},-,{},{blocker}", inst.op)?;
            }
            writeln!(t, "{issue},{idx},{},-", inst.op)?;
        }

        let latency = config.latency(inst.op) as u64;
        let r = |o: Option<Reg>| regs[o.unwrap().0 as usize];
        let value = match inst.op {
            OpClass::Mul => r(inst.src1) * r(inst.src2),
            OpClass::Add if inst.negate => r(inst.src1) - r(inst.src2),
            OpClass::Add => r(inst.src1) + r(inst.src2),
            OpClass::Div => r(inst.src1) / r(inst.src2),
            OpClass::Sqrt => r(inst.src1).sqrt(),
            OpClass::Load => mem[inst.addr.unwrap().0 as usize],
            OpClass::Store => {
                let a = inst.addr.unwrap().0 as usize;
                mem[a] = r(inst.src1);
                mem_ready[a] = issue + latency;
                f64::NAN
            }
        };
        if let Some(d) = inst.dst {
            regs[d.0 as usize] = value;
            reg_ready[d.0 as usize] = issue + latency;
        }
        total = total.max(issue + latency - 1);
        prev_issue = issue;
    }

    if let Some(t) = trace {
        for c in prev_issue + 1..=total {
            writeln!(t, "{c},-,-,drain")?;
        }
    }

    let n = program.len() as u64;
    let fp = program.fp_len();
    let cpi = match (fp, n) {
        (0, 0) => 0.0,
        (0, _) => total as f64 / n as f64,
        _ => total as f64 / fp as f64,
    };
    Ok(SimReport {
        total_cycles: total,
        issued,
        stalls,
        drain_cycles: total - prev_issue,
        busy_cycles: n,
        nonbusy_cycles: total - n,
        instruction_stalls,
        fp_instructions: fp,
        cpi,
        final_memory: MemoryImage { words: mem },
    })
}

/// Runs `program` once per depth in `depths`, varying only `class`.
/// Runs are independent and execute in parallel; results keep the order
/// of `depths`.
pub fn sweep(
    program: &Program,
    inputs: &MemoryImage,
    base: &PipelineConfig,
    class: OpClass,
    depths: &[u32],
) -> Result<Vec<(u32, SimReport)>> {
    assert!(class.is_arithmetic(), "only FP pipe depths can be swept");
    depths
        .par_iter()
        .map(|&p| {
            let cfg = base.clone().with_depth(class, p);
            run(program, inputs, &cfg).map(|r| (p, r))
        })
        .collect()
}

/// Clock period of a design: the slowest stage among pipes that have a
/// logic delay, `max_i (t_p_i / p_i + t_o)`.
pub fn cycle_time(config: &PipelineConfig, tech: &TechnologyParams) -> f64 {
    OpClass::ARITHMETIC
        .iter()
        .filter_map(|&c| class_cycle_time(tech, c, config.depths[c]))
        .fold(0.0, f64::max)
}

/// Stage delay of one pipe: `t_p_i / p + t_o`.
pub fn class_cycle_time(tech: &TechnologyParams, class: OpClass, p: u32) -> Option<f64> {
    tech.logic_delay_of(class)
        .map(|tp| tp / p as f64 + tech.latch_overhead)
}
