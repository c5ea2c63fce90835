//! Experiment configuration: a TOML file merged with command-line
//! overrides. Every field has a default, so an empty file is valid.
//!
//! ```toml
//! seed = 1
//! window = 4
//! out = "out"
//!
//! [technology]
//! latch_overhead = 0.1
//! logic_delay = { mul = 8.0, add = 8.0, sqrt = 24.0, div = 24.0 }
//!
//! [kernel]
//! name = "ddot"
//! dims = [1000]
//! schedule = "program-order"
//! registers = 64
//!
//! [pipeline]
//! depths = { mul = 4, add = 4, sqrt = 12, div = 12 }
//! mem_latency = 2
//!
//! [sweep]
//! classes = ["mul", "add", "sqrt", "div"]
//! range = [1, 24]
//! add = [1, 32]          # per-class override
//!
//! [model]
//! logic_delay = 8.0
//! instructions = 1000
//! gamma = 0.5
//! hazard_ratios = [0.01, 0.1, 0.4, 0.8]
//! gammas = [0.1, 0.2, 0.4, 0.6, 0.8]
//! gamma_hazard_ratio = 0.1
//! workload_depths = [2, 4, 6, 8]
//! workload_hazard_ratio = 0.1
//! workload_sizes = [10, 100, 1000]
//! range = [1, 64]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use pipedepth_core::isa::{OpClass, PerClass};
use pipedepth_core::kernels::{KernelKind, KernelSpec, Schedule, DEFAULT_REGISTERS, DEFAULT_SEED};
use pipedepth_core::model::TechnologyParams;
use pipedepth_core::sim::PipelineConfig;

use crate::UsageError;

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ClassValues<T> {
    pub mul: T,
    pub add: T,
    pub sqrt: T,
    pub div: T,
}

impl<T: Copy> ClassValues<T> {
    fn to_per_class(self) -> PerClass<T> {
        PerClass([self.mul, self.add, self.sqrt, self.div])
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TechnologySection {
    pub latch_overhead: f64,
    pub logic_delay: ClassValues<f64>,
}

impl Default for TechnologySection {
    fn default() -> Self {
        TechnologySection {
            latch_overhead: 0.1,
            logic_delay: ClassValues {
                mul: 8.0,
                add: 8.0,
                sqrt: 24.0,
                div: 24.0,
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub name: String,
    pub dims: Vec<usize>,
    pub schedule: String,
    pub registers: usize,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection {
            name: "ddot".into(),
            dims: vec![1000],
            schedule: "program-order".into(),
            registers: DEFAULT_REGISTERS,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub depths: ClassValues<u32>,
    pub mem_latency: u32,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let d = PipelineConfig::default();
        PipelineSection {
            depths: ClassValues {
                mul: d.depths[OpClass::Mul],
                add: d.depths[OpClass::Add],
                sqrt: d.depths[OpClass::Sqrt],
                div: d.depths[OpClass::Div],
            },
            mem_latency: d.mem_latency,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub classes: Vec<String>,
    /// Inclusive `[first, last]` depth range for every class.
    pub range: [u32; 2],
    pub mul: Option<[u32; 2]>,
    pub add: Option<[u32; 2]>,
    pub sqrt: Option<[u32; 2]>,
    pub div: Option<[u32; 2]>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            classes: OpClass::ARITHMETIC.iter().map(|c| c.name().to_lowercase()).collect(),
            range: [1, 24],
            mul: None,
            add: None,
            sqrt: None,
            div: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub logic_delay: f64,
    pub instructions: f64,
    pub gamma: f64,
    pub hazard_ratios: Vec<f64>,
    pub gammas: Vec<f64>,
    pub gamma_hazard_ratio: f64,
    pub workload_depths: Vec<u32>,
    pub workload_hazard_ratio: f64,
    pub workload_sizes: Vec<f64>,
    pub range: [u32; 2],
}

impl Default for ModelSection {
    fn default() -> Self {
        let workload_sizes = (1..=7)
            .flat_map(|e| [1.0, 2.0, 5.0].map(|m| m * 10f64.powi(e)))
            .collect();
        ModelSection {
            logic_delay: 8.0,
            instructions: 1000.0,
            gamma: 0.5,
            hazard_ratios: vec![0.01, 0.1, 0.4, 0.8],
            gammas: vec![0.1, 0.2, 0.4, 0.6, 0.8],
            gamma_hazard_ratio: 0.1,
            workload_depths: vec![2, 4, 6, 8],
            workload_hazard_ratio: 0.1,
            workload_sizes,
            range: [1, 64],
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub window: usize,
    pub out: PathBuf,
    pub technology: TechnologySection,
    pub kernel: KernelSection,
    pub pipeline: PipelineSection,
    pub sweep: SweepSection,
    pub model: ModelSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            window: 4,
            out: PathBuf::from("out"),
            technology: TechnologySection::default(),
            kernel: KernelSection::default(),
            pipeline: PipelineSection::default(),
            sweep: SweepSection::default(),
            model: ModelSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub kernel: Option<String>,
    pub dims: Option<Vec<usize>>,
    pub schedule: Option<String>,
    pub window: Option<usize>,
    /// `(class, depth)` pairs for the fixed pipeline.
    pub depths: Vec<(String, u32)>,
    /// Restricts swept classes.
    pub classes: Vec<String>,
    /// Replaces every depth range (sweep and model).
    pub range: Option<[u32; 2]>,
}

fn class_by_name(name: &str) -> Result<OpClass, UsageError> {
    OpClass::from_name(name)
        .filter(|c| c.is_arithmetic())
        .ok_or_else(|| UsageError(format!("unknown arithmetic class `{name}`")))
}

fn check_range(what: &str, r: [u32; 2]) -> Result<Vec<u32>, UsageError> {
    if r[0] < 1 {
        return Err(UsageError(format!("{what}: depths start at 1, got {}", r[0])));
    }
    if r[0] > r[1] {
        return Err(UsageError(format!("{what}: empty depth range {}..={}", r[0], r[1])));
    }
    Ok((r[0]..=r[1]).collect())
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, UsageError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| UsageError(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str(&text)
                    .map_err(|e| UsageError(format!("bad config {}: {e}", p.display())))
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), UsageError> {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(k) = &o.kernel {
            self.kernel.name = k.clone();
        }
        if let Some(d) = &o.dims {
            self.kernel.dims = d.clone();
        }
        if let Some(s) = &o.schedule {
            self.kernel.schedule = s.clone();
        }
        if let Some(w) = o.window {
            self.window = w;
        }
        for (name, p) in &o.depths {
            let d = &mut self.pipeline.depths;
            match class_by_name(name)? {
                OpClass::Mul => d.mul = *p,
                OpClass::Add => d.add = *p,
                OpClass::Sqrt => d.sqrt = *p,
                _ => d.div = *p,
            }
        }
        if !o.classes.is_empty() {
            self.sweep.classes = o.classes.clone();
        }
        if let Some(r) = o.range {
            self.sweep.range = r;
            self.sweep.mul = None;
            self.sweep.add = None;
            self.sweep.sqrt = None;
            self.sweep.div = None;
            self.model.range = r;
        }
        Ok(())
    }

    pub fn technology(&self) -> Result<TechnologyParams, UsageError> {
        TechnologyParams::new(
            self.technology.latch_overhead,
            self.technology.logic_delay.to_per_class().map(|_, &t| Some(t)),
        )
        .map_err(|e| UsageError(e.to_string()))
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec, UsageError> {
        let kind = KernelKind::from_name(&self.kernel.name)
            .ok_or_else(|| UsageError(format!("unknown kernel `{}`", self.kernel.name)))?;
        let schedule = Schedule::from_name(&self.kernel.schedule)
            .ok_or_else(|| UsageError(format!("unknown schedule `{}`", self.kernel.schedule)))?;
        let spec = KernelSpec::new(kind, self.kernel.dims.clone())
            .with_schedule(schedule)
            .with_seed(self.seed)
            .with_registers(self.kernel.registers);
        spec.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(spec)
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, UsageError> {
        let cfg = PipelineConfig {
            depths: self.pipeline.depths.to_per_class(),
            mem_latency: self.pipeline.mem_latency,
            registers: self.kernel.registers,
        };
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn window(&self) -> Result<usize, UsageError> {
        if self.window < 1 {
            return Err(UsageError("hazard window must be at least 1".into()));
        }
        Ok(self.window)
    }

    /// Classes to sweep, in canonical order, with their depth lists.
    pub fn sweep_plan(&self) -> Result<Vec<(OpClass, Vec<u32>)>, UsageError> {
        let mut classes = Vec::new();
        for name in &self.sweep.classes {
            let c = class_by_name(name)?;
            if !classes.contains(&c) {
                classes.push(c);
            }
        }
        classes.sort();
        classes
            .into_iter()
            .map(|c| {
                let own = match c {
                    OpClass::Mul => self.sweep.mul,
                    OpClass::Add => self.sweep.add,
                    OpClass::Sqrt => self.sweep.sqrt,
                    _ => self.sweep.div,
                };
                let r = own.unwrap_or(self.sweep.range);
                Ok((c, check_range(&format!("{c} sweep"), r)?))
            })
            .collect()
    }

    pub fn model_depths(&self) -> Result<Vec<u32>, UsageError> {
        check_range("model", self.model.range)
    }
}

/// Parses `m,k,n`-style dimension lists.
pub fn parse_dims(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("bad dimension `{t}`")))
        .collect()
}

/// Parses `CLASS=P`.
pub fn parse_depth(s: &str) -> Result<(String, u32), String> {
    let (c, p) = s.split_once('=').ok_or("expected CLASS=DEPTH")?;
    let p = p.trim().parse().map_err(|_| format!("bad depth `{p}`"))?;
    Ok((c.trim().to_string(), p))
}

/// Parses an inclusive range `A:B`.
pub fn parse_range(s: &str) -> Result<[u32; 2], String> {
    let (a, b) = s.split_once(':').ok_or("expected FIRST:LAST")?;
    let a = a.trim().parse().map_err(|_| format!("bad depth `{a}`"))?;
    let b = b.trim().parse().map_err(|_| format!("bad depth `{b}`"))?;
    Ok([a, b])
}
