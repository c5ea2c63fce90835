//! Dependency analysis of straight-line programs and estimation of hazard
//! severity from simulated CPI.

use std::fmt::Write as _;
use std::io;

use log::warn;

use crate::error::{Error, Result};
use crate::isa::{class_counts, OpClass, PerClass, Program};
use crate::kernels::KernelBundle;
use crate::model::{ClassProfile, HazardProfile, TechnologyParams};
use crate::sim::{PipelineConfig, SimReport};

pub const DEFAULT_WINDOW: usize = 4;

/// RAW dependence graph over all instructions of a program.
///
/// Levels count arithmetic work only: `level(v) = max over producers u of
/// level(u) + w(u)`, with `w = 1` for arithmetic instructions and `w = 0`
/// for loads and stores, so data movement never lengthens the critical
/// path and the products of a dot product all sit at level 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DepDag {
    /// `(producer, consumer)` pairs, sorted.
    pub edges: Vec<(usize, usize)>,
    pub preds: Vec<Vec<usize>>,
    pub levels: Vec<usize>,
    /// Number of arithmetic levels (0 for a program without arithmetic).
    pub critical_path: usize,
}

impl DepDag {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

pub fn build_dag(program: &Program) -> DepDag {
    let n = program.len();
    let mut last_writer: Vec<Option<usize>> = vec![None; program.num_registers];
    let mut last_store: Vec<Option<usize>> = vec![None; program.memory_words];
    let mut preds = vec![Vec::new(); n];
    let mut levels = vec![0usize; n];
    let mut critical_path = 0;

    for (i, inst) in program.instructions.iter().enumerate() {
        let mut p: Vec<usize> = inst
            .sources()
            .filter_map(|r| last_writer.get(r.0 as usize).copied().flatten())
            .collect();
        if inst.op == OpClass::Load {
            if let Some(s) = inst.addr.and_then(|a| last_store.get(a.0 as usize).copied().flatten()) {
                p.push(s);
            }
        }
        p.sort_unstable();
        p.dedup();
        levels[i] = p
            .iter()
            .map(|&u| levels[u] + program.instructions[u].op.is_arithmetic() as usize)
            .max()
            .unwrap_or(0);
        if inst.op.is_arithmetic() {
            critical_path = critical_path.max(levels[i] + 1);
        }
        preds[i] = p;

        if let Some(d) = inst.dst {
            if let Some(slot) = last_writer.get_mut(d.0 as usize) {
                *slot = Some(i);
            }
        }
        if inst.op == OpClass::Store {
            if let Some(slot) = inst.addr.and_then(|a| last_store.get_mut(a.0 as usize)) {
                *slot = Some(i);
            }
        }
    }

    let mut edges: Vec<(usize, usize)> = preds
        .iter()
        .enumerate()
        .flat_map(|(c, ps)| ps.iter().map(move |&p| (p, c)))
        .collect();
    edges.sort_unstable();
    DepDag {
        edges,
        preds,
        levels,
        critical_path,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HazardEvent {
    pub consumer: usize,
    /// Nearest arithmetic producer inside the window.
    pub producer: usize,
    pub class: OpClass,
    /// `consumer − producer`, in instructions.
    pub distance: usize,
    /// Fraction of the producer's pipe delay the consumer waited, once
    /// measured by simulation.
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HazardCount {
    pub events: Vec<HazardEvent>,
    pub per_class: PerClass<usize>,
}

/// An arithmetic instruction is a hazard when one of its arithmetic
/// producers lies within the previous `window` instructions. Each such
/// instruction counts once, against its own class. Dependences through
/// loads and stores are data movement and are not counted.
pub fn count_hazards(program: &Program, dag: &DepDag, window: usize) -> HazardCount {
    assert!(window >= 1, "hazard window must be at least 1");
    let mut events = Vec::new();
    let mut per_class = PerClass([0usize; 4]);
    for (c, inst) in program.instructions.iter().enumerate() {
        if !inst.op.is_arithmetic() {
            continue;
        }
        let nearest = dag.preds[c]
            .iter()
            .copied()
            .filter(|&p| program.instructions[p].op.is_arithmetic() && c - p <= window)
            .max();
        if let Some(p) = nearest {
            per_class[inst.op] += 1;
            events.push(HazardEvent {
                consumer: c,
                producer: p,
                class: inst.op,
                distance: c - p,
                beta: None,
            });
        }
    }
    HazardCount { events, per_class }
}

/// Fills `beta` from a simulation: stall cycles of the consumer divided by
/// the producer's pipe depth.
pub fn annotate_betas(events: &mut [HazardEvent], program: &Program, report: &SimReport, config: &PipelineConfig) {
    for e in events {
        let depth = config.latency(program.instructions[e.producer].op) as f64;
        let stall = report.instruction_stalls[e.consumer] as f64;
        e.beta = Some((stall / depth).clamp(0.0, 1.0));
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassStats {
    pub instructions: usize,
    pub hazards: usize,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadStats {
    pub classes: PerClass<ClassStats>,
    pub instructions: usize,
    pub hazards: usize,
    pub loads: usize,
    pub stores: usize,
    pub critical_path: usize,
    /// `N_I / critical_path`.
    pub ilp: f64,
    pub window: usize,
}

impl WorkloadStats {
    pub fn class(&self, class: OpClass) -> &ClassStats {
        &self.classes[class]
    }

    pub fn set_gamma(&mut self, class: OpClass, gamma: f64) {
        self.classes[class].gamma = Some(gamma);
    }

    /// `(N_D + N_S) / N_I`.
    pub fn div_sqrt_ratio(&self) -> f64 {
        let ds = self.classes[OpClass::Div].instructions + self.classes[OpClass::Sqrt].instructions;
        ds as f64 / self.instructions.max(1) as f64
    }

    /// Model input for every class, using `default_gamma` where no
    /// fitted value is present.
    pub fn profile(&self, default_gamma: f64) -> Result<ClassProfile> {
        ClassProfile::new(self.classes.map(|_, s| HazardProfile {
            instructions: s.instructions as f64,
            hazards: s.hazards as f64,
            gamma: s.gamma.unwrap_or(default_gamma),
        }))
    }

    /// `class,N_iI,N_iH,gamma_i`, one row per arithmetic class; an unfitted
    /// gamma is written as `-`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["class", "N_iI", "N_iH", "gamma_i"])?;
        for (class, s) in self.classes.iter() {
            w.write_record([
                class.name().to_string(),
                s.instructions.to_string(),
                s.hazards.to_string(),
                s.gamma.map_or_else(|| "-".to_string(), |g| g.to_string()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "FP instructions N_I   {}", self.instructions);
        let _ = writeln!(s, "hazards N_H (W={})    {}", self.window, self.hazards);
        let _ = writeln!(s, "loads / stores        {} / {}", self.loads, self.stores);
        let _ = writeln!(s, "critical path         {}", self.critical_path);
        let _ = writeln!(s, "ILP                   {:.4}", self.ilp);
        let _ = writeln!(s, "(N_D + N_S) / N_I     {:.6}", self.div_sqrt_ratio());
        let _ = writeln!(s, "class  N_iI       N_iH       N_iH/N_iI  gamma");
        for (class, c) in self.classes.iter() {
            let ratio = if c.instructions > 0 {
                format!("{:.4}", c.hazards as f64 / c.instructions as f64)
            } else {
                "-".into()
            };
            let gamma = c.gamma.map_or_else(|| "-".to_string(), |g| format!("{g:.6}"));
            let _ = writeln!(s, "{:<6} {:<10} {:<10} {:<10} {}", class.name(), c.instructions, c.hazards, ratio, gamma);
        }
        s
    }
}

pub fn characterize_program(program: &Program, window: usize) -> WorkloadStats {
    let counts = class_counts(program);
    let dag = build_dag(program);
    let hazards = count_hazards(program, &dag, window);
    let classes = PerClass::from_fn(|c| ClassStats {
        instructions: counts.get(c),
        hazards: hazards.per_class[c],
        gamma: None,
    });
    let instructions = counts.fp_total();
    WorkloadStats {
        classes,
        instructions,
        hazards: hazards.events.len(),
        loads: counts.get(OpClass::Load),
        stores: counts.get(OpClass::Store),
        critical_path: dag.critical_path,
        ilp: if dag.critical_path == 0 {
            0.0
        } else {
            instructions as f64 / dag.critical_path as f64
        },
        window,
    }
}

pub fn characterize(bundle: &KernelBundle, window: usize) -> WorkloadStats {
    characterize_program(&bundle.program, window)
}

/// One simulated design point: pipe depths and measured CPI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimPoint {
    pub depths: PerClass<u32>,
    pub cpi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFit {
    pub class: OpClass,
    pub gamma: f64,
    /// Unclamped estimate.
    pub raw_gamma: f64,
    /// CPI the fitted line extrapolates to at depth 0.
    pub base_cpi: f64,
    /// RMS difference between measured and fitted CPI.
    pub residual: f64,
    /// `N_iH / N_iI` of the class.
    pub hazard_ratio: f64,
}

impl GammaFit {
    /// CPI predicted by the fit at depth `p`.
    pub fn cpi(&self, p: f64) -> f64 {
        self.base_cpi * (1.0 + self.gamma * self.hazard_ratio * p)
    }

    /// Closed-form optimum depth with the fitted gamma.
    pub fn p_opt(&self, tech: &TechnologyParams) -> Option<f64> {
        let t_p = tech.logic_delay_of(self.class)?;
        let x = t_p / (self.gamma * self.hazard_ratio * tech.latch_overhead);
        x.is_finite().then(|| x.sqrt())
    }
}

pub const GAMMA_FLOOR: f64 = 1e-6;

/// Least-squares estimate of `gamma_i` from CPI measured while only the
/// depth of `class` varies.
///
/// Within the model, a class's time per instruction is its stage time
/// `t_p/p + t_o` times `1 + gamma*h*p` cycles, `h = N_iH/N_iI`. The other
/// pipes add a depth-independent share, so measured CPI is fitted as
/// `b*(1 + gamma*h*p)`: a straight line whose slope over intercept gives
/// `gamma*h`. Residuals are weighted by the squared stage time so that the
/// fit minimizes error in time rather than in cycles. The estimate is
/// clamped to `(0, 1]`.
pub fn fit_gamma(
    stats: &WorkloadStats,
    tech: &TechnologyParams,
    points: &[SimPoint],
    class: OpClass,
) -> Result<GammaFit> {
    let fail = |reason: &str| Error::Fit {
        class,
        reason: reason.to_string(),
    };
    let s = stats.class(class);
    if s.hazards == 0 {
        return Err(fail("class has no hazards, so its depth has no finite optimum"));
    }
    let t_p = tech
        .logic_delay_of(class)
        .ok_or_else(|| fail("no logic delay for this class"))?;
    if points.len() < 3 {
        return Err(fail("need at least three simulated points"));
    }
    let first = points[0].depths;
    for pt in points {
        for c in OpClass::ARITHMETIC {
            if c != class && pt.depths[c] != first[c] {
                return Err(fail("other pipe depths vary between points"));
            }
        }
        if !(pt.cpi > 0.0 && pt.cpi.is_finite()) {
            return Err(fail("non-positive CPI"));
        }
    }
    if points.iter().all(|pt| pt.depths[class] == first[class]) {
        return Err(fail("all points have the same depth"));
    }

    // weighted linear regression cpi = c0 + c1*p
    let (mut sw, mut swx, mut swy, mut swxx, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for pt in points {
        let p = pt.depths[class] as f64;
        let tau = t_p / p + tech.latch_overhead;
        let w = tau * tau;
        sw += w;
        swx += w * p;
        swy += w * pt.cpi;
        swxx += w * p * p;
        swxy += w * p * pt.cpi;
    }
    let det = sw * swxx - swx * swx;
    let c1 = (sw * swxy - swx * swy) / det;
    let c0 = (swy - c1 * swx) / sw;
    if !(c0 > 0.0) {
        return Err(fail("fitted base CPI is not positive"));
    }
    let h = s.hazards as f64 / s.instructions as f64;
    let raw_gamma = c1 / (c0 * h);
    let gamma = if raw_gamma > 1.0 {
        warn!("{class}: fitted gamma {raw_gamma} above 1, clamped");
        1.0
    } else if !(raw_gamma > 0.0) {
        warn!("{class}: fitted gamma {raw_gamma} not positive, clamped to {GAMMA_FLOOR}");
        GAMMA_FLOOR
    } else {
        raw_gamma
    };
    let fit = GammaFit {
        class,
        gamma,
        raw_gamma,
        base_cpi: c0,
        residual: 0.0,
        hazard_ratio: h,
    };
    let sq: f64 = points
        .iter()
        .map(|pt| (pt.cpi - fit.cpi(pt.depths[class] as f64)).powi(2))
        .sum();
    Ok(GammaFit {
        residual: (sq / points.len() as f64).sqrt(),
        ..fit
    })
}

/// Collects `(depths, cpi)` points from a simulator sweep.
pub fn sim_points(base: &PipelineConfig, class: OpClass, sweep: &[(u32, SimReport)]) -> Vec<SimPoint> {
    sweep
        .iter()
        .map(|(p, r)| {
            let mut depths = base.depths;
            depths[class] = *p;
            SimPoint { depths, cpi: r.cpi }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{Addr, Instruction, Reg};

    fn dot4_asap() -> Program {
        let mut p = Program::new(16, 9);
        for i in 0..8u16 {
            p.push(Instruction::load(Reg(i), Addr(i as u32)));
        }
        for i in 0..4u16 {
            p.push(Instruction::mul(Reg(8 + i), Reg(2 * i), Reg(2 * i + 1)));
        }
        p.push(Instruction::add(Reg(12), Reg(8), Reg(9)))
            .push(Instruction::add(Reg(13), Reg(10), Reg(11)))
            .push(Instruction::add(Reg(14), Reg(12), Reg(13)))
            .push(Instruction::store(Reg(14), Addr(8)));
        p
    }

    #[test]
    fn dot_levels() {
        let p = dot4_asap();
        let dag = build_dag(&p);
        assert!(dag.levels[8..12].iter().all(|&l| l == 0));
        assert_eq!(&dag.levels[12..15], &[1, 1, 2]);
        assert_eq!(dag.critical_path, 3);
        assert_eq!(dag.edges.len(), 8 + 6 + 1);
        assert!(dag.edges.iter().all(|&(a, b)| a < b));
    }

    #[test]
    fn window_one_hazards() {
        let p = dot4_asap();
        let dag = build_dag(&p);
        let h = count_hazards(&p, &dag, 1);
        assert_eq!(h.per_class[OpClass::Mul], 0);
        assert_eq!(h.per_class[OpClass::Add], 1);
        assert_eq!(h.events[0].consumer, 14);
        assert_eq!(h.events[0].distance, 1);
        // wider window: the second-level add still counts once
        let h = count_hazards(&p, &dag, 100);
        assert_eq!(h.per_class[OpClass::Add], 3);
    }

    #[test]
    fn store_to_load_edges() {
        let mut p = Program::new(4, 2);
        p.preloaded.insert(Reg(0), 2.0);
        p.push(Instruction::mul(Reg(1), Reg(0), Reg(0)))
            .push(Instruction::store(Reg(1), Addr(0)))
            .push(Instruction::load(Reg(2), Addr(0)))
            .push(Instruction::load(Reg(3), Addr(1)))
            .push(Instruction::add(Reg(1), Reg(2), Reg(3)));
        let dag = build_dag(&p);
        assert_eq!(dag.edges, vec![(0, 1), (1, 2), (2, 4), (3, 4)]);
        // the multiply feeds the add through memory
        assert_eq!(dag.levels[4], 1);
        assert_eq!(dag.critical_path, 2);
    }

    #[test]
    fn csv_and_report() {
        let stats = characterize_program(&dot4_asap(), 1);
        let mut buf = Vec::new();
        stats.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "class,N_iI,N_iH,gamma_i\nMul,4,0,-\nAdd,3,1,-\nSqrt,0,0,-\nDiv,0,0,-\n"
        );
        assert!(stats.report().contains("ILP"));
        assert!((stats.ilp - 7.0 / 3.0).abs() < 1e-15);
    }

    fn synthetic(gamma: f64, h: f64, base: f64) -> Vec<SimPoint> {
        (1..=16)
            .map(|p| SimPoint {
                depths: PerClass([4, p, 12, 12]),
                cpi: base * (1.0 + gamma * h * p as f64),
            })
            .collect()
    }

    fn stats_with(instructions: usize, hazards: usize) -> WorkloadStats {
        let mut s = characterize_program(&Program::new(1, 0), 1);
        s.classes[OpClass::Add] = ClassStats {
            instructions,
            hazards,
            gamma: None,
        };
        s.instructions = instructions;
        s.hazards = hazards;
        s
    }

    #[test]
    fn fit_recovers_synthetic_gamma() {
        let tech = TechnologyParams::default();
        let stats = stats_with(1000, 400);
        let fit = fit_gamma(&stats, &tech, &synthetic(0.3, 0.4, 1.7), OpClass::Add).unwrap();
        assert!((fit.gamma - 0.3).abs() < 1e-6);
        assert!((fit.base_cpi - 1.7).abs() < 1e-9);
        assert!(fit.residual < 1e-9);
    }

    #[test]
    fn fit_clamps_and_rejects() {
        let tech = TechnologyParams::default();
        let stats = stats_with(1000, 100);
        let steep = fit_gamma(&stats, &tech, &synthetic(3.0, 0.1, 1.0), OpClass::Add).unwrap();
        assert_eq!(steep.gamma, 1.0);
        assert!((steep.raw_gamma - 3.0).abs() < 1e-9);

        let pts = synthetic(0.3, 0.1, 1.0);
        assert!(fit_gamma(&stats, &tech, &pts[..2], OpClass::Add).is_err());
        let flat: Vec<SimPoint> = pts.iter().map(|p| SimPoint { depths: pts[0].depths, ..*p }).collect();
        assert!(fit_gamma(&stats, &tech, &flat, OpClass::Add).is_err());
        assert!(matches!(
            fit_gamma(&stats_with(1000, 0), &tech, &pts, OpClass::Add),
            Err(Error::Fit { .. })
        ));
        let mut mixed = pts.clone();
        mixed[3].depths[OpClass::Mul] = 9;
        assert!(fit_gamma(&stats, &tech, &mixed, OpClass::Add).is_err());
    }
}
