use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;

use pipedepth_core::characterize::{self, fit_gamma, sim_points, GammaFit, WorkloadStats};
use pipedepth_core::isa::OpClass;
use pipedepth_core::kernels::{self, KernelBundle, KernelSpec};
use pipedepth_core::model::{self, HazardProfile, TechnologyParams};
use pipedepth_core::sim::{self, class_cycle_time, SimReport};

use crate::config::RunConfig;

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn csv_writer(dir: &Path, name: &str) -> Result<(csv::Writer<BufWriter<File>>, PathBuf)> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok((csv::Writer::from_writer(BufWriter::new(file)), path))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn dims_label(spec: &KernelSpec) -> String {
    spec.dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

fn generate(spec: &KernelSpec) -> Result<KernelBundle> {
    info!("generating {} {} ({})", spec.kind, dims_label(spec), spec.schedule);
    kernels::generate(spec).with_context(|| format!("generating {} {}", spec.kind, dims_label(spec)))
}

/// Writes the three theoretical curve families. Returns the files written.
pub fn model_curve(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let m = &cfg.model;
    let t_o = cfg.technology.latch_overhead;
    let depths = cfg.model_depths()?;
    let mut written = Vec::new();

    let (mut w, path) = csv_writer(&cfg.out, "model_depth.csv")?;
    w.write_record(["hazard_ratio", "p", "tpi"])?;
    for &r in &m.hazard_ratios {
        let profile = HazardProfile::new(m.instructions, r * m.instructions, m.gamma)?;
        for (p, tpi) in model::sweep_depth(&profile, t_o, m.logic_delay, &depths, false)?.points {
            w.write_record([r.to_string(), p.to_string(), tpi.to_string()])?;
        }
    }
    w.flush()?;
    written.push(path);

    let (mut w, path) = csv_writer(&cfg.out, "model_gamma.csv")?;
    w.write_record(["gamma", "p", "tpi"])?;
    let profile = HazardProfile::new(m.instructions, m.gamma_hazard_ratio * m.instructions, m.gamma)?;
    for (g, curve) in model::sweep_gamma(&profile, &m.gammas, t_o, m.logic_delay, &depths)? {
        for (p, tpi) in curve.points {
            w.write_record([g.to_string(), p.to_string(), tpi.to_string()])?;
        }
    }
    w.flush()?;
    written.push(path);

    let (mut w, path) = csv_writer(&cfg.out, "model_workload.csv")?;
    w.write_record(["p", "instructions", "tpi"])?;
    for &p in &m.workload_depths {
        let curve = model::sweep_workload(m.workload_hazard_ratio, m.gamma, t_o, m.logic_delay, p, &m.workload_sizes)?;
        for (n, tpi) in curve.points {
            w.write_record([p.to_string(), n.to_string(), tpi.to_string()])?;
        }
    }
    w.flush()?;
    written.push(path);
    Ok(written)
}

/// Generates the kernel, characterizes it and writes `stats.csv` and
/// `report.txt`. Returns the report.
pub fn characterize(cfg: &RunConfig) -> Result<String> {
    let spec = cfg.kernel_spec()?;
    let bundle = generate(&spec)?;
    let stats = characterize::characterize(&bundle, cfg.window()?);
    let report = format!("kernel {} {} ({})\n{}", spec.kind, dims_label(&spec), spec.schedule, stats.report());
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let path = cfg.out.join("stats.csv");
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    stats.write_csv(BufWriter::new(file))?;
    write_text(&cfg.out, "report.txt", &report)?;
    Ok(report)
}

/// Single simulation at the configured depths; writes `simulate.csv` and
/// optionally `trace.csv` and the kernel bundle.
pub fn simulate(cfg: &RunConfig, trace: bool, emit_bundle: bool) -> Result<SimReport> {
    let spec = cfg.kernel_spec()?;
    let pipeline = cfg.pipeline()?;
    let tech = cfg.technology()?;
    let bundle = generate(&spec)?;
    if emit_bundle {
        bundle.write_dir(&cfg.out.join("bundle"))?;
    }
    let report = if trace {
        fs::create_dir_all(&cfg.out)?;
        let path = cfg.out.join("trace.csv");
        let mut f = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        sim::run_traced(&bundle.program, &bundle.inputs, &pipeline, &mut f)
    } else {
        sim::run(&bundle.program, &bundle.inputs, &pipeline)
    }
    .with_context(|| format!("simulating {} with {:?}", spec.kind, pipeline))?;

    let cycle_time = sim::cycle_time(&pipeline, &tech);
    let (mut w, _) = csv_writer(&cfg.out, "simulate.csv")?;
    let mut header = vec![
        "kernel", "schedule", "dims", "p_mul", "p_add", "p_sqrt", "p_div", "mem_latency", "instructions",
        "fp_instructions", "total_cycles", "busy_cycles", "nonbusy_cycles", "drain_cycles",
    ];
    let stall_cols: Vec<String> = OpClass::ALL.iter().map(|c| format!("stall_{}", c.name().to_lowercase())).collect();
    header.extend(stall_cols.iter().map(String::as_str));
    header.extend(["cpi", "cycle_time", "tpi", "max_rel_error"]);
    w.write_record(&header)?;
    let mut row = vec![
        spec.kind.to_string(),
        spec.schedule.to_string(),
        dims_label(&spec),
    ];
    row.extend(OpClass::ARITHMETIC.iter().map(|&c| pipeline.depths[c].to_string()));
    row.extend([
        pipeline.mem_latency.to_string(),
        bundle.program.len().to_string(),
        report.fp_instructions.to_string(),
        report.total_cycles.to_string(),
        report.busy_cycles.to_string(),
        report.nonbusy_cycles.to_string(),
        report.drain_cycles.to_string(),
    ]);
    row.extend(report.stalls.iter().map(|s| s.to_string()));
    row.extend([
        report.cpi.to_string(),
        cycle_time.to_string(),
        (report.cpi * cycle_time).to_string(),
        bundle.max_relative_error(&report.final_memory).to_string(),
    ]);
    w.write_record(&row)?;
    w.flush()?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub class: OpClass,
    pub p: u32,
    pub cpi: f64,
    /// Stage time of the swept pipe, `t_p/p + t_o`.
    pub cycle_time: f64,
    pub tpi: f64,
    /// Fitted model TPI, when a fit exists.
    pub model_tpi: Option<f64>,
    pub stalls: [u64; 6],
    pub drain: u64,
}

#[derive(Debug, Clone)]
pub struct ClassSweep {
    pub class: OpClass,
    pub rows: Vec<SweepRow>,
    pub fit: std::result::Result<GammaFit, String>,
}

impl ClassSweep {
    /// Depth with the lowest wall-clock TPI (smallest depth on ties).
    pub fn argmin(&self) -> Option<u32> {
        self.rows
            .iter()
            .fold(None, |best: Option<&SweepRow>, r| match best {
                Some(b) if b.tpi <= r.tpi => Some(b),
                _ => Some(r),
            })
            .map(|r| r.p)
    }
}

pub struct Experiment {
    pub spec: KernelSpec,
    pub stats: WorkloadStats,
    pub tech: TechnologyParams,
    pub sweeps: Vec<ClassSweep>,
}

/// Sweeps every configured class present in the workload, fitting gamma
/// for each.
pub fn run_sweeps(cfg: &RunConfig) -> Result<Experiment> {
    let spec = cfg.kernel_spec()?;
    let base = cfg.pipeline()?;
    let tech = cfg.technology()?;
    let plan = cfg.sweep_plan()?;
    let bundle = generate(&spec)?;
    let mut stats = characterize::characterize(&bundle, cfg.window()?);
    let mut sweeps = Vec::new();
    for (class, depths) in plan {
        if stats.class(class).instructions == 0 {
            info!("{class}: not present in {}, skipped", spec.kind);
            continue;
        }
        info!("sweeping {class} over {}..={}", depths[0], depths[depths.len() - 1]);
        let results = sim::sweep(&bundle.program, &bundle.inputs, &base, class, &depths)
            .with_context(|| format!("sweeping {class} for {} {}", spec.kind, dims_label(&spec)))?;
        let fit = fit_gamma(&stats, &tech, &sim_points(&base, class, &results), class).map_err(|e| e.to_string());
        if let Ok(f) = &fit {
            stats.set_gamma(class, f.gamma);
        }
        let rows = results
            .iter()
            .map(|(p, r)| sweep_row(class, *p, r, &tech, fit.as_ref().ok()))
            .collect();
        sweeps.push(ClassSweep { class, rows, fit });
    }
    Ok(Experiment {
        spec,
        stats,
        tech,
        sweeps,
    })
}

fn sweep_row(class: OpClass, p: u32, r: &SimReport, tech: &TechnologyParams, fit: Option<&GammaFit>) -> SweepRow {
    let cycle_time = class_cycle_time(tech, class, p).expect("technology has every class");
    SweepRow {
        class,
        p,
        cpi: r.cpi,
        cycle_time,
        tpi: r.cpi * cycle_time,
        model_tpi: fit.map(|f| f.cpi(p as f64) * cycle_time),
        stalls: r.stalls,
        drain: r.drain_cycles,
    }
}

pub fn write_sweep(cfg: &RunConfig, exp: &Experiment) -> Result<PathBuf> {
    let (mut w, path) = csv_writer(&cfg.out, "sweep.csv")?;
    let mut header: Vec<String> = ["class", "p", "cpi", "cycle_time", "tpi", "model_tpi"]
        .map(String::from)
        .to_vec();
    header.extend(OpClass::ALL.iter().map(|c| format!("stall_{}", c.name().to_lowercase())));
    header.push("drain".into());
    w.write_record(&header)?;
    for s in &exp.sweeps {
        for r in &s.rows {
            let mut row = vec![
                r.class.name().to_string(),
                r.p.to_string(),
                r.cpi.to_string(),
                r.cycle_time.to_string(),
                r.tpi.to_string(),
                opt(r.model_tpi),
            ];
            row.extend(r.stalls.iter().map(|s| s.to_string()));
            row.push(r.drain.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(path)
}

pub fn write_fit(cfg: &RunConfig, exp: &Experiment) -> Result<PathBuf> {
    let (mut w, path) = csv_writer(&cfg.out, "fit.csv")?;
    w.write_record(["class", "status", "gamma", "raw_gamma", "base_cpi", "hazard_ratio", "residual", "p_opt"])?;
    for s in &exp.sweeps {
        match &s.fit {
            Ok(f) => w.write_record([
                s.class.name().to_string(),
                "ok".into(),
                f.gamma.to_string(),
                f.raw_gamma.to_string(),
                f.base_cpi.to_string(),
                f.hazard_ratio.to_string(),
                f.residual.to_string(),
                opt(f.p_opt(&exp.tech)),
            ])?,
            Err(e) => {
                let mut row = vec![s.class.name().to_string(), e.replace(',', ";")];
                row.extend(std::iter::repeat_n("-".to_string(), 6));
                w.write_record(&row)?
            }
        }
    }
    w.flush()?;
    Ok(path)
}

pub const DEPTH_INSENSITIVE: &str = "no finite optimum: depth-insensitive - choose by frequency target";

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub class: OpClass,
    pub instructions: usize,
    pub hazards: usize,
    pub gamma: Option<f64>,
    pub p_opt: Option<f64>,
    /// Better of the two integers around `p_opt` under the fitted model.
    pub depth: Option<u32>,
    pub sim_argmin: Option<u32>,
    /// `p_opt − sim_argmin`.
    pub delta: Option<f64>,
    pub note: String,
}

/// Recommendation for one class from its counts, a gamma fit (or the
/// reason it failed) and the simulated TPI argmin.
pub fn recommend_class(
    class: OpClass,
    stats: &WorkloadStats,
    tech: &TechnologyParams,
    fit: std::result::Result<&GammaFit, &str>,
    sim_argmin: Option<u32>,
) -> Recommendation {
    let s = stats.class(class);
    let mut rec = Recommendation {
        class,
        instructions: s.instructions,
        hazards: s.hazards,
        gamma: None,
        p_opt: None,
        depth: None,
        sim_argmin,
        delta: None,
        note: String::new(),
    };
    if s.instructions == 0 {
        rec.note = "absent from workload".into();
        return rec;
    }
    if s.hazards == 0 {
        rec.note = DEPTH_INSENSITIVE.into();
        return rec;
    }
    let fit = match fit {
        Ok(f) => f,
        Err(reason) => {
            rec.note = format!("fit failed: {}", reason.replace(',', ";"));
            return rec;
        }
    };
    let t_p = tech.logic_delay_of(class).expect("technology has every class");
    let profile = HazardProfile {
        instructions: s.instructions as f64,
        hazards: s.hazards as f64,
        gamma: fit.gamma,
    };
    rec.gamma = Some(fit.gamma);
    rec.p_opt = model::p_opt(&profile, tech.latch_overhead, t_p);
    rec.depth = model::best_integer_depth(&profile, tech.latch_overhead, t_p);
    rec.delta = rec.p_opt.zip(sim_argmin).map(|(p, a)| p - a as f64);
    rec.note = match rec.depth {
        Some(d) => format!("use depth {d}"),
        None => DEPTH_INSENSITIVE.into(),
    };
    rec
}

pub fn recommendations(exp: &Experiment) -> Vec<Recommendation> {
    OpClass::ARITHMETIC
        .iter()
        .map(|&class| match exp.sweeps.iter().find(|s| s.class == class) {
            Some(s) => {
                let mut rec =
                    recommend_class(class, &exp.stats, &exp.tech, s.fit.as_ref().map_err(String::as_str), s.argmin());
                let last = s.rows.last().map(|r| r.p);
                if let (Some(d), Some(last)) = (rec.depth, last) {
                    if d > last {
                        rec.note.push_str(&format!(" (beyond the swept range; simulated up to {last})"));
                    }
                }
                rec
            }
            None => recommend_class(class, &exp.stats, &exp.tech, Err("not swept"), None),
        })
        .collect()
}

/// Writes `recommend.csv` and `recommend.txt`; returns the text report.
pub fn write_recommendations(cfg: &RunConfig, exp: &Experiment, recs: &[Recommendation]) -> Result<String> {
    let (mut w, _) = csv_writer(&cfg.out, "recommend.csv")?;
    w.write_record([
        "class", "N_iI", "N_iH", "gamma", "p_opt", "depth", "sim_argmin", "delta", "recommendation",
    ])?;
    let mut text = String::new();
    let _ = writeln!(
        text,
        "kernel {} {} ({}), W={}",
        exp.spec.kind,
        dims_label(&exp.spec),
        exp.spec.schedule,
        exp.stats.window
    );
    for r in recs {
        w.write_record([
            r.class.name().to_string(),
            r.instructions.to_string(),
            r.hazards.to_string(),
            opt(r.gamma),
            opt(r.p_opt),
            opt(r.depth),
            opt(r.sim_argmin),
            opt(r.delta),
            r.note.clone(),
        ])?;
        let _ = write!(text, "{:<5} ", r.class.name());
        match (r.p_opt, r.gamma) {
            (Some(p), Some(g)) => {
                let _ = write!(text, "gamma {g:.4}  p_opt {p:.2}");
            }
            _ => {
                let _ = write!(text, "gamma -       p_opt -    ");
            }
        }
        let _ = writeln!(text, "  simulated argmin {}  {}", opt(r.sim_argmin), r.note);
    }
    w.flush()?;
    write_text(&cfg.out, "recommend.txt", &text)?;
    Ok(text)
}
