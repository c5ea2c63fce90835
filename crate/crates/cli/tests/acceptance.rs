//! Acceptance suite. Run with
//! `cargo test -p pipedepth-cli --test acceptance -- --nocapture`
//! to see one PASS/FAIL line per criterion.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use pipedepth_cli::commands::run_sweeps;
use pipedepth_cli::config::RunConfig;
use pipedepth_core::characterize::characterize;
use pipedepth_core::isa::{class_counts, Instruction, MemoryImage, OpClass, PerClass, Program, Reg};
use pipedepth_core::kernels::{generate, KernelBundle, KernelSpec, Schedule};
use pipedepth_core::model::{busy_nonbusy, p_opt, sweep_depth, sweep_gamma, sweep_workload, tpi_single, HazardProfile};
use pipedepth_core::sim::{run, PipelineConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn within(elapsed: Duration, limit_s: f64) -> Outcome {
    check!(elapsed.as_secs_f64() < limit_s, "took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64());
    Ok(String::new())
}

#[derive(Debug, Clone, Copy)]
struct Tuple {
    profile: HazardProfile,
    t_o: f64,
    t_p: f64,
}

fn tuples(count: usize) -> Vec<Tuple> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..count)
        .map(|_| {
            let n = 10f64.powf(rng.gen_range(1.0..7.0)).round();
            let h = rng.gen_range(1..=n as u64) as f64;
            Tuple {
                profile: HazardProfile::new(n, h, rng.gen_range(0.01..=1.0)).unwrap(),
                t_o: rng.gen_range(0.01..=1.0),
                t_p: rng.gen_range(1.0..100.0),
            }
        })
        .collect()
}

/// Golden-section search in `ln p` on the TPI formula, polished by
/// bisection on the sign of a symmetric difference.
fn numeric_minimizer(t: &Tuple) -> f64 {
    let f = |x: f64| tpi_single(&t.profile, t.t_o, t.t_p, x.exp(), false).unwrap();
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, 25.0f64);
    for _ in 0..60 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let (mut lo, mut hi) = (a - 0.5, b + 0.5);
    let eps = 1e-3;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid + eps) > f((mid - eps).max(0.0)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    for n in [1usize, 2, 3, 4, 10, 100, 1000] {
        let b = generate(&KernelSpec::ddot(n)).map_err(|e| e.to_string())?;
        let c = class_counts(&b.program);
        check!(c.fp_total() == 2 * n - 1, "ddot({n}): N_I = {}", c.fp_total());
        check!(c.get(OpClass::Mul) == n, "ddot({n}): Mul = {}", c.get(OpClass::Mul));
        check!(c.get(OpClass::Add) == n - 1, "ddot({n}): Add = {}", c.get(OpClass::Add));
        for w in [1, 2, 3, 4, 8, 16, 64, 1 << 20] {
            let s = characterize(&b, w);
            check!(s.class(OpClass::Mul).hazards == 0, "ddot({n}) W={w}: Mul hazards");
        }
    }
    within(start.elapsed(), 1.0)?;
    Ok("N_I = 2n-1 for 7 sizes, no Mul hazards under 8 windows".into())
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for t in tuples(1000) {
        let closed = p_opt(&t.profile, t.t_o, t.t_p).ok_or("missing optimum")?;
        let rel = (numeric_minimizer(&t) - closed).abs() / closed;
        worst = worst.max(rel);
        check!(rel <= 1e-6, "{t:?}: relative gap {rel:e}");
    }
    within(start.elapsed(), 5.0)?;
    Ok(format!("1000 tuples, worst relative gap {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for t in tuples(1000) {
        let p = rng.gen_range(1.0..256.0);
        let (busy, nonbusy) = busy_nonbusy(&t.profile, t.t_o, t.t_p, p).map_err(|e| e.to_string())?;
        let total = t.profile.instructions * tpi_single(&t.profile, t.t_o, t.t_p, p, false).unwrap();
        let rel = ((busy + nonbusy) - total).abs() / total;
        worst = worst.max(rel);
        check!(rel <= 1e-12, "{t:?} p={p}: relative gap {rel:e}");
    }
    Ok(format!("1000 tuples, worst relative gap {worst:.2e}"))
}

fn preloaded(regs: usize) -> Program {
    let mut p = Program::new(regs, 0);
    for r in 0..regs.min(8) {
        p.preloaded.insert(Reg(r as u16), 1.0 + r as f64);
    }
    p
}

fn cycles(p: &Program, depths: [u32; 4]) -> Result<u64, String> {
    let cfg = PipelineConfig {
        depths: PerClass(depths),
        ..PipelineConfig::default()
    };
    run(p, &MemoryImage::zeroed(p.memory_words), &cfg)
        .map(|r| r.total_cycles)
        .map_err(|e| e.to_string())
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut one = preloaded(8);
    one.push(Instruction::mul(Reg(2), Reg(0), Reg(1)));
    check!(cycles(&one, [4, 4, 12, 12])? == 4, "single Mul");

    let mut two = preloaded(8);
    two.push(Instruction::mul(Reg(2), Reg(0), Reg(1)))
        .push(Instruction::mul(Reg(3), Reg(0), Reg(1)));
    check!(cycles(&two, [4, 4, 12, 12])? == 5, "two Muls");

    let mut chain = preloaded(8);
    chain
        .push(Instruction::mul(Reg(2), Reg(0), Reg(1)))
        .push(Instruction::add(Reg(3), Reg(2), Reg(1)));
    check!(cycles(&chain, [4, 3, 12, 12])? == 7, "Mul -> Add");

    let mut tree = preloaded(15);
    for i in 0..4u16 {
        tree.push(Instruction::mul(Reg(8 + i), Reg(2 * i), Reg(2 * i + 1)));
    }
    tree.push(Instruction::add(Reg(12), Reg(8), Reg(9)))
        .push(Instruction::add(Reg(13), Reg(10), Reg(11)))
        .push(Instruction::add(Reg(14), Reg(12), Reg(13)));
    check!(cycles(&tree, [2, 2, 12, 12])? == 9, "ddot(4) tree");

    let specs = [
        KernelSpec::ddot(8),
        KernelSpec::dgemv(4, 5),
        KernelSpec::dgemm(3, 4, 2),
        KernelSpec::dgeqrf(5, 4),
        KernelSpec::dgetrf(5),
    ];
    for spec in specs {
        let b = generate(&spec).map_err(|e| e.to_string())?;
        let r = run(&b.program, &b.inputs, &PipelineConfig::uniform(1)).map_err(|e| e.to_string())?;
        check!(r.total_cycles == b.program.len() as u64, "{} depth-1 baseline", spec.kind);
    }
    within(start.elapsed(), 1.0)?;
    Ok("4 / 5 / 7 / 9 cycles; depth-1 baseline on 5 kernels".into())
}

fn frobenius(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖A − QR‖_F` with Q applied as the product of the stored reflectors.
fn qr_residual(a: &[f64], out: &[f64], m: usize, n: usize) -> f64 {
    let tau = &out[m * n..m * n + n];
    let mut x = vec![0.0; m * n];
    for i in 0..n {
        for k in i..n {
            x[i * n + k] = out[i * n + k];
        }
    }
    for j in (0..n).rev() {
        let v: Vec<f64> = (0..m)
            .map(|i| match i.cmp(&j) {
                std::cmp::Ordering::Less => 0.0,
                std::cmp::Ordering::Equal => 1.0,
                std::cmp::Ordering::Greater => out[i * n + j],
            })
            .collect();
        for k in 0..n {
            let w: f64 = (0..m).map(|i| v[i] * x[i * n + k]).sum();
            for i in 0..m {
                x[i * n + k] -= tau[j] * v[i] * w;
            }
        }
    }
    let diff: Vec<f64> = a.iter().zip(&x).map(|(p, q)| p - q).collect();
    frobenius(&diff)
}

/// `‖PA − LU‖_F` where logical row `i` of the factors sits in physical
/// row `rows[i]`, which also held row `rows[i]` of the input.
fn lu_residual(a: &[f64], out: &[f64], rows: &[usize], n: usize) -> f64 {
    let f = |i: usize, k: usize| out[rows[i] * n + k];
    let mut diff = Vec::with_capacity(n * n);
    for i in 0..n {
        for k in 0..n {
            let mut s = if i <= k { f(i, k) } else { 0.0 };
            for t in 0..i.min(k + 1) {
                s += f(i, t) * f(t, k);
            }
            diff.push(a[rows[i] * n + k] - s);
        }
    }
    frobenius(&diff)
}

fn simulate(b: &KernelBundle) -> Result<Vec<f64>, String> {
    run(&b.program, &b.inputs, &PipelineConfig::default())
        .map(|r| r.final_memory.words)
        .map_err(|e| e.to_string())
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let specs = [
        KernelSpec::ddot(1000),
        KernelSpec::dgemv(32, 32),
        KernelSpec::dgemm(32, 32, 32),
        KernelSpec::dgeqrf(32, 32),
        KernelSpec::dgetrf(32),
    ];
    let mut summary = Vec::new();
    for spec in specs {
        let b = generate(&spec).map_err(|e| e.to_string())?;
        let out = simulate(&b)?;
        let err = b.max_relative_error(&MemoryImage { words: out.clone() });
        check!(err <= 1e-12, "{}: relative error {err:e}", spec.kind);
        let a = &b.inputs.words;
        match spec.kind.name() {
            "dgeqrf" => {
                let r = qr_residual(&a[..32 * 32], &out, 32, 32);
                check!(r <= 1e-10 * frobenius(&a[..32 * 32]), "QR residual {r:e}");
            }
            "dgetrf" => {
                let rows = b.pivots.clone().ok_or("LU bundle without pivots")?;
                let r = lu_residual(&a[..32 * 32], &out, &rows, 32);
                check!(r <= 1e-10 * frobenius(&a[..32 * 32]), "LU residual {r:e}");
            }
            _ => {}
        }
        summary.push(format!("{} {err:.1e}", spec.kind));
    }
    within(start.elapsed(), 30.0)?;
    Ok(summary.join(", "))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let ratio = |n| -> Result<f64, String> {
        let b = generate(&KernelSpec::dgeqrf(n, n)).map_err(|e| e.to_string())?;
        let c = class_counts(&b.program);
        Ok((c.get(OpClass::Div) + c.get(OpClass::Sqrt)) as f64 / c.fp_total() as f64)
    };
    let q = ratio(16)? / ratio(32)?;
    check!((1.5..=2.5).contains(&q), "ratio quotient {q}");
    within(start.elapsed(), 5.0)?;
    Ok(format!("quotient {q:.4}"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for t in tuples(1000) {
        let opt = p_opt(&t.profile, t.t_o, t.t_p).unwrap();
        let last = (2.0 * opt).ceil().clamp(64.0, 4096.0) as u32;
        let depths: Vec<u32> = (1..=last).collect();
        let curve = sweep_depth(&t.profile, t.t_o, t.t_p, &depths, false).map_err(|e| e.to_string())?;
        for w in curve.points.windows(2) {
            let ((p0, y0), (p1, y1)) = (w[0], w[1]);
            if p1 <= opt {
                check!(y1 < y0, "{t:?}: not decreasing at p={p1} (p_opt {opt})");
            } else if p0 >= opt {
                check!(y1 > y0, "{t:?}: not increasing at p={p1} (p_opt {opt})");
            }
        }

        let g = t.profile.gamma;
        let gammas = [g * rng.gen_range(0.05..0.95), g];
        let curves = sweep_gamma(&t.profile, &gammas, t.t_o, t.t_p, &depths[..64]).map_err(|e| e.to_string())?;
        for (lo, hi) in curves[0].1.points.iter().zip(&curves[1].1.points) {
            check!(lo.1 < hi.1, "{t:?}: TPI not increasing in gamma at p={}", lo.0);
        }

        let ratio = t.profile.hazard_ratio();
        let sizes: Vec<f64> = (1..=15).map(|e| 10f64.powi(e)).collect();
        for p in [1, 2, 8, opt.round().min(512.0) as u32] {
            let curve = sweep_workload(ratio, g, t.t_o, t.t_p, p, &sizes).map_err(|e| e.to_string())?;
            for w in curve.points.windows(2) {
                check!(w[1].1 <= w[0].1, "{t:?}: workload curve rises at N={}", w[1].0);
            }
            let limit = tpi_single(&t.profile, t.t_o, t.t_p, p as f64, false).unwrap();
            let tail = curve.points.last().unwrap().1;
            check!((tail - limit).abs() <= 1e-9 * limit, "{t:?}: limit {tail} vs {limit}");
        }
    }
    Ok("depth, gamma and workload families over 1000 tuples".into())
}

/// Argmin of `cpi * (t_p/p + t_o)` over the rows of a sweep.
fn tpi_argmin(rows: &[(u32, f64)], t_o: f64, t_p: f64) -> u32 {
    rows.iter()
        .map(|&(p, cpi)| (p, cpi * (t_p / p as f64 + t_o)))
        .fold((0, f64::INFINITY), |best, x| if x.1 < best.1 { x } else { best })
        .0
}

/// Counts steps that go the wrong way by more than `tol` relative: up
/// before the minimum, down after it.
fn unimodal_violations(ys: &[f64], tol: f64) -> usize {
    let k = ys
        .iter()
        .enumerate()
        .fold(0, |best, (i, &y)| if y < ys[best] { i } else { best });
    ys.windows(2)
        .enumerate()
        .filter(|&(i, w)| {
            if i < k {
                w[1] > w[0] * (1.0 + tol)
            } else {
                w[1] < w[0] * (1.0 - tol)
            }
        })
        .count()
}

fn sweep_config(kernel: &str, dims: Vec<usize>, schedule: Schedule, classes: &[&str]) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.kernel.name = kernel.into();
    cfg.kernel.dims = dims;
    cfg.kernel.schedule = schedule.name().into();
    cfg.sweep.classes = classes.iter().map(|c| c.to_string()).collect();
    cfg.sweep.range = [1, 24];
    cfg
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut summary = Vec::new();
    for (kernel, dims) in [("ddot", vec![1000]), ("dgemm", vec![16, 16, 16])] {
        let cfg = sweep_config(kernel, dims, Schedule::ProgramOrder, &["add"]);
        let (t_o, t_p) = (cfg.technology.latch_overhead, cfg.technology.logic_delay.add);
        let exp = run_sweeps(&cfg).map_err(|e| format!("{e:#}"))?;
        let s = exp.sweeps.iter().find(|s| s.class == OpClass::Add).ok_or("no Add sweep")?;
        let fit = s.fit.as_ref().map_err(|e| e.clone())?;
        let predicted = fit.p_opt(&exp.tech).ok_or("no fitted optimum")?;
        let rows: Vec<(u32, f64)> = s.rows.iter().map(|r| (r.p, r.cpi)).collect();
        let simulated = tpi_argmin(&rows, t_o, t_p);
        check!(
            (predicted - simulated as f64).abs() <= 2.0,
            "{kernel}: fitted p_opt {predicted:.2} vs simulated {simulated}"
        );
        summary.push(format!("{kernel} p_opt {predicted:.2} / argmin {simulated}"));
    }
    for schedule in [Schedule::ProgramOrder, Schedule::Asap] {
        let cfg = sweep_config("dgemm", vec![32, 32, 32], schedule, &["mul", "add"]);
        let exp = run_sweeps(&cfg).map_err(|e| format!("{e:#}"))?;
        for s in &exp.sweeps {
            let cpi: Vec<f64> = s.rows.iter().map(|r| r.cpi).collect();
            let tpi: Vec<f64> = s.rows.iter().map(|r| r.tpi).collect();
            let bad = unimodal_violations(&cpi, 0.01) + unimodal_violations(&tpi, 0.01);
            check!(bad == 0, "dgemm 32^3 {schedule} {}: {bad} unimodality violations", s.class);
        }
    }
    summary.push("dgemm 32^3 unimodal".into());
    within(start.elapsed(), 300.0)?;
    Ok(summary.join(", "))
}

fn files_under(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("qr.toml");
    fs::write(
        &config,
        "seed = 5\n[kernel]\nname = \"dgeqrf\"\ndims = [10, 8]\n[sweep]\nrange = [1, 12]\n",
    )
    .map_err(|e| e.to_string())?;
    let setups: [Vec<String>; 2] = [
        vec!["--seed".into(), "11".into()],
        vec!["--config".into(), config.display().to_string()],
    ];
    let commands: [&[&str]; 6] = [
        &["model-curve"],
        &["characterize"],
        &["simulate", "--trace", "--emit-bundle"],
        &["sweep"],
        &["fit"],
        &["recommend"],
    ];
    let mut compared = 0;
    for (s, setup) in setups.iter().enumerate() {
        for cmd in commands {
            let mut outputs = Vec::new();
            for attempt in 0..2 {
                let out = tmp.path().join(format!("{s}-{}-{attempt}", cmd[0]));
                let status = Command::new(env!("CARGO_BIN_EXE_pipedepth"))
                    .args(cmd)
                    .args(setup)
                    .arg("--out")
                    .arg(&out)
                    .output()
                    .map_err(|e| e.to_string())?;
                check!(status.status.success(), "{cmd:?} failed: {}", String::from_utf8_lossy(&status.stderr));
                let stdout = String::from_utf8_lossy(&status.stdout).replace(&out.display().to_string(), "OUT");
                outputs.push((files_under(&out), stdout));
            }
            check!(!outputs[0].0.is_empty(), "{cmd:?} wrote nothing");
            check!(outputs[0] == outputs[1], "{cmd:?} {setup:?}: outputs differ between runs");
            compared += outputs[0].0.len();
        }
    }
    Ok(format!("{compared} files byte-identical across repeated runs"))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("ddot instruction-count identity", criterion_1),
        ("closed-form vs numerical optimum", criterion_2),
        ("busy/non-busy decomposition", criterion_3),
        ("hand-trace simulator fixtures", criterion_4),
        ("numerical oracle equivalence", criterion_5),
        ("QR div/sqrt scaling", criterion_6),
        ("theoretical curve shapes", criterion_7),
        ("fitted optimum vs simulated optimum", criterion_8),
        ("determinism of CLI outputs", criterion_9),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name} ({detail}; {secs:.2}s)", i + 1),
            Err(why) => {
                println!("criterion {}: FAIL  {name} ({why}; {secs:.2}s)", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
