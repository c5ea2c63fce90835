//! Closed-form pipeline performance model.
//!
//! Time per instruction for a pipe of depth `p` running `N_I` instructions
//! with `N_H` dependency hazards of mean severity `gamma`:
//!
//! ```text
//! T / N_I = (t_o + gamma*N_H*t_p/N_I) + t_p/p + gamma*N_H*t_o*p/N_I
//! ```
//!
//! The first group is depth-independent, the second shrinks with depth and
//! the third grows linearly with it, so the optimum satisfies
//! `p_opt^2 = N_I*t_p / (gamma*N_H*t_o)`. The per-class variants apply the
//! same expressions to each arithmetic pipe with that pipe's counts.

use crate::error::{Error, Result};
use crate::isa::{OpClass, PerClass};

/// Latch overhead `t_o` and per-class total logic delay `t_p_i`, in
/// caller-chosen time units. A class with no logic delay is treated as not
/// present in the design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TechnologyParams {
    pub latch_overhead: f64,
    pub logic_delay: PerClass<Option<f64>>,
}

impl TechnologyParams {
    pub fn new(latch_overhead: f64, logic_delay: PerClass<Option<f64>>) -> Result<Self> {
        let tech = TechnologyParams {
            latch_overhead,
            logic_delay,
        };
        tech.validate()?;
        Ok(tech)
    }

    /// Same logic delay for every class.
    pub fn uniform(latch_overhead: f64, logic_delay: f64) -> Self {
        TechnologyParams {
            latch_overhead,
            logic_delay: PerClass::from_fn(|_| Some(logic_delay)),
        }
    }

    /// Only `class` is present.
    pub fn single(latch_overhead: f64, class: OpClass, logic_delay: f64) -> Self {
        TechnologyParams {
            latch_overhead,
            logic_delay: PerClass::from_fn(|c| (c == class).then_some(logic_delay)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.latch_overhead > 0.0 && self.latch_overhead.is_finite()) {
            return Err(Error::InvalidTechnology(format!(
                "latch overhead must be positive, got {}",
                self.latch_overhead
            )));
        }
        for (class, t) in self.logic_delay.iter() {
            if let Some(t) = *t {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(Error::InvalidTechnology(format!(
                        "logic delay of {class} must be positive, got {t}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn logic_delay_of(&self, class: OpClass) -> Option<f64> {
        self.logic_delay.get(class).copied().flatten()
    }

    /// Keeps only the classes for which `keep` holds.
    pub fn restrict(&self, mut keep: impl FnMut(OpClass) -> bool) -> Self {
        TechnologyParams {
            latch_overhead: self.latch_overhead,
            logic_delay: self.logic_delay.map(|c, t| if keep(c) { *t } else { None }),
        }
    }
}

impl Default for TechnologyParams {
    /// t_o = 0.1; 8.0 for the multiplier and adder, 24.0 for square root
    /// and divider.
    fn default() -> Self {
        TechnologyParams {
            latch_overhead: 0.1,
            logic_delay: PerClass([Some(8.0), Some(8.0), Some(24.0), Some(24.0)]),
        }
    }
}

/// Instruction count, hazard count and mean hazard severity of one pipe.
/// Counts are real-valued so sweeps can hold the hazard ratio fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardProfile {
    pub instructions: f64,
    pub hazards: f64,
    pub gamma: f64,
}

impl HazardProfile {
    pub fn new(instructions: f64, hazards: f64, gamma: f64) -> Result<Self> {
        let p = HazardProfile {
            instructions,
            hazards,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.instructions >= 1.0) {
            return Err(Error::InvalidProfile(format!(
                "need at least one instruction, got {}",
                self.instructions
            )));
        }
        self.validate_counts()
    }

    fn validate_counts(&self) -> Result<()> {
        if !(self.hazards >= 0.0 && self.hazards <= self.instructions) {
            return Err(Error::InvalidProfile(format!(
                "hazard count {} outside [0, {}]",
                self.hazards, self.instructions
            )));
        }
        if self.hazards > 0.0 && !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidProfile(format!(
                "gamma must be positive when hazards are present, got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    pub fn hazard_ratio(&self) -> f64 {
        self.hazards / self.instructions
    }
}

/// Per-class hazard profiles. Classes with zero instructions are absent
/// from the workload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassProfile(pub PerClass<HazardProfile>);

impl ClassProfile {
    pub fn new(classes: PerClass<HazardProfile>) -> Result<Self> {
        for (_, p) in classes.iter() {
            if p.instructions < 0.0 {
                return Err(Error::InvalidProfile(format!(
                    "negative instruction count {}",
                    p.instructions
                )));
            }
            if p.instructions > 0.0 {
                p.validate()?;
            } else if p.hazards != 0.0 {
                return Err(Error::InvalidProfile("hazards on an empty class".into()));
            }
        }
        Ok(ClassProfile(classes))
    }

    pub fn total_instructions(&self) -> f64 {
        self.0.iter().map(|(_, p)| p.instructions).sum()
    }

    pub fn total_hazards(&self) -> f64 {
        self.0.iter().map(|(_, p)| p.hazards).sum()
    }

    pub fn populated(&self) -> impl Iterator<Item = (OpClass, &HazardProfile)> {
        self.0.iter().filter(|(_, p)| p.instructions > 0.0)
    }
}

/// Ordered `(x, tpi)` samples of one theoretical curve.
#[derive(Debug, Clone, PartialEq)]
pub struct TpiCurve {
    pub x_label: String,
    pub points: Vec<(f64, f64)>,
}

impl TpiCurve {
    /// Point with the smallest TPI (first one on ties).
    pub fn argmin(&self) -> Option<(f64, f64)> {
        self.points
            .iter()
            .copied()
            .fold(None, |best: Option<(f64, f64)>, pt| match best {
                Some(b) if b.1 <= pt.1 => Some(b),
                _ => Some(pt),
            })
    }
}

fn check_depth(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidDepth(p))
    }
}

/// Time per instruction of a single pipe of depth `p`.
///
/// With `fill` set, a one-time fill/drain overhead of
/// `(p-1)*(t_p/p + t_o)/N_I` is added; it vanishes as the workload grows
/// and is what makes TPI saturate with workload size.
pub fn tpi_single(profile: &HazardProfile, t_o: f64, t_p: f64, p: f64, fill: bool) -> Result<f64> {
    check_depth(p)?;
    profile.validate()?;
    let mut tpi = steady_tpi(profile.hazard_ratio(), profile.gamma, t_o, t_p, p);
    if fill {
        tpi += fill_term(profile.instructions, t_o, t_p, p);
    }
    Ok(tpi)
}

/// TPI of an unbounded workload with hazard ratio `h = N_H/N_I`.
fn steady_tpi(h: f64, gamma: f64, t_o: f64, t_p: f64, p: f64) -> f64 {
    (t_o + gamma * h * t_p) + (t_p / p) + (gamma * h * t_o * p)
}

fn fill_term(n_i: f64, t_o: f64, t_p: f64, p: f64) -> f64 {
    (p - 1.0) * (t_p / p + t_o) / n_i
}

/// Real-valued optimum depth, or `None` for a hazard-free pipe whose TPI
/// keeps falling with depth.
pub fn p_opt(profile: &HazardProfile, t_o: f64, t_p: f64) -> Option<f64> {
    if profile.hazards <= 0.0 {
        return None;
    }
    Some((profile.instructions * t_p / (profile.gamma * profile.hazards * t_o)).sqrt())
}

/// The better of `floor(p_opt)` and `ceil(p_opt)` by TPI, never below 1.
pub fn best_integer_depth(profile: &HazardProfile, t_o: f64, t_p: f64) -> Option<u32> {
    let p = p_opt(profile, t_o, t_p)?;
    let lo = p.floor().max(1.0);
    let hi = p.ceil().max(1.0);
    let f = |d: f64| tpi_single(profile, t_o, t_p, d, false).unwrap_or(f64::INFINITY);
    Some(if f(hi) < f(lo) { hi as u32 } else { lo as u32 })
}

/// Workload TPI across all arithmetic pipes: `sum_i T_i / sum_i N_iI`,
/// i.e. the instruction-weighted mean of the per-class TPIs.
pub fn tpi_multi(
    classes: &ClassProfile,
    tech: &TechnologyParams,
    depths: &PerClass<u32>,
    fill: bool,
) -> Result<f64> {
    for (_, &p) in depths.iter() {
        check_depth(p as f64)?;
    }
    let total = classes.total_instructions();
    if total <= 0.0 {
        return Err(Error::InvalidProfile("workload has no instructions".into()));
    }
    let mut tpi = 0.0;
    for (class, profile) in classes.populated() {
        let t_p = tech.logic_delay_of(class).ok_or_else(|| {
            Error::InvalidTechnology(format!("no logic delay given for {class}"))
        })?;
        let per_class = tpi_single(profile, tech.latch_overhead, t_p, depths[class] as f64, fill)?;
        tpi += (profile.instructions / total) * per_class;
    }
    Ok(tpi)
}

/// Optimum depth of every pipe, each from its own counts.
pub fn p_opt_per_class(classes: &ClassProfile, tech: &TechnologyParams) -> PerClass<Option<f64>> {
    classes.0.map(|class, profile| {
        let t_p = tech.logic_delay_of(class)?;
        if profile.instructions <= 0.0 {
            return None;
        }
        p_opt(profile, tech.latch_overhead, t_p)
    })
}

/// Busy and non-busy time:
/// `T_BZ = N_I*(t_o + t_p/p)`, `T_NBZ = gamma*N_H*(t_p + t_o*p)`.
pub fn busy_nonbusy(profile: &HazardProfile, t_o: f64, t_p: f64, p: f64) -> Result<(f64, f64)> {
    check_depth(p)?;
    profile.validate()?;
    let busy = profile.instructions * (t_o + t_p / p);
    let nonbusy = profile.gamma * profile.hazards * (t_p + t_o * p);
    Ok((busy, nonbusy))
}

fn check_range(depths: &[u32]) -> Result<()> {
    if depths.is_empty() {
        return Err(Error::InvalidProfile("empty depth range".into()));
    }
    if depths[0] < 1 {
        return Err(Error::InvalidDepth(depths[0] as f64));
    }
    if depths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidProfile("depth range must be strictly ascending".into()));
    }
    Ok(())
}

/// TPI against depth for one workload.
pub fn sweep_depth(
    profile: &HazardProfile,
    t_o: f64,
    t_p: f64,
    depths: &[u32],
    fill: bool,
) -> Result<TpiCurve> {
    check_range(depths)?;
    let points = depths
        .iter()
        .map(|&p| Ok((p as f64, tpi_single(profile, t_o, t_p, p as f64, fill)?)))
        .collect::<Result<_>>()?;
    Ok(TpiCurve {
        x_label: "p".into(),
        points,
    })
}

/// TPI against workload size at fixed depth and fixed hazard ratio
/// `N_H/N_I`. The fill term is always on: without it TPI would not depend
/// on `N_I` at all.
pub fn sweep_workload(
    hazard_ratio: f64,
    gamma: f64,
    t_o: f64,
    t_p: f64,
    p: u32,
    sizes: &[f64],
) -> Result<TpiCurve> {
    check_depth(p as f64)?;
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidProfile(
            "workload sizes must be non-empty and strictly ascending".into(),
        ));
    }
    let points = sizes
        .iter()
        .map(|&n| {
            HazardProfile::new(n, hazard_ratio * n, gamma)?;
            let p = p as f64;
            Ok((n, steady_tpi(hazard_ratio, gamma, t_o, t_p, p) + fill_term(n, t_o, t_p, p)))
        })
        .collect::<Result<_>>()?;
    Ok(TpiCurve {
        x_label: "N_I".into(),
        points,
    })
}

/// One depth sweep per gamma value, other parameters fixed.
pub fn sweep_gamma(
    profile: &HazardProfile,
    gammas: &[f64],
    t_o: f64,
    t_p: f64,
    depths: &[u32],
) -> Result<Vec<(f64, TpiCurve)>> {
    gammas
        .iter()
        .map(|&g| {
            let pr = HazardProfile { gamma: g, ..*profile };
            Ok((g, sweep_depth(&pr, t_o, t_p, depths, false)?))
        })
        .collect()
}
