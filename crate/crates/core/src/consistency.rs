//! Consistency-function parameterization, the knowledge-discrepancy (KDC)
//! metric, KDC-adjusted target computation, and curriculum schedules.
//!
//! The consistency function is `f(x, t) = x + (1−t)·v(x, t)`: a one-step
//! Euler extrapolation to `t = 1` through the network's velocity. It is the
//! identity at `t = 1` by construction, and a velocity teacher gives a
//! student its exact starting point.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::flowmatch::{euler_solve, VectorField};
use crate::nnet::{Mlp, Tape};

/// Default saturation value of [`kdc`] when the two batches coincide.
pub const DEFAULT_KDC_FLOOR: f64 = -900.0;

/// Smallest distillation step a non-adaptive plan will take.
pub const MIN_STEP: f64 = 1e-3;

/// `x + (1−t)·v(x, t)`; returns `x` unchanged at `t = 1`.
pub fn consistency_map<F: VectorField + ?Sized>(
    model: &F,
    x_t: ArrayView2<'_, f64>,
    t: f64,
) -> Result<Array2<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::config("t", format!("time {t} outside [0, 1]")));
    }
    if t == 1.0 {
        return Ok(x_t.to_owned());
    }
    let v = model.velocity(x_t, t)?;
    let mut out = x_t.to_owned();
    out.scaled_add(1.0 - t, &v);
    if out.iter().any(|o| !o.is_finite()) {
        return Err(Error::Numerical(format!("non-finite consistency output at t={t}")));
    }
    Ok(out)
}

/// Consistency map of a trainable network, keeping the tape so the caller
/// can backpropagate. The chain-rule factor to the network output is `1−t`.
pub fn consistency_map_taped(
    model: &Mlp,
    x_t: ArrayView2<'_, f64>,
    t: f64,
) -> Result<(Array2<f64>, Tape)> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::config("t", format!("trainable time {t} outside [0, 1)")));
    }
    let (v, tape) = model.forward_taped(x_t, &[t])?;
    let mut out = x_t.to_owned();
    out.scaled_add(1.0 - t, &v);
    if out.iter().any(|o| !o.is_finite()) {
        return Err(Error::Numerical(format!("non-finite consistency output at t={t}")));
    }
    Ok((out, tape))
}

/// Mean squared error over every entry.
pub fn mse(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    let sum: f64 = a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum();
    Ok(sum / a.len() as f64)
}

/// KDC from a precomputed MSE: `100 − 10·log10(peak² / mse)`, saturating at
/// `floor` once `mse < 1e-12·peak²`.
pub fn kdc_from_mse(mse: f64, peak: f64, floor: f64) -> f64 {
    let peak_sq = peak * peak;
    if mse < 1e-12 * peak_sq {
        return floor;
    }
    100.0 - 10.0 * (peak_sq / mse).log10()
}

/// `100 − PSNR(x_est, x_target)` with dynamic range `peak`.
pub fn kdc(x_est: ArrayView2<'_, f64>, x_target: ArrayView2<'_, f64>, peak: f64, floor: f64) -> Result<f64> {
    if peak.is_nan() || peak <= 0.0 {
        return Err(Error::config("peak", "must be positive"));
    }
    Ok(kdc_from_mse(mse(x_est, x_target)?, peak, floor))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyConfig {
    /// Dynamic range of the data (the PSNR peak).
    pub peak: f64,
    pub t_kdc: f64,
    /// Base teacher timestep.
    pub step: f64,
    pub max_iters: usize,
    pub kdc_floor: f64,
}

impl ConsistencyConfig {
    pub fn new(peak: f64, t_kdc: f64, step: f64) -> Self {
        Self {
            peak,
            t_kdc,
            step,
            max_iters: (1.0 / step).ceil() as usize + 1,
            kdc_floor: DEFAULT_KDC_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak > 0.0 && self.peak.is_finite()) {
            return Err(Error::config("peak", "must be positive"));
        }
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(Error::config("step", "must lie in (0, 1]"));
        }
        if (self.max_iters as f64) < (1.0 / self.step).ceil() {
            return Err(Error::config("max_iters", "must be at least ceil(1/step)"));
        }
        if self.t_kdc.is_nan() {
            return Err(Error::config("t_kdc", "must not be NaN"));
        }
        Ok(())
    }
}

/// When the adaptive loop stops extending the teacher rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Stop once the discrepancy exceeds the threshold.
    Exceeds,
    /// Stop once the discrepancy has dropped to the threshold or below.
    AtMost,
}

impl StopRule {
    fn done(self, kdc: f64, threshold: f64) -> bool {
        match self {
            StopRule::Exceeds => threshold < kdc,
            StopRule::AtMost => kdc <= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetResult {
    pub x_target: Array2<f64>,
    pub u: f64,
    /// Teacher iterations taken.
    pub iters: usize,
    pub kdc_final: f64,
    /// `(u, KDC)` after each teacher iteration (adaptive plans) or once at the end.
    pub kdc_trace: Vec<(f64, f64)>,
}

impl TargetResult {
    pub fn write_trace_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["iter", "u", "kdc"])?;
        for (i, (u, k)) in self.kdc_trace.iter().enumerate() {
            wr.write_record([(i + 1).to_string(), u.to_string(), k.to_string()])?;
        }
        wr.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }
}

/// Next grid time `min(t + k·s, 1)`, snapping rounding residue onto 1.
fn grid_time(t: f64, k: usize, s: f64) -> f64 {
    let u = t + k as f64 * s;
    if u >= 1.0 - 1e-12 {
        1.0
    } else {
        u
    }
}

/// Adaptive rollout: the teacher advances one step of size `cfg.step` at a
/// time, the target network maps the new state to `t = 1`, and the loop
/// stops when `rule` fires against `cfg.t_kdc` or `u` reaches 1.
///
/// `x_est` is the student's output at `(x_t, t)`, computed once by the caller.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_target<T, G>(
    x_est: ArrayView2<'_, f64>,
    x_t: ArrayView2<'_, f64>,
    t: f64,
    cfg: &ConsistencyConfig,
    rule: StopRule,
    teacher: &T,
    target_model: &G,
) -> Result<TargetResult>
where
    T: VectorField + ?Sized,
    G: VectorField + ?Sized,
{
    cfg.validate()?;
    if !(0.0..1.0).contains(&t) {
        return Err(Error::config("t", format!("{t} outside [0, 1)")));
    }
    let mut t_cur = t;
    let mut x_cur = x_t.to_owned();
    let mut trace = Vec::new();
    let mut k = 0;
    loop {
        k += 1;
        if k > cfg.max_iters {
            return Err(Error::Internal(format!(
                "adaptive target exceeded {} iterations",
                cfg.max_iters
            )));
        }
        let u = grid_time(t, k, cfg.step);
        let x_u = euler_solve(teacher, x_cur.view(), t_cur, u, cfg.step)?;
        let x_target = consistency_map(target_model, x_u.view(), u)?;
        let disc = kdc(x_est, x_target.view(), cfg.peak, cfg.kdc_floor)?;
        trace.push((u, disc));
        if rule.done(disc, cfg.t_kdc) || u == 1.0 {
            return Ok(TargetResult {
                x_target,
                u,
                iters: k,
                kdc_final: disc,
                kdc_trace: trace,
            });
        }
        t_cur = u;
        x_cur = x_u;
    }
}

/// KDC-adjusted target: computes the student estimate once, then extends the
/// teacher rollout until the discrepancy exceeds `cfg.t_kdc` or `u = 1`.
pub fn kdc_adjusted_target<T, G, S>(
    x_t: ArrayView2<'_, f64>,
    t: f64,
    cfg: &ConsistencyConfig,
    teacher: &T,
    target_model: &G,
    student: &S,
) -> Result<TargetResult>
where
    T: VectorField + ?Sized,
    G: VectorField + ?Sized,
    S: VectorField + ?Sized,
{
    let x_est = consistency_map(student, x_t, t)?;
    adaptive_target(x_est.view(), x_t, t, cfg, StopRule::Exceeds, teacher, target_model)
}

/// The discrepancy threshold of an adaptive schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Fixed(f64),
    /// Measured at distillation start, plus `offset`.
    Calibrated { offset: f64 },
}

impl Threshold {
    pub fn resolve(self, calibrated: Option<f64>) -> Result<f64> {
        match (self, calibrated) {
            (Threshold::Fixed(v), _) => Ok(v),
            (Threshold::Calibrated { offset }, Some(c)) => Ok(c + offset),
            (Threshold::Calibrated { .. }, None) => Err(Error::config(
                "t_kdc",
                "calibrated threshold used before calibration",
            )),
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Threshold::Fixed(v) => write!(f, "{v}"),
            Threshold::Calibrated { offset: 0.0 } => f.write_str("cal"),
            Threshold::Calibrated { offset } if offset > 0.0 => write!(f, "cal+{offset}"),
            Threshold::Calibrated { offset } => write!(f, "cal{offset}"),
        }
    }
}

impl FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config("t_kdc", format!("cannot parse threshold `{s}`"));
        if let Some(rest) = s.strip_prefix("cal") {
            let offset = if rest.is_empty() {
                0.0
            } else {
                let rest = rest.strip_prefix('+').unwrap_or(rest);
                rest.parse::<f64>().map_err(|_| bad())?
            };
            if !offset.is_finite() {
                return Err(bad());
            }
            return Ok(Threshold::Calibrated { offset });
        }
        let v: f64 = s.parse().map_err(|_| bad())?;
        if v.is_nan() {
            return Err(bad());
        }
        Ok(Threshold::Fixed(v))
    }
}

/// How the distillation step `l = u − t` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurriculumSchedule {
    /// Extend until the discrepancy exceeds the threshold.
    Ccm { t_kdc: Threshold, step: f64 },
    /// Opposite rule: extend while the discrepancy exceeds the threshold.
    ICcm { t_kdc: Threshold, step: f64 },
    /// `n` teacher steps of size `s`, `l = n·s`.
    Static { l: f64, n: usize, s: f64 },
    /// One teacher step of size `factor·t`.
    Proportional { factor: f64 },
    /// One teacher step straight to `u = 1`.
    GroundTruth,
    /// One step of size `l0·exp(−rate·iteration)`.
    DecayingBaseline { l0: f64, rate: f64 },
}

/// Teacher iteration plan for one distillation step.
#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    /// Fixed grid of teacher times `u_1 < … ≤ u_n`, clamped to 1.
    Fixed { grid: Vec<f64> },
    Adaptive {
        threshold: f64,
        step: f64,
        rule: StopRule,
    },
}

impl CurriculumSchedule {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64, key: &str| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::config(key, format!("{v} must lie in (0, 1]")))
            }
        };
        match *self {
            CurriculumSchedule::Ccm { step, .. } | CurriculumSchedule::ICcm { step, .. } => {
                unit(step, "schedule.step")
            }
            CurriculumSchedule::Static { l, n, s } => {
                unit(l, "schedule.l")?;
                unit(s, "schedule.s")?;
                if n == 0 {
                    return Err(Error::config("schedule.n", "must be at least 1"));
                }
                if (l - n as f64 * s).abs() > 1e-9 * l.max(1.0) {
                    return Err(Error::config("schedule.l", format!("l={l} but n·s={}", n as f64 * s)));
                }
                Ok(())
            }
            CurriculumSchedule::Proportional { factor } => unit(factor, "schedule.factor"),
            CurriculumSchedule::GroundTruth => Ok(()),
            CurriculumSchedule::DecayingBaseline { l0, rate } => {
                unit(l0, "schedule.l0")?;
                if !(rate >= 0.0 && rate.is_finite()) {
                    return Err(Error::config("schedule.rate", "must be non-negative"));
                }
                Ok(())
            }
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, CurriculumSchedule::Ccm { .. } | CurriculumSchedule::ICcm { .. })
    }

    pub fn needs_calibration(&self) -> bool {
        matches!(
            self,
            CurriculumSchedule::Ccm { t_kdc: Threshold::Calibrated { .. }, .. }
                | CurriculumSchedule::ICcm { t_kdc: Threshold::Calibrated { .. }, .. }
        )
    }

    /// Replaces a calibrated threshold by its numeric value.
    pub fn resolve(&self, calibrated: Option<f64>) -> Result<CurriculumSchedule> {
        Ok(match *self {
            CurriculumSchedule::Ccm { t_kdc, step } => CurriculumSchedule::Ccm {
                t_kdc: Threshold::Fixed(t_kdc.resolve(calibrated)?),
                step,
            },
            CurriculumSchedule::ICcm { t_kdc, step } => CurriculumSchedule::ICcm {
                t_kdc: Threshold::Fixed(t_kdc.resolve(calibrated)?),
                step,
            },
            other => other,
        })
    }

    /// Base teacher step used for calibration and profiling.
    pub fn base_step(&self) -> f64 {
        match *self {
            CurriculumSchedule::Ccm { step, .. } | CurriculumSchedule::ICcm { step, .. } => step,
            CurriculumSchedule::Static { s, .. } => s,
            _ => 0.03,
        }
    }

    /// `(l, n, s)` columns for reports; `None` where the value varies.
    pub fn lns(&self) -> (Option<f64>, Option<usize>, Option<f64>) {
        match *self {
            CurriculumSchedule::Ccm { step, .. } | CurriculumSchedule::ICcm { step, .. } => {
                (None, None, Some(step))
            }
            CurriculumSchedule::Static { l, n, s } => (Some(l), Some(n), Some(s)),
            CurriculumSchedule::Proportional { .. }
            | CurriculumSchedule::GroundTruth
            | CurriculumSchedule::DecayingBaseline { .. } => (None, Some(1), None),
        }
    }
}

/// Teacher-iteration plan for a sample at time `t` during training iteration
/// `iteration`. Plans that would leave `[0, 1]` are clamped.
pub fn plan_step(schedule: &CurriculumSchedule, t: f64, iteration: u64) -> Result<Plan> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::config("t", format!("{t} outside [0, 1)")));
    }
    schedule.validate()?;
    let single = |len: f64| Plan::Fixed {
        grid: vec![(t + len.clamp(MIN_STEP, 1.0)).min(1.0)],
    };
    Ok(match *schedule {
        CurriculumSchedule::Ccm { t_kdc, step } => Plan::Adaptive {
            threshold: t_kdc.resolve(None)?,
            step,
            rule: StopRule::Exceeds,
        },
        CurriculumSchedule::ICcm { t_kdc, step } => Plan::Adaptive {
            threshold: t_kdc.resolve(None)?,
            step,
            rule: StopRule::AtMost,
        },
        CurriculumSchedule::Static { n, s, .. } => Plan::Fixed {
            grid: (1..=n).map(|k| grid_time(t, k, s)).collect(),
        },
        CurriculumSchedule::Proportional { factor } => single(factor * t),
        CurriculumSchedule::GroundTruth => Plan::Fixed { grid: vec![1.0] },
        CurriculumSchedule::DecayingBaseline { l0, rate } => {
            single(l0 * (-rate * iteration as f64).exp())
        }
    })
}

/// Settings shared by every plan execution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetSettings {
    pub peak: f64,
    pub kdc_floor: f64,
}

/// Executes `plan` from `(x_t, t)`: rolls the teacher forward and maps the
/// result to `t = 1` with the target network. No tape is recorded; the
/// teacher and target only ever see immutable borrows.
#[allow(clippy::too_many_arguments)]
pub fn compute_target<T, G>(
    plan: &Plan,
    x_est: ArrayView2<'_, f64>,
    x_t: ArrayView2<'_, f64>,
    t: f64,
    settings: TargetSettings,
    teacher: &T,
    target_model: &G,
) -> Result<TargetResult>
where
    T: VectorField + ?Sized,
    G: VectorField + ?Sized,
{
    match plan {
        Plan::Adaptive {
            threshold,
            step,
            rule,
        } => {
            let mut cfg = ConsistencyConfig::new(settings.peak, *threshold, *step);
            cfg.kdc_floor = settings.kdc_floor;
            adaptive_target(x_est, x_t, t, &cfg, *rule, teacher, target_model)
        }
        Plan::Fixed { grid } => {
            if grid.is_empty() {
                return Err(Error::Internal("empty teacher plan".into()));
            }
            let mut t_cur = t;
            let mut x_cur = x_t.to_owned();
            for &u in grid {
                if u > t_cur {
                    x_cur = euler_solve(teacher, x_cur.view(), t_cur, u, u - t_cur)?;
                    t_cur = u;
                }
            }
            let x_target = consistency_map(target_model, x_cur.view(), t_cur)?;
            let disc = kdc(x_est, x_target.view(), settings.peak, settings.kdc_floor)?;
            Ok(TargetResult {
                x_target,
                u: t_cur,
                iters: grid.len(),
                kdc_final: disc,
                kdc_trace: vec![(t_cur, disc)],
            })
        }
    }
}

impl fmt::Display for CurriculumSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CurriculumSchedule::Ccm { t_kdc, step } => write!(f, "ccm s={step} t_kdc={t_kdc}"),
            CurriculumSchedule::ICcm { t_kdc, step } => write!(f, "iccm s={step} t_kdc={t_kdc}"),
            CurriculumSchedule::Static { l, n, s } => write!(f, "static l={l} n={n} s={s}"),
            CurriculumSchedule::Proportional { factor } => write!(f, "proportional factor={factor}"),
            CurriculumSchedule::GroundTruth => f.write_str("ground-truth"),
            CurriculumSchedule::DecayingBaseline { l0, rate } => {
                write!(f, "decaying l0={l0} rate={rate}")
            }
        }
    }
}

impl FromStr for CurriculumSchedule {
    type Err = Error;

    /// Parses `name key=value ...`, e.g. `static l=0.06 n=2 s=0.03` or
    /// `ccm s=0.03 t_kdc=cal+10`. Omitted keys take defaults.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split_whitespace();
        let name = parts
            .next()
            .ok_or_else(|| Error::config("schedule", "empty strategy"))?;
        let mut kv = std::collections::BTreeMap::new();
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::config("schedule", format!("expected key=value, got `{p}`")))?;
            kv.insert(k.to_string(), v.to_string());
        }
        let mut take_f64 = |key: &str, default: Option<f64>| -> Result<f64> {
            match kv.remove(key) {
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::config(format!("schedule.{key}"), format!("bad number `{v}`"))),
                None => default.ok_or_else(|| Error::config(format!("schedule.{key}"), "missing")),
            }
        };
        let sched = match name {
            "ccm" | "iccm" => {
                let step = take_f64("s", Some(0.03))?;
                let t_kdc = match kv.remove("t_kdc") {
                    Some(v) => v.parse()?,
                    None => Threshold::Calibrated { offset: 0.0 },
                };
                if name == "ccm" {
                    CurriculumSchedule::Ccm { t_kdc, step }
                } else {
                    CurriculumSchedule::ICcm { t_kdc, step }
                }
            }
            "static" => {
                let s = take_f64("s", Some(0.03))?;
                let n = take_f64("n", Some(1.0))?;
                if n < 1.0 || n.fract() != 0.0 {
                    return Err(Error::config("schedule.n", "must be a positive integer"));
                }
                let n = n as usize;
                let l = take_f64("l", Some(n as f64 * s))?;
                CurriculumSchedule::Static { l, n, s }
            }
            "proportional" => CurriculumSchedule::Proportional {
                factor: take_f64("factor", Some(0.1))?,
            },
            "ground-truth" => CurriculumSchedule::GroundTruth,
            "decaying" => CurriculumSchedule::DecayingBaseline {
                l0: take_f64("l0", Some(0.1))?,
                rate: take_f64("rate", Some(1e-4))?,
            },
            other => {
                return Err(Error::config("schedule", format!("unknown strategy `{other}`")))
            }
        };
        if let Some(k) = kv.keys().next() {
            return Err(Error::config(
                format!("schedule.{k}"),
                format!("unknown key for strategy `{name}`"),
            ));
        }
        sched.validate()?;
        Ok(sched)
    }
}
