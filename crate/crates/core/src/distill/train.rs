use std::time::Instant;

use crate::checkpoint::{config_hash, Checkpoint, CheckpointMeta};
use crate::consistency::{
    compute_target, consistency_map, plan_step, CurriculumSchedule, Plan, TargetSettings,
    DEFAULT_KDC_FLOOR,
};
use crate::distill::gan::gan_losses;
use crate::distill::loss::{ccm_forward, student_grads, Distance, LossSpec};
use crate::distill::runlog::{LogRow, RunLog};
use crate::distill::streams;
use crate::distill::teacher::diverged;
use crate::error::{Error, Result};
use crate::flowmatch::ot_path;
use crate::nnet::{ema_update, Adam, Architecture, Mlp};
use crate::rng::{derive_seed, SeededRng};
use crate::synthdata::{sample_data, sample_noise, DistributionSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanConfig {
    pub enabled: bool,
    pub lambda: f64,
    pub lr: f64,
    /// Use the saturating `ln(1 − d)` generator loss.
    pub literal: bool,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            lambda: 0.1,
            lr: 1e-3,
            literal: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillConfig {
    pub schedule: CurriculumSchedule,
    pub distance: Distance,
    pub iterations: u64,
    pub batch: usize,
    pub seed: u64,
    pub lr: f64,
    /// Decay of the target network.
    pub target_ema: f64,
    /// Decay of the long-run student average used for sampling.
    pub student_ema: f64,
    pub gan: GanConfig,
    pub peak: f64,
    pub kdc_floor: f64,
    /// Batches whose median first-step KDC sets a calibrated threshold.
    pub calibration_batches: usize,
    /// Training times are drawn uniformly from `[0, t_max)`.
    pub t_max: f64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            schedule: CurriculumSchedule::Ccm {
                t_kdc: crate::consistency::Threshold::Calibrated { offset: 0.0 },
                step: 0.03,
            },
            distance: Distance::L2,
            iterations: 10_000,
            batch: 128,
            seed: 0,
            lr: 4e-4,
            target_ema: 0.9,
            student_ema: 0.999,
            gan: GanConfig::default(),
            peak: 4.0,
            kdc_floor: DEFAULT_KDC_FLOOR,
            calibration_batches: 16,
            t_max: 0.999,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        let unit = |v: f64, key: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(key, format!("{v} outside [0, 1]")))
            }
        };
        unit(self.target_ema, "distill.target_ema")?;
        unit(self.student_ema, "distill.student_ema")?;
        if self.batch == 0 {
            return Err(Error::config("distill.batch", "must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("distill.lr", "must be positive"));
        }
        if !(self.gan.lambda >= 0.0 && self.gan.lambda.is_finite()) {
            return Err(Error::config("gan.lambda", "must be non-negative"));
        }
        if !(self.gan.lr > 0.0 && self.gan.lr.is_finite()) {
            return Err(Error::config("gan.lr", "must be positive"));
        }
        if !(self.peak > 0.0 && self.peak.is_finite()) {
            return Err(Error::config("distill.peak", "must be positive"));
        }
        if self.calibration_batches == 0 {
            return Err(Error::config("distill.calibration_batches", "must be at least 1"));
        }
        if !(self.t_max > 0.0 && self.t_max < 1.0) {
            return Err(Error::config("distill.t_max", "must lie in (0, 1)"));
        }
        Ok(())
    }

    fn settings(&self) -> TargetSettings {
        TargetSettings {
            peak: self.peak,
            kdc_floor: self.kdc_floor,
        }
    }

    /// Text hashed into checkpoint metadata. A zero adversarial weight is
    /// written as a disabled adversarial term: the two train identically.
    pub fn canonical(&self) -> String {
        let mut c = *self;
        if !c.gan.enabled || c.gan.lambda == 0.0 {
            c.gan = GanConfig {
                enabled: false,
                lambda: 0.0,
                ..GanConfig::default()
            };
        }
        format!("distill {c:?}")
    }
}

pub struct DistillOutcome {
    /// Student, its optimizer, the long-run average, and the target network.
    pub checkpoint: Checkpoint,
    pub log: RunLog,
    /// Median first-step KDC at `t = 0.5` under the warm-started networks.
    pub calibrated_t_kdc: f64,
    /// The schedule with any calibrated threshold replaced by its value.
    pub schedule: CurriculumSchedule,
}

const CALIBRATION_T: f64 = 0.5;

/// Median over `cfg.calibration_batches` batches of the KDC between the
/// student estimate at `t = 0.5` and a one-teacher-step target.
pub fn calibrate_threshold(
    student: &Mlp,
    target_model: &Mlp,
    teacher: &Mlp,
    data: &DistributionSpec,
    cfg: &DistillConfig,
) -> Result<f64> {
    let step = cfg.schedule.base_step();
    let plan = Plan::Fixed {
        grid: vec![(CALIBRATION_T + step).min(1.0)],
    };
    let mut values = Vec::with_capacity(cfg.calibration_batches);
    for k in 0..cfg.calibration_batches as u64 {
        let x0 = sample_noise(cfg.batch, data.dim(), derive_seed(cfg.seed, streams::CALIBRATION, 2 * k))?;
        let x1 = sample_data(data, cfg.batch, derive_seed(cfg.seed, streams::CALIBRATION, 2 * k + 1))?;
        let x_t = ot_path(x0.data.view(), x1.data.view(), &[CALIBRATION_T])?;
        let x_est = consistency_map(student, x_t.view(), CALIBRATION_T)?;
        let res = compute_target(
            &plan,
            x_est.view(),
            x_t.view(),
            CALIBRATION_T,
            cfg.settings(),
            teacher,
            target_model,
        )?;
        values.push(res.kdc_final);
    }
    Ok(median(&mut values))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Curriculum consistency distillation from a teacher checkpoint. Student,
/// target and long-run average all start as copies of the teacher.
pub fn distill(cfg: &DistillConfig, data: &DistributionSpec, teacher_ckpt: &Checkpoint) -> Result<DistillOutcome> {
    cfg.validate()?;
    data.validate()?;
    let teacher = teacher_ckpt.sampling_model();
    if teacher.data_dim != data.dim() || teacher.out_dim() != data.dim() {
        return Err(Error::config("teacher", "teacher dimension does not match the data"));
    }
    let mut student = teacher.clone();
    let mut target = teacher.clone();
    let mut average = teacher.clone();
    let mut opt = Adam::new(&student, cfg.lr);
    let mut disc = if cfg.gan.enabled {
        let d = Mlp::new(
            &Architecture::discriminator(data.dim()),
            derive_seed(cfg.seed, streams::DISC_INIT, 0),
        )?;
        let o = Adam::new(&d, cfg.gan.lr);
        Some((d, o))
    } else {
        None
    };

    let calibrated = calibrate_threshold(&student, &target, teacher, data, cfg)?;
    let schedule = cfg.schedule.resolve(Some(calibrated))?;
    let hash = config_hash(&format!(
        "{} data {data:?} teacher {:016x}",
        cfg.canonical(),
        teacher_ckpt.meta.config_hash
    ));
    let snapshot = |student: &Mlp, opt: &Adam, average: &Mlp, target: &Mlp, iteration: u64| {
        Checkpoint::capture(
            student,
            Some(opt),
            Some((average, cfg.student_ema)),
            Some((target, cfg.target_ema)),
            CheckpointMeta {
                seed: cfg.seed,
                iteration,
                config_hash: hash,
            },
        )
    };
    let mut log = RunLog::new();

    for it in 0..cfg.iterations {
        let start = Instant::now();
        let x0 = sample_noise(cfg.batch, data.dim(), derive_seed(cfg.seed, streams::NOISE, it))?;
        let x1 = sample_data(data, cfg.batch, derive_seed(cfg.seed, streams::DATA, it))?;
        let t = SeededRng::new(derive_seed(cfg.seed, streams::TIME, it)).uniform() * cfg.t_max;
        let spec = LossSpec {
            plan: plan_step(&schedule, t, it)?,
            settings: cfg.settings(),
            distance: cfg.distance,
        };

        let step = (|| {
            let x_t = ot_path(x0.data.view(), x1.data.view(), &[t])?;
            let mut fwd = ccm_forward(&student, &target, teacher, x_t.view(), t, &spec)?;
            let mut loss_gan = 0.0;
            if let Some((d, o)) = disc.as_mut() {
                let gl = gan_losses(d, fwd.x_est.view(), x1.data.view(), cfg.gan.literal)?;
                loss_gan = gl.generator;
                if cfg.gan.lambda > 0.0 {
                    fwd.d_est.scaled_add(cfg.gan.lambda, &gl.generator_dx);
                }
                o.step(d, &gl.disc_grads)?;
            }
            let grads = student_grads(&student, &fwd.tape, &fwd.d_est, t)?;
            opt.step(&mut student, &grads)?;
            Ok::<_, Error>((fwd.value, loss_gan, fwd.target))
        })();
        let (loss, loss_gan, res) = match step {
            Ok(v) => v,
            Err(e @ (Error::Numerical(_) | Error::SolverDivergence { .. })) => {
                return Err(diverged(it, e.to_string(), snapshot(&student, &opt, &average, &target, it)))
            }
            Err(e) => return Err(e),
        };
        ema_update(&mut target, &student, cfg.target_ema)?;
        ema_update(&mut average, &student, cfg.student_ema)?;
        log.push(LogRow {
            iteration: it,
            loss_ccm: loss,
            loss_gan,
            kdc_final: res.kdc_final,
            teacher_iters: res.iters,
            u: res.u,
            t,
            ms: start.elapsed().as_secs_f64() * 1e3,
        })?;
    }
    Ok(DistillOutcome {
        checkpoint: snapshot(&student, &opt, &average, &target, cfg.iterations),
        log,
        calibrated_t_kdc: calibrated,
        schedule,
    })
}
