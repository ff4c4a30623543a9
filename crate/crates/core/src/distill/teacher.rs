use std::time::Instant;

use crate::checkpoint::{config_hash, Checkpoint, CheckpointMeta};
use crate::distill::runlog::{LogRow, RunLog};
use crate::distill::streams;
use crate::error::{Error, Result};
use crate::flowmatch::cfm_loss;
use crate::nnet::{Adam, Architecture, Mlp};
use crate::rng::{derive_seed, SeededRng};
use crate::synthdata::{sample_data, sample_noise, DistributionSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherConfig {
    pub iterations: u64,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            batch: 256,
            lr: 1e-3,
            seed: 0,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::config("teacher.batch", "must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("teacher.lr", "must be positive"));
        }
        Ok(())
    }

    fn canonical(&self, data: &DistributionSpec, arch: &Architecture) -> String {
        format!("teacher {self:?} data {data:?} net {arch:?}")
    }
}

/// Flow-matching pretraining with independently paired noise and data and
/// per-row times uniform on `[0, 1)`. The run log stores the flow-matching
/// loss in `loss_ccm`; the distillation-only columns are NaN.
pub fn train_teacher(
    data: &DistributionSpec,
    arch: &Architecture,
    cfg: &TeacherConfig,
) -> Result<(Checkpoint, RunLog)> {
    data.validate()?;
    cfg.validate()?;
    if arch.data_dim != data.dim() || arch.out_dim != data.dim() {
        return Err(Error::config("net", "teacher must map data dimension to itself"));
    }
    let mut model = Mlp::new(arch, derive_seed(cfg.seed, streams::INIT, 0))?;
    let mut opt = Adam::new(&model, cfg.lr);
    let mut log = RunLog::new();
    let hash = config_hash(&cfg.canonical(data, arch));
    let snapshot = |model: &Mlp, opt: &Adam, iteration: u64| {
        Checkpoint::capture(
            model,
            Some(opt),
            None,
            None,
            CheckpointMeta {
                seed: cfg.seed,
                iteration,
                config_hash: hash,
            },
        )
    };

    for it in 0..cfg.iterations {
        let start = Instant::now();
        let x0 = sample_noise(cfg.batch, data.dim(), derive_seed(cfg.seed, streams::NOISE, it))?;
        let x1 = sample_data(data, cfg.batch, derive_seed(cfg.seed, streams::DATA, it))?;
        let mut rng = SeededRng::new(derive_seed(cfg.seed, streams::TIME, it));
        let t: Vec<f64> = (0..cfg.batch).map(|_| rng.uniform()).collect();
        let loss = match cfm_loss(&model, x0.data.view(), x1.data.view(), &t) {
            Ok(l) if l.value.is_finite() => l,
            Ok(_) => return Err(diverged(it, "non-finite loss".into(), snapshot(&model, &opt, it))),
            Err(e @ (Error::Numerical(_) | Error::SolverDivergence { .. })) => {
                return Err(diverged(it, e.to_string(), snapshot(&model, &opt, it)))
            }
            Err(e) => return Err(e),
        };
        if let Err(e) = opt.step(&mut model, &loss.grads) {
            return Err(diverged(it, e.to_string(), snapshot(&model, &opt, it)));
        }
        log.push(LogRow {
            iteration: it,
            loss_ccm: loss.value,
            loss_gan: f64::NAN,
            kdc_final: f64::NAN,
            teacher_iters: 0,
            u: f64::NAN,
            t: f64::NAN,
            ms: start.elapsed().as_secs_f64() * 1e3,
        })?;
    }
    Ok((snapshot(&model, &opt, cfg.iterations), log))
}

pub(crate) fn diverged(iteration: u64, detail: String, last_good: Checkpoint) -> Error {
    Error::Diverged {
        iteration,
        detail,
        last_good: Box::new(last_good),
    }
}
