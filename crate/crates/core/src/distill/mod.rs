//! Teacher flow-matching pretraining, curriculum consistency distillation
//! with an optional adversarial term, and few-step sampling.

mod gan;
mod loss;
mod runlog;
mod sample;
mod teacher;
mod train;

use std::fmt;
use std::str::FromStr;

pub use gan::{gan_losses, GanLosses};
pub use loss::{ccm_loss, distance, CcmLoss, Distance, LossSpec};
pub use runlog::{LogRow, RunLog, RUNLOG_HEADER};
pub use sample::{sample, sample_model, teacher_sample, TEACHER_SAMPLE_STEPS};
pub use teacher::{train_teacher, TeacherConfig};
pub use train::{calibrate_threshold, distill, DistillConfig, DistillOutcome, GanConfig};

use crate::error::{Error, Result};

/// Independent random streams; each iteration draws from
/// `derive_seed(seed, stream, iteration)`.
pub(crate) mod streams {
    pub const INIT: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const DATA: u64 = 3;
    pub const TIME: u64 = 4;
    pub const CALIBRATION: u64 = 5;
    pub const DISC_INIT: u64 = 6;
    pub const RENOISE: u64 = 7;
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distance::L1 => "l1",
            Distance::L2 => "l2",
        })
    }
}

impl FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Distance::L1),
            "l2" => Ok(Distance::L2),
            _ => Err(Error::config("distance", format!("unknown distance `{s}` (l1, l2)"))),
        }
    }
}
