//! Time-conditioned MLPs with exact reverse-mode gradients, Adam, and EMA.

mod mlp;
mod optim;

pub use mlp::{Activation, Architecture, Grads, Layer, Mlp, Tape, TimeEmbedding};
pub use optim::Adam;

use crate::error::{Error, Result};

/// `target ← μ·target + (1−μ)·student`, elementwise. No gradient path exists
/// through this update; it only reads `student`.
pub fn ema_update(target: &mut Mlp, student: &Mlp, mu: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::config("ema", format!("decay {mu} outside [0, 1]")));
    }
    if target.architecture() != student.architecture() {
        return Err(Error::Shape("EMA between different topologies".into()));
    }
    let keep = 1.0 - mu;
    for (t, s) in target.params_mut().zip(student.params()) {
        *t = mu * *t + keep * s;
    }
    Ok(())
}
