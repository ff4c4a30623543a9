use crate::checkpoint::Checkpoint;
use crate::consistency::consistency_map;
use crate::distill::streams;
use crate::error::{Error, Result};
use crate::flowmatch::euler_solve;
use crate::nnet::Mlp;
use crate::rng::derive_seed;
use crate::synthdata::{sample_noise, Batch, Source};

/// Euler steps used when sampling a teacher.
pub const TEACHER_SAMPLE_STEPS: usize = 100;

/// Few-step generation from a checkpoint's sampling network.
pub fn sample(ckpt: &Checkpoint, n: usize, nfe: usize, seed: u64) -> Result<Batch> {
    sample_model(ckpt.sampling_model(), n, nfe, seed)
}

/// `nfe = 1` maps noise straight to `t = 1`. Larger `nfe` alternates: map to
/// `t = 1`, re-noise along the path to `t_k = k/nfe`, map again.
pub fn sample_model(model: &Mlp, n: usize, nfe: usize, seed: u64) -> Result<Batch> {
    if nfe == 0 {
        return Err(Error::config("nfe", "must be at least 1"));
    }
    let d = model.data_dim;
    let z = sample_noise(n, d, seed)?;
    let mut x = consistency_map(model, z.data.view(), 0.0)?;
    for k in 1..nfe {
        let t = k as f64 / nfe as f64;
        let noise = sample_noise(n, d, derive_seed(seed, streams::RENOISE, k as u64))?;
        let mut x_t = noise.data * (1.0 - t);
        x_t.scaled_add(t, &x);
        x = consistency_map(model, x_t.view(), t)?;
    }
    Batch::new(x, seed, Source::Generated)
}

/// Integrates the velocity field from noise at `t = 0` to `t = 1`.
pub fn teacher_sample(model: &Mlp, n: usize, steps: usize, seed: u64) -> Result<Batch> {
    if steps == 0 {
        return Err(Error::config("steps", "must be at least 1"));
    }
    let z = sample_noise(n, model.data_dim, seed)?;
    let x = euler_solve(model, z.data.view(), 0.0, 1.0, 1.0 / steps as f64)?;
    Batch::new(x, seed, Source::Generated)
}
