use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::nnet::{Grads, Mlp};

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub struct GanLosses {
    /// Generator loss on `fake`.
    pub generator: f64,
    /// `−mean ln d(real) − mean ln(1 − d(fake))`.
    pub discriminator: f64,
    /// dGenerator/d(fake).
    pub generator_dx: Array2<f64>,
    /// Discriminator parameter gradients of the discriminator loss.
    pub disc_grads: Grads,
}

/// Adversarial losses of a logit-head discriminator, computed in logit
/// space. The generator term is non-saturating (`−mean ln d(fake)`) unless
/// `literal`, in which case it is `mean ln(1 − d(fake))`.
pub fn gan_losses(
    disc: &Mlp,
    fake: ArrayView2<'_, f64>,
    real: ArrayView2<'_, f64>,
    literal: bool,
) -> Result<GanLosses> {
    if disc.out_dim() != 1 {
        return Err(Error::Shape(format!(
            "discriminator must have one output, has {}",
            disc.out_dim()
        )));
    }
    if fake.nrows() == 0 || real.nrows() == 0 {
        return Err(Error::Shape("empty batch for discriminator".into()));
    }
    let (l_fake, tape_fake) = disc.forward_taped(fake, &[0.0])?;
    let (l_real, tape_real) = disc.forward_taped(real, &[0.0])?;
    let nf = fake.nrows() as f64;
    let nr = real.nrows() as f64;

    let discriminator = l_real.iter().map(|&z| softplus(-z)).sum::<f64>() / nr
        + l_fake.iter().map(|&z| softplus(z)).sum::<f64>() / nf;
    if !discriminator.is_finite() {
        return Err(Error::Numerical("non-finite discriminator loss".into()));
    }
    let up_real = l_real.mapv(|z| -sigmoid(-z) / nr);
    let up_fake = l_fake.mapv(|z| sigmoid(z) / nf);
    let (mut disc_grads, _) = disc.backward(&tape_real, up_real.view())?;
    let (g_fake, _) = disc.backward(&tape_fake, up_fake.view())?;
    disc_grads.add_scaled(&g_fake, 1.0);

    let (generator, up_gen) = if literal {
        (
            -l_fake.iter().map(|&z| softplus(z)).sum::<f64>() / nf,
            l_fake.mapv(|z| -sigmoid(z) / nf),
        )
    } else {
        (
            l_fake.iter().map(|&z| softplus(-z)).sum::<f64>() / nf,
            l_fake.mapv(|z| -sigmoid(-z) / nf),
        )
    };
    let (_, generator_dx) = disc.backward(&tape_fake, up_gen.view())?;
    Ok(GanLosses {
        generator,
        discriminator,
        generator_dx,
        disc_grads,
    })
}
