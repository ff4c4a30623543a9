//! Optimal-transport conditional flow matching, Euler integration, and the
//! σ/t schedule utilities.
//!
//! Time runs from 0 (noise) to 1 (data); every solver integrates forward.

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::nnet::{Grads, Mlp};

/// A time-dependent vector field over row batches.
pub trait VectorField {
    fn velocity(&self, x: ArrayView2<'_, f64>, t: f64) -> Result<Array2<f64>>;
}

impl VectorField for Mlp {
    fn velocity(&self, x: ArrayView2<'_, f64>, t: f64) -> Result<Array2<f64>> {
        self.forward(x, &[t])
    }
}

/// Adapts a closure into a [`VectorField`].
pub struct FnField<F>(pub F);

impl<F> VectorField for FnField<F>
where
    F: Fn(ArrayView2<'_, f64>, f64) -> Array2<f64>,
{
    fn velocity(&self, x: ArrayView2<'_, f64>, t: f64) -> Result<Array2<f64>> {
        Ok((self.0)(x, t))
    }
}

fn check_time(t: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::config(what, format!("time {t} outside [0, 1]")));
    }
    Ok(())
}

/// `(1−t)·x0 + t·x1` per row. `t` is per-row or a single broadcast value;
/// `t = 0` and `t = 1` return the endpoints bit-exactly.
pub fn ot_path(x0: ArrayView2<'_, f64>, x1: ArrayView2<'_, f64>, t: &[f64]) -> Result<Array2<f64>> {
    if x0.dim() != x1.dim() {
        return Err(Error::Shape(format!(
            "path endpoints {:?} and {:?}",
            x0.dim(),
            x1.dim()
        )));
    }
    if t.len() != 1 && t.len() != x0.nrows() {
        return Err(Error::Shape(format!("{} times for {} rows", t.len(), x0.nrows())));
    }
    for &ti in t {
        check_time(ti, "t")?;
    }
    let mut out = Array2::zeros(x0.dim());
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let ti = if t.len() == 1 { t[0] } else { t[i] };
        let (a, b) = (x0.row(i), x1.row(i));
        if ti == 0.0 {
            row.assign(&a);
        } else if ti == 1.0 {
            row.assign(&b);
        } else {
            Zip::from(&mut row)
                .and(&a)
                .and(&b)
                .for_each(|o, &p, &q| *o = (1.0 - ti) * p + ti * q);
        }
    }
    Ok(out)
}

/// Velocity of the OT path, `x1 − x0`, constant in time.
pub fn cfm_target(x0: ArrayView2<'_, f64>, x1: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x0.dim() != x1.dim() {
        return Err(Error::Shape("cfm target endpoints differ in shape".into()));
    }
    Ok(&x1 - &x0)
}

pub struct CfmLoss {
    pub value: f64,
    pub grads: Grads,
}

/// Mean (over rows and coordinates) squared error between `v(x_t, t)` and
/// `x1 − x0`, with exact parameter gradients.
pub fn cfm_loss(
    model: &Mlp,
    x0: ArrayView2<'_, f64>,
    x1: ArrayView2<'_, f64>,
    t: &[f64],
) -> Result<CfmLoss> {
    let xt = ot_path(x0, x1, t)?;
    let target = cfm_target(x0, x1)?;
    let (pred, tape) = model.forward_taped(xt.view(), t)?;
    if pred.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite velocity in flow-matching loss".into()));
    }
    let diff = pred - target;
    let count = diff.len() as f64;
    let value = diff.iter().map(|d| d * d).sum::<f64>() / count;
    let upstream = diff * (2.0 / count);
    let (grads, _) = model.backward(&tape, upstream.view())?;
    Ok(CfmLoss { value, grads })
}

/// Steps needed to cover `span` with steps of `step`, tolerating rounding so
/// a span that is a whole multiple of `step` never gets a sliver step.
fn step_count(span: f64, step: f64) -> usize {
    ((span / step) - 1e-9).ceil().max(1.0) as usize
}

/// Forward Euler from `t_from` to `t_to`: `x ← x + h·v(x, t)` with
/// `h = min(step, t_to − t)`, landing exactly on `t_to`.
pub fn euler_solve<F: VectorField + ?Sized>(
    field: &F,
    x: ArrayView2<'_, f64>,
    t_from: f64,
    t_to: f64,
    step: f64,
) -> Result<Array2<f64>> {
    check_time(t_from, "t_from")?;
    check_time(t_to, "t_to")?;
    if t_from >= t_to {
        return Err(Error::config(
            "t_to",
            format!("solver interval [{t_from}, {t_to}] is empty"),
        ));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::config("step", format!("solver step {step} must be positive")));
    }
    let n = step_count(t_to - t_from, step);
    let mut state = x.to_owned();
    for k in 0..n {
        let t = t_from + k as f64 * step;
        let h = if k + 1 == n { t_to - t } else { step };
        let v = field.velocity(state.view(), t)?;
        if v.dim() != state.dim() {
            return Err(Error::Shape(format!(
                "field returned {:?} for state {:?}",
                v.dim(),
                state.dim()
            )));
        }
        state.scaled_add(h, &v);
        if state.iter().any(|s| !s.is_finite()) {
            return Err(Error::SolverDivergence {
                t: t + h,
                detail: "non-finite state".into(),
            });
        }
    }
    Ok(state)
}

/// Discretization `σ_i = (ε^{1/ρ} + (i−1)/(N−1)·(T^{1/ρ} − ε^{1/ρ}))^ρ`, i = 1..N.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSchedule {
    pub n: usize,
    pub eps: f64,
    pub t_max: f64,
    pub rho: f64,
    pub sigmas: Vec<f64>,
}

pub fn karras_sigma_schedule(n: usize, eps: f64, t_max: f64, rho: f64) -> Result<SigmaSchedule> {
    if n < 2 {
        return Err(Error::config("N", "need at least two grid points"));
    }
    if !(eps > 0.0 && eps < t_max && t_max.is_finite()) {
        return Err(Error::config("eps", "require 0 < eps < T"));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::config("rho", "must be positive"));
    }
    let lo = eps.powf(1.0 / rho);
    let hi = t_max.powf(1.0 / rho);
    let mut sigmas: Vec<f64> = (0..n)
        .map(|i| (lo + i as f64 / (n - 1) as f64 * (hi - lo)).powf(rho))
        .collect();
    sigmas[0] = eps;
    sigmas[n - 1] = t_max;
    Ok(SigmaSchedule {
        n,
        eps,
        t_max,
        rho,
        sigmas,
    })
}

/// `t = 1/(σ+1)`.
pub fn sigma_to_t(sigma: f64) -> Result<f64> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::config("sigma", format!("{sigma} must be finite and >= 0")));
    }
    Ok(1.0 / (sigma + 1.0))
}

/// `σ = (1−t)/t`; `t = 0` maps to infinite σ and is rejected.
pub fn t_to_sigma(t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::config("t", format!("{t} must lie in (0, 1]")));
    }
    Ok((1.0 - t) / t)
}
