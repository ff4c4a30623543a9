use ndarray::{Array2, ArrayView2};

use crate::consistency::{compute_target, consistency_map_taped, Plan, TargetResult, TargetSettings};
use crate::error::{Error, Result};
use crate::flowmatch::ot_path;
use crate::nnet::{Grads, Mlp, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Distance {
    L1,
    #[default]
    L2,
}

/// Per-component mean distance and its gradient with respect to `a`.
pub fn distance(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, d: Distance) -> Result<(f64, Array2<f64>)> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    let count = a.len() as f64;
    let diff = &a - &b;
    Ok(match d {
        Distance::L2 => {
            let value = diff.iter().map(|v| v * v).sum::<f64>() / count;
            (value, diff * (2.0 / count))
        }
        Distance::L1 => {
            let value = diff.iter().map(|v| v.abs()).sum::<f64>() / count;
            let grad = diff.mapv(|v| {
                if v > 0.0 {
                    1.0 / count
                } else if v < 0.0 {
                    -1.0 / count
                } else {
                    0.0
                }
            });
            (value, grad)
        }
    })
}

/// How the distillation target of one batch is formed.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    pub plan: Plan,
    pub settings: TargetSettings,
    pub distance: Distance,
}

pub struct CcmLoss {
    pub value: f64,
    /// Student parameter gradients.
    pub grads: Grads,
    pub target: TargetResult,
}

/// Student forward pass plus target; the student gradient is not yet pulled
/// back through the network so extra terms can be added to `d_est`.
pub(crate) struct CcmForward {
    pub x_est: Array2<f64>,
    pub tape: Tape,
    pub value: f64,
    /// dLoss/dx_est.
    pub d_est: Array2<f64>,
    pub target: TargetResult,
}

pub(crate) fn ccm_forward(
    student: &Mlp,
    target_model: &Mlp,
    teacher: &Mlp,
    x_t: ArrayView2<'_, f64>,
    t: f64,
    spec: &LossSpec,
) -> Result<CcmForward> {
    let (x_est, tape) = consistency_map_taped(student, x_t, t)?;
    let target = compute_target(
        &spec.plan,
        x_est.view(),
        x_t,
        t,
        spec.settings,
        teacher,
        target_model,
    )?;
    let (value, d_est) = distance(x_est.view(), target.x_target.view(), spec.distance)?;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("non-finite distillation loss at t={t}")));
    }
    Ok(CcmForward {
        x_est,
        tape,
        value,
        d_est,
        target,
    })
}

/// Pulls dLoss/dx_est back to student parameters; the consistency map
/// scales the network output by `1−t`.
pub(crate) fn student_grads(student: &Mlp, tape: &Tape, d_est: &Array2<f64>, t: f64) -> Result<Grads> {
    let upstream = d_est * (1.0 - t);
    Ok(student.backward(tape, upstream.view())?.0)
}

/// Distillation loss `d(f_student(x_t, t), target)` on the path point built
/// from noise `x0` and data `x1` at time `t`. The teacher and target network
/// are only read; gradients flow through the student output alone.
#[allow(clippy::too_many_arguments)]
pub fn ccm_loss(
    student: &Mlp,
    target_model: &Mlp,
    teacher: &Mlp,
    x0: ArrayView2<'_, f64>,
    x1: ArrayView2<'_, f64>,
    t: f64,
    spec: &LossSpec,
) -> Result<CcmLoss> {
    let x_t = ot_path(x0, x1, &[t])?;
    let fwd = ccm_forward(student, target_model, teacher, x_t.view(), t, spec)?;
    let grads = student_grads(student, &fwd.tape, &fwd.d_est, t)?;
    Ok(CcmLoss {
        value: fwd.value,
        grads,
        target: fwd.target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consistency::DEFAULT_KDC_FLOOR;
    use crate::nnet::Architecture;
    use ndarray::array;

    fn settings() -> TargetSettings {
        TargetSettings {
            peak: 4.0,
            kdc_floor: DEFAULT_KDC_FLOOR,
        }
    }

    #[test]
    fn l2_of_constant_offset_is_mean_square() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let b = &a - &array![[0.5, -1.0]];
        let (v, g) = distance(a.view(), b.view(), Distance::L2).unwrap();
        assert!((v - (0.25 + 1.0) / 2.0).abs() < 1e-15);
        assert_eq!(g, array![[0.25, -0.5], [0.25, -0.5]]);
    }

    #[test]
    fn l1_gradient_is_sign_over_count() {
        let a = array![[1.0, 0.0]];
        let b = array![[0.0, 0.0]];
        let (v, g) = distance(a.view(), b.view(), Distance::L1).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(g, array![[0.5, 0.0]]);
    }

    #[test]
    fn zero_field_nets_give_zero_loss() {
        let arch = Architecture::velocity(2);
        let zero = Mlp::zeros(&arch).unwrap();
        let x0 = array![[0.3, -1.0], [1.2, 0.4]];
        let x1 = array![[2.0, 0.0], [0.0, 2.0]];
        let spec = LossSpec {
            plan: Plan::Fixed { grid: vec![0.5, 0.53] },
            settings: settings(),
            distance: Distance::L2,
        };
        let out = ccm_loss(&zero, &zero, &zero, x0.view(), x1.view(), 0.47, &spec).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.grads.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn loss_leaves_frozen_networks_untouched() {
        let arch = Architecture::velocity(2);
        let student = Mlp::new(&arch, 1).unwrap();
        let target = Mlp::new(&arch, 2).unwrap();
        let teacher = Mlp::new(&arch, 3).unwrap();
        let (t0, g0) = (target.clone(), teacher.clone());
        let x0 = array![[0.3, -1.0], [1.2, 0.4]];
        let x1 = array![[2.0, 0.0], [0.0, 2.0]];
        let spec = LossSpec {
            plan: Plan::Adaptive {
                threshold: 0.0,
                step: 0.1,
                rule: crate::consistency::StopRule::Exceeds,
            },
            settings: settings(),
            distance: Distance::L2,
        };
        for _ in 0..3 {
            ccm_loss(&student, &target, &teacher, x0.view(), x1.view(), 0.2, &spec).unwrap();
        }
        assert_eq!(target, t0);
        assert_eq!(teacher, g0);
    }
}
