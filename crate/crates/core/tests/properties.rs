use ccm_core::consistency::{
    adaptive_target, consistency_map, kdc_from_mse, ConsistencyConfig, CurriculumSchedule,
    StopRule, DEFAULT_KDC_FLOOR,
};
use ccm_core::eval::{energy_distance, sliced_wasserstein};
use ccm_core::flowmatch::ot_path;
use ccm_core::nnet::{ema_update, Architecture, Mlp};
use ccm_core::synthdata::{sample_data, sample_noise, DistributionSpec};
use ndarray::{Array2, Axis};
use proptest::prelude::*;

fn small_arch() -> Architecture {
    Architecture {
        data_dim: 2,
        hidden: vec![16, 16],
        out_dim: 2,
        activation: ccm_core::nnet::Activation::Silu,
        time_features: 4,
    }
}

fn batch(n: usize, seed: u64) -> Array2<f64> {
    sample_noise(n, 2, seed).unwrap().data
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ot_path_hits_endpoints_exactly(seed in any::<u64>()) {
        let x0 = batch(8, seed);
        let x1 = batch(8, seed ^ 1);
        prop_assert_eq!(ot_path(x0.view(), x1.view(), &[0.0]).unwrap(), x0.clone());
        prop_assert_eq!(ot_path(x0.view(), x1.view(), &[1.0]).unwrap(), x1);
    }

    #[test]
    fn consistency_map_is_identity_at_one(seed in any::<u64>()) {
        let net = Mlp::new(&small_arch(), seed).unwrap();
        let x = batch(5, seed);
        prop_assert_eq!(consistency_map(&net, x.view(), 1.0).unwrap(), x);
    }

    #[test]
    fn ema_contracts_toward_student(seed in any::<u64>(), mu in 0.0f64..=1.0) {
        let mut target = Mlp::new(&small_arch(), seed).unwrap();
        let student = Mlp::new(&small_arch(), seed.wrapping_add(1)).unwrap();
        let before: Vec<f64> = target.params().copied().collect();
        ema_update(&mut target, &student, mu).unwrap();
        for ((new, old), s) in target.params().zip(&before).zip(student.params()) {
            let expected = mu * (old - s).abs();
            prop_assert!(((new - s).abs() - expected).abs() <= 1e-12 * (1.0 + expected));
        }
    }

    #[test]
    fn kdc_strictly_increases_with_mse(a in 1e-6f64..1e3, factor in 1.0001f64..100.0) {
        let lo = kdc_from_mse(a, 4.0, DEFAULT_KDC_FLOOR);
        let hi = kdc_from_mse(a * factor, 4.0, DEFAULT_KDC_FLOOR);
        prop_assert!(hi > lo);
    }

    #[test]
    fn adaptive_loop_terminates_with_monotone_trace(
        seed in any::<u64>(),
        t in 0.0f64..0.99,
        step in 0.01f64..0.5,
        threshold in -50.0f64..150.0,
        inverted in any::<bool>(),
    ) {
        let teacher = Mlp::new(&small_arch(), seed).unwrap();
        let target = Mlp::new(&small_arch(), seed.wrapping_add(7)).unwrap();
        let x_t = batch(6, seed);
        let x_est = consistency_map(&teacher, x_t.view(), t).unwrap();
        let cfg = ConsistencyConfig::new(4.0, threshold, step);
        let rule = if inverted { StopRule::AtMost } else { StopRule::Exceeds };
        let res = adaptive_target(x_est.view(), x_t.view(), t, &cfg, rule, &teacher, &target).unwrap();
        let bound = ((1.0 - t) / step).ceil() as usize;
        prop_assert!(res.iters >= 1 && res.iters <= bound.max(1));
        prop_assert!(res.u > t && res.u <= 1.0);
        prop_assert!(res.kdc_trace.windows(2).all(|w| w[0].0 < w[1].0));
        prop_assert_eq!(res.kdc_trace.last().unwrap().0, res.u);
        prop_assert_eq!(res.kdc_trace.len(), res.iters);
    }

    #[test]
    fn threshold_below_floor_takes_one_iteration(seed in any::<u64>(), t in 0.0f64..0.99) {
        let teacher = Mlp::new(&small_arch(), seed).unwrap();
        let x_t = batch(6, seed);
        let x_est = consistency_map(&teacher, x_t.view(), t).unwrap();
        let cfg = ConsistencyConfig::new(4.0, DEFAULT_KDC_FLOOR - 1.0, 0.03);
        let res = adaptive_target(x_est.view(), x_t.view(), t, &cfg, StopRule::Exceeds, &teacher, &teacher).unwrap();
        prop_assert_eq!(res.iters, 1);
    }

    #[test]
    fn student_estimate_ignores_teacher_and_target(seed in any::<u64>(), t in 0.0f64..0.99) {
        let student = Mlp::new(&small_arch(), seed).unwrap();
        let x_t = batch(6, seed);
        let before = consistency_map(&student, x_t.view(), t).unwrap();
        let mut teacher = Mlp::new(&small_arch(), seed ^ 3).unwrap();
        let cfg = ConsistencyConfig::new(4.0, 50.0, 0.1);
        adaptive_target(before.view(), x_t.view(), t, &cfg, StopRule::Exceeds, &teacher, &teacher).unwrap();
        teacher.params_mut().for_each(|p| *p += 0.5);
        adaptive_target(before.view(), x_t.view(), t, &cfg, StopRule::Exceeds, &teacher, &teacher).unwrap();
        prop_assert_eq!(consistency_map(&student, x_t.view(), t).unwrap(), before);
    }

    #[test]
    fn metrics_ignore_row_order(seed in any::<u64>(), rot in 1usize..30) {
        let a = batch(31, seed);
        let b = sample_data(&DistributionSpec::eight_gaussians(1.0), 31, seed).unwrap().data;
        let order: Vec<usize> = (0..31).map(|i| (i + rot) % 31).collect();
        let a_perm = a.select(Axis(0), &order);
        let sw = sliced_wasserstein(a.view(), b.view(), 16, 5).unwrap();
        prop_assert_eq!(sliced_wasserstein(a_perm.view(), b.view(), 16, 5).unwrap(), sw);
        prop_assert_eq!(sliced_wasserstein(b.view(), a.view(), 16, 5).unwrap(), sw);
        let e = energy_distance(a.view(), b.view()).unwrap();
        prop_assert!(e >= 0.0);
        prop_assert!((energy_distance(b.view(), a_perm.view()).unwrap() - e).abs() < 1e-12);
    }

    #[test]
    fn data_batches_are_deterministic(seed in any::<u64>(), n in 1usize..64) {
        let spec = DistributionSpec::eight_gaussians(1.5);
        let a = sample_data(&spec, n, seed).unwrap();
        let b = sample_data(&spec, n, seed).unwrap();
        prop_assert_eq!(a.data, b.data);
    }

    #[test]
    fn static_descriptors_round_trip(n in 1usize..6, s in 0.005f64..0.2) {
        let sched = CurriculumSchedule::Static { l: n as f64 * s, n, s };
        let back: CurriculumSchedule = sched.to_string().parse().unwrap();
        prop_assert_eq!(back, sched);
    }
}
