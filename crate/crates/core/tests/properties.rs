use fguide_core::classifier::{smooth_ece_loss, CalibrationBatch};
use fguide_core::guidance::{divergence_value, mean_one_tilted_weights, tilted_weights, DivergenceKind};
use fguide_core::metrics::{frechet_gaussian, mode_precision_recall, GaussianSummary};
use fguide_core::prob::softmax;
use fguide_core::{GaussianMixture, TargetDistribution};
use proptest::prelude::*;

fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-6.0f64..6.0, k).prop_map(|v| softmax(&v))
}

fn simplex_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..=10).prop_flat_map(|k| (simplex(k), simplex(k)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn divergences_are_nonnegative_and_vanish_on_equal_inputs((q, p) in simplex_pair()) {
        for kind in DivergenceKind::ALL {
            prop_assert!(divergence_value(kind, &q, &p).unwrap() >= -1e-10);
            prop_assert!(divergence_value(kind, &q, &q).unwrap().abs() <= 1e-10);
        }
    }

    #[test]
    fn js_is_symmetric_and_bounded((q, p) in simplex_pair()) {
        let a = divergence_value(DivergenceKind::Js, &q, &p).unwrap();
        let b = divergence_value(DivergenceKind::Js, &p, &q).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!(a <= std::f64::consts::LN_2 + 1e-12);
    }
}

proptest! {
    #[test]
    fn tilted_weights_sum_to_one_and_order_by_log_prob(
        lp in prop::collection::vec(-8.0f64..0.0, 1..40),
        t in -3.0f64..3.0,
    ) {
        let w = tilted_weights(&lp, t).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for i in 0..lp.len() {
            for j in 0..lp.len() {
                if lp[i] < lp[j] {
                    if t > 0.0 {
                        prop_assert!(w[i] <= w[j]);
                    } else if t < 0.0 {
                        prop_assert!(w[i] >= w[j]);
                    }
                }
            }
        }
        let m = mean_one_tilted_weights(&lp, t).unwrap();
        prop_assert!((m.iter().sum::<f64>() - lp.len() as f64).abs() <= 1e-9);
    }

    #[test]
    fn smooth_ece_is_at_least_sqrt_beta(
        samples in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..60),
        beta in 1e-6f64..1e-2,
        bins in 1usize..30,
    ) {
        let (conf, correct): (Vec<f64>, Vec<bool>) = samples.into_iter().unzip();
        let perfect = conf.iter().zip(&correct).all(|(p, a)| *p == if *a { 1.0 } else { 0.0 });
        let batch = CalibrationBatch::from_correctness(conf, &correct).unwrap();
        let loss = smooth_ece_loss(&batch, beta, bins).unwrap();
        prop_assert!(loss >= beta.sqrt() * (1.0 - 1e-12));
        if !perfect {
            prop_assert!(loss > beta.sqrt());
        }
        let other = smooth_ece_loss(&batch, beta, 15).unwrap();
        prop_assert!((loss - other).abs() <= 1e-12);
    }

    #[test]
    fn target_distribution_is_a_simplex(k in 1usize..20, eps in 0.0f64..=1.0, seed in any::<u64>()) {
        let y = (seed % k as u64) as usize;
        let q = TargetDistribution::new(k, y, eps).unwrap();
        prop_assert!((q.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(q.probs().iter().all(|v| *v >= 0.0));
        let top = q.probs().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(q.probs()[y], top);
    }

    #[test]
    fn frechet_is_symmetric_and_nonnegative(
        ma in prop::collection::vec(-3.0f64..3.0, 2),
        mb in prop::collection::vec(-3.0f64..3.0, 2),
        la in prop::collection::vec(-1.0f64..1.0, 4),
        lb in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let psd = |l: &[f64]| {
            let (a, b, c, d) = (l[0], l[1], l[2], l[3]);
            vec![vec![a * a + b * b, a * c + b * d], vec![a * c + b * d, c * c + d * d]]
        };
        let a = GaussianSummary::new(ma, psd(&la)).unwrap();
        let b = GaussianSummary::new(mb, psd(&lb)).unwrap();
        let ab = frechet_gaussian(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - frechet_gaussian(&b, &a).unwrap()).abs() <= 1e-10);
        prop_assert!(frechet_gaussian(&a, &a).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn posterior_is_a_simplex_and_diffusion_composes(
        x in prop::collection::vec(-5.0f64..5.0, 2),
        a1 in 0.05f64..1.0,
        a2 in 0.05f64..1.0,
    ) {
        let g = GaussianMixture::new(
            vec![0.3, 0.7],
            vec![vec![-1.0, 2.0], vec![1.5, -0.5]],
            vec![vec![vec![0.6, 0.2], vec![0.2, 0.4]], vec![vec![1.2, -0.3], vec![-0.3, 0.8]]],
        )
        .unwrap();
        let post = g.posterior(&x).unwrap();
        prop_assert!((post.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let twice = g.diffuse(a1).unwrap().diffuse(a2).unwrap();
        let once = g.diffuse(a1 * a2).unwrap();
        prop_assert!((twice.log_density(&x).unwrap() - once.log_density(&x).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn precision_is_monotone_in_radius(seed in any::<u64>(), r in 0.5f64..4.0, dr in 0.0f64..2.0) {
        let g = GaussianMixture::isotropic(vec![0.5, 0.5], vec![vec![-2.0, 0.0], vec![2.0, 0.0]], 0.7).unwrap();
        let wide = GaussianMixture::isotropic(vec![1.0], vec![vec![0.0, 0.0]], 9.0).unwrap();
        let pts: Vec<Vec<f64>> = wide.sample(300, seed).unwrap().into_iter().map(|(x, _)| x).collect();
        let small = mode_precision_recall(&pts, &g, r).unwrap();
        let large = mode_precision_recall(&pts, &g, r + dr).unwrap();
        prop_assert!(small.precision <= large.precision);
        prop_assert!((0.0..=1.0).contains(&small.recall));
    }
}

/// Single-sample loss at residual `r = p̂ − a`, with `a = 0` for `r ≥ 0` and
/// `a = 1` otherwise.
fn single_loss(r: f64, beta: f64) -> f64 {
    let batch = if r >= 0.0 {
        CalibrationBatch::from_correctness(vec![r], &[false])
    } else {
        CalibrationBatch::from_correctness(vec![1.0 + r], &[true])
    };
    smooth_ece_loss(&batch.unwrap(), beta, 15).unwrap()
}

#[test]
fn smooth_ece_huber_regimes() {
    let beta: f64 = 1e-4;
    let sb = beta.sqrt();
    let ulps = |v: f64| 4.0 * f64::EPSILON * v.abs();
    for i in 0..=1000 {
        let r = sb / 10.0 * i as f64 / 1000.0;
        for r in [r, -r] {
            let v = single_loss(r, beta);
            let quad = sb + r * r / (2.0 * sb);
            assert!((v - quad).abs() <= r.powi(4) / (2.0 * beta.powf(1.5)) + ulps(v), "r={r}");
        }
    }
    for i in 0..=1000 {
        let r = 10.0 * sb + (1.0 - 10.0 * sb) * i as f64 / 1000.0;
        for r in [r, -r] {
            let v = single_loss(r, beta);
            assert!((v - r.abs()).abs() <= beta / (2.0 * r.abs()) + ulps(v), "r={r}");
        }
    }
}

#[test]
fn smooth_ece_reference_values() {
    let exact = CalibrationBatch::from_correctness(vec![1.0], &[true]).unwrap();
    assert!((smooth_ece_loss(&exact, 1e-4, 15).unwrap() - 0.01).abs() < 1e-15);
    let wrong = CalibrationBatch::from_correctness(vec![1.0], &[false]).unwrap();
    assert!((smooth_ece_loss(&wrong, 1e-10, 15).unwrap() - 1.0).abs() < 1e-5);
}
