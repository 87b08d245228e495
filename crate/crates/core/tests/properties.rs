mod common;

use common::{enumerate, max_abs, random_frames, random_model, rng};
use hmmgmr::data::{align_events, split_ids};
use hmmgmr::evaluation::score_event;
use hmmgmr::inference::{forward_frames, posteriors_frames};
use hmmgmr::learning::{fit, InitMethod, TrainingConfig};
use hmmgmr::regression::HmmGmr;
use hmmgmr::{EventSequence, FrameMatrix, HmmModel};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn posteriors_equal_enumeration(seed in any::<u64>(), k in 1usize..=3, t in 1usize..=6, d in 1usize..=3) {
        let mut r = rng(seed);
        let m = random_model(&mut r, k, d);
        let x = random_frames(&mut r, t, d);
        let fb = posteriors_frames(&m, &x).unwrap();
        let or = enumerate(&m, &x);
        prop_assert!((fb.log_likelihood.exp() - or.likelihood).abs() <= 1e-10 * or.likelihood.max(1.0));
        prop_assert!(max_abs(&fb.gamma, &or.gamma) < 1e-10);
        for (a, b) in fb.xi.iter().zip(&or.xi) {
            prop_assert!(max_abs(a, b) < 1e-10);
        }
    }

    #[test]
    fn posterior_normalization(seed in any::<u64>(), k in 1usize..=5, t in 2usize..=40, d in 1usize..=4) {
        let mut r = rng(seed);
        let m = random_model(&mut r, k, d);
        let x = random_frames(&mut r, t, d);
        let fb = posteriors_frames(&m, &x).unwrap();
        for row in fb.gamma.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-10);
        }
        for (i, xi) in fb.xi.iter().enumerate() {
            prop_assert!((xi.sum() - 1.0).abs() < 1e-10);
            for kk in 0..k {
                prop_assert!((xi.column(kk).sum() - fb.gamma[(i + 1, kk)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn likelihood_ignores_state_labels(seed in any::<u64>(), t in 1usize..=20, rot in 0usize..3) {
        let mut r = rng(seed);
        let m = random_model(&mut r, 3, 2);
        let x = random_frames(&mut r, t, 2);
        let perm: Vec<usize> = (0..3).map(|i| (i + rot) % 3).collect();
        let a = forward_frames(&m, &x).unwrap().log_likelihood;
        let b = forward_frames(&m.permuted(&perm).unwrap(), &x).unwrap().log_likelihood;
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn beliefs_are_distributions_and_estimates_stay_in_hull(
        seed in any::<u64>(), k in 1usize..=4, t in 1usize..=30, d in 2usize..=4,
    ) {
        let mut r = rng(seed);
        let m = random_model(&mut r, k, d);
        let x = random_frames(&mut r, t, d - 1);
        let (b, p) = HmmGmr::new(&m).unwrap().predict(&x).unwrap();
        for s in 0..t {
            prop_assert!((b.h.row(s).sum() - 1.0).abs() < 1e-10);
            prop_assert!(b.h.row(s).iter().all(|&h| h >= 0.0));
            let means = p.component_means[s].column(0);
            let (lo, hi) = (means.min(), means.max());
            let y = p.point_estimate[(s, 0)];
            let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
            prop_assert!(y >= lo - slack && y <= hi + slack);
        }
    }

    #[test]
    fn score_identities(seed in any::<u64>(), n in 2usize..60) {
        let mut r = rng(seed);
        let reference: Vec<f64> = random_frames(&mut r, n, 1).as_slice().to_vec();
        let predicted: Vec<f64> = random_frames(&mut r, n, 1).as_slice().to_vec();
        let s = score_event(&predicted, &reference).unwrap();
        prop_assert!((s.rmse * s.rmse - s.mse).abs() < 1e-12);
        let s_mse = s.s_mse.unwrap();
        prop_assert!((s_mse - (1.0 - s.mse / s.mse_ref)).abs() < 1e-12);
        let mean = reference.iter().sum::<f64>() / n as f64;
        prop_assert_eq!(score_event(&vec![mean; n], &reference).unwrap().s_mse, Some(0.0));
        prop_assert_eq!(score_event(&reference, &reference).unwrap().s_mse, Some(1.0));
    }

    #[test]
    fn split_is_a_partition(n in 2usize..80, fraction in 0.01f64..0.99, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("e{i:03}")).collect();
        let s = split_ids(&ids, fraction, seed).unwrap();
        prop_assert!(!s.train.is_empty() && !s.test.is_empty());
        let mut all: Vec<String> = s.train.iter().chain(&s.test).cloned().collect();
        all.sort();
        prop_assert_eq!(all, ids);
    }

    #[test]
    fn alignment_keeps_endpoints(seed in any::<u64>(), t in 2usize..30, target in 2usize..120) {
        let mut r = rng(seed);
        let x = random_frames(&mut r, t, 2);
        let e = EventSequence::with_uniform_time("e", x.clone(), common::schema(2)).unwrap();
        let a = &align_events(&[e], target).unwrap()[0];
        prop_assert_eq!(a.len(), target);
        prop_assert_eq!(a.frames().row(0), x.row(0));
        prop_assert_eq!(a.frames().row(target - 1), x.row(t - 1));
        prop_assert_eq!(a.timestamps_ms()[target - 1], (t - 1) as f64 * 100.0);
    }

    #[test]
    fn model_documents_round_trip(seed in any::<u64>(), k in 1usize..=4, d in 1usize..=4) {
        let m = random_model(&mut rng(seed), k, d);
        let back = HmmModel::from_document(&m.to_document().unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn em_trace_is_monotone(seed in any::<u64>(), k in 1usize..=4, kmeans in any::<bool>()) {
        let mut r = rng(seed);
        let truth = random_model(&mut r, 3, 2);
        let seqs: Vec<EventSequence> = (0..6)
            .map(|i| {
                let f: FrameMatrix = random_frames(&mut r, 15, 2);
                EventSequence::with_uniform_time(format!("e{i}"), f, truth.schema().clone()).unwrap()
            })
            .collect();
        let cfg = TrainingConfig {
            k,
            init: if kmeans { InitMethod::KMeans } else { InitMethod::KBins },
            seed,
            rel_tol: 1e-12,
            max_iters: 40,
            ..TrainingConfig::default()
        };
        let (_, trace) = fit(&seqs, &cfg).unwrap();
        for w in trace.log_likelihoods.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-8, "{} -> {}", w[0], w[1]);
        }
    }
}
