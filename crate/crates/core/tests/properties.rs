use proptest::prelude::*;
use spr_core::cube::{apply_paradigm, Paradigm, Volume};
use spr_core::metrics::{auroc, eer};
use spr_core::nn::{per_sample_loss, Tensor4};
use spr_core::score::{frame_scores, fuse, FusionConfig, ScoreRecord};
use spr_core::spr::{pace_thresholds, solve_weights, spr_objective, weight_for, Thresholds};

fn thresholds() -> impl Strategy<Value = Thresholds> {
    (1e-3f64..10.0, 1e-3f64..10.0).prop_map(|(lp, gap)| Thresholds {
        lambda: lp + gap,
        lambda_prime: lp,
    })
}

fn brute_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn labeled_scores() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec((0u8..12).prop_map(|q| q as f64 / 4.0), n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_filter("both classes", |(_, l)| l.iter().any(|&x| x) && l.iter().any(|&x| !x))
    })
}

proptest! {
    #[test]
    fn weights_lie_in_unit_interval(losses in prop::collection::vec(0.0f64..50.0, 1..40), th in thresholds()) {
        let w = solve_weights(&losses, th.lambda, th.lambda_prime).unwrap();
        prop_assert!(w.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn weights_decrease_with_loss(a in 0.0f64..30.0, b in 0.0f64..30.0, th in thresholds()) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(weight_for(lo, &th) >= weight_for(hi, &th));
        if lo > th.lambda_prime && hi < th.lambda && lo < hi {
            prop_assert!(weight_for(lo, &th) > weight_for(hi, &th));
        }
    }

    #[test]
    fn band_edges(l in 0.0f64..30.0, th in thresholds()) {
        let v = weight_for(l, &th);
        prop_assert_eq!(v == 1.0, l <= th.lambda_prime);
        prop_assert_eq!(v == 0.0, l >= th.lambda);
    }

    #[test]
    fn closed_form_beats_coarse_grid(l in 0.0f64..20.0, th in thresholds()) {
        let v = weight_for(l, &th);
        let at = |x: f64| spr_objective(&[l], &[x], th.lambda, th.lambda_prime).unwrap();
        let best = at(v);
        for k in 0..=1000 {
            prop_assert!(best <= at(k as f64 / 1000.0) + 1e-12);
        }
    }

    #[test]
    fn threshold_order(losses in prop::collection::vec(0.0f64..100.0, 1..50), t in 0u64..100_000, r in 0.0f64..0.1) {
        let th = pace_thresholds(&losses, t, r).unwrap();
        prop_assert!(th.lambda >= th.lambda_prime);
    }

    #[test]
    fn auroc_matches_pairwise_count((scores, labels) in labeled_scores()) {
        let a = auroc(&scores, &labels).unwrap();
        prop_assert!((a - brute_auroc(&scores, &labels)).abs() <= 1e-12);
        let e = eer(&scores, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&e));
    }

    #[test]
    fn auroc_ignores_monotone_transforms((scores, labels) in labeled_scores()) {
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert_eq!(auroc(&scores, &labels).unwrap(), auroc(&warped, &labels).unwrap());
        prop_assert_eq!(eer(&scores, &labels).unwrap(), eer(&warped, &labels).unwrap());
    }

    #[test]
    fn common_omega_scale_keeps_frame_ranking(
        cubes in prop::collection::vec((0usize..6, 0.0f64..5.0, 0.0f64..5.0), 2..40),
        k in 0.01f64..100.0,
    ) {
        let base: Vec<ScoreRecord> = cubes.iter().map(|&(f, a, m)| ScoreRecord::new("v", f, a, Some(m))).collect();
        let videos = vec![("v".to_string(), 6)];
        let mut one = base.clone();
        let mut scaled = base.clone();
        fuse(&mut one, &FusionConfig::fit(&base, 0.5, 1.0).unwrap());
        fuse(&mut scaled, &FusionConfig::fit(&base, 0.5 * k, k).unwrap());
        let a: Vec<f64> = frame_scores(&one, &videos).iter().map(|f| f.score).collect();
        let b: Vec<f64> = frame_scores(&scaled, &videos).iter().map(|f| f.score).collect();
        for i in 0..a.len() {
            for j in 0..a.len() {
                // Scaling can only perturb exact ties by rounding.
                if (a[i] - a[j]).abs() > 1e-9 {
                    prop_assert_eq!(a[i] < a[j], b[i] < b[j]);
                }
            }
        }
    }

    #[test]
    fn frame_scores_ignore_record_order(
        cubes in prop::collection::vec((0usize..5, -3.0f64..3.0), 1..30),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let records: Vec<ScoreRecord> = cubes
            .iter()
            .map(|&(f, s)| ScoreRecord { s_fused: s, ..ScoreRecord::new("v", f, s, None) })
            .collect();
        let mut shuffled = records.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let videos = vec![("v".to_string(), 5)];
        prop_assert_eq!(frame_scores(&records, &videos), frame_scores(&shuffled, &videos));
    }

    #[test]
    fn loss_is_nonnegative(a in prop::collection::vec(-5.0f32..5.0, 12), b in prop::collection::vec(-5.0f32..5.0, 12)) {
        let x = Tensor4::from_vec([3, 1, 2, 2], a).unwrap();
        let y = Tensor4::from_vec([3, 1, 2, 2], b).unwrap();
        prop_assert!(per_sample_loss(&x, &y).unwrap().iter().all(|&l| l >= 0.0));
        prop_assert!(per_sample_loss(&x, &x).unwrap().iter().all(|&l| l == 0.0));
    }

    #[test]
    fn paradigm_targets_are_the_cube(data in prop::collection::vec(0.0f32..1.0, 5 * 16), seed in any::<u64>()) {
        let v = Volume::new(5, 1, 4, 4, data).unwrap();
        for p in Paradigm::ALL {
            let pair = apply_paradigm(&v, p, seed).unwrap();
            prop_assert_eq!(&pair.target, &v);
        }
        prop_assert_eq!(apply_paradigm(&v, Paradigm::Sf, seed).unwrap(), apply_paradigm(&v, Paradigm::Sf, seed).unwrap());
    }
}
