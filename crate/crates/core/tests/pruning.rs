mod common;

use common::{brute_force_kept, exact_svd_rank, frobenius, from_m, prunable_matrices, random_rank_r, rng, to_m};
use taskprune::model::{forward, prunable_registry, ModelConfig, Parameters, TargetKind};
use taskprune::pruner::{select_kept, surgery, svd, svd_compress, svd_rank, truncate, PruneMask};
use taskprune::model::registry_of;

#[test]
fn surgery_equals_zeroing_on_twenty_pairs() {
    let (worst, kinds) = common::zeroing_equivalence(20, 7);
    assert!(worst < 1e-9, "{worst:e}");
    let all = [
        TargetKind::SelfQk,
        TargetKind::SelfV,
        TargetKind::CrossQk,
        TargetKind::CrossV,
        TargetKind::Ffn,
    ];
    for k in all {
        assert!(kinds.contains(&k), "{k:?} never pruned");
    }
}

#[test]
fn select_kept_matches_brute_force() {
    let mut r = rng(8);
    for _ in 0..1000 {
        let (scores, p, drop) = common::random_scores(&mut r);
        assert_eq!(select_kept(&scores, p).unwrap(), brute_force_kept(&scores, drop), "{scores:?} p={p}");
    }
}

#[test]
fn grid_rates_drop_exact_counts() {
    for k in 1..=400 {
        for t in 0..=10 {
            let scores = vec![0.0; k];
            assert_eq!(select_kept(&scores, t as f64 / 10.0).unwrap().len(), k - k * t / 10, "k={k} p={t}/10");
        }
    }
}

#[test]
fn svd_rank_matches_integer_formula() {
    for c in [ModelConfig::default(), ModelConfig::tiny()] {
        let p = Parameters::init(c).unwrap();
        for (name, m) in prunable_matrices(&p) {
            let (d, k) = (m.len(), m[0].len());
            for t in 0..=10 {
                assert_eq!(svd_rank(d, k, t as f64 / 10.0), exact_svd_rank(d, k, t), "{name} p={t}/10");
            }
        }
    }
    // shapes beyond the configs
    for d in 1..40 {
        for k in 1..40 {
            for t in 0..=10 {
                assert_eq!(svd_rank(d, k, t as f64 / 10.0), exact_svd_rank(d, k, t), "{d}x{k} p={t}/10");
            }
        }
    }
}

#[test]
fn truncated_svd_beats_random_rank_r_factorizations() {
    let mut r = rng(9);
    let p = common::random_params(ModelConfig::tiny(), &mut r);
    for (name, m) in prunable_matrices(&p) {
        let (d, k) = (m.len(), m[0].len());
        let rank = svd_rank(d, k, 0.5).max(1);
        let (u, s, v) = truncate(&svd(&from_m(&m)).unwrap(), rank).unwrap();
        let mut us = to_m(&u);
        for row in &mut us {
            for (x, sv) in row.iter_mut().zip(s.data()) {
                *x *= sv;
            }
        }
        let best = frobenius(&m, &common::mm(&us, &to_m(&v)));
        for _ in 0..10 {
            let other = frobenius(&m, &random_rank_r(&m, rank, &mut r));
            assert!(best <= other + 1e-12, "{name}: {best} > {other}");
        }
    }
}

#[test]
fn every_rate_zero_path_is_the_identity() {
    let mut r = rng(10);
    let p = common::random_params(ModelConfig::tiny(), &mut r);
    let reg = registry_of(&p);
    assert_eq!(reg, prunable_registry(&p.config));
    let base = forward(&p, &[4, 5, 6], &[1, 7]).unwrap().log_probs;
    let full = surgery(&p, &PruneMask::full(&reg)).unwrap();
    let svd0 = svd_compress(&p, 0.0).unwrap();
    for q in [full, svd0] {
        assert_eq!(forward(&q, &[4, 5, 6], &[1, 7]).unwrap().log_probs, base);
    }
}
