mod common;

use proptest::prelude::*;
use taskprune::data::{sample_balanced, Example, Vocab};
use taskprune::harness::{read_results, summarize, write_csv, ResultRow};
use taskprune::model::{from_bytes, registry_of, to_bytes, ModelConfig};
use taskprune::pruner::{
    argsort_ranks, kept_count, kept_fraction, mask_from_json, mask_jaccard, mask_to_json, random_mask, select_kept,
    surgery, svd, truncate, PrunePlan,
};
use taskprune::Tensor;

fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![(-3i32..=3).prop_map(f64::from), -1e3f64..1e3], 0..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kept_sets_dominate_dropped_sets(s in scores(), p in 0.0f64..=1.0) {
        let kept = select_kept(&s, p).unwrap();
        prop_assert_eq!(kept.len(), kept_count(s.len(), p));
        prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
        for i in 0..s.len() {
            if kept.contains(&i) {
                continue;
            }
            for &j in &kept {
                prop_assert!(s[j] > s[i] || (s[j] == s[i] && j < i));
            }
        }
    }

    #[test]
    fn ranks_are_a_permutation_consistent_with_selection(s in scores(), p in 0.0f64..=1.0) {
        let ranks = argsort_ranks(&s).unwrap();
        let mut sorted = ranks.clone();
        sorted.sort();
        prop_assert_eq!(sorted, (0..s.len()).collect::<Vec<_>>());
        let n = kept_count(s.len(), p);
        let by_rank: Vec<usize> = (0..s.len()).filter(|&i| ranks[i] < n).collect();
        prop_assert_eq!(by_rank, select_kept(&s, p).unwrap());
    }

    #[test]
    fn kept_count_is_monotone(k in 0usize..300, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(kept_count(k, lo) >= kept_count(k, hi));
        prop_assert_eq!(kept_count(k, 0.0), k);
        prop_assert_eq!(kept_count(k, 1.0), 0);
    }

    #[test]
    fn tokenizer_round_trips_printable_ascii(s in "[ -~]{0,40}") {
        let v = Vocab::new();
        prop_assert_eq!(v.detokenize(&v.tokenize(&s)), s);
    }

    #[test]
    fn balanced_samples_are_balanced_ordered_subsets(n_per in 1usize..6, seed in any::<u64>()) {
        let data: Vec<Example> = (0..40)
            .map(|i| Example::new(format!("x{i}"), ["a", "b"][i % 3 % 2]))
            .collect();
        let s = sample_balanced(&data, 2 * n_per, seed).unwrap();
        let a = s.iter().filter(|e| e.label == "a").count();
        prop_assert_eq!(a, n_per);
        prop_assert_eq!(s.len() - a, n_per);
        let pos: Vec<usize> = s.iter().map(|e| data.iter().position(|d| d == e).unwrap()).collect();
        prop_assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn svd_reconstructs(rows in 1usize..7, cols in 1usize..7, seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let a = Tensor::randn(&[rows, cols], 1.0, &mut r);
        let d = svd(&a).unwrap();
        prop_assert!(d.s.windows(2).all(|w| w[0] >= w[1]) && d.s.iter().all(|&x| x >= 0.0));
        let (u, s, v) = truncate(&d, d.s.len()).unwrap();
        let m = common::mm(&common::to_m(&u), &common::to_m(&Tensor::from_rows(
            &(0..s.len()).map(|i| v.row(i).iter().map(|x| x * s.data()[i]).collect()).collect::<Vec<_>>(),
        ).unwrap()));
        prop_assert!(a.max_abs_diff(&common::from_m(&m)) < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn checkpoints_round_trip_bitwise(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let p = common::random_params(common::random_config(&mut r), &mut r);
        let q = from_bytes(&to_bytes(&p).unwrap()).unwrap();
        prop_assert_eq!(&q, &p);
        // pruned (ragged head widths) checkpoints as well
        let mask = common::random_subset_mask(&p, 0.5, &mut r);
        let pruned = surgery(&p, &mask).unwrap();
        prop_assert_eq!(from_bytes(&to_bytes(&pruned).unwrap()).unwrap(), pruned);
    }

    #[test]
    fn masks_round_trip_and_jaccard_is_a_similarity(seed in any::<u64>(), p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0) {
        let params = taskprune::model::Parameters::init(ModelConfig::tiny()).unwrap();
        let reg = registry_of(&params);
        let a = random_mask(&reg, &params.config, &PrunePlan::Uniform { p: p1 }, seed).unwrap();
        let b = random_mask(&reg, &params.config, &PrunePlan::Uniform { p: p2 }, seed ^ 1).unwrap();
        prop_assert_eq!(&mask_from_json(&mask_to_json(&a).unwrap()).unwrap(), &a);
        let (_, ab) = mask_jaccard(&a, &b).unwrap();
        let (_, ba) = mask_jaccard(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(mask_jaccard(&a, &a).unwrap().1, 1.0);
    }

    #[test]
    fn surgery_never_mutates_and_shrinks(seed in any::<u64>(), keep in 0.0f64..=1.0) {
        let mut r = common::rng(seed);
        let p = common::random_params(ModelConfig::tiny(), &mut r);
        let before = p.clone();
        let mask = common::random_subset_mask(&p, keep, &mut r);
        let q = surgery(&p, &mask).unwrap();
        prop_assert_eq!(&p, &before);
        let f = kept_fraction(&p, &q);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!(q.num_values() <= p.num_values());
    }

    #[test]
    fn result_csv_round_trips(accs in prop::collection::vec(0.0f64..=1.0, 1..20), seed in prop::option::of(0u64..5)) {
        let rows: Vec<ResultRow> = accs
            .iter()
            .enumerate()
            .map(|(i, &a)| ResultRow {
                kind: "module-specific".into(),
                method: if i % 2 == 0 { "RP".into() } else { "AP".into() },
                task: "polarity".into(),
                enc_rate: 0.0,
                dec_rate: (i % 3) as f64 / 10.0,
                group: "decoder".into(),
                seed,
                accuracy: a,
                kept_fraction: 1.0 - a / 2.0,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_csv(&path, &rows).unwrap();
        prop_assert_eq!(read_results(&path).unwrap(), rows.clone());
        let summary = summarize(&rows);
        prop_assert_eq!(summary.iter().map(|s| s.n).sum::<usize>(), rows.len());
        for s in &summary {
            prop_assert!((0.0..=1.0).contains(&s.mean_accuracy));
            prop_assert_eq!(s.std_accuracy.is_some(), s.n >= 2);
        }
    }
}
