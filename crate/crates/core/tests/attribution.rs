mod common;

use common::{random_config, random_params, random_text, rng};
use rand::Rng;
use taskprune::attribution::{attribute_dataset, attribute_example, attribute_unsupervised, example_scores};
use taskprune::autodiff::Intervention;
use taskprune::data::{Example, Vocab, BOS};
use taskprune::model::{forward_with, registry_of, target_columns, ModelConfig, Parameters};

/// `Σ_j p(y_j | prefix)` with the probe of `probe` scaled column-wise.
fn objective(p: &Parameters, input: &[usize], label: &[usize], probe: &str, scale: Vec<f64>) -> f64 {
    let mut dec_in = vec![BOS];
    dec_in.extend_from_slice(&label[..label.len() - 1]);
    let iv = vec![(probe.to_string(), Intervention::ScaleColumns(scale))];
    let lp = forward_with(p, input, &dec_in, &iv).unwrap().log_probs;
    label.iter().enumerate().map(|(j, &y)| lp.get2(j, y).exp()).sum()
}

#[test]
fn scores_match_directional_finite_differences() {
    // d/dε F(h ⊙ (1 + ε e_c)) at 0 is Σ_t h_tc ∂F/∂h_tc, the neuron's score.
    let mut r = rng(21);
    let vocab = Vocab::new();
    let mut checked = 0;
    for _ in 0..4 {
        let p = random_params(random_config(&mut r), &mut r);
        let n_in = r.random_range(2..6);
        let n_out = r.random_range(1..4);
        let input = vocab.tokenize(&random_text(&mut r, n_in));
        let label = vocab.tokenize(&random_text(&mut r, n_out));
        let scores = example_scores(&p, &input, &label).unwrap();
        for id in registry_of(&p) {
            let probe = id.probe_name();
            let cols = target_columns(&p, &id).unwrap();
            let width = match id.kind {
                taskprune::model::TargetKind::Ffn => p.config.d_ff,
                _ => p.config.attn_width(),
            };
            for (i, &c) in cols.iter().enumerate() {
                let h = 1e-5;
                let mut up = vec![1.0; width];
                let mut down = vec![1.0; width];
                up[c] += h;
                down[c] -= h;
                let fd = (objective(&p, &input, &label, &probe, up) - objective(&p, &input, &label, &probe, down)) / (2.0 * h);
                let a = scores[&id][i];
                let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                assert!(err < 1e-3, "{id} col {c}: {a:e} vs {fd:e}");
                checked += 1;
            }
        }
    }
    assert!(checked > 50);
}

fn examples(n: usize, seed: u64) -> Vec<Example> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let (a, b) = (r.random_range(2..8), r.random_range(1..3));
            Example::new(random_text(&mut r, a), random_text(&mut r, b))
        })
        .collect()
}

#[test]
fn dataset_scores_are_sums_of_example_scores() {
    let mut r = rng(22);
    let p = random_params(ModelConfig::tiny(), &mut r);
    let data = examples(12, 1);
    let total = attribute_dataset(&p, &data, 5).unwrap();
    let (a, b) = data.split_at(7);
    let sa = attribute_dataset(&p, a, 3).unwrap();
    let sb = attribute_dataset(&p, b, 3).unwrap();
    for (id, v) in &total.scores {
        let mut manual = vec![0.0; id.k];
        for ex in &data {
            let s = attribute_example(&p, &ex.input, &ex.label).unwrap();
            manual.iter_mut().zip(&s.scores[id]).for_each(|(m, x)| *m += x);
        }
        for i in 0..id.k {
            let split = sa.scores[id][i] + sb.scores[id][i];
            let scale = v[i].abs().max(1e-12);
            assert!((v[i] - manual[i]).abs() / scale < 1e-9);
            assert!((v[i] - split).abs() / scale < 1e-9);
        }
    }
}

#[test]
fn batch_size_does_not_change_scores() {
    let mut r = rng(23);
    let p = random_params(ModelConfig::default(), &mut r);
    let data = examples(16, 2);
    let one = attribute_dataset(&p, &data, 1).unwrap();
    let four = attribute_dataset(&p, &data, 4).unwrap();
    for (id, v) in &one.scores {
        for (x, y) in v.iter().zip(&four.scores[id]) {
            assert!((x - y).abs() < 1e-8);
        }
    }
}

#[test]
fn singleton_candidate_set_gives_absolute_supervised_scores() {
    let mut r = rng(24);
    let p = random_params(ModelConfig::tiny(), &mut r);
    let inputs: Vec<String> = (0..6).map(|i| random_text(&mut r, 3 + i % 3)).collect();
    let label = "yes".to_string();
    let unsup = attribute_unsupervised(&p, &inputs, std::slice::from_ref(&label), 4).unwrap();
    let mut manual: std::collections::BTreeMap<_, Vec<f64>> =
        registry_of(&p).into_iter().map(|id| (id, vec![0.0; id.k])).collect();
    for x in &inputs {
        let s = attribute_example(&p, x, &label).unwrap();
        for (id, v) in &s.scores {
            manual.get_mut(id).unwrap().iter_mut().zip(v).for_each(|(m, s)| *m += s.abs());
        }
    }
    assert_eq!(unsup.scores, manual);
    // one input: exactly |supervised|
    let one = attribute_unsupervised(&p, &inputs[..1], std::slice::from_ref(&label), 1).unwrap();
    let sup = attribute_example(&p, &inputs[0], &label).unwrap();
    for (id, v) in &sup.scores {
        let abs: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        assert_eq!(one.scores[id], abs);
    }
}
