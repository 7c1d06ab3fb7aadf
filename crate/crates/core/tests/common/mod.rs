//! Independent oracles shared by the integration tests and the acceptance
//! target. Nothing here calls the library code it checks.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use taskprune::data::{Example, Vocab};
use taskprune::model::{forward, registry_of, Attention, ModelConfig, Parameters, Weight};
use taskprune::pruner::PruneMask;
use taskprune::trainer::{encode_example, example_gradient, nll_loss};
use taskprune::Tensor;

pub type M = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A small random architecture.
pub fn random_config(rng: &mut impl Rng) -> ModelConfig {
    ModelConfig {
        d_model: [4, 6, 8][rng.random_range(0..3)],
        n_heads: rng.random_range(1..=3),
        d_head: rng.random_range(2..=4),
        d_ff: rng.random_range(3..=8),
        n_enc_layers: rng.random_range(1..=2),
        n_dec_layers: rng.random_range(1..=2),
        max_len: 32,
        seed: rng.random(),
        ..ModelConfig::default()
    }
}

/// Initialised parameters with every leaf jittered so that norm gains and
/// biases are not at their initial constants.
pub fn random_params(config: ModelConfig, rng: &mut impl Rng) -> Parameters {
    let mut p = Parameters::init(config).unwrap();
    p.visit_mut(|t| {
        for v in t.data_mut() {
            *v += 0.3 * (rng.random::<f64>() - 0.5);
        }
    });
    p
}

pub fn random_text(rng: &mut impl Rng, len: usize) -> String {
    (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect()
}

// ---------------------------------------------------------------------------
// gradients

pub struct Probe {
    pub leaf: String,
    pub analytic: f64,
    pub numeric: f64,
}

impl Probe {
    /// `|a − n| / max(|a|, |n|, 1e-6)`.
    pub fn rel_error(&self) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(1e-6)
    }
}

fn perturbed(p: &Parameters, leaf: usize, entry: usize, delta: f64) -> Parameters {
    let mut q = p.clone();
    let mut i = 0;
    q.visit_mut(|t| {
        if i == leaf {
            t.data_mut()[entry] += delta;
        }
        i += 1;
    });
    q
}

/// Reverse-mode gradients of the training loss against central differences
/// with step `h`, on `networks` random tiny models.
pub fn gradient_probes(networks: usize, per_network: usize, h: f64, seed: u64) -> Vec<Probe> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    for _ in 0..networks {
        let config = random_config(&mut r);
        let params = random_params(config, &mut r);
        let in_len = r.random_range(2..=6);
        let out_len = r.random_range(1..=3);
        let ex = Example::new(random_text(&mut r, in_len), random_text(&mut r, out_len));
        let (input, dec_in, targets) = encode_example(&ex);
        let loss = |p: &Parameters| nll_loss(&forward(p, &input, &dec_in).unwrap().log_probs, &targets).unwrap();
        let (_, grads) = example_gradient(&params, &ex).unwrap();

        let mut names = Vec::new();
        let mut sizes = Vec::new();
        params.visit(|n, t| {
            names.push(n);
            sizes.push(t.len());
        });
        let mut g = Vec::new();
        grads.visit(|_, t| g.push(t.clone()));
        let total: usize = sizes.iter().sum();
        for _ in 0..per_network {
            // size-weighted leaf choice
            let mut flat = r.random_range(0..total);
            let mut leaf = 0;
            while flat >= sizes[leaf] {
                flat -= sizes[leaf];
                leaf += 1;
            }
            let numeric = (loss(&perturbed(&params, leaf, flat, h)) - loss(&perturbed(&params, leaf, flat, -h))) / (2.0 * h);
            out.push(Probe {
                leaf: names[leaf].clone(),
                analytic: g[leaf].data()[flat],
                numeric,
            });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// forward pass written with plain loops

pub fn to_m(t: &Tensor) -> M {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

pub fn mm(a: &M, b: &M) -> M {
    mm_cols(a, b, b.first().map_or(0, Vec::len))
}

/// `a · b` where `b` has `m` columns (needed when `b` has no rows).
pub fn mm_cols(a: &M, b: &M, m: usize) -> M {
    let (n, k) = (a.len(), b.len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

fn dense(w: &Weight<Tensor>) -> M {
    match w {
        Weight::Dense(t) => to_m(t),
        Weight::Factored { u, s, v } => {
            let mut us = to_m(u);
            for row in &mut us {
                for (x, sv) in row.iter_mut().zip(s.data()) {
                    *x *= sv;
                }
            }
            mm_cols(&us, &to_m(v), v.cols())
        }
    }
}

fn out_cols(w: &Weight<Tensor>) -> usize {
    match w {
        Weight::Dense(t) => t.cols(),
        Weight::Factored { v, .. } => v.cols(),
    }
}

fn add(a: &M, b: &M) -> M {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

fn rms(x: &M, gain: &[f64]) -> M {
    x.iter()
        .map(|row| {
            let ms = row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64;
            let s = 1.0 / (ms + 1e-6).sqrt();
            row.iter().zip(gain).map(|(v, g)| v * s * g).collect()
        })
        .collect()
}

fn softmax_row(v: &[f64]) -> Vec<f64> {
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn attention(a: &Attention<Tensor>, xq: &M, xkv: &M, causal: bool) -> M {
    let q = mm_cols(xq, &dense(&a.wq), out_cols(&a.wq));
    let k = mm_cols(xkv, &dense(&a.wk), out_cols(&a.wk));
    let v = mm_cols(xkv, &dense(&a.wv), out_cols(&a.wv));
    let mut cat = vec![Vec::new(); xq.len()];
    let (mut qo, mut vo) = (0, 0);
    for (&dq, &dv) in a.qk_dims.iter().zip(&a.v_dims) {
        for i in 0..xq.len() {
            let visible = if causal { i + 1 } else { xkv.len() };
            let scores: Vec<f64> = (0..visible)
                .map(|j| (0..dq).map(|c| q[i][qo + c] * k[j][qo + c]).sum::<f64>() * a.scale)
                .collect();
            let p = softmax_row(&scores);
            for c in 0..dv {
                cat[i].push((0..visible).map(|j| p[j] * v[j][vo + c]).sum());
            }
        }
        qo += dq;
        vo += dv;
    }
    mm_cols(&cat, &dense(&a.wo), out_cols(&a.wo))
}

fn ffn(f: &taskprune::model::FeedForward<Tensor>, x: &M) -> M {
    let mut h = mm_cols(x, &dense(&f.w1), out_cols(&f.w1));
    for row in &mut h {
        for (v, b) in row.iter_mut().zip(f.b1.data()) {
            *v = (*v + b).max(0.0);
        }
    }
    let mut o = mm_cols(&h, &dense(&f.w2), out_cols(&f.w2));
    for row in &mut o {
        for (v, b) in row.iter_mut().zip(f.b2.data()) {
            *v += b;
        }
    }
    o
}

fn embed(p: &Parameters, ids: &[usize]) -> M {
    let d = p.config.d_model;
    ids.iter()
        .enumerate()
        .map(|(pos, &id)| {
            (0..d)
                .map(|i| {
                    let angle = pos as f64 / 10000f64.powf((i - i % 2) as f64 / d as f64);
                    let pe = if i % 2 == 0 { angle.sin() } else { angle.cos() };
                    p.embedding.get2(id, i) + pe
                })
                .collect()
        })
        .collect()
}

/// Teacher-forced next-token log-probabilities `[prefix len][vocab]`.
pub fn naive_log_probs(p: &Parameters, input: &[usize], prefix: &[usize]) -> M {
    let mut x = embed(p, input);
    for l in &p.encoder {
        let h = rms(&x, l.attn_norm.data());
        x = add(&x, &attention(&l.self_attn, &h, &h, false));
        let h = rms(&x, l.ffn_norm.data());
        x = add(&x, &ffn(&l.ffn, &h));
    }
    let enc = rms(&x, p.enc_norm.data());
    let mut y = embed(p, prefix);
    for l in &p.decoder {
        let h = rms(&y, l.self_norm.data());
        y = add(&y, &attention(&l.self_attn, &h, &h, true));
        let h = rms(&y, l.cross_norm.data());
        y = add(&y, &attention(&l.cross_attn, &h, &enc, false));
        let h = rms(&y, l.ffn_norm.data());
        y = add(&y, &ffn(&l.ffn, &h));
    }
    let logits = mm(&rms(&y, p.dec_norm.data()), &to_m(&p.output));
    logits
        .into_iter()
        .map(|row| {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            row.into_iter().map(|v| v - lse).collect()
        })
        .collect()
}

pub fn max_abs_diff(a: &Tensor, b: &M) -> f64 {
    let mut m: f64 = 0.0;
    for (i, row) in b.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m = m.max((a.get2(i, j) - v).abs());
        }
    }
    m
}

// ---------------------------------------------------------------------------
// masks and ranking

/// Random kept subsets; `keep` is the per-neuron keep probability. Some
/// targets lose every neuron.
pub fn random_subset_mask(params: &Parameters, keep: f64, rng: &mut impl Rng) -> PruneMask {
    let kept: BTreeMap<_, _> = registry_of(params)
        .into_iter()
        .map(|id| {
            let idx: Vec<usize> = (0..id.k).filter(|_| rng.random::<f64>() < keep).collect();
            (id, idx)
        })
        .collect();
    PruneMask {
        plan: None,
        source: "oracle".into(),
        seed: None,
        kept,
    }
}

/// Sort by (score desc, index asc) with a plain comparison sort, keep the
/// first `k − drop`, return them ascending.
pub fn brute_force_kept(scores: &[f64], drop: usize) -> Vec<usize> {
    let k = scores.len();
    let mut idx: Vec<usize> = (0..k).collect();
    // insertion sort keeps this independent of the library's ordering code
    for i in 1..k {
        let mut j = i;
        while j > 0 {
            let (a, b) = (idx[j - 1], idx[j]);
            let before = scores[b] > scores[a] || (scores[b] == scores[a] && b < a);
            if !before {
                break;
            }
            idx.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut kept = idx[..k - drop.min(k)].to_vec();
    kept.sort();
    kept
}

// ---------------------------------------------------------------------------
// low rank

pub fn frobenius(a: &M, b: &M) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)))
        .sum::<f64>()
        .sqrt()
}

pub fn transpose(a: &M) -> M {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

/// A random rank-`r` approximation: project `w` onto the span of `w·g` for a
/// Gaussian `g`. Its error can never beat the optimal rank-`r` error.
pub fn random_rank_r(w: &M, r: usize, rng: &mut impl Rng) -> M {
    let k = w[0].len();
    let g: M = (0..k)
        .map(|_| (0..r).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
        .collect();
    let y = mm(w, &g);
    // Gram-Schmidt on the columns of y
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for c in 0..r {
        let mut v: Vec<f64> = y.iter().map(|row| row[c]).collect();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    if basis.is_empty() {
        return vec![vec![0.0; k]; w.len()];
    }
    let q = transpose(&basis);
    mm(&q, &mm(&basis, w))
}

// ---------------------------------------------------------------------------
// criteria shared with the acceptance target

pub fn random_ids(rng: &mut impl Rng, len: usize) -> Vec<usize> {
    let vocab = Vocab::new();
    (0..len).map(|_| rng.random_range(0..vocab.len())).collect()
}

/// Surgery-pruned against zero-masked log-probabilities over random
/// (config, mask) pairs. Returns the worst difference and the target kinds
/// that lost at least one neuron somewhere.
pub fn zeroing_equivalence(cases: usize, seed: u64) -> (f64, std::collections::BTreeSet<taskprune::model::TargetKind>) {
    use taskprune::model::forward_with;
    use taskprune::pruner::{surgery, zeroing_interventions};
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let mut kinds = std::collections::BTreeSet::new();
    for case in 0..cases {
        let mut config = random_config(&mut r);
        config.n_dec_layers = config.n_dec_layers.max(1);
        let params = random_params(config, &mut r);
        let keep = [0.0, 0.25, 0.5, 0.75, 1.0, r.random()][case % 6];
        let mask = random_subset_mask(&params, keep, &mut r);
        for (id, kept) in &mask.kept {
            if kept.len() < id.k {
                kinds.insert(id.kind);
            }
        }
        let (n_in, n_pre) = (r.random_range(1..=7), r.random_range(1..=5));
        let input = random_ids(&mut r, n_in);
        let prefix = random_ids(&mut r, n_pre);
        let pruned = surgery(&params, &mask).unwrap();
        let a = forward(&pruned, &input, &prefix).unwrap().log_probs;
        let b = forward_with(&params, &input, &prefix, &zeroing_interventions(&params, &mask).unwrap())
            .unwrap()
            .log_probs;
        worst = worst.max(a.max_abs_diff(&b));
    }
    (worst, kinds)
}

/// `floor(d·k·(10 − tenths) / (10·(d + k + 1)))` in integers, capped at
/// `min(d, k)`.
pub fn exact_svd_rank(d: usize, k: usize, tenths: usize) -> usize {
    (d * k * (10 - tenths) / (10 * (d + k + 1))).min(d.min(k))
}

/// Prunable matrices of a parameter set as `(name, dense matrix)`.
pub fn prunable_matrices(p: &Parameters) -> Vec<(String, M)> {
    let mut out = Vec::new();
    let mut attn = |name: String, a: &Attention<Tensor>| {
        for (w, n) in [(&a.wq, "wq"), (&a.wk, "wk"), (&a.wv, "wv"), (&a.wo, "wo")] {
            out.push((format!("{name}.{n}"), dense(w)));
        }
    };
    for (l, layer) in p.encoder.iter().enumerate() {
        attn(format!("enc.{l}.self"), &layer.self_attn);
    }
    for (l, layer) in p.decoder.iter().enumerate() {
        attn(format!("dec.{l}.self"), &layer.self_attn);
        attn(format!("dec.{l}.cross"), &layer.cross_attn);
    }
    for (l, layer) in p.encoder.iter().enumerate() {
        out.push((format!("enc.{l}.ffn.w1"), dense(&layer.ffn.w1)));
        out.push((format!("enc.{l}.ffn.w2"), dense(&layer.ffn.w2)));
    }
    for (l, layer) in p.decoder.iter().enumerate() {
        out.push((format!("dec.{l}.ffn.w1"), dense(&layer.ffn.w1)));
        out.push((format!("dec.{l}.ffn.w2"), dense(&layer.ffn.w2)));
    }
    out
}

pub fn from_m(a: &M) -> Tensor {
    Tensor::from_rows(a).unwrap()
}

/// A score vector (often with ties), a rate, and the exact number of
/// neurons that rate drops. Grid rates use integer arithmetic.
pub fn random_scores(r: &mut impl Rng) -> (Vec<f64>, f64, usize) {
    let k = r.random_range(0..150);
    let tied = r.random_bool(0.5);
    let scores = (0..k)
        .map(|_| if tied { r.random_range(-3..=3) as f64 } else { r.random::<f64>() * 2.0 - 1.0 })
        .collect();
    let (p, drop) = match r.random_range(0..3) {
        0 => {
            let t = r.random_range(0..=10);
            (t as f64 / 10.0, k * t / 10)
        }
        1 => {
            let t = r.random_range(0..=20);
            (t as f64 / 20.0, k * t / 20)
        }
        _ => {
            let p: f64 = r.random();
            (p, (k as f64 * p).floor() as usize)
        }
    };
    (scores, p, drop)
}
