//! Neuron importance scores per prunable target.
//!
//! The supervised score of neuron `i` for an example `(x, y)` is
//! `h_i · Σ_j ∂P(y_j | x, y_<j) / ∂h_i`, where `P` is a probability (not a
//! log-probability), the decoder is teacher-forced on `y`, and `h_i` and its
//! gradient are multiplied position-wise and summed over token positions.
//! The end-of-sequence token is not a target.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Example, TokenId, Vocab, BOS, UNK};
use crate::error::{Error, Result};
use crate::model::{forward, registry_of, target_columns, Parameters, PrunableLayerId, Session};
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Supervised,
    Unsupervised,
    Fpp,
    Rap,
}

impl Method {
    pub fn non_negative(self) -> bool {
        matches!(self, Method::Unsupervised | Method::Fpp)
    }
}

pub type Scores = BTreeMap<PrunableLayerId, Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    pub method: Method,
    /// Hash of the examples the scores were accumulated over.
    pub fingerprint: String,
    pub samples: usize,
    pub seed: Option<u64>,
    pub scores: Scores,
}

impl AttributionMap {
    pub fn get(&self, id: &PrunableLayerId) -> Option<&[f64]> {
        self.scores.get(id).map(Vec::as_slice)
    }

    /// Check the map against a parameter set's registry.
    pub fn validate(&self, params: &Parameters) -> Result<()> {
        let registry = registry_of(params);
        if registry.len() != self.scores.len() {
            return Err(Error::contract(format!(
                "attribution map has {} entries, registry has {}",
                self.scores.len(),
                registry.len()
            )));
        }
        for id in &registry {
            let s = self
                .scores
                .get(id)
                .ok_or_else(|| Error::contract(format!("no scores for {id} (k = {})", id.k)))?;
            if s.len() != id.k {
                return Err(Error::contract(format!("{id}: {} scores for k = {}", s.len(), id.k)));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::contract(format!("{id}: non-finite score")));
            }
            if self.method.non_negative() && s.iter().any(|&v| v < 0.0) {
                return Err(Error::contract(format!("{id}: negative {:?} score", self.method)));
            }
        }
        Ok(())
    }
}

fn add_into(acc: &mut Scores, other: &Scores) {
    for (id, s) in other {
        let a = acc.entry(*id).or_insert_with(|| vec![0.0; s.len()]);
        for (x, y) in a.iter_mut().zip(s) {
            *x += y;
        }
    }
}

/// 64-bit FNV-1a over the examples, as hex.
pub fn fingerprint(dataset: &[Example]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for ex in dataset {
        for b in ex.input.bytes().chain([0]).chain(ex.label.bytes()).chain([0xff]) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

fn tokenize_label(label: &str) -> Result<Vec<TokenId>> {
    let ids = Vocab::new().tokenize(label);
    if ids.is_empty() {
        return Err(Error::input("label must contain at least one token"));
    }
    if ids.contains(&UNK) {
        return Err(Error::input(format!("label `{label}` contains an unknown token")));
    }
    Ok(ids)
}

/// Supervised scores for token ids; `label` is the target sequence without
/// `BOS`/`EOS`.
pub fn example_scores(params: &Parameters, input: &[TokenId], label: &[TokenId]) -> Result<Scores> {
    if label.is_empty() {
        return Err(Error::input("label must contain at least one token"));
    }
    let mut dec_in = vec![BOS];
    dec_in.extend_from_slice(&label[..label.len() - 1]);
    let mut s = Session::new(params)?;
    let enc = s.encode(input)?;
    let lp = s.decode(enc, &dec_in)?;
    let at: Vec<_> = label.iter().copied().enumerate().collect();
    let picked = s.tape.pick(lp, &at)?;
    let probs = s.tape.exp(picked)?;
    let objective = s.tape.sum(probs)?;
    let grads = s.tape.backward(objective)?;

    let mut out = BTreeMap::new();
    let mut layer_cache: BTreeMap<String, (Tensor, Tensor)> = BTreeMap::new();
    for id in registry_of(params) {
        let name = id.probe_name();
        if !layer_cache.contains_key(&name) {
            let h = s
                .tape
                .probe_value(&name)
                .ok_or_else(|| Error::contract(format!("probe {name} missing from forward pass")))?
                .clone();
            let g = grads.probe(&s.tape, &name).expect("probe exists");
            layer_cache.insert(name.clone(), (h, g));
        }
        let (h, g) = &layer_cache[&name];
        let cols = target_columns(params, &id)?;
        let mut scores = vec![0.0; cols.len()];
        for r in 0..h.rows() {
            let (hr, gr) = (h.row(r), g.row(r));
            for (sc, &c) in scores.iter_mut().zip(&cols) {
                *sc += hr[c] * gr[c];
            }
        }
        out.insert(id, scores);
    }
    Ok(out)
}

/// Supervised attribution for one example.
pub fn attribute_example(params: &Parameters, input: &str, label: &str) -> Result<AttributionMap> {
    let ids = tokenize_label(label)?;
    let scores = example_scores(params, &Vocab::new().tokenize(input), &ids)?;
    Ok(AttributionMap {
        method: Method::Supervised,
        fingerprint: fingerprint(&[Example::new(input, label)]),
        samples: 1,
        seed: None,
        scores,
    })
}

/// Per-example score maps of one mini-batch, computed concurrently and
/// folded into `acc` in order.
fn accumulate<T: Sync>(
    acc: &mut Scores,
    items: &[T],
    batch: usize,
    f: impl Fn(&T) -> Result<Scores> + Sync,
) -> Result<()> {
    for chunk in items.chunks(batch) {
        let maps = chunk.par_iter().map(&f).collect::<Result<Vec<_>>>()?;
        for m in &maps {
            add_into(acc, m);
        }
    }
    Ok(())
}

fn zero_scores(params: &Parameters) -> Scores {
    registry_of(params).into_iter().map(|id| (id, vec![0.0; id.k])).collect()
}

/// Supervised scores summed over a dataset in mini-batches of `batch`.
pub fn attribute_dataset(params: &Parameters, dataset: &[Example], batch: usize) -> Result<AttributionMap> {
    if dataset.is_empty() {
        return Err(Error::input("cannot attribute over an empty dataset"));
    }
    if batch == 0 {
        return Err(Error::input("mini-batch size must be >= 1"));
    }
    let vocab = Vocab::new();
    let encoded = dataset
        .iter()
        .map(|ex| Ok((vocab.tokenize(&ex.input), tokenize_label(&ex.label)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut scores = zero_scores(params);
    accumulate(&mut scores, &encoded, batch, |(x, y)| example_scores(params, x, y))?;
    Ok(AttributionMap {
        method: Method::Supervised,
        fingerprint: fingerprint(dataset),
        samples: dataset.len(),
        seed: None,
        scores,
    })
}

/// Label-free scores: for each input, the sum over candidate labels of the
/// absolute supervised score.
pub fn attribute_unsupervised(
    params: &Parameters,
    inputs: &[String],
    candidates: &[String],
    batch: usize,
) -> Result<AttributionMap> {
    if candidates.is_empty() {
        return Err(Error::input("candidate label set is empty"));
    }
    if inputs.is_empty() {
        return Err(Error::input("cannot attribute over an empty dataset"));
    }
    if batch == 0 {
        return Err(Error::input("mini-batch size must be >= 1"));
    }
    let vocab = Vocab::new();
    let labels = candidates.iter().map(|c| tokenize_label(c)).collect::<Result<Vec<_>>>()?;
    let encoded: Vec<_> = inputs.iter().map(|x| vocab.tokenize(x)).collect();
    let mut scores = zero_scores(params);
    accumulate(&mut scores, &encoded, batch, |x| {
        let mut total = BTreeMap::new();
        for y in &labels {
            let mut s = example_scores(params, x, y)?;
            for v in s.values_mut().flatten() {
                *v = v.abs();
            }
            add_into(&mut total, &s);
        }
        Ok(total)
    })?;
    let as_examples: Vec<_> = inputs.iter().map(|x| Example::new(x.clone(), "")).collect();
    Ok(AttributionMap {
        method: Method::Unsupervised,
        fingerprint: fingerprint(&as_examples),
        samples: inputs.len(),
        seed: None,
        scores,
    })
}

/// Activation magnitudes: per neuron, `Σ |h_i|` over examples and positions,
/// with the decoder teacher-forced on the gold label.
pub fn fpp_scores(params: &Parameters, dataset: &[Example]) -> Result<AttributionMap> {
    if dataset.is_empty() {
        return Err(Error::input("cannot score an empty dataset"));
    }
    let vocab = Vocab::new();
    let mut scores = zero_scores(params);
    let items = dataset
        .iter()
        .map(|ex| Ok((vocab.tokenize(&ex.input), tokenize_label(&ex.label)?)))
        .collect::<Result<Vec<_>>>()?;
    accumulate(&mut scores, &items, 64, |(x, y)| {
        let mut dec_in = vec![BOS];
        dec_in.extend_from_slice(&y[..y.len() - 1]);
        let out = forward(params, x, &dec_in)?;
        Ok(out
            .trace
            .into_iter()
            .map(|(id, h)| {
                let mut s = vec![0.0; h.cols()];
                for r in 0..h.rows() {
                    for (a, v) in s.iter_mut().zip(h.row(r)) {
                        *a += v.abs();
                    }
                }
                (id, s)
            })
            .collect())
    })?;
    Ok(AttributionMap {
        method: Method::Fpp,
        fingerprint: fingerprint(dataset),
        samples: dataset.len(),
        seed: None,
        scores,
    })
}

/// Non-special tokens that occur in none of the dataset's labels.
pub fn non_label_tokens(dataset: &[Example]) -> Vec<TokenId> {
    let vocab = Vocab::new();
    let used: BTreeSet<TokenId> = dataset.iter().flat_map(|ex| vocab.tokenize(&ex.label)).collect();
    vocab.symbol_ids().filter(|t| !used.contains(t)).collect()
}

/// Seeded random pseudo-targets: one per example, as long as its label,
/// drawn uniformly from [`non_label_tokens`].
pub fn rap_targets(dataset: &[Example], seed: u64) -> Result<Vec<Vec<TokenId>>> {
    let pool = non_label_tokens(dataset);
    if pool.is_empty() {
        return Err(Error::input("every non-special token occurs in some label"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dataset
        .iter()
        .map(|ex| {
            let n = tokenize_label(&ex.label)?.len();
            Ok((0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect())
        })
        .collect()
}

/// Supervised scores against random non-label pseudo-targets.
pub fn rap_scores(params: &Parameters, dataset: &[Example], seed: u64, batch: usize) -> Result<AttributionMap> {
    if dataset.is_empty() {
        return Err(Error::input("cannot attribute over an empty dataset"));
    }
    if batch == 0 {
        return Err(Error::input("mini-batch size must be >= 1"));
    }
    let vocab = Vocab::new();
    let targets = rap_targets(dataset, seed)?;
    let items: Vec<_> = dataset.iter().map(|ex| vocab.tokenize(&ex.input)).zip(targets).collect();
    let mut scores = zero_scores(params);
    accumulate(&mut scores, &items, batch, |(x, y)| example_scores(params, x, y))?;
    Ok(AttributionMap {
        method: Method::Rap,
        fingerprint: fingerprint(dataset),
        samples: dataset.len(),
        seed: Some(seed),
        scores,
    })
}

#[derive(Serialize, Deserialize)]
struct MapFile {
    version: u32,
    method: Method,
    fingerprint: String,
    samples: usize,
    seed: Option<u64>,
    scores: BTreeMap<String, Vec<f64>>,
}

pub fn save_attribution(path: impl AsRef<Path>, map: &AttributionMap) -> Result<()> {
    let path = path.as_ref();
    let file = MapFile {
        version: FORMAT_VERSION,
        method: map.method,
        fingerprint: map.fingerprint.clone(),
        samples: map.samples,
        seed: map.seed,
        scores: map.scores.iter().map(|(id, s)| (id.key(), s.clone())).collect(),
    };
    fs::write(path, serde_json::to_vec_pretty(&file)?).map_err(|e| Error::io(path, e))
}

pub fn load_attribution(path: impl AsRef<Path>) -> Result<AttributionMap> {
    let path = path.as_ref();
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let file: MapFile = serde_json::from_slice(&text)?;
    if file.version != FORMAT_VERSION {
        return Err(Error::Format(format!("attribution map version {}", file.version)));
    }
    let scores = file
        .scores
        .into_iter()
        .map(|(key, s)| Ok((PrunableLayerId::from_key(&key, s.len())?, s)))
        .collect::<Result<Scores>>()?;
    Ok(AttributionMap {
        method: file.method,
        fingerprint: file.fingerprint,
        samples: file.samples,
        seed: file.seed,
        scores,
    })
}
