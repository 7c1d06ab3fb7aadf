//! Score ranking, kept-index masks, structural surgery and baselines.
//!
//! A prune rate `p` is the fraction of a target's `k` neurons removed: the
//! `k - floor(k·p)` best-ranked neurons are kept.

mod surgery;
mod svd;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attribution::AttributionMap;
use crate::error::{Error, Result};
use crate::model::{LayerGroup, ModelConfig, PrunableLayerId, Stack, TargetKind};

pub use surgery::{kept_fraction, surgery, zeroing_interventions};
pub use svd::{svd, svd_compress, svd_compress_plan, svd_rank, truncate, Svd};

pub const MASK_FORMAT_VERSION: u32 = 1;

/// `rank_i = |{j : s_i < s_j or (s_i = s_j and j < i)}|`; rank 0 is the most
/// important neuron.
pub fn argsort_ranks(scores: &[f64]) -> Result<Vec<usize>> {
    let order = descending_order(scores)?;
    let mut ranks = vec![0; scores.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r;
    }
    Ok(ranks)
}

fn descending_order(scores: &[f64]) -> Result<Vec<usize>> {
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::input("NaN attribution score"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(order)
}

fn check_rate(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::input(format!("prune rate {p} outside [0, 1]")));
    }
    Ok(())
}

/// `floor(x)` that absorbs rounding error just below an integer, so that
/// e.g. `90 · 0.7` floors to 63.
pub(crate) fn floor_exact(x: f64) -> usize {
    (x + 1e-9 * x.abs().max(1.0)).floor().max(0.0) as usize
}

/// Number of neurons kept out of `k` at rate `p`.
pub fn kept_count(k: usize, p: f64) -> usize {
    k - floor_exact(k as f64 * p).min(k)
}

/// Indices of the `k - floor(k·p)` best-ranked neurons, ascending.
pub fn select_kept(scores: &[f64], p: f64) -> Result<Vec<usize>> {
    check_rate(p)?;
    let order = descending_order(scores)?;
    let mut kept = order[..kept_count(scores.len(), p)].to_vec();
    kept.sort_unstable();
    Ok(kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepthBand {
    Low,
    Middle,
    High,
}

impl DepthBand {
    pub const ALL: [DepthBand; 3] = [DepthBand::Low, DepthBand::Middle, DepthBand::High];

    /// Band of layer `l` in a stack of `n`: thirds, rounded so that two
    /// layers split into low and high.
    pub fn of(layer: usize, n: usize) -> DepthBand {
        match ((3 * layer + 1) / n.max(1)).min(2) {
            0 => DepthBand::Low,
            1 => DepthBand::Middle,
            _ => DepthBand::High,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            DepthBand::Low => "low",
            DepthBand::Middle => "middle",
            DepthBand::High => "high",
        }
    }
}

/// Assignment of prune rates to registry entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "plan", rename_all = "kebab-case")]
pub enum PrunePlan {
    Uniform { p: f64 },
    EncoderOnly { p: f64 },
    DecoderOnly { p: f64 },
    Integrated { enc: f64, dec: f64 },
    /// Only targets of one layer type in one stack are pruned.
    LayerType { stack: Stack, group: LayerGroup, p: f64 },
    /// Only targets in one depth band of one stack are pruned.
    LayerDepth { stack: Stack, band: DepthBand, p: f64 },
}

impl PrunePlan {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PrunePlan::Uniform { p }
            | PrunePlan::EncoderOnly { p }
            | PrunePlan::DecoderOnly { p }
            | PrunePlan::LayerType { p, .. }
            | PrunePlan::LayerDepth { p, .. } => check_rate(p),
            PrunePlan::Integrated { enc, dec } => check_rate(enc).and(check_rate(dec)),
        }
    }

    /// Rates applied to the encoder and the decoder at their most pruned.
    pub fn stack_rates(&self) -> (f64, f64) {
        match *self {
            PrunePlan::Uniform { p } => (p, p),
            PrunePlan::EncoderOnly { p } => (p, 0.0),
            PrunePlan::DecoderOnly { p } => (0.0, p),
            PrunePlan::Integrated { enc, dec } => (enc, dec),
            PrunePlan::LayerType { stack, p, .. } | PrunePlan::LayerDepth { stack, p, .. } => match stack {
                Stack::Encoder => (p, 0.0),
                Stack::Decoder => (0.0, p),
            },
        }
    }

    /// Rate of one weight matrix group; `layers` is the size of its stack.
    pub fn rate_for(&self, stack: Stack, layer: usize, kind: TargetKind, layers: usize) -> f64 {
        match *self {
            PrunePlan::Uniform { p } => p,
            PrunePlan::EncoderOnly { p } => if stack == Stack::Encoder { p } else { 0.0 },
            PrunePlan::DecoderOnly { p } => if stack == Stack::Decoder { p } else { 0.0 },
            PrunePlan::Integrated { enc, dec } => match stack {
                Stack::Encoder => enc,
                Stack::Decoder => dec,
            },
            PrunePlan::LayerType { stack: s, group, p } => {
                if s == stack && kind.group() == group { p } else { 0.0 }
            }
            PrunePlan::LayerDepth { stack: s, band, p } => {
                if s == stack && DepthBand::of(layer, layers) == band { p } else { 0.0 }
            }
        }
    }

    pub fn rate(&self, id: &PrunableLayerId, config: &ModelConfig) -> f64 {
        let layers = match id.stack {
            Stack::Encoder => config.n_enc_layers,
            Stack::Decoder => config.n_dec_layers,
        };
        self.rate_for(id.stack, id.layer, id.kind, layers)
    }
}

/// Kept neuron indices per target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneMask {
    pub plan: Option<PrunePlan>,
    /// Scoring method or baseline that produced the mask.
    pub source: String,
    pub seed: Option<u64>,
    pub kept: BTreeMap<PrunableLayerId, Vec<usize>>,
}

impl PruneMask {
    /// A mask that keeps every neuron.
    pub fn full(registry: &[PrunableLayerId]) -> Self {
        PruneMask {
            plan: None,
            source: "full".into(),
            seed: None,
            kept: registry.iter().map(|id| (*id, (0..id.k).collect())).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (id, kept) in &self.kept {
            if kept.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::contract(format!("{id}: kept indices not strictly increasing")));
            }
            if kept.last().is_some_and(|&i| i >= id.k) {
                return Err(Error::contract(format!("{id}: kept index out of range 0..{}", id.k)));
            }
        }
        Ok(())
    }

    /// Fraction of registry neurons kept (unweighted by matrix size).
    pub fn kept_neuron_fraction(&self) -> f64 {
        let total: usize = self.kept.keys().map(|id| id.k).sum();
        let kept: usize = self.kept.values().map(Vec::len).sum();
        if total == 0 {
            1.0
        } else {
            kept as f64 / total as f64
        }
    }
}

/// Apply [`select_kept`] to every registry target at its planned rate.
pub fn build_mask(
    registry: &[PrunableLayerId],
    config: &ModelConfig,
    attr: &AttributionMap,
    plan: &PrunePlan,
) -> Result<PruneMask> {
    plan.validate()?;
    let mut kept = BTreeMap::new();
    for id in registry {
        let scores = attr
            .get(id)
            .ok_or_else(|| Error::contract(format!("attribution map has no scores for {id}")))?;
        if scores.len() != id.k {
            return Err(Error::contract(format!("{id}: {} scores for k = {}", scores.len(), id.k)));
        }
        kept.insert(*id, select_kept(scores, plan.rate(id, config))?);
    }
    Ok(PruneMask {
        plan: Some(*plan),
        source: format!("{:?}", attr.method).to_lowercase(),
        seed: attr.seed,
        kept,
    })
}

/// Uniformly random kept sets of the planned sizes.
pub fn random_mask(
    registry: &[PrunableLayerId],
    config: &ModelConfig,
    plan: &PrunePlan,
    seed: u64,
) -> Result<PruneMask> {
    plan.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kept = registry
        .iter()
        .map(|id| {
            let n = kept_count(id.k, plan.rate(id, config));
            let mut idx = rand::seq::index::sample(&mut rng, id.k, n).into_vec();
            idx.sort_unstable();
            (*id, idx)
        })
        .collect();
    Ok(PruneMask {
        plan: Some(*plan),
        source: "random".into(),
        seed: Some(seed),
        kept,
    })
}

/// Per-target Jaccard similarity of kept sets (both empty counts as 1) and
/// its mean over targets.
pub fn mask_jaccard(a: &PruneMask, b: &PruneMask) -> Result<(BTreeMap<PrunableLayerId, f64>, f64)> {
    if a.kept.len() != b.kept.len() || a.kept.keys().zip(b.kept.keys()).any(|(x, y)| x != y) {
        return Err(Error::contract("masks cover different registries"));
    }
    let mut per = BTreeMap::new();
    for (id, ka) in &a.kept {
        let kb = &b.kept[id];
        let (mut i, mut j, mut inter) = (0, 0, 0);
        while i < ka.len() && j < kb.len() {
            match ka[i].cmp(&kb[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    inter += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        let union = ka.len() + kb.len() - inter;
        per.insert(*id, if union == 0 { 1.0 } else { inter as f64 / union as f64 });
    }
    let mean = if per.is_empty() {
        1.0
    } else {
        per.values().sum::<f64>() / per.len() as f64
    };
    Ok((per, mean))
}

#[derive(Serialize, Deserialize)]
struct MaskEntry {
    k: usize,
    kept: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct MaskFile {
    version: u32,
    plan: Option<PrunePlan>,
    source: String,
    seed: Option<u64>,
    targets: BTreeMap<String, MaskEntry>,
}

pub fn mask_to_json(mask: &PruneMask) -> Result<String> {
    let file = MaskFile {
        version: MASK_FORMAT_VERSION,
        plan: mask.plan,
        source: mask.source.clone(),
        seed: mask.seed,
        targets: mask
            .kept
            .iter()
            .map(|(id, kept)| (id.key(), MaskEntry { k: id.k, kept: kept.clone() }))
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn mask_from_json(text: &str) -> Result<PruneMask> {
    let file: MaskFile = serde_json::from_str(text)?;
    if file.version != MASK_FORMAT_VERSION {
        return Err(Error::Format(format!("prune mask version {}", file.version)));
    }
    let kept = file
        .targets
        .into_iter()
        .map(|(key, e)| Ok((PrunableLayerId::from_key(&key, e.k)?, e.kept)))
        .collect::<Result<_>>()?;
    let mask = PruneMask {
        plan: file.plan,
        source: file.source,
        seed: file.seed,
        kept,
    };
    mask.validate()?;
    Ok(mask)
}

pub fn save_mask(path: impl AsRef<Path>, mask: &PruneMask) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, mask_to_json(mask)?).map_err(|e| Error::io(path, e))
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<PruneMask> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    mask_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::Method;
    use crate::model::{prunable_registry, ModelConfig};

    #[test]
    fn rank_examples() {
        assert_eq!(argsort_ranks(&[4.0, 3.0, 1.0]).unwrap(), vec![0, 1, 2]);
        assert_eq!(argsort_ranks(&[1.0; 4]).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(argsort_ranks(&[0.5, 2.0, 2.0, 1.0]).unwrap(), vec![3, 0, 1, 2]);
        assert!(argsort_ranks(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn kept_examples() {
        let s = [0.5, 2.0, 2.0, 1.0];
        assert_eq!(select_kept(&s, 0.0).unwrap(), vec![0, 1, 2, 3]);
        assert!(select_kept(&s, 1.0).unwrap().is_empty());
        assert_eq!(select_kept(&s, 0.5).unwrap(), vec![1, 2]);
        assert!(select_kept(&s, 1.5).is_err());
        assert!(select_kept(&s, -0.1).is_err());
        // 90 * 0.7 is 62.999... in floating point
        assert_eq!(kept_count(90, 0.7), 27);
        assert_eq!(kept_count(7, 0.5), 4);
    }

    #[test]
    fn depth_bands() {
        let b = |n| (0..n).map(|l| DepthBand::of(l, n)).collect::<Vec<_>>();
        use DepthBand::*;
        assert_eq!(b(2), vec![Low, High]);
        assert_eq!(b(3), vec![Low, Middle, High]);
        let twelve = b(12);
        for band in DepthBand::ALL {
            assert_eq!(twelve.iter().filter(|&&x| x == band).count(), 4);
        }
    }

    fn attr(config: &ModelConfig, f: impl Fn(usize) -> f64) -> AttributionMap {
        AttributionMap {
            method: Method::Supervised,
            fingerprint: String::new(),
            samples: 1,
            seed: None,
            scores: prunable_registry(config)
                .into_iter()
                .map(|id| (id, (0..id.k).map(&f).collect()))
                .collect(),
        }
    }

    #[test]
    fn mask_semantics() {
        let c = ModelConfig::default();
        let reg = prunable_registry(&c);
        let a = attr(&c, |i| ((i * 7919) % 13) as f64);
        let full = build_mask(&reg, &c, &a, &PrunePlan::Uniform { p: 0.0 }).unwrap();
        assert_eq!(full.kept, PruneMask::full(&reg).kept);

        let plan = PrunePlan::Uniform { p: 0.5 };
        let m = build_mask(&reg, &c, &a, &plan).unwrap();
        let mut scaled = a.clone();
        scaled.scores.values_mut().flatten().for_each(|v| *v = 3.0 * *v + 1.0);
        assert_eq!(build_mask(&reg, &c, &scaled, &plan).unwrap().kept, m.kept);

        let enc = build_mask(&reg, &c, &a, &PrunePlan::EncoderOnly { p: 0.5 }).unwrap();
        for (id, kept) in &enc.kept {
            let expect = if id.stack == Stack::Decoder { id.k } else { kept_count(id.k, 0.5) };
            assert_eq!(kept.len(), expect);
        }

        let mut missing = a.clone();
        missing.scores.pop_first();
        assert!(build_mask(&reg, &c, &missing, &plan).is_err());
    }

    #[test]
    fn layer_plans_touch_only_their_targets() {
        let c = ModelConfig::default();
        let reg = prunable_registry(&c);
        let plan = PrunePlan::LayerType {
            stack: Stack::Decoder,
            group: LayerGroup::CrossAttention,
            p: 1.0,
        };
        let m = random_mask(&reg, &c, &plan, 0).unwrap();
        for (id, kept) in &m.kept {
            let pruned = id.stack == Stack::Decoder && id.kind.group() == LayerGroup::CrossAttention;
            assert_eq!(kept.is_empty(), pruned, "{id}");
        }
        let plan = PrunePlan::LayerDepth { stack: Stack::Encoder, band: DepthBand::High, p: 1.0 };
        let m = random_mask(&reg, &c, &plan, 0).unwrap();
        for (id, kept) in &m.kept {
            assert_eq!(kept.is_empty(), id.stack == Stack::Encoder && id.layer == 1, "{id}");
        }
    }

    #[test]
    fn random_masks() {
        let c = ModelConfig::default();
        let reg = prunable_registry(&c);
        let plan = PrunePlan::Integrated { enc: 0.3, dec: 0.7 };
        let a = random_mask(&reg, &c, &plan, 11).unwrap();
        a.validate().unwrap();
        for (id, kept) in &a.kept {
            assert_eq!(kept.len(), kept_count(id.k, plan.rate(id, &c)));
        }
        assert_eq!(a, random_mask(&reg, &c, &plan, 11).unwrap());
        assert_ne!(a, random_mask(&reg, &c, &plan, 12).unwrap());
    }

    #[test]
    fn jaccard_examples() {
        let id = prunable_registry(&ModelConfig::default())[0];
        let mk = |kept: Vec<usize>| PruneMask {
            plan: None,
            source: String::new(),
            seed: None,
            kept: [(id, kept)].into_iter().collect(),
        };
        let j = |a, b| mask_jaccard(&mk(a), &mk(b)).unwrap().1;
        assert_eq!(j(vec![0, 1, 2], vec![2, 3]), 0.25);
        assert_eq!(j(vec![1, 2], vec![1, 2]), 1.0);
        assert_eq!(j(vec![0], vec![1]), 0.0);
        assert_eq!(j(vec![], vec![]), 1.0);
        let other = PruneMask::full(&prunable_registry(&ModelConfig::tiny()));
        assert!(mask_jaccard(&mk(vec![0]), &other).is_err());
    }

    #[test]
    fn mask_file_round_trip() {
        let c = ModelConfig::tiny();
        let reg = prunable_registry(&c);
        let m = random_mask(&reg, &c, &PrunePlan::DecoderOnly { p: 0.5 }, 3).unwrap();
        let back = mask_from_json(&mask_to_json(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        let mut bad = m.clone();
        bad.kept.values_mut().next().unwrap().push(99);
        assert!(mask_from_json(&mask_to_json(&bad).unwrap()).is_err());
    }
}
