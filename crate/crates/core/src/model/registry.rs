//! Enumeration of prunable targets.
//!
//! A target is a layer representation whose coordinates are pruning
//! candidates. Each target owns two matrices:
//!
//! | kind               | representation          | pruned                              |
//! |--------------------|-------------------------|-------------------------------------|
//! | `self-qk`/`cross-qk` | one head's query vector | columns of `W^Q` and `W^K` (tied)   |
//! | `self-v`/`cross-v`   | one head's value vector | columns of `W^V`, rows of `W^O`     |
//! | `ffn`              | `relu(x W₁ + b₁)`       | columns of `W₁`, entries of `b₁`, rows of `W₂` |
//!
//! Attention targets are per head so that scores are ranked within a head.
//! An encoder layer therefore carries 6 prunable matrices and a decoder
//! layer 10.
//!
//! Registry order is encoder before decoder, then layer index, then kind in
//! the order `self-qk, self-v, cross-qk, cross-v, ffn`, then head. It is the
//! derived [`Ord`] of [`PrunableLayerId`].

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stack {
    Encoder,
    Decoder,
}

impl Stack {
    pub fn tag(self) -> &'static str {
        match self {
            Stack::Encoder => "enc",
            Stack::Decoder => "dec",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TargetKind {
    SelfQk,
    SelfV,
    CrossQk,
    CrossV,
    Ffn,
}

impl TargetKind {
    pub const ALL: [TargetKind; 5] = [
        TargetKind::SelfQk,
        TargetKind::SelfV,
        TargetKind::CrossQk,
        TargetKind::CrossV,
        TargetKind::Ffn,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            TargetKind::SelfQk => "self-qk",
            TargetKind::SelfV => "self-v",
            TargetKind::CrossQk => "cross-qk",
            TargetKind::CrossV => "cross-v",
            TargetKind::Ffn => "ffn",
        }
    }

    pub fn is_attention(self) -> bool {
        self != TargetKind::Ffn
    }

    /// Coarse layer type used by the layer-type analysis.
    pub fn group(self) -> LayerGroup {
        match self {
            TargetKind::SelfQk | TargetKind::SelfV => LayerGroup::SelfAttention,
            TargetKind::CrossQk | TargetKind::CrossV => LayerGroup::CrossAttention,
            TargetKind::Ffn => LayerGroup::FeedForward,
        }
    }
}

impl FromStr for TargetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TargetKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::input(format!("unknown target kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerGroup {
    SelfAttention,
    CrossAttention,
    FeedForward,
}

impl LayerGroup {
    pub fn tag(self) -> &'static str {
        match self {
            LayerGroup::SelfAttention => "self",
            LayerGroup::CrossAttention => "cross",
            LayerGroup::FeedForward => "ffn",
        }
    }
}

/// One prunable target: `k` neurons of one layer representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrunableLayerId {
    pub stack: Stack,
    pub layer: usize,
    pub kind: TargetKind,
    pub head: Option<usize>,
    pub k: usize,
}

impl PrunableLayerId {
    /// Stable text key, e.g. `enc.0.self-qk.h2` or `dec.1.ffn`. Excludes `k`.
    pub fn key(&self) -> String {
        match self.head {
            Some(h) => format!("{}.{}.{}.h{}", self.stack.tag(), self.layer, self.kind.tag(), h),
            None => format!("{}.{}.{}", self.stack.tag(), self.layer, self.kind.tag()),
        }
    }

    /// Inverse of [`key`](Self::key).
    pub fn from_key(key: &str, k: usize) -> Result<Self> {
        let bad = || Error::input(format!("malformed target key `{key}`"));
        let parts: Vec<&str> = key.split('.').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(bad());
        }
        let stack = match parts[0] {
            "enc" => Stack::Encoder,
            "dec" => Stack::Decoder,
            _ => return Err(bad()),
        };
        let layer = parts[1].parse().map_err(|_| bad())?;
        let kind: TargetKind = parts[2].parse()?;
        let head = match parts.get(3) {
            Some(h) => Some(h.strip_prefix('h').and_then(|n| n.parse().ok()).ok_or_else(bad)?),
            None => None,
        };
        if head.is_some() != kind.is_attention() {
            return Err(bad());
        }
        Ok(PrunableLayerId { stack, layer, kind, head, k })
    }

    /// Name of the probe capturing this target's layer (all heads).
    pub fn probe_name(&self) -> String {
        probe_name(self.stack, self.layer, self.kind)
    }
}

impl fmt::Display for PrunableLayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

pub fn probe_name(stack: Stack, layer: usize, kind: TargetKind) -> String {
    format!("{}.{}.{}", stack.tag(), layer, kind.tag())
}

/// Every prunable target of an unpruned model with this configuration.
pub fn prunable_registry(config: &ModelConfig) -> Vec<PrunableLayerId> {
    let mut out = Vec::new();
    let layers = [
        (Stack::Encoder, config.n_enc_layers, &[TargetKind::SelfQk, TargetKind::SelfV, TargetKind::Ffn][..]),
        (Stack::Decoder, config.n_dec_layers, &TargetKind::ALL[..]),
    ];
    for (stack, n, kinds) in layers {
        for layer in 0..n {
            for &kind in kinds {
                if kind.is_attention() {
                    out.extend((0..config.n_heads).map(|h| PrunableLayerId {
                        stack,
                        layer,
                        kind,
                        head: Some(h),
                        k: config.d_head,
                    }));
                } else {
                    out.push(PrunableLayerId {
                        stack,
                        layer,
                        kind,
                        head: None,
                        k: config.d_ff,
                    });
                }
            }
        }
    }
    out
}

/// Number of weight matrices the registry's targets cover (two per layer-level target).
pub fn prunable_matrix_count(registry: &[PrunableLayerId]) -> usize {
    let layers: BTreeSet<_> = registry.iter().map(|id| (id.stack, id.layer, id.kind)).collect();
    2 * layers.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(enc: usize, dec: usize) -> ModelConfig {
        ModelConfig {
            n_enc_layers: enc,
            n_dec_layers: dec,
            ..ModelConfig::default()
        }
    }

    fn count(reg: &[PrunableLayerId], stack: Stack) -> usize {
        let r: Vec<_> = reg.iter().copied().filter(|id| id.stack == stack).collect();
        prunable_matrix_count(&r)
    }

    #[test]
    fn base_sized_counts() {
        let reg = prunable_registry(&cfg(12, 12));
        assert_eq!(count(&reg, Stack::Encoder), 72);
        assert_eq!(count(&reg, Stack::Decoder), 120);
    }

    #[test]
    fn toy_counts() {
        let reg = prunable_registry(&cfg(2, 2));
        assert_eq!(prunable_matrix_count(&reg), 32);
        // 2 x (4 + 4 + 1) + 2 x (4 * 4 + 1)
        assert_eq!(reg.len(), 18 + 34);
    }

    #[test]
    fn no_decoder() {
        let reg = prunable_registry(&cfg(2, 0));
        assert!(reg.iter().all(|id| id.stack == Stack::Encoder));
    }

    #[test]
    fn order_is_sorted_and_unique() {
        let reg = prunable_registry(&cfg(2, 2));
        let mut sorted = reg.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted, reg);
        let keys: BTreeSet<_> = reg.iter().map(|id| id.key()).collect();
        assert_eq!(keys.len(), reg.len());
    }

    #[test]
    fn keys() {
        let reg = prunable_registry(&cfg(1, 1));
        assert_eq!(reg[0].key(), "enc.0.self-qk.h0");
        assert_eq!(reg.last().unwrap().key(), "dec.0.ffn");
        assert_eq!("cross-v".parse::<TargetKind>().unwrap(), TargetKind::CrossV);
    }

    #[test]
    fn keys_round_trip() {
        for id in prunable_registry(&cfg(2, 2)) {
            assert_eq!(PrunableLayerId::from_key(&id.key(), id.k).unwrap(), id);
        }
        for bad in ["enc.0.ffn.h1", "enc.x.ffn", "mid.0.ffn", "dec.0.self-v", "dec.0.self-v.2"] {
            assert!(PrunableLayerId::from_key(bad, 4).is_err(), "{bad}");
        }
    }
}
