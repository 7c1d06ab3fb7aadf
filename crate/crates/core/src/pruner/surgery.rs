use std::collections::BTreeMap;

use super::PruneMask;
use crate::autodiff::Intervention;
use crate::error::{Error, Result};
use crate::model::{
    head_offsets, registry_of, target_columns, Attention, FeedForward, Parameters, PrunableLayerId, Stack,
    TargetKind, Weight,
};
use crate::tensor::Tensor;

fn dense<'a>(w: &'a Weight<Tensor>, what: &str) -> Result<&'a Tensor> {
    match w {
        Weight::Dense(t) => Ok(t),
        Weight::Factored { .. } => Err(Error::contract(format!("{what}: cannot prune a factored matrix"))),
    }
}

/// Check that `mask` has one entry per target of `params` with matching `k`.
fn check_mask(params: &Parameters, mask: &PruneMask) -> Result<Vec<PrunableLayerId>> {
    mask.validate()?;
    let registry = registry_of(params);
    if registry.len() != mask.kept.len() {
        return Err(Error::contract(format!(
            "mask has {} targets, parameters have {}",
            mask.kept.len(),
            registry.len()
        )));
    }
    for id in &registry {
        if !mask.kept.contains_key(id) {
            return Err(Error::contract(format!("mask has no entry for {id} with k = {}", id.k)));
        }
    }
    Ok(registry)
}

/// Absolute kept columns of each head of one attention representation.
fn head_columns(
    mask: &PruneMask,
    stack: Stack,
    layer: usize,
    kind: TargetKind,
    dims: &[usize],
) -> (Vec<usize>, Vec<usize>) {
    let offsets = head_offsets(dims);
    let mut cols = Vec::new();
    let mut new_dims = Vec::with_capacity(dims.len());
    for (h, (&off, &k)) in offsets.iter().zip(dims).enumerate() {
        let id = PrunableLayerId { stack, layer, kind, head: Some(h), k };
        let kept = &mask.kept[&id];
        cols.extend(kept.iter().map(|&i| off + i));
        new_dims.push(kept.len());
    }
    (cols, new_dims)
}

fn prune_attention(
    a: &Attention<Tensor>,
    mask: &PruneMask,
    stack: Stack,
    layer: usize,
    cross: bool,
) -> Result<Attention<Tensor>> {
    let (qk_kind, v_kind) = if cross {
        (TargetKind::CrossQk, TargetKind::CrossV)
    } else {
        (TargetKind::SelfQk, TargetKind::SelfV)
    };
    let (qk_cols, qk_dims) = head_columns(mask, stack, layer, qk_kind, &a.qk_dims);
    let (v_cols, v_dims) = head_columns(mask, stack, layer, v_kind, &a.v_dims);
    Ok(Attention {
        wq: Weight::Dense(dense(&a.wq, "wq")?.select_cols(&qk_cols)?),
        wk: Weight::Dense(dense(&a.wk, "wk")?.select_cols(&qk_cols)?),
        wv: Weight::Dense(dense(&a.wv, "wv")?.select_cols(&v_cols)?),
        wo: Weight::Dense(dense(&a.wo, "wo")?.select_rows(&v_cols)?),
        qk_dims,
        v_dims,
        scale: a.scale,
    })
}

fn prune_ffn(f: &FeedForward<Tensor>, mask: &PruneMask, stack: Stack, layer: usize) -> Result<FeedForward<Tensor>> {
    let id = PrunableLayerId {
        stack,
        layer,
        kind: TargetKind::Ffn,
        head: None,
        k: f.b1.len(),
    };
    let kept = &mask.kept[&id];
    Ok(FeedForward {
        w1: Weight::Dense(dense(&f.w1, "w1")?.select_cols(kept)?),
        b1: f.b1.select(kept)?,
        w2: Weight::Dense(dense(&f.w2, "w2")?.select_rows(kept)?),
        b2: f.b2.clone(),
    })
}

/// A new parameter set with every masked-out neuron removed.
///
/// Query/key columns are removed from `W^Q` and `W^K` together, value
/// columns from `W^V` with the matching rows of `W^O`, and hidden units
/// from `W₁`/`b₁` with the matching rows of `W₂`. Attention scales are
/// left at their original values.
pub fn surgery(params: &Parameters, mask: &PruneMask) -> Result<Parameters> {
    check_mask(params, mask)?;
    let mut out = params.clone();
    for (l, layer) in out.encoder.iter_mut().enumerate() {
        layer.self_attn = prune_attention(&layer.self_attn, mask, Stack::Encoder, l, false)?;
        layer.ffn = prune_ffn(&layer.ffn, mask, Stack::Encoder, l)?;
    }
    for (l, layer) in out.decoder.iter_mut().enumerate() {
        layer.self_attn = prune_attention(&layer.self_attn, mask, Stack::Decoder, l, false)?;
        layer.cross_attn = prune_attention(&layer.cross_attn, mask, Stack::Decoder, l, true)?;
        layer.ffn = prune_ffn(&layer.ffn, mask, Stack::Decoder, l)?;
    }
    out.check_shapes()?;
    Ok(out)
}

/// Probe interventions that zero every masked-out neuron of `params`
/// without changing any weight.
pub fn zeroing_interventions(params: &Parameters, mask: &PruneMask) -> Result<Vec<(String, Intervention)>> {
    let registry = check_mask(params, mask)?;
    let mut scales: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for id in &registry {
        let cols = target_columns(params, id)?;
        let width = probe_width(params, id)?;
        let s = scales.entry(id.probe_name()).or_insert_with(|| vec![1.0; width]);
        let kept = &mask.kept[id];
        for (i, &c) in cols.iter().enumerate() {
            if kept.binary_search(&i).is_err() {
                s[c] = 0.0;
            }
        }
    }
    Ok(scales
        .into_iter()
        .map(|(name, s)| (name, Intervention::ScaleColumns(s)))
        .collect())
}

fn probe_width(params: &Parameters, id: &PrunableLayerId) -> Result<usize> {
    let missing = || Error::contract(format!("target {id} does not exist"));
    Ok(match id.kind {
        TargetKind::Ffn => params.ffn(id.stack, id.layer).ok_or_else(missing)?.b1.len(),
        TargetKind::SelfQk | TargetKind::CrossQk => {
            params.attention(id.stack, id.layer, id.kind).ok_or_else(missing)?.qk_dims.iter().sum()
        }
        TargetKind::SelfV | TargetKind::CrossV => {
            params.attention(id.stack, id.layer, id.kind).ok_or_else(missing)?.v_dims.iter().sum()
        }
    })
}

/// Prunable values of `pruned` as a fraction of those of `original`.
pub fn kept_fraction(original: &Parameters, pruned: &Parameters) -> f64 {
    let total = original.prunable_values();
    if total == 0 {
        1.0
    } else {
        pruned.prunable_values() as f64 / total as f64
    }
}
