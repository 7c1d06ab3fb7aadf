//! Encoder-decoder forward pass on a [`Tape`].
//!
//! Pre-norm residual blocks with gain-only RMS normalization, ReLU
//! feed-forward layers, bias-free attention projections and fixed sinusoidal
//! position encodings. Every prunable layer representation is probed under
//! the name returned by [`probe_name`](super::registry::probe_name).

use std::collections::BTreeMap;

use super::params::{head_offsets, Attention, FeedForward, ModelParams, Parameters, Weight};
use super::registry::{probe_name, prunable_registry, PrunableLayerId, Stack, TargetKind};
use crate::autodiff::{Intervention, Tape, Var};
use crate::data::{TokenId, BOS, EOS};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const NORM_EPS: f64 = 1e-6;
const MASKED: f64 = -1e9;

/// Probed layer representations of one forward pass, per registry entry.
/// Each value is `[positions, k]`.
pub type ForwardTrace = BTreeMap<PrunableLayerId, Tensor>;

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `[decoder positions, vocab]` next-token log-probabilities.
    pub log_probs: Tensor,
    pub trace: ForwardTrace,
}

/// A tape with the model's parameters attached as leaves.
pub struct Session<'p> {
    pub tape: Tape,
    pub vars: ModelParams<Var>,
    pub params: &'p Parameters,
}

impl<'p> Session<'p> {
    pub fn new(params: &'p Parameters) -> Result<Self> {
        let mut tape = Tape::new();
        let vars = params.try_map(|_, t| tape.leaf(t.clone()))?;
        Ok(Session { tape, vars, params })
    }

    pub fn with_interventions(
        params: &'p Parameters,
        interventions: &[(String, Intervention)],
    ) -> Result<Self> {
        let mut s = Session::new(params)?;
        for (name, iv) in interventions {
            s.tape.set_intervention(name.clone(), iv.clone());
        }
        Ok(s)
    }

    fn check_tokens(&self, ids: &[TokenId], what: &str) -> Result<()> {
        let c = &self.params.config;
        if ids.is_empty() || ids.len() > c.max_len {
            return Err(Error::input(format!(
                "{what} length {} outside 1..={}",
                ids.len(),
                c.max_len
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&t| t >= c.vocab_size) {
            return Err(Error::input(format!(
                "{what} token id {bad} >= vocab size {}",
                c.vocab_size
            )));
        }
        Ok(())
    }

    fn embed(&mut self, ids: &[TokenId]) -> Result<Var> {
        let x = self.tape.gather(self.vars.embedding, ids)?;
        let pe = positional_encoding(ids.len(), self.params.config.d_model);
        self.tape.add_const(x, &pe)
    }

    fn norm(&mut self, x: Var, gain: Var) -> Result<Var> {
        let n = self.tape.rms_norm(x, NORM_EPS)?;
        self.tape.mul_row(n, gain)
    }

    /// Encoder output `[input len, d_model]`.
    pub fn encode(&mut self, input: &[TokenId]) -> Result<Var> {
        self.check_tokens(input, "input")?;
        let mut x = self.embed(input)?;
        for l in 0..self.vars.encoder.len() {
            let layer = &self.vars.encoder[l];
            let (attn_norm, ffn_norm) = (layer.attn_norm, layer.ffn_norm);
            let attn = layer.self_attn.clone();
            let ffn = layer.ffn.clone();

            let h = self.norm(x, attn_norm)?;
            let a = self.attention(&attn, h, h, false, (Stack::Encoder, l, false))?;
            x = self.tape.add(x, a)?;
            let h = self.norm(x, ffn_norm)?;
            let f = self.feed_forward(&ffn, h, Stack::Encoder, l)?;
            x = self.tape.add(x, f)?;
        }
        let g = self.vars.enc_norm;
        self.norm(x, g)
    }

    /// Decoder log-probabilities `[prefix len, vocab]` given encoder output.
    pub fn decode(&mut self, enc: Var, prefix: &[TokenId]) -> Result<Var> {
        self.check_tokens(prefix, "decoder prefix")?;
        let mut x = self.embed(prefix)?;
        for l in 0..self.vars.decoder.len() {
            let layer = &self.vars.decoder[l];
            let (sn, cn, fnorm) = (layer.self_norm, layer.cross_norm, layer.ffn_norm);
            let (sa, ca, ffn) = (layer.self_attn.clone(), layer.cross_attn.clone(), layer.ffn.clone());

            let h = self.norm(x, sn)?;
            let a = self.attention(&sa, h, h, true, (Stack::Decoder, l, false))?;
            x = self.tape.add(x, a)?;
            let h = self.norm(x, cn)?;
            let a = self.attention(&ca, h, enc, false, (Stack::Decoder, l, true))?;
            x = self.tape.add(x, a)?;
            let h = self.norm(x, fnorm)?;
            let f = self.feed_forward(&ffn, h, Stack::Decoder, l)?;
            x = self.tape.add(x, f)?;
        }
        let g = self.vars.dec_norm;
        let x = self.norm(x, g)?;
        let logits = self.tape.matmul(x, self.vars.output)?;
        self.tape.log_softmax(logits, 1)
    }

    fn linear(&mut self, x: Var, w: &Weight<Var>) -> Result<Var> {
        match *w {
            Weight::Dense(w) => self.tape.matmul(x, w),
            Weight::Factored { u, s, v } => {
                let xu = self.tape.matmul(x, u)?;
                let xs = self.tape.mul_row(xu, s)?;
                self.tape.matmul(xs, v)
            }
        }
    }

    fn attention(
        &mut self,
        a: &Attention<Var>,
        xq: Var,
        xkv: Var,
        causal: bool,
        (stack, layer, cross): (Stack, usize, bool),
    ) -> Result<Var> {
        let (qk_kind, v_kind) = if cross {
            (TargetKind::CrossQk, TargetKind::CrossV)
        } else {
            (TargetKind::SelfQk, TargetKind::SelfV)
        };
        let q = self.linear(xq, &a.wq)?;
        let q = self.tape.probe(&probe_name(stack, layer, qk_kind), q)?;
        let k = self.linear(xkv, &a.wk)?;
        let v = self.linear(xkv, &a.wv)?;
        let v = self.tape.probe(&probe_name(stack, layer, v_kind), v)?;

        let tq = self.tape.value(xq).rows();
        let tk = self.tape.value(xkv).rows();
        let mask = causal.then(|| causal_mask(tq, tk));
        let qk_off = head_offsets(&a.qk_dims);
        let v_off = head_offsets(&a.v_dims);
        let mut heads = Vec::with_capacity(a.qk_dims.len());
        for h in 0..a.qk_dims.len() {
            let qh = self.tape.slice_cols(q, qk_off[h], a.qk_dims[h])?;
            let kh = self.tape.slice_cols(k, qk_off[h], a.qk_dims[h])?;
            let vh = self.tape.slice_cols(v, v_off[h], a.v_dims[h])?;
            let s = self.tape.matmul_nt(qh, kh)?;
            let mut s = self.tape.scale(s, a.scale)?;
            if let Some(m) = &mask {
                s = self.tape.add_const(s, m)?;
            }
            let p = self.tape.softmax(s, 1)?;
            heads.push(self.tape.matmul(p, vh)?);
        }
        let cat = self.tape.concat_cols(&heads)?;
        self.linear(cat, &a.wo)
    }

    fn feed_forward(&mut self, f: &FeedForward<Var>, x: Var, stack: Stack, layer: usize) -> Result<Var> {
        let h = self.linear(x, &f.w1)?;
        let h = self.tape.add_row(h, f.b1)?;
        let h = self.tape.relu(h)?;
        let h = self.tape.probe(&probe_name(stack, layer, TargetKind::Ffn), h)?;
        let o = self.linear(h, &f.w2)?;
        self.tape.add_row(o, f.b2)
    }

    /// Slice the probes of the current pass into per-target representations.
    pub fn trace(&self) -> Result<ForwardTrace> {
        let mut out = BTreeMap::new();
        for id in registry_of(self.params) {
            let name = id.probe_name();
            let Some(value) = self.tape.probe_value(&name) else { continue };
            let cols = target_columns(self.params, &id)?;
            out.insert(id, value.select_cols(&cols)?);
        }
        Ok(out)
    }
}

/// Registry of a (possibly pruned) parameter set: like
/// [`prunable_registry`], but `k` reflects the current widths.
pub fn registry_of(params: &Parameters) -> Vec<PrunableLayerId> {
    prunable_registry(&params.config)
        .into_iter()
        .map(|mut id| {
            id.k = current_width(params, &id).unwrap_or(0);
            id
        })
        .collect()
}

fn current_width(params: &Parameters, id: &PrunableLayerId) -> Option<usize> {
    match (id.kind, id.head) {
        (TargetKind::Ffn, _) => params.ffn(id.stack, id.layer).map(|f| f.b1.len()),
        (TargetKind::SelfQk | TargetKind::CrossQk, Some(h)) => params
            .attention(id.stack, id.layer, id.kind)
            .and_then(|a| a.qk_dims.get(h).copied()),
        (_, Some(h)) => params
            .attention(id.stack, id.layer, id.kind)
            .and_then(|a| a.v_dims.get(h).copied()),
        _ => None,
    }
}

/// Column indices of a target inside its layer's probed representation.
pub fn target_columns(params: &Parameters, id: &PrunableLayerId) -> Result<Vec<usize>> {
    let missing = || Error::contract(format!("target {id} does not exist in these parameters"));
    match id.kind {
        TargetKind::Ffn => {
            let f = params.ffn(id.stack, id.layer).ok_or_else(missing)?;
            Ok((0..f.b1.len()).collect())
        }
        kind => {
            let a = params.attention(id.stack, id.layer, kind).ok_or_else(missing)?;
            let h = id.head.ok_or_else(missing)?;
            let dims = if matches!(kind, TargetKind::SelfQk | TargetKind::CrossQk) {
                &a.qk_dims
            } else {
                &a.v_dims
            };
            let w = *dims.get(h).ok_or_else(missing)?;
            let off = head_offsets(dims)[h];
            Ok((off..off + w).collect())
        }
    }
}

pub fn positional_encoding(len: usize, d: usize) -> Tensor {
    let mut pe = Tensor::zeros(&[len, d]);
    for pos in 0..len {
        for i in 0..d {
            let freq = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 * freq;
            pe.set2(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    pe
}

fn causal_mask(tq: usize, tk: usize) -> Tensor {
    let mut m = Tensor::zeros(&[tq, tk]);
    for i in 0..tq {
        for j in (i + 1)..tk {
            m.set2(i, j, MASKED);
        }
    }
    m
}

/// Teacher-forced forward pass: log-probabilities for every decoder
/// position plus the probed layer representations.
pub fn forward(params: &Parameters, input: &[TokenId], decoder_prefix: &[TokenId]) -> Result<ForwardOutput> {
    forward_with(params, input, decoder_prefix, &[])
}

pub fn forward_with(
    params: &Parameters,
    input: &[TokenId],
    decoder_prefix: &[TokenId],
    interventions: &[(String, Intervention)],
) -> Result<ForwardOutput> {
    let mut s = Session::with_interventions(params, interventions)?;
    let enc = s.encode(input)?;
    let lp = s.decode(enc, decoder_prefix)?;
    Ok(ForwardOutput {
        log_probs: s.tape.value(lp).clone(),
        trace: s.trace()?,
    })
}

/// Greedy generation from `BOS`; stops at `EOS` or after `max_steps`
/// tokens. The returned sequence excludes `BOS` and `EOS`.
pub fn greedy_decode(params: &Parameters, input: &[TokenId], max_steps: usize) -> Result<Vec<TokenId>> {
    greedy_decode_with(params, input, max_steps, &[])
}

pub fn greedy_decode_with(
    params: &Parameters,
    input: &[TokenId],
    max_steps: usize,
    interventions: &[(String, Intervention)],
) -> Result<Vec<TokenId>> {
    if max_steps == 0 {
        return Err(Error::contract("greedy_decode needs max_steps >= 1"));
    }
    let mut s = Session::with_interventions(params, interventions)?;
    let enc = s.encode(input)?;
    let mut prefix = vec![BOS];
    let mut out = Vec::new();
    for _ in 0..max_steps.min(params.config.max_len) {
        s.tape.begin_pass();
        let lp = s.decode(enc, &prefix)?;
        let lp = s.tape.value(lp);
        let last = lp.row(lp.rows() - 1);
        let next = argmax(last);
        if next == EOS {
            break;
        }
        out.push(next);
        prefix.push(next);
    }
    Ok(out)
}

/// Index of the maximum; ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
