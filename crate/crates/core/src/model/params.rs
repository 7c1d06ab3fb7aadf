//! Model parameters, generic over the leaf type.
//!
//! `ModelParams<Tensor>` is the value form ([`Parameters`]); the forward pass
//! attaches it to a tape as `ModelParams<Var>`, and gradients come back as
//! another `ModelParams<Tensor>` with identical structure.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::registry::{Stack, TargetKind};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A projection matrix, either dense or stored as low-rank factors
/// `u · diag(s) · v`.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight<T> {
    Dense(T),
    Factored { u: T, s: T, v: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attention<T> {
    pub wq: Weight<T>,
    pub wk: Weight<T>,
    pub wv: Weight<T>,
    pub wo: Weight<T>,
    /// Per-head query/key width (columns of `wq`/`wk` are grouped by head).
    pub qk_dims: Vec<usize>,
    /// Per-head value width (columns of `wv`, rows of `wo`).
    pub v_dims: Vec<usize>,
    /// Score scale, fixed at `1/sqrt(d_head)` of the unpruned model.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward<T> {
    pub w1: Weight<T>,
    pub b1: T,
    pub w2: Weight<T>,
    pub b2: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<T> {
    pub attn_norm: T,
    pub self_attn: Attention<T>,
    pub ffn_norm: T,
    pub ffn: FeedForward<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer<T> {
    pub self_norm: T,
    pub self_attn: Attention<T>,
    pub cross_norm: T,
    pub cross_attn: Attention<T>,
    pub ffn_norm: T,
    pub ffn: FeedForward<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub embedding: T,
    pub encoder: Vec<EncoderLayer<T>>,
    pub enc_norm: T,
    pub decoder: Vec<DecoderLayer<T>>,
    pub dec_norm: T,
    pub output: T,
}

pub type Parameters = ModelParams<Tensor>;

/// Column offsets of each head given per-head widths.
pub fn head_offsets(dims: &[usize]) -> Vec<usize> {
    dims.iter()
        .scan(0, |acc, &d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect()
}

type MapFn<'f, T, U> = dyn FnMut(&str, &T) -> Result<U> + 'f;

impl<T> Weight<T> {
    fn map<U>(&self, name: &str, f: &mut MapFn<'_, T, U>) -> Result<Weight<U>> {
        Ok(match self {
            Weight::Dense(w) => Weight::Dense(f(name, w)?),
            Weight::Factored { u, s, v } => Weight::Factored {
                u: f(&format!("{name}.u"), u)?,
                s: f(&format!("{name}.s"), s)?,
                v: f(&format!("{name}.v"), v)?,
            },
        })
    }

    fn visit<'a>(&'a self, name: &str, f: &mut dyn FnMut(String, &'a T)) {
        match self {
            Weight::Dense(w) => f(name.to_string(), w),
            Weight::Factored { u, s, v } => {
                f(format!("{name}.u"), u);
                f(format!("{name}.s"), s);
                f(format!("{name}.v"), v);
            }
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        match self {
            Weight::Dense(w) => f(w),
            Weight::Factored { u, s, v } => {
                f(u);
                f(s);
                f(v);
            }
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, Weight::Dense(_))
    }
}

impl<T> Attention<T> {
    fn map<U>(&self, name: &str, f: &mut MapFn<'_, T, U>) -> Result<Attention<U>> {
        Ok(Attention {
            wq: self.wq.map(&format!("{name}.wq"), f)?,
            wk: self.wk.map(&format!("{name}.wk"), f)?,
            wv: self.wv.map(&format!("{name}.wv"), f)?,
            wo: self.wo.map(&format!("{name}.wo"), f)?,
            qk_dims: self.qk_dims.clone(),
            v_dims: self.v_dims.clone(),
            scale: self.scale,
        })
    }

    fn visit<'a>(&'a self, name: &str, f: &mut dyn FnMut(String, &'a T)) {
        self.wq.visit(&format!("{name}.wq"), f);
        self.wk.visit(&format!("{name}.wk"), f);
        self.wv.visit(&format!("{name}.wv"), f);
        self.wo.visit(&format!("{name}.wo"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        self.wq.visit_mut(f);
        self.wk.visit_mut(f);
        self.wv.visit_mut(f);
        self.wo.visit_mut(f);
    }
}

impl<T> FeedForward<T> {
    fn map<U>(&self, name: &str, f: &mut MapFn<'_, T, U>) -> Result<FeedForward<U>> {
        Ok(FeedForward {
            w1: self.w1.map(&format!("{name}.w1"), f)?,
            b1: f(&format!("{name}.b1"), &self.b1)?,
            w2: self.w2.map(&format!("{name}.w2"), f)?,
            b2: f(&format!("{name}.b2"), &self.b2)?,
        })
    }

    fn visit<'a>(&'a self, name: &str, f: &mut dyn FnMut(String, &'a T)) {
        self.w1.visit(&format!("{name}.w1"), f);
        f(format!("{name}.b1"), &self.b1);
        self.w2.visit(&format!("{name}.w2"), f);
        f(format!("{name}.b2"), &self.b2);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        self.w1.visit_mut(f);
        f(&mut self.b1);
        self.w2.visit_mut(f);
        f(&mut self.b2);
    }
}

impl<T> ModelParams<T> {
    /// Structure-preserving conversion; `f` sees each leaf with its stable name.
    pub fn try_map<U>(&self, mut f: impl FnMut(&str, &T) -> Result<U>) -> Result<ModelParams<U>> {
        let f: &mut MapFn<'_, T, U> = &mut f;
        let embedding = f("embedding", &self.embedding)?;
        let encoder = self
            .encoder
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                Ok(EncoderLayer {
                    attn_norm: f(&format!("enc.{l}.attn_norm"), &layer.attn_norm)?,
                    self_attn: layer.self_attn.map(&format!("enc.{l}.self"), f)?,
                    ffn_norm: f(&format!("enc.{l}.ffn_norm"), &layer.ffn_norm)?,
                    ffn: layer.ffn.map(&format!("enc.{l}.ffn"), f)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let enc_norm = f("enc_norm", &self.enc_norm)?;
        let decoder = self
            .decoder
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                Ok(DecoderLayer {
                    self_norm: f(&format!("dec.{l}.self_norm"), &layer.self_norm)?,
                    self_attn: layer.self_attn.map(&format!("dec.{l}.self"), f)?,
                    cross_norm: f(&format!("dec.{l}.cross_norm"), &layer.cross_norm)?,
                    cross_attn: layer.cross_attn.map(&format!("dec.{l}.cross"), f)?,
                    ffn_norm: f(&format!("dec.{l}.ffn_norm"), &layer.ffn_norm)?,
                    ffn: layer.ffn.map(&format!("dec.{l}.ffn"), f)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let dec_norm = f("dec_norm", &self.dec_norm)?;
        let output = f("output", &self.output)?;
        Ok(ModelParams {
            config: self.config,
            embedding,
            encoder,
            enc_norm,
            decoder,
            dec_norm,
            output,
        })
    }

    /// Visit every leaf with its stable name, in a fixed order.
    pub fn visit<'a>(&'a self, mut f: impl FnMut(String, &'a T)) {
        let f: &mut dyn FnMut(String, &'a T) = &mut f;
        f("embedding".into(), &self.embedding);
        for (l, layer) in self.encoder.iter().enumerate() {
            f(format!("enc.{l}.attn_norm"), &layer.attn_norm);
            layer.self_attn.visit(&format!("enc.{l}.self"), f);
            f(format!("enc.{l}.ffn_norm"), &layer.ffn_norm);
            layer.ffn.visit(&format!("enc.{l}.ffn"), f);
        }
        f("enc_norm".into(), &self.enc_norm);
        for (l, layer) in self.decoder.iter().enumerate() {
            f(format!("dec.{l}.self_norm"), &layer.self_norm);
            layer.self_attn.visit(&format!("dec.{l}.self"), f);
            f(format!("dec.{l}.cross_norm"), &layer.cross_norm);
            layer.cross_attn.visit(&format!("dec.{l}.cross"), f);
            f(format!("dec.{l}.ffn_norm"), &layer.ffn_norm);
            layer.ffn.visit(&format!("dec.{l}.ffn"), f);
        }
        f("dec_norm".into(), &self.dec_norm);
        f("output".into(), &self.output);
    }

    /// Mutable visit in the same order as [`visit`](Self::visit).
    pub fn visit_mut(&mut self, mut f: impl FnMut(&mut T)) {
        let f: &mut dyn FnMut(&mut T) = &mut f;
        f(&mut self.embedding);
        for layer in &mut self.encoder {
            f(&mut layer.attn_norm);
            layer.self_attn.visit_mut(f);
            f(&mut layer.ffn_norm);
            layer.ffn.visit_mut(f);
        }
        f(&mut self.enc_norm);
        for layer in &mut self.decoder {
            f(&mut layer.self_norm);
            layer.self_attn.visit_mut(f);
            f(&mut layer.cross_norm);
            layer.cross_attn.visit_mut(f);
            f(&mut layer.ffn_norm);
            layer.ffn.visit_mut(f);
        }
        f(&mut self.dec_norm);
        f(&mut self.output);
    }

    pub fn attention(&self, stack: Stack, layer: usize, kind: TargetKind) -> Option<&Attention<T>> {
        match (stack, kind) {
            (Stack::Encoder, TargetKind::SelfQk | TargetKind::SelfV) => {
                self.encoder.get(layer).map(|l| &l.self_attn)
            }
            (Stack::Decoder, TargetKind::SelfQk | TargetKind::SelfV) => {
                self.decoder.get(layer).map(|l| &l.self_attn)
            }
            (Stack::Decoder, TargetKind::CrossQk | TargetKind::CrossV) => {
                self.decoder.get(layer).map(|l| &l.cross_attn)
            }
            _ => None,
        }
    }

    pub fn ffn(&self, stack: Stack, layer: usize) -> Option<&FeedForward<T>> {
        match stack {
            Stack::Encoder => self.encoder.get(layer).map(|l| &l.ffn),
            Stack::Decoder => self.decoder.get(layer).map(|l| &l.ffn),
        }
    }
}

fn attention_init(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Attention<Tensor> {
    let d = config.d_model;
    let w = config.attn_width();
    let proj = |rows, cols, rng: &mut ChaCha8Rng| Weight::Dense(Tensor::randn(&[rows, cols], 1.0 / (rows as f64).sqrt(), rng));
    Attention {
        wq: proj(d, w, rng),
        wk: proj(d, w, rng),
        wv: proj(d, w, rng),
        wo: proj(w, d, rng),
        qk_dims: vec![config.d_head; config.n_heads],
        v_dims: vec![config.d_head; config.n_heads],
        scale: 1.0 / (config.d_head as f64).sqrt(),
    }
}

fn ffn_init(config: &ModelConfig, rng: &mut ChaCha8Rng) -> FeedForward<Tensor> {
    let (d, f) = (config.d_model, config.d_ff);
    FeedForward {
        w1: Weight::Dense(Tensor::randn(&[d, f], 1.0 / (d as f64).sqrt(), rng)),
        b1: Tensor::zeros(&[f]),
        w2: Weight::Dense(Tensor::randn(&[f, d], 1.0 / (f as f64).sqrt(), rng)),
        b2: Tensor::zeros(&[d]),
    }
}

impl Parameters {
    /// Seeded random initialization (`config.seed`).
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d_model;
        let gain = || Tensor::filled(&[d], 1.0);
        let embedding = Tensor::randn(&[config.vocab_size, d], 1.0, &mut rng);
        let encoder = (0..config.n_enc_layers)
            .map(|_| EncoderLayer {
                attn_norm: gain(),
                self_attn: attention_init(&config, &mut rng),
                ffn_norm: gain(),
                ffn: ffn_init(&config, &mut rng),
            })
            .collect();
        let decoder = (0..config.n_dec_layers)
            .map(|_| DecoderLayer {
                self_norm: gain(),
                self_attn: attention_init(&config, &mut rng),
                cross_norm: gain(),
                cross_attn: attention_init(&config, &mut rng),
                ffn_norm: gain(),
                ffn: ffn_init(&config, &mut rng),
            })
            .collect();
        let output = Tensor::randn(&[d, config.vocab_size], 1.0 / (d as f64).sqrt(), &mut rng);
        Ok(ModelParams {
            config,
            embedding,
            encoder,
            enc_norm: gain(),
            decoder,
            dec_norm: gain(),
            output,
        })
    }

    pub fn num_values(&self) -> usize {
        let mut n = 0;
        self.visit(|_, t| n += t.len());
        n
    }

    /// Number of stored values across all prunable projection matrices
    /// (`W^Q, W^K, W^V, W^O, W₁, W₂`; factored matrices count `u`, `s`, `v`).
    pub fn prunable_values(&self) -> usize {
        let weight = |w: &Weight<Tensor>| match w {
            Weight::Dense(t) => t.len(),
            Weight::Factored { u, s, v } => u.len() + s.len() + v.len(),
        };
        let attn = |a: &Attention<Tensor>| weight(&a.wq) + weight(&a.wk) + weight(&a.wv) + weight(&a.wo);
        let ffn = |f: &FeedForward<Tensor>| weight(&f.w1) + weight(&f.w2);
        self.encoder
            .iter()
            .map(|l| attn(&l.self_attn) + ffn(&l.ffn))
            .chain(
                self.decoder
                    .iter()
                    .map(|l| attn(&l.self_attn) + attn(&l.cross_attn) + ffn(&l.ffn)),
            )
            .sum()
    }

    /// Flat copies of every leaf, in [`visit`](ModelParams::visit) order.
    pub fn flatten(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        self.visit(|_, t| out.push(t.clone()));
        out
    }

    /// Structural shape check (used after loading or surgery).
    pub fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        let d = c.d_model;
        let expect = |t: &Tensor, shape: &[usize], what: &str| -> Result<()> {
            if t.shape() != shape {
                return Err(Error::shape(format!(
                    "{what}: expected {shape:?}, found {:?}",
                    t.shape()
                )));
            }
            Ok(())
        };
        let weight_dims = |w: &Weight<Tensor>, what: &str| -> Result<(usize, usize)> {
            match w {
                Weight::Dense(t) => t.dims2(),
                Weight::Factored { u, s, v } => {
                    let (r1, k1) = u.dims2()?;
                    let (k2, c2) = v.dims2()?;
                    if k1 != k2 || s.shape() != [k1] {
                        return Err(Error::shape(format!("{what}: inconsistent factors")));
                    }
                    Ok((r1, c2))
                }
            }
        };
        let attn = |a: &Attention<Tensor>, what: &str| -> Result<()> {
            let qk: usize = a.qk_dims.iter().sum();
            let v: usize = a.v_dims.iter().sum();
            if a.qk_dims.len() != c.n_heads || a.v_dims.len() != c.n_heads {
                return Err(Error::shape(format!("{what}: head count mismatch")));
            }
            for (w, want, name) in [
                (&a.wq, (d, qk), "wq"),
                (&a.wk, (d, qk), "wk"),
                (&a.wv, (d, v), "wv"),
                (&a.wo, (v, d), "wo"),
            ] {
                let got = weight_dims(w, what)?;
                if got != want {
                    return Err(Error::shape(format!(
                        "{what}.{name}: expected {want:?}, found {got:?}"
                    )));
                }
            }
            Ok(())
        };
        let ffn = |f: &FeedForward<Tensor>, what: &str| -> Result<()> {
            let (r1, h) = weight_dims(&f.w1, what)?;
            let (h2, c2) = weight_dims(&f.w2, what)?;
            if r1 != d || c2 != d || h != h2 || f.b1.shape() != [h] || f.b2.shape() != [d] {
                return Err(Error::shape(format!("{what}: inconsistent feed-forward shapes")));
            }
            Ok(())
        };
        expect(&self.embedding, &[c.vocab_size, d], "embedding")?;
        expect(&self.output, &[d, c.vocab_size], "output")?;
        expect(&self.enc_norm, &[d], "enc_norm")?;
        expect(&self.dec_norm, &[d], "dec_norm")?;
        if self.encoder.len() != c.n_enc_layers || self.decoder.len() != c.n_dec_layers {
            return Err(Error::shape("layer count does not match config"));
        }
        for (l, layer) in self.encoder.iter().enumerate() {
            expect(&layer.attn_norm, &[d], "attn_norm")?;
            expect(&layer.ffn_norm, &[d], "ffn_norm")?;
            attn(&layer.self_attn, &format!("enc.{l}.self"))?;
            ffn(&layer.ffn, &format!("enc.{l}.ffn"))?;
        }
        for (l, layer) in self.decoder.iter().enumerate() {
            expect(&layer.self_norm, &[d], "self_norm")?;
            expect(&layer.cross_norm, &[d], "cross_norm")?;
            expect(&layer.ffn_norm, &[d], "ffn_norm")?;
            attn(&layer.self_attn, &format!("dec.{l}.self"))?;
            attn(&layer.cross_attn, &format!("dec.{l}.cross"))?;
            ffn(&layer.ffn, &format!("dec.{l}.ffn"))?;
        }
        Ok(())
    }
}
