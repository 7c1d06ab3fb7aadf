//! Multi-task teacher-forced fine-tuning and exact-match evaluation.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::{Example, TokenId, Vocab, BOS, EOS, POLARITY};
use crate::error::{Error, Result};
use crate::model::{greedy_decode, ModelParams, Parameters, Session};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
    pub seed: u64,
    /// Probability of drawing each task for a batch slot, in task order.
    /// Empty means uniform.
    pub mixing: Vec<f64>,
    /// Write a log row every this many steps (0: only after the last step).
    pub log_every: usize,
    /// Dev examples per task scored for each log row (0: all).
    pub log_dev_limit: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 3e-4,
            batch_size: 32,
            steps: 3000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
            seed: 0,
            mixing: Vec::new(),
            log_every: 0,
            log_dev_limit: 0,
        }
    }
}

impl TrainConfig {
    /// A shorter schedule for the default model that gives half of each
    /// batch to polarity (when present) and splits the rest evenly.
    pub fn toy<S: AsRef<str>>(task_names: &[S]) -> Self {
        let n = task_names.len();
        let has_polarity = task_names.iter().any(|t| t.as_ref() == POLARITY);
        let mixing = if n < 2 || !has_polarity {
            Vec::new()
        } else {
            let rest = 0.5 / (n - 1) as f64;
            task_names
                .iter()
                .map(|t| if t.as_ref() == POLARITY { 0.5 } else { rest })
                .collect()
        };
        TrainConfig {
            lr: 1.5e-3,
            batch_size: 16,
            steps: 2000,
            mixing,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self, n_tasks: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::input("batch_size must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::input("lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::input("moment coefficients must lie in [0, 1)"));
        }
        if !self.mixing.is_empty() {
            if self.mixing.len() != n_tasks {
                return Err(Error::input(format!(
                    "{} mixing weights for {n_tasks} tasks",
                    self.mixing.len()
                )));
            }
            if self.mixing.iter().any(|&w| !(w > 0.0)) {
                return Err(Error::input("mixing weights must be positive"));
            }
            let total: f64 = self.mixing.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::input(format!("mixing weights sum to {total}, not 1")));
            }
        }
        Ok(())
    }
}

/// One task's training and development examples.
#[derive(Debug, Clone, Copy)]
pub struct TrainTask<'a> {
    pub name: &'a str,
    pub train: &'a [Example],
    pub dev: &'a [Example],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub loss: f64,
    pub dev_accuracy: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Parameters,
    /// Mean per-example loss of every step's batch.
    pub losses: Vec<f64>,
    pub log: Vec<LogRow>,
}

/// Sum over positions of `-log_probs[j, targets[j]]`.
pub fn nll_loss(log_probs: &Tensor, targets: &[TokenId]) -> Result<f64> {
    let (rows, cols) = log_probs.dims2()?;
    if rows != targets.len() {
        return Err(Error::shape(format!(
            "{rows} positions but {} targets",
            targets.len()
        )));
    }
    let mut loss = 0.0;
    for (j, &t) in targets.iter().enumerate() {
        if t >= cols {
            return Err(Error::input(format!("target token {t} >= vocab size {cols}")));
        }
        loss -= log_probs.get2(j, t);
    }
    Ok(loss)
}

/// [`nll_loss`] recorded on a tape.
pub fn nll_loss_var(tape: &mut Tape, log_probs: Var, targets: &[TokenId]) -> Result<Var> {
    let rows = tape.value(log_probs).rows();
    if rows != targets.len() {
        return Err(Error::shape(format!(
            "{rows} positions but {} targets",
            targets.len()
        )));
    }
    let at: Vec<_> = targets.iter().copied().enumerate().collect();
    let picked = tape.pick(log_probs, &at)?;
    let total = tape.sum(picked)?;
    tape.scale(total, -1.0)
}

/// Token ids of one example: encoder input, decoder input `[BOS, y]` and
/// decoder targets `[y, EOS]`.
pub fn encode_example(example: &Example) -> (Vec<TokenId>, Vec<TokenId>, Vec<TokenId>) {
    let vocab = Vocab::new();
    let input = vocab.tokenize(&example.input);
    let label = vocab.tokenize(&example.label);
    let mut dec_in = vec![BOS];
    dec_in.extend_from_slice(&label);
    let mut targets = label;
    targets.push(EOS);
    (input, dec_in, targets)
}

/// Teacher-forced loss and parameter gradients for one example.
pub fn example_gradient(params: &Parameters, example: &Example) -> Result<(f64, ModelParams<Tensor>)> {
    let (input, dec_in, targets) = encode_example(example);
    let mut s = Session::new(params)?;
    let enc = s.encode(&input)?;
    let lp = s.decode(enc, &dec_in)?;
    let loss = nll_loss_var(&mut s.tape, lp, &targets)?;
    let value = s.tape.value(loss).item()?;
    let grads = s.tape.backward(loss)?;
    let g = s.vars.try_map(|_, &v| Ok(grads.get_or_zeros(&s.tape, v)))?;
    Ok((value, g))
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(params: &Parameters) -> Self {
        let mut m = Vec::new();
        params.visit(|_, t| m.push(vec![0.0; t.len()]));
        Adam {
            v: m.clone(),
            m,
            t: 0,
        }
    }

    fn step(&mut self, params: &mut Parameters, grads: &[&Tensor], cfg: &TrainConfig, scale: f64) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        let mut i = 0;
        params.visit_mut(|p| {
            let g = grads[i].data();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                let gj = g[j] * scale;
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                *w -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            }
            i += 1;
        });
    }
}

/// Teacher-forced multi-task training with task-mixed batches.
///
/// Per-example gradients are computed concurrently and summed in batch
/// order, so results do not depend on the thread count.
pub fn train_multitask(params: &Parameters, tasks: &[TrainTask<'_>], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if tasks.is_empty() {
        return Err(Error::input("no training tasks"));
    }
    if let Some(t) = tasks.iter().find(|t| t.train.is_empty()) {
        return Err(Error::input(format!("task `{}` has no training examples", t.name)));
    }
    cfg.validate(tasks.len())?;
    let mut params = params.clone();
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut log = Vec::new();
    if cfg.steps == 0 {
        return Ok(TrainOutcome { params, losses, log });
    }

    let weights = if cfg.mixing.is_empty() {
        vec![1.0; tasks.len()]
    } else {
        cfg.mixing.clone()
    };
    let picker = WeightedIndex::new(&weights).map_err(|e| Error::input(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&params);

    for step in 1..=cfg.steps {
        let batch: Vec<&Example> = (0..cfg.batch_size)
            .map(|_| {
                let t = &tasks[picker.sample(&mut rng)];
                &t.train[rng.random_range(0..t.train.len())]
            })
            .collect();
        let per_example = batch
            .par_iter()
            .map(|ex| example_gradient(&params, ex))
            .collect::<Result<Vec<_>>>()?;

        let mut iter = per_example.into_iter();
        let (mut loss, mut total) = iter.next().expect("batch_size >= 1");
        for (l, g) in iter {
            loss += l;
            let mut flat = Vec::new();
            g.visit(|_, t| flat.push(t));
            let mut i = 0;
            total.visit_mut(|acc| {
                for (a, b) in acc.data_mut().iter_mut().zip(flat[i].data()) {
                    *a += b;
                }
                i += 1;
            });
        }
        let n = cfg.batch_size as f64;
        losses.push(loss / n);

        let mut flat = Vec::new();
        total.visit(|_, t| flat.push(t));
        let norm = flat
            .iter()
            .flat_map(|t| t.data())
            .map(|g| (g / n) * (g / n))
            .sum::<f64>()
            .sqrt();
        let mut scale = 1.0 / n;
        if cfg.clip_norm > 0.0 && norm > cfg.clip_norm {
            scale *= cfg.clip_norm / norm;
        }
        adam.step(&mut params, &flat, cfg, scale);

        let due = (cfg.log_every > 0 && step % cfg.log_every == 0) || step == cfg.steps;
        if due {
            let window = &losses[losses.len().saturating_sub(cfg.log_every.max(1))..];
            let mut dev_accuracy = Vec::new();
            for t in tasks {
                let dev = if cfg.log_dev_limit > 0 {
                    &t.dev[..t.dev.len().min(cfg.log_dev_limit)]
                } else {
                    t.dev
                };
                if !dev.is_empty() {
                    dev_accuracy.push((t.name.to_string(), eval_accuracy(&params, dev)?));
                }
            }
            log.push(LogRow {
                step,
                loss: window.iter().sum::<f64>() / window.len() as f64,
                dev_accuracy,
            });
        }
    }
    Ok(TrainOutcome { params, losses, log })
}

/// Greedy prediction for one raw input string.
pub fn predict(params: &Parameters, input: &str, max_steps: usize) -> Result<String> {
    let vocab = Vocab::new();
    let ids = greedy_decode(params, &vocab.tokenize(input), max_steps)?;
    Ok(vocab.detokenize(&ids))
}

/// Fraction of examples whose greedy-decoded string equals the gold label.
pub fn eval_accuracy(params: &Parameters, dataset: &[Example]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::input("cannot evaluate on an empty dataset"));
    }
    let hits = dataset
        .par_iter()
        .map(|ex| {
            // One step past the gold length decides the match.
            let steps = ex.label.chars().count() + 1;
            predict(params, &ex.input, steps).map(|p| (p == ex.label) as usize)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(hits as f64 / dataset.len() as f64)
}

/// Write the training log as CSV: `step,loss,<task>_dev_acc...`.
pub fn write_train_log(path: impl AsRef<Path>, log: &[LogRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let tasks: Vec<&str> = log
        .first()
        .map(|r| r.dev_accuracy.iter().map(|(n, _)| n.as_str()).collect())
        .unwrap_or_default();
    let mut header = vec!["step".to_string(), "loss".to_string()];
    header.extend(tasks.iter().map(|t| format!("{t}_dev_acc")));
    w.write_record(&header)?;
    for row in log {
        let mut rec = vec![row.step.to_string(), row.loss.to_string()];
        rec.extend(row.dev_accuracy.iter().map(|(_, a)| a.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
