use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, ExperimentKind, PruneMethod, ResultRow, Scope};
use crate::attribution::{attribute_dataset, attribute_unsupervised, fpp_scores, rap_scores, AttributionMap};
use crate::data::{load_suite, sample_balanced, Example, Suite, INFERENCE_A, INFERENCE_B, POLARITY};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, registry_of, LayerGroup, Parameters, PrunableLayerId, Stack};
use crate::pruner::{
    build_mask, kept_fraction, mask_jaccard, random_mask, surgery, svd_compress_plan, DepthBand, PruneMask,
    PrunePlan,
};
use crate::trainer::eval_accuracy;

/// Mask overlap with a reference mask at one rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JaccardRow {
    pub kind: String,
    pub task: String,
    pub group: String,
    pub seed: Option<u64>,
    pub rate: f64,
    /// Mean Jaccard over the targets the plan prunes.
    pub jaccard: f64,
    /// Expected overlap of two random kept sets, `q / (2 − q)`.
    pub random_baseline: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sweep {
    pub rows: Vec<ResultRow>,
    pub jaccard: Vec<JaccardRow>,
}

/// One grid cell: a plan plus its CSV coordinates.
#[derive(Debug, Clone)]
struct Cell {
    plan: PrunePlan,
    enc_rate: f64,
    dec_rate: f64,
    group: String,
}

impl Cell {
    fn of(plan: PrunePlan, group: impl Into<String>) -> Cell {
        let (enc_rate, dec_rate) = plan.stack_rates();
        Cell {
            plan,
            enc_rate,
            dec_rate,
            group: group.into(),
        }
    }
}

fn scope_tag(scope: Scope) -> &'static str {
    match scope {
        Scope::Encoder => "encoder",
        Scope::Decoder => "decoder",
        Scope::Both => "both",
    }
}

/// A loaded checkpoint and task suite plus the experiment settings.
pub struct Experiment {
    pub params: Parameters,
    pub suite: Suite,
    pub cfg: ExperimentConfig,
}

impl Experiment {
    pub fn new(params: Parameters, suite: Suite, cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        for t in &cfg.tasks {
            suite.get(t)?;
        }
        Ok(Experiment { params, suite, cfg })
    }

    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let params = load_checkpoint(&cfg.checkpoint)?;
        let suite = load_suite(&cfg.data_dir)?;
        Experiment::new(params, suite, cfg.clone())
    }

    pub fn tasks(&self) -> Vec<String> {
        if self.cfg.tasks.is_empty() {
            self.suite.names()
        } else {
            self.cfg.tasks.clone()
        }
    }

    fn methods(&self, default: &[PruneMethod]) -> Vec<PruneMethod> {
        if self.cfg.methods.is_empty() {
            default.to_vec()
        } else {
            self.cfg.methods.clone()
        }
    }

    /// Training examples used for scoring a task.
    pub fn scoring_set(&self, task: &str) -> Result<Vec<Example>> {
        let train = &self.suite.get(task)?.train;
        let n = self.cfg.attribution_samples;
        if n == 0 || n >= train.len() {
            Ok(train.clone())
        } else {
            sample_balanced(train, n, 0)
        }
    }

    pub fn test_set(&self, task: &str) -> Result<&[Example]> {
        let test = &self.suite.get(task)?.test;
        let n = self.cfg.eval_limit;
        Ok(if n == 0 { test } else { &test[..n.min(test.len())] })
    }

    /// Scores of a mask-producing method on a set of examples.
    pub fn scores(
        &self,
        method: PruneMethod,
        task: &str,
        examples: &[Example],
        seed: Option<u64>,
    ) -> Result<Option<AttributionMap>> {
        let p = &self.params;
        let b = self.cfg.batch;
        Ok(Some(match method {
            PruneMethod::Ap => attribute_dataset(p, examples, b)?,
            PruneMethod::ApUnsup => {
                let inputs: Vec<String> = examples.iter().map(|e| e.input.clone()).collect();
                attribute_unsupervised(p, &inputs, &self.suite.get(task)?.spec.labels, b)?
            }
            PruneMethod::Fpp => fpp_scores(p, examples)?,
            PruneMethod::Rap => rap_scores(p, examples, seed.unwrap_or(0), b)?,
            PruneMethod::Svd | PruneMethod::Rp => return Ok(None),
        }))
    }

    /// Pruned parameters for one method and plan.
    pub fn prune(
        &self,
        method: PruneMethod,
        plan: &PrunePlan,
        scores: Option<&AttributionMap>,
        seed: Option<u64>,
    ) -> Result<Parameters> {
        let registry = registry_of(&self.params);
        let config = &self.params.config;
        match method {
            PruneMethod::Svd => svd_compress_plan(&self.params, plan),
            PruneMethod::Rp => surgery(
                &self.params,
                &random_mask(&registry, config, plan, seed.unwrap_or(0))?,
            ),
            _ => {
                let attr = scores.ok_or_else(|| Error::contract(format!("{method} needs scores")))?;
                surgery(&self.params, &build_mask(&registry, config, attr, plan)?)
            }
        }
    }

    pub fn mask(&self, attr: &AttributionMap, plan: &PrunePlan) -> Result<PruneMask> {
        build_mask(&registry_of(&self.params), &self.params.config, attr, plan)
    }

    /// Test accuracy and kept-parameter fraction of pruned parameters.
    pub fn evaluate(&self, pruned: &Parameters, task: &str) -> Result<(f64, f64)> {
        Ok((
            eval_accuracy(pruned, self.test_set(task)?)?,
            kept_fraction(&self.params, pruned),
        ))
    }

    fn cells(&self) -> Vec<Cell> {
        let rates = &self.cfg.rates;
        let c = &self.params.config;
        let mut out = Vec::new();
        match self.cfg.kind {
            ExperimentKind::ModuleSpecific => {
                for &p in rates {
                    out.push(Cell::of(PrunePlan::EncoderOnly { p }, "encoder"));
                    out.push(Cell::of(PrunePlan::DecoderOnly { p }, "decoder"));
                }
            }
            ExperimentKind::ModuleIntegrated => {
                for &enc in rates {
                    for &dec in rates {
                        out.push(Cell::of(PrunePlan::Integrated { enc, dec }, "integrated"));
                    }
                }
            }
            ExperimentKind::LayerType => {
                let groups = [
                    (Stack::Encoder, LayerGroup::SelfAttention),
                    (Stack::Encoder, LayerGroup::FeedForward),
                    (Stack::Decoder, LayerGroup::SelfAttention),
                    (Stack::Decoder, LayerGroup::CrossAttention),
                    (Stack::Decoder, LayerGroup::FeedForward),
                ];
                for (stack, group) in groups {
                    let layers = if stack == Stack::Encoder { c.n_enc_layers } else { c.n_dec_layers };
                    if layers == 0 {
                        continue;
                    }
                    for &p in rates {
                        let tag = format!("{}-{}", stack.tag(), group.tag());
                        out.push(Cell::of(PrunePlan::LayerType { stack, group, p }, tag));
                    }
                }
            }
            ExperimentKind::LayerDepth => {
                for (stack, layers) in [(Stack::Encoder, c.n_enc_layers), (Stack::Decoder, c.n_dec_layers)] {
                    for band in DepthBand::ALL {
                        if !(0..layers).any(|l| DepthBand::of(l, layers) == band) {
                            continue;
                        }
                        for &p in rates {
                            let tag = format!("{}-{}", stack.tag(), band.tag());
                            out.push(Cell::of(PrunePlan::LayerDepth { stack, band, p }, tag));
                        }
                    }
                }
            }
            ExperimentKind::LowResource | ExperimentKind::Unsupervised | ExperimentKind::UnseenDomain => {
                for &p in rates {
                    out.push(Cell::of(self.cfg.scope.plan(p), scope_tag(self.cfg.scope)));
                }
            }
        }
        out
    }

    fn row(&self, method: &str, task: &str, cell: &Cell, seed: Option<u64>, acc: f64, kept: f64) -> ResultRow {
        ResultRow {
            kind: self.cfg.kind.tag().to_string(),
            method: method.to_string(),
            task: task.to_string(),
            enc_rate: cell.enc_rate,
            dec_rate: cell.dec_rate,
            group: cell.group.clone(),
            seed,
            accuracy: acc,
            kept_fraction: kept,
        }
    }

    pub fn run(&self) -> Result<Sweep> {
        match self.cfg.kind {
            ExperimentKind::ModuleSpecific
            | ExperimentKind::ModuleIntegrated
            | ExperimentKind::LayerType
            | ExperimentKind::LayerDepth => self.sweep(&[
                PruneMethod::Ap,
                PruneMethod::Fpp,
                PruneMethod::Svd,
                PruneMethod::Rap,
                PruneMethod::Rp,
            ]),
            ExperimentKind::Unsupervised => self.sweep(&[PruneMethod::Ap, PruneMethod::ApUnsup]),
            ExperimentKind::LowResource => self.low_resource(),
            ExperimentKind::UnseenDomain => self.unseen_domain(),
        }
    }

    /// Every (task, method, seed, cell) in grid order.
    fn sweep(&self, default_methods: &[PruneMethod]) -> Result<Sweep> {
        let cells = self.cells();
        let mut rows = Vec::new();
        for task in self.tasks() {
            let scoring = self.scoring_set(&task)?;
            for method in self.methods(default_methods) {
                let seeds: Vec<Option<u64>> = if method.is_stochastic() {
                    self.cfg.seeds.iter().copied().map(Some).collect()
                } else {
                    vec![None]
                };
                for seed in seeds {
                    let scores = self.scores(method, &task, &scoring, seed)?;
                    for cell in &cells {
                        let pruned = self.prune(method, &cell.plan, scores.as_ref(), seed)?;
                        let (acc, kept) = self.evaluate(&pruned, &task)?;
                        rows.push(self.row(method.tag(), &task, cell, seed, acc, kept));
                    }
                }
            }
        }
        Ok(Sweep { rows, jaccard: Vec::new() })
    }

    fn jaccard_row(&self, task: &str, group: &str, seed: Option<u64>, cell: &Cell, a: &PruneMask, reference: &PruneMask) -> Result<JaccardRow> {
        let (jaccard, q) = pruned_overlap(a, reference, &cell.plan, &self.params)?;
        Ok(JaccardRow {
            kind: self.cfg.kind.tag().to_string(),
            task: task.to_string(),
            group: group.to_string(),
            seed,
            rate: cell.plan.stack_rates().0.max(cell.plan.stack_rates().1),
            jaccard,
            random_baseline: q / (2.0 - q),
        })
    }

    /// AP masks from balanced subsamples compared with the full-data mask.
    fn low_resource(&self) -> Result<Sweep> {
        let cells = self.cells();
        let mut out = Sweep::default();
        for task in self.tasks() {
            let train = &self.suite.get(&task)?.train;
            let full = self.scores(PruneMethod::Ap, &task, train, None)?.expect("AP has scores");
            let full_masks = cells
                .iter()
                .map(|c| self.mask(&full, &c.plan))
                .collect::<Result<Vec<_>>>()?;
            for (cell, mask) in cells.iter().zip(&full_masks) {
                let (acc, kept) = self.evaluate(&surgery(&self.params, mask)?, &task)?;
                out.rows.push(self.row("AP", &task, &Cell { group: "full".into(), ..cell.clone() }, None, acc, kept));
            }
            for &n in &self.cfg.sample_sizes {
                if n > train.len() {
                    continue;
                }
                let group = format!("n={n}");
                for &seed in &self.cfg.seeds {
                    let sub = sample_balanced(train, n, seed)?;
                    let attr = self.scores(PruneMethod::Ap, &task, &sub, None)?.expect("AP has scores");
                    for (cell, reference) in cells.iter().zip(&full_masks) {
                        let mask = self.mask(&attr, &cell.plan)?;
                        let (acc, kept) = self.evaluate(&surgery(&self.params, &mask)?, &task)?;
                        let c = Cell { group: group.clone(), ..cell.clone() };
                        out.rows.push(self.row("AP", &task, &c, Some(seed), acc, kept));
                        out.jaccard.push(self.jaccard_row(&task, &group, Some(seed), cell, &mask, reference)?);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Masks built from the original, a related and an unrelated task, all
    /// evaluated on the original task.
    fn unseen_domain(&self) -> Result<Sweep> {
        let cells = self.cells();
        let mut out = Sweep::default();
        let sources = [("original", INFERENCE_A), ("related", INFERENCE_B), ("unrelated", POLARITY)];
        let mut masks: BTreeMap<&str, Vec<PruneMask>> = BTreeMap::new();
        for (group, source) in sources {
            let attr = self
                .scores(PruneMethod::Ap, source, &self.scoring_set(source)?, None)?
                .expect("AP has scores");
            let ms = cells
                .iter()
                .map(|c| self.mask(&attr, &c.plan))
                .collect::<Result<Vec<_>>>()?;
            for (cell, mask) in cells.iter().zip(&ms) {
                let (acc, kept) = self.evaluate(&surgery(&self.params, mask)?, INFERENCE_A)?;
                let c = Cell { group: group.into(), ..cell.clone() };
                out.rows.push(self.row("AP", INFERENCE_A, &c, None, acc, kept));
            }
            masks.insert(group, ms);
        }
        for (group, _) in sources {
            for (i, cell) in cells.iter().enumerate() {
                out.jaccard.push(self.jaccard_row(
                    INFERENCE_A,
                    group,
                    None,
                    cell,
                    &masks[group][i],
                    &masks["original"][i],
                )?);
            }
        }
        Ok(out)
    }

    /// Test accuracy of the unpruned model.
    pub fn baseline_accuracy(&self, task: &str) -> Result<f64> {
        eval_accuracy(&self.params, self.test_set(task)?)
    }
}

/// Mean Jaccard of two masks over the targets `plan` prunes (all targets
/// when it prunes none), and the reference mask's kept fraction on them.
pub(crate) fn pruned_overlap(
    a: &PruneMask,
    reference: &PruneMask,
    plan: &PrunePlan,
    params: &Parameters,
) -> Result<(f64, f64)> {
    let (per, _) = mask_jaccard(a, reference)?;
    let pruned: Vec<&PrunableLayerId> = per.keys().filter(|id| plan.rate(id, &params.config) > 0.0).collect();
    let ids: Vec<&PrunableLayerId> = if pruned.is_empty() { per.keys().collect() } else { pruned };
    let jaccard = ids.iter().map(|id| per[*id]).sum::<f64>() / ids.len().max(1) as f64;
    let total: usize = ids.iter().map(|id| id.k).sum();
    let kept: usize = ids.iter().map(|id| reference.kept[*id].len()).sum();
    let q = if total == 0 { 1.0 } else { kept as f64 / total as f64 };
    Ok((jaccard, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_suite_with, SplitSizes};
    use crate::model::ModelConfig;

    fn experiment(kind: ExperimentKind, methods: Vec<PruneMethod>, rates: Vec<f64>) -> Experiment {
        let suite = generate_suite_with(
            0,
            SplitSizes {
                train: 8,
                dev: 2,
                test: 4,
            },
        )
        .unwrap();
        let params = Parameters::init(ModelConfig::tiny()).unwrap();
        let cfg = ExperimentConfig {
            methods,
            rates,
            seeds: vec![0, 1],
            tasks: vec![POLARITY.into()],
            sample_sizes: vec![2, 4],
            ..ExperimentConfig::new(kind, "unused", "unused", "unused")
        };
        Experiment::new(params, suite, cfg).unwrap()
    }

    #[test]
    fn rate_zero_matches_baseline_for_every_method() {
        let e = experiment(ExperimentKind::ModuleSpecific, Vec::new(), vec![0.0]);
        let base = e.baseline_accuracy(POLARITY).unwrap();
        let s = e.run().unwrap();
        // AP, FPP, SVD, RAP x2, RP x2 methods/seeds, two cells each
        assert_eq!(s.rows.len(), 7 * 2);
        for r in &s.rows {
            assert_eq!(r.accuracy, base, "{r:?}");
            assert_eq!(r.kept_fraction, 1.0);
        }
    }

    #[test]
    fn integrated_grid_size() {
        let rates = vec![0.0, 0.5, 1.0];
        let e = experiment(ExperimentKind::ModuleIntegrated, vec![PruneMethod::Ap], rates);
        let s = e.run().unwrap();
        assert_eq!(s.rows.len(), 9);
    }

    #[test]
    fn layer_groups_cover_the_model() {
        let e = experiment(ExperimentKind::LayerType, vec![PruneMethod::Rp], vec![1.0]);
        let groups: Vec<_> = e.cells().into_iter().map(|c| c.group).collect();
        assert_eq!(groups, ["enc-self", "enc-ffn", "dec-self", "dec-cross", "dec-ffn"]);
        let e = experiment(ExperimentKind::LayerDepth, vec![PruneMethod::Rp], vec![1.0]);
        let groups: Vec<_> = e.cells().into_iter().map(|c| c.group).collect();
        assert_eq!(groups, ["enc-middle", "dec-middle"]);
    }

    #[test]
    fn unsupervised_rows_pair_up() {
        let e = experiment(ExperimentKind::Unsupervised, Vec::new(), vec![0.0, 0.5]);
        let s = e.run().unwrap();
        let methods: Vec<_> = s.rows.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(methods, ["AP", "AP", "AP-unsup", "AP-unsup"]);
    }

    #[test]
    fn low_resource_full_size_reproduces_full_mask() {
        let e = experiment(ExperimentKind::LowResource, Vec::new(), vec![0.5]);
        let s = e.run().unwrap();
        // sizes 2 and 4, two seeds each
        assert_eq!(s.jaccard.len(), 4);
        let train = e.suite.get(POLARITY).unwrap().train.clone();
        let all = sample_balanced(&train, train.len(), 3).unwrap();
        let a = e.scores(PruneMethod::Ap, POLARITY, &all, None).unwrap().unwrap();
        let b = e.scores(PruneMethod::Ap, POLARITY, &train, None).unwrap().unwrap();
        let plan = PrunePlan::DecoderOnly { p: 0.5 };
        assert_eq!(e.mask(&a, &plan).unwrap().kept, e.mask(&b, &plan).unwrap().kept);
        for j in &s.jaccard {
            assert!((j.random_baseline - 0.5 / 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn unseen_domain_has_three_sources() {
        let mut e = experiment(ExperimentKind::UnseenDomain, Vec::new(), vec![0.0, 0.5]);
        e.cfg.tasks.clear();
        let s = e.run().unwrap();
        let groups: std::collections::BTreeSet<_> = s.rows.iter().map(|r| r.group.as_str()).collect();
        assert_eq!(groups.into_iter().collect::<Vec<_>>(), ["original", "related", "unrelated"]);
        assert!(s.rows.iter().all(|r| r.task == INFERENCE_A));
        let base = e.baseline_accuracy(INFERENCE_A).unwrap();
        for r in s.rows.iter().filter(|r| r.dec_rate == 0.0) {
            assert_eq!(r.accuracy, base);
        }
        assert!(s.jaccard.iter().filter(|j| j.group == "original").all(|j| j.jaccard == 1.0));
    }

    #[test]
    fn unknown_task_is_rejected() {
        let suite = generate_suite_with(0, SplitSizes { train: 4, dev: 2, test: 2 }).unwrap();
        let params = Parameters::init(ModelConfig::tiny()).unwrap();
        let cfg = ExperimentConfig {
            tasks: vec!["nope".into()],
            ..ExperimentConfig::new(ExperimentKind::ModuleSpecific, "x", "y", "z")
        };
        assert!(matches!(Experiment::new(params, suite, cfg), Err(Error::UnknownTask(_))));
    }
}
