//! Experiment runner: rate sweeps, low-resource, unsupervised and
//! unseen-domain studies, on-demand serving and plots.

mod experiments;
mod plot;
mod serve;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use experiments::{Experiment, JaccardRow, Sweep};
pub use plot::{render_plots, render_svg};
pub use serve::{infer_on_demand, MaskStore, Server};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ModuleSpecific,
    ModuleIntegrated,
    LayerType,
    LayerDepth,
    LowResource,
    Unsupervised,
    UnseenDomain,
}

impl ExperimentKind {
    pub fn tag(self) -> &'static str {
        match self {
            ExperimentKind::ModuleSpecific => "module-specific",
            ExperimentKind::ModuleIntegrated => "module-integrated",
            ExperimentKind::LayerType => "layer-type",
            ExperimentKind::LayerDepth => "layer-depth",
            ExperimentKind::LowResource => "low-resource",
            ExperimentKind::Unsupervised => "unsupervised",
            ExperimentKind::UnseenDomain => "unseen-domain",
        }
    }
}

/// Pruning method compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PruneMethod {
    /// Supervised attribution.
    #[serde(rename = "AP")]
    Ap,
    /// Label-free attribution over the task's candidate labels.
    #[serde(rename = "AP-unsup")]
    ApUnsup,
    #[serde(rename = "FPP")]
    Fpp,
    #[serde(rename = "SVD")]
    Svd,
    /// Attribution against random non-label targets.
    #[serde(rename = "RAP")]
    Rap,
    /// Random kept sets.
    #[serde(rename = "RP")]
    Rp,
}

impl PruneMethod {
    pub const ALL: [PruneMethod; 6] = [
        PruneMethod::Ap,
        PruneMethod::ApUnsup,
        PruneMethod::Fpp,
        PruneMethod::Svd,
        PruneMethod::Rap,
        PruneMethod::Rp,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            PruneMethod::Ap => "AP",
            PruneMethod::ApUnsup => "AP-unsup",
            PruneMethod::Fpp => "FPP",
            PruneMethod::Svd => "SVD",
            PruneMethod::Rap => "RAP",
            PruneMethod::Rp => "RP",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, PruneMethod::Rap | PruneMethod::Rp)
    }
}

impl fmt::Display for PruneMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PruneMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PruneMethod::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::input(format!("unknown method `{s}`")))
    }
}

/// Which stacks the single-rate studies (low-resource, unsupervised,
/// unseen-domain) prune.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    Encoder,
    Decoder,
    Both,
}

impl Scope {
    pub fn plan(self, p: f64) -> crate::pruner::PrunePlan {
        use crate::pruner::PrunePlan;
        match self {
            Scope::Encoder => PrunePlan::EncoderOnly { p },
            Scope::Decoder => PrunePlan::DecoderOnly { p },
            Scope::Both => PrunePlan::Uniform { p },
        }
    }
}

pub fn default_rates() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_batch() -> usize {
    16
}

fn default_sample_sizes() -> Vec<usize> {
    vec![10, 100, 1000]
}

fn default_scope() -> Scope {
    Scope::Decoder
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub methods: Vec<PruneMethod>,
    #[serde(default = "default_rates")]
    pub rates: Vec<f64>,
    /// Seeds of the stochastic methods (and of low-resource sampling).
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub checkpoint: PathBuf,
    /// Suite directory written by `gen-data`.
    pub data_dir: PathBuf,
    #[serde(default)]
    pub tasks: Vec<String>,
    pub output_dir: PathBuf,
    /// Attribution mini-batch size.
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Balanced training subsample used for scoring (0: whole split).
    #[serde(default)]
    pub attribution_samples: usize,
    /// Evaluate on the first N test examples (0: whole split).
    #[serde(default)]
    pub eval_limit: usize,
    #[serde(default = "default_sample_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_scope")]
    pub scope: Scope,
}

impl ExperimentConfig {
    /// A config with defaults for everything but the required fields.
    pub fn new(kind: ExperimentKind, checkpoint: impl Into<PathBuf>, data_dir: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            kind,
            methods: Vec::new(),
            rates: default_rates(),
            seeds: default_seeds(),
            checkpoint: checkpoint.into(),
            data_dir: data_dir.into(),
            tasks: Vec::new(),
            output_dir: output_dir.into(),
            batch: default_batch(),
            attribution_samples: 0,
            eval_limit: 0,
            sample_sizes: default_sample_sizes(),
            scope: default_scope(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() || self.rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::input("rate grid must be non-empty and within [0, 1]"));
        }
        if self.methods.iter().any(|m| m.is_stochastic()) && self.seeds.is_empty() {
            return Err(Error::input("stochastic methods need at least one seed"));
        }
        if self.batch == 0 {
            return Err(Error::input("attribution batch must be >= 1"));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

/// One evaluated (method, task, rates, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub kind: String,
    pub method: String,
    pub task: String,
    pub enc_rate: f64,
    pub dec_rate: f64,
    pub group: String,
    pub seed: Option<u64>,
    pub accuracy: f64,
    pub kept_fraction: f64,
}

pub const RESULT_HEADER: [&str; 9] = [
    "kind",
    "method",
    "task",
    "enc_rate",
    "dec_rate",
    "group",
    "seed",
    "accuracy",
    "kept_fraction",
];

/// Mean and sample standard deviation of one cell over its seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub kind: String,
    pub method: String,
    pub task: String,
    pub enc_rate: f64,
    pub dec_rate: f64,
    pub group: String,
    pub n: usize,
    pub mean_accuracy: f64,
    /// Empty when `n < 2`.
    pub std_accuracy: Option<f64>,
    pub mean_kept_fraction: f64,
}

fn cell_key(r: &ResultRow) -> (String, String, String, u64, u64, String) {
    (
        r.kind.clone(),
        r.method.clone(),
        r.task.clone(),
        r.enc_rate.to_bits(),
        r.dec_rate.to_bits(),
        r.group.clone(),
    )
}

/// Per-cell mean and `n − 1` standard deviation, in first-appearance order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut order = Vec::new();
    let mut cells: BTreeMap<_, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let key = cell_key(r);
        if !cells.contains_key(&key) {
            order.push(key.clone());
        }
        cells.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rs = &cells[&key];
            let n = rs.len();
            let mean = rs.iter().map(|r| r.accuracy).sum::<f64>() / n as f64;
            let std = (n >= 2).then(|| {
                let ss: f64 = rs.iter().map(|r| (r.accuracy - mean).powi(2)).sum();
                (ss / (n - 1) as f64).sqrt()
            });
            let first = rs[0];
            SummaryRow {
                kind: first.kind.clone(),
                method: first.method.clone(),
                task: first.task.clone(),
                enc_rate: first.enc_rate,
                dec_rate: first.dec_rate,
                group: first.group.clone(),
                n,
                mean_accuracy: mean,
                std_accuracy: std,
                mean_kept_fraction: rs.iter().map(|r| r.kept_fraction).sum::<f64>() / n as f64,
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a result CSV; errors name the offending line.
pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RESULT_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`", RESULT_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize::<ResultRow>().enumerate() {
        let row = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: e.to_string(),
        })?;
        if !(0.0..=1.0).contains(&row.accuracy) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("accuracy {} outside [0, 1]", row.accuracy),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Files written by one experiment run.
#[derive(Debug, Clone, Default)]
pub struct RunFiles {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub jaccard: Option<PathBuf>,
}

/// Write `<kind>.csv`, `<kind>_summary.csv` and, when given,
/// `<kind>_jaccard.csv` into `dir`.
pub fn write_outputs(dir: &Path, kind: ExperimentKind, sweep: &Sweep) -> Result<RunFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let results = dir.join(format!("{}.csv", kind.tag()));
    let summary = dir.join(format!("{}_summary.csv", kind.tag()));
    write_csv(&results, &sweep.rows)?;
    write_csv(&summary, &summarize(&sweep.rows))?;
    let jaccard = if sweep.jaccard.is_empty() {
        None
    } else {
        let p = dir.join(format!("{}_jaccard.csv", kind.tag()));
        write_csv(&p, &sweep.jaccard)?;
        Some(p)
    };
    Ok(RunFiles { results, summary, jaccard })
}

/// Load the checkpoint and suite named by `cfg`, run its experiment and
/// write the CSV outputs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(Sweep, RunFiles)> {
    cfg.validate()?;
    let exp = Experiment::load(cfg)?;
    let sweep = exp.run()?;
    let files = write_outputs(&cfg.output_dir, cfg.kind, &sweep)?;
    Ok((sweep, files))
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<(Sweep, RunFiles)> {
    match cfg.kind {
        ExperimentKind::ModuleSpecific
        | ExperimentKind::ModuleIntegrated
        | ExperimentKind::LayerType
        | ExperimentKind::LayerDepth => run_experiment(cfg),
        other => Err(Error::input(format!("`{}` is not a sweep experiment", other.tag()))),
    }
}

pub fn run_low_resource(cfg: &ExperimentConfig) -> Result<(Sweep, RunFiles)> {
    expect_kind(cfg, ExperimentKind::LowResource)?;
    run_experiment(cfg)
}

pub fn run_unsupervised(cfg: &ExperimentConfig) -> Result<(Sweep, RunFiles)> {
    expect_kind(cfg, ExperimentKind::Unsupervised)?;
    run_experiment(cfg)
}

pub fn run_unseen_domain(cfg: &ExperimentConfig) -> Result<(Sweep, RunFiles)> {
    expect_kind(cfg, ExperimentKind::UnseenDomain)?;
    run_experiment(cfg)
}

fn expect_kind(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if cfg.kind != kind {
        return Err(Error::input(format!(
            "config kind is `{}`, expected `{}`",
            cfg.kind.tag(),
            kind.tag()
        )));
    }
    Ok(())
}
