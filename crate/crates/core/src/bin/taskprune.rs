use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use taskprune::attribution::{load_attribution, save_attribution};
use taskprune::data::{generate_suite, load_suite, sample_balanced, save_suite};
use taskprune::harness::{
    render_plots, run_low_resource, run_sweep, run_unseen_domain, run_unsupervised, summarize, Experiment,
    ExperimentConfig, ExperimentKind, MaskStore, PruneMethod, Scope, Server, Sweep,
};
use taskprune::model::{load_checkpoint, registry_of, save_checkpoint, ModelConfig, Parameters};
use taskprune::pruner::{build_mask, kept_fraction, random_mask, save_mask, surgery, PrunePlan};
use taskprune::trainer::{eval_accuracy, train_multitask, write_train_log, TrainConfig, TrainTask};
use taskprune::Error;

#[derive(Parser)]
#[command(name = "taskprune", version, about = "Task-specific structured pruning of a toy encoder-decoder")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic task suite.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model on every task of a suite.
    Train(TrainArgs),
    /// Score prunable targets for one task.
    Attribute(AttributeArgs),
    /// Build a mask from scores (or at random).
    Prune(PruneArgs),
    /// Accuracy on one split, optionally after pruning.
    Eval(EvalArgs),
    /// Rate sweep (module-specific, module-integrated, layer-type, layer-depth).
    Sweep(ExperimentArgs),
    /// Masks from small balanced samples vs the full training split.
    LowResource(ExperimentArgs),
    /// Label-free attribution over candidate labels vs supervised.
    Unsupervised(ExperimentArgs),
    /// Masks from original, related and unrelated tasks on inference-a.
    Unseen(ExperimentArgs),
    /// Serve tasks from one loaded checkpoint using stored masks.
    Infer(InferArgs),
    /// Render result CSVs as SVG line charts.
    Plot {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Recipe {
    /// 2000 steps, batch 16, polarity oversampled.
    Toy,
    /// 3000 steps, batch 32, lr 3e-4, uniform mixing.
    Full,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// TrainConfig JSON; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ModelConfig JSON.
    #[arg(long, conflicts_with = "tiny")]
    model_config: Option<PathBuf>,
    #[arg(long)]
    tiny: bool,
    #[arg(long, value_enum, default_value_t = Recipe::Toy)]
    recipe: Recipe,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Seeds both initialisation and batch sampling.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    mixing: Option<Vec<f64>>,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    log_every: Option<usize>,
}

#[derive(Args)]
struct AttributeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    task: String,
    #[arg(long, default_value = "AP", value_parser = ["AP", "AP-unsup", "FPP", "RAP"], ignore_case = true)]
    method: String,
    #[arg(long)]
    out: PathBuf,
    /// Balanced training subsample size (0: whole split).
    #[arg(long, default_value_t = 0)]
    samples: usize,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    /// Subsample and RAP target seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
#[group(id = "source", required = true, args = ["scores", "random_seed"])]
struct PruneArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Attribution file from `attribute`.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Draw a random mask with this seed instead.
    #[arg(long)]
    random_seed: Option<u64>,
    #[arg(long, default_value_t = 0.0)]
    enc_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    dec_rate: f64,
    /// PrunePlan JSON; replaces the rate flags.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long, required_unless_present = "store")]
    out: Option<PathBuf>,
    /// Save into a mask store under --task.
    #[arg(long, requires = "task")]
    store: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    task: String,
    #[arg(long, default_value = "test", value_parser = ["train", "dev", "test"])]
    split: String,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    limit: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    /// ExperimentConfig JSON; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Only for `sweep` without a config file.
    #[arg(long, value_enum)]
    kind: Option<SweepKind>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    tasks: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<PruneMethod>>,
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    eval_limit: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    sample_sizes: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    scope: Option<ScopeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    ModuleSpecific,
    ModuleIntegrated,
    LayerType,
    LayerDepth,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Encoder,
    Decoder,
    Both,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    store: PathBuf,
    /// Repeat to serve several tasks in turn.
    #[arg(long, required = true)]
    task: Vec<String>,
    /// Full model inputs, task prefix included.
    #[arg(long)]
    input: Vec<String>,
    /// One input per line.
    #[arg(long)]
    input_file: Option<PathBuf>,
    /// Without explicit inputs, serve the first --limit test inputs of
    /// each task from this suite.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    limit: usize,
    #[arg(long, default_value_t = 16)]
    max_steps: usize,
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Cmd) -> Outcome {
    match cmd {
        Cmd::GenData { out, seed } => {
            let suite = generate_suite(seed)?;
            save_suite(&out, &suite)?;
            for t in &suite.tasks {
                println!("{}: {}/{}/{}", t.spec.name, t.train.len(), t.dev.len(), t.test.len());
            }
            Ok(())
        }
        Cmd::Train(a) => train(a),
        Cmd::Attribute(a) => attribute(a),
        Cmd::Prune(a) => prune(a),
        Cmd::Eval(a) => eval(a),
        Cmd::Sweep(a) => {
            let kind = match a.kind {
                Some(SweepKind::ModuleSpecific) | None => ExperimentKind::ModuleSpecific,
                Some(SweepKind::ModuleIntegrated) => ExperimentKind::ModuleIntegrated,
                Some(SweepKind::LayerType) => ExperimentKind::LayerType,
                Some(SweepKind::LayerDepth) => ExperimentKind::LayerDepth,
            };
            let cfg = experiment_config(&a, kind)?;
            report(run_sweep(&cfg)?)
        }
        Cmd::LowResource(a) => report(run_low_resource(&experiment_config(&a, ExperimentKind::LowResource)?)?),
        Cmd::Unsupervised(a) => report(run_unsupervised(&experiment_config(&a, ExperimentKind::Unsupervised)?)?),
        Cmd::Unseen(a) => report(run_unseen_domain(&experiment_config(&a, ExperimentKind::UnseenDomain)?)?),
        Cmd::Infer(a) => infer(a),
        Cmd::Plot { out, csv } => {
            for f in render_plots(&csv, &out)? {
                println!("{}", f.display());
            }
            Ok(())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Outcome<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

fn train(a: TrainArgs) -> Outcome {
    let suite = load_suite(&a.data)?;
    let mut cfg = match (&a.config, a.recipe) {
        (Some(p), _) => read_json::<TrainConfig>(p)?,
        (None, Recipe::Toy) => TrainConfig::toy(&suite.names()),
        (None, Recipe::Full) => TrainConfig::default(),
    };
    let mut model = match &a.model_config {
        Some(p) => read_json::<ModelConfig>(p)?,
        None if a.tiny => ModelConfig::tiny(),
        None => ModelConfig::default(),
    };
    if let Some(v) = a.steps {
        cfg.steps = v;
    }
    if let Some(v) = a.batch {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
        model.seed = v;
    }
    if let Some(v) = a.mixing {
        cfg.mixing = v;
    }
    if let Some(v) = a.log_every {
        cfg.log_every = v;
    }
    let tasks: Vec<TrainTask> = suite
        .tasks
        .iter()
        .map(|t| TrainTask {
            name: &t.spec.name,
            train: &t.train,
            dev: &t.dev,
        })
        .collect();
    let out = train_multitask(&Parameters::init(model)?, &tasks, &cfg)?;
    save_checkpoint(&a.out, &out.params)?;
    if let Some(log) = &a.log {
        write_train_log(log, &out.log)?;
    }
    for t in &suite.tasks {
        println!("{} dev accuracy {:.4}", t.spec.name, eval_accuracy(&out.params, &t.dev)?);
    }
    Ok(())
}

fn attribute(a: AttributeArgs) -> Outcome {
    let params = load_checkpoint(&a.checkpoint)?;
    let suite = load_suite(&a.data)?;
    let method: PruneMethod = a.method.parse()?;
    let train = &suite.get(&a.task)?.train;
    let examples = if a.samples == 0 || a.samples >= train.len() {
        train.clone()
    } else {
        sample_balanced(train, a.samples, a.seed)?
    };
    let mut cfg = ExperimentConfig::new(ExperimentKind::ModuleSpecific, &a.checkpoint, &a.data, ".");
    cfg.batch = a.batch;
    let exp = Experiment::new(params, suite.clone(), cfg)?;
    let map = exp
        .scores(method, &a.task, &examples, Some(a.seed))?
        .ok_or_else(|| Failure::Usage(format!("{method} does not produce scores")))?;
    save_attribution(&a.out, &map)?;
    println!("{} targets scored from {} examples", map.scores.len(), map.samples);
    Ok(())
}

fn prune(a: PruneArgs) -> Outcome {
    let params = load_checkpoint(&a.checkpoint)?;
    let plan = match &a.plan {
        Some(p) => read_json::<PrunePlan>(p)?,
        None => PrunePlan::Integrated {
            enc: a.enc_rate,
            dec: a.dec_rate,
        },
    };
    let registry = registry_of(&params);
    let mask = match (&a.scores, a.random_seed) {
        (Some(path), _) => build_mask(&registry, &params.config, &load_attribution(path)?, &plan)?,
        (None, Some(seed)) => random_mask(&registry, &params.config, &plan, seed)?,
        (None, None) => unreachable!("clap requires a mask source"),
    };
    let pruned = surgery(&params, &mask)?;
    if let Some(out) = &a.out {
        save_mask(out, &mask)?;
        println!("{}", out.display());
    }
    if let (Some(dir), Some(task)) = (&a.store, &a.task) {
        println!("{}", MaskStore::new(dir).save(task, &mask)?.display());
    }
    println!(
        "kept neurons {:.4}, kept parameters {:.4}",
        mask.kept_neuron_fraction(),
        kept_fraction(&params, &pruned)
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Outcome {
    let params = load_checkpoint(&a.checkpoint)?;
    let suite = load_suite(&a.data)?;
    let split = suite.get(&a.task)?.split(&a.split)?;
    let split = if a.limit == 0 { split } else { &split[..a.limit.min(split.len())] };
    let model = match &a.mask {
        Some(m) => surgery(&params, &taskprune::pruner::load_mask(m)?)?,
        None => params.clone(),
    };
    println!("{:.6}", eval_accuracy(&model, split)?);
    Ok(())
}

fn experiment_config(a: &ExperimentArgs, kind: ExperimentKind) -> Outcome<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => {
            let need = |v: &Option<PathBuf>, flag: &str| {
                v.clone()
                    .ok_or_else(|| Failure::Usage(format!("--{flag} is required without --config")))
            };
            ExperimentConfig::new(kind, need(&a.checkpoint, "checkpoint")?, need(&a.data, "data")?, need(&a.out, "out")?)
        }
    };
    if a.config.is_some() && a.kind.is_some() {
        return Err(Failure::Usage("--kind conflicts with --config".into()));
    }
    if let Some(v) = &a.checkpoint {
        cfg.checkpoint = v.clone();
    }
    if let Some(v) = &a.data {
        cfg.data_dir = v.clone();
    }
    if let Some(v) = &a.out {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = &a.tasks {
        cfg.tasks = v.clone();
    }
    if let Some(v) = &a.methods {
        cfg.methods = v.clone();
    }
    if let Some(v) = &a.rates {
        cfg.rates = v.clone();
    }
    if let Some(v) = &a.seeds {
        cfg.seeds = v.clone();
    }
    if let Some(v) = a.batch {
        cfg.batch = v;
    }
    if let Some(v) = a.samples {
        cfg.attribution_samples = v;
    }
    if let Some(v) = a.eval_limit {
        cfg.eval_limit = v;
    }
    if let Some(v) = &a.sample_sizes {
        cfg.sample_sizes = v.clone();
    }
    if let Some(v) = a.scope {
        cfg.scope = match v {
            ScopeArg::Encoder => Scope::Encoder,
            ScopeArg::Decoder => Scope::Decoder,
            ScopeArg::Both => Scope::Both,
        };
    }
    Ok(cfg)
}

fn report((sweep, files): (Sweep, taskprune::harness::RunFiles)) -> Outcome {
    println!("{} rows, {} cells", sweep.rows.len(), summarize(&sweep.rows).len());
    println!("{}", files.results.display());
    println!("{}", files.summary.display());
    if let Some(j) = files.jaccard {
        println!("{}", j.display());
    }
    Ok(())
}

fn infer(a: InferArgs) -> Outcome {
    let mut explicit = a.input.clone();
    if let Some(path) = &a.input_file {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        explicit.extend(text.lines().filter(|l| !l.is_empty()).map(str::to_string));
    }
    let suite = match &a.data {
        Some(d) => Some(load_suite(d)?),
        None => None,
    };
    if explicit.is_empty() && suite.is_none() {
        return Err(Failure::Usage("give --input, --input-file or --data".into()));
    }
    let mut server = Server::new(load_checkpoint(&a.checkpoint)?, MaskStore::new(&a.store));
    server.max_steps = a.max_steps;
    for task in &a.task {
        let inputs = match &suite {
            Some(s) if explicit.is_empty() => {
                let test = &s.get(task)?.test;
                test[..a.limit.min(test.len())].iter().map(|e| e.input.clone()).collect()
            }
            _ => explicit.clone(),
        };
        if a.task.len() > 1 {
            println!("# {task}");
        }
        for out in server.serve(task, &inputs)? {
            println!("{out}");
        }
    }
    Ok(())
}
