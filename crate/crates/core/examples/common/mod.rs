//! Shared setup for the examples.
//!
//! A checkpoint is taken from `TASKPRUNE_CKPT` when set. Otherwise the
//! default model is trained on `generate_suite(0)` for `TASKPRUNE_STEPS`
//! steps (default 600) and cached in the system temp directory, so the
//! first example run is the slow one.

#![allow(dead_code)]

use std::path::PathBuf;
use std::time::Instant;

use taskprune::data::{generate_suite, Suite};
use taskprune::model::{load_checkpoint, save_checkpoint, ModelConfig, Parameters};
use taskprune::trainer::{train_multitask, TrainConfig, TrainTask};
use taskprune::Result;

pub fn suite() -> Result<Suite> {
    generate_suite(0)
}

pub fn checkpoint_path() -> PathBuf {
    if let Ok(p) = std::env::var("TASKPRUNE_CKPT") {
        return p.into();
    }
    std::env::temp_dir().join(format!("taskprune-example-{}.ckpt", steps()))
}

fn steps() -> usize {
    std::env::var("TASKPRUNE_STEPS").ok().and_then(|s| s.parse().ok()).unwrap_or(600)
}

pub fn model(suite: &Suite) -> Result<Parameters> {
    let path = checkpoint_path();
    if path.exists() {
        return load_checkpoint(&path);
    }
    let cfg = TrainConfig {
        steps: steps(),
        ..TrainConfig::toy(&suite.names())
    };
    eprintln!("training the default model for {} steps (cached at {})", cfg.steps, path.display());
    let tasks: Vec<_> = suite
        .tasks
        .iter()
        .map(|t| TrainTask { name: &t.spec.name, train: &t.train, dev: &t.dev })
        .collect();
    let start = Instant::now();
    let out = train_multitask(&Parameters::init(ModelConfig::default())?, &tasks, &cfg)?;
    eprintln!("trained in {:.0}s", start.elapsed().as_secs_f64());
    save_checkpoint(&path, &out.params)?;
    Ok(out.params)
}

pub fn out_dir(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("taskprune-{name}"))
}
