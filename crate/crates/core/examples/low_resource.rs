//! Masks from a handful of labelled examples vs the mask from the whole
//! training split: accuracy and kept-set overlap.
//!
//! cargo run --release --example low_resource -- [rate]

mod common;

use taskprune::harness::{summarize, Experiment, ExperimentConfig, ExperimentKind};

fn main() -> taskprune::Result<()> {
    let rate = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let suite = common::suite()?;
    let params = common::model(&suite)?;
    let mut cfg = ExperimentConfig::new(ExperimentKind::LowResource, "", "", "");
    cfg.tasks = vec!["polarity".into()];
    cfg.rates = vec![rate];
    cfg.sample_sizes = vec![10, 100];
    cfg.seeds = vec![0, 1, 2];
    cfg.eval_limit = 200;
    let sweep = Experiment::new(params, suite, cfg)?.run()?;
    for s in summarize(&sweep.rows) {
        println!("{:6} n={} acc {:.3}", s.group, s.n, s.mean_accuracy);
    }
    for j in &sweep.jaccard {
        println!("{:6} seed {:?}  jaccard {:.3}  random {:.3}", j.group, j.seed, j.jaccard, j.random_baseline);
    }
    Ok(())
}
