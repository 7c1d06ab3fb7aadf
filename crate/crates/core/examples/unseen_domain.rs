//! Score on one task and evaluate on another: masks from the original task,
//! a related task and an unrelated task, all tested on the original.
//!
//! cargo run --release --example unseen_domain

mod common;

use taskprune::harness::{summarize, Experiment, ExperimentConfig, ExperimentKind};

fn main() -> taskprune::Result<()> {
    let suite = common::suite()?;
    let params = common::model(&suite)?;
    let mut cfg = ExperimentConfig::new(ExperimentKind::UnseenDomain, "", "", "");
    cfg.rates = vec![0.25, 0.5, 0.75];
    cfg.attribution_samples = 128;
    cfg.eval_limit = 200;
    let sweep = Experiment::new(params, suite, cfg)?.run()?;
    for s in summarize(&sweep.rows) {
        println!("{:10} {:.2}  acc on {} {:.3}", s.group, s.enc_rate.max(s.dec_rate), s.task, s.mean_accuracy);
    }
    for j in &sweep.jaccard {
        println!("{:10} {:.2}  overlap with original {:.3} (random {:.3})", j.group, j.rate, j.jaccard, j.random_baseline);
    }
    Ok(())
}
