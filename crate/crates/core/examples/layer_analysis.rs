//! Prune one layer type or one depth band at a time to see which parts of
//! the network a task depends on.
//!
//! cargo run --release --example layer_analysis -- [task]

mod common;

use taskprune::harness::{summarize, Experiment, ExperimentConfig, ExperimentKind, PruneMethod};

fn main() -> taskprune::Result<()> {
    let task = std::env::args().nth(1).unwrap_or_else(|| "polarity".into());
    let suite = common::suite()?;
    let params = common::model(&suite)?;
    for kind in [ExperimentKind::LayerType, ExperimentKind::LayerDepth] {
        let mut cfg = ExperimentConfig::new(kind, "", "", "");
        cfg.tasks = vec![task.clone()];
        cfg.methods = vec![PruneMethod::Ap, PruneMethod::Rp];
        cfg.rates = vec![0.5, 0.9];
        cfg.seeds = vec![0, 1];
        cfg.attribution_samples = 128;
        cfg.eval_limit = 200;
        let sweep = Experiment::new(params.clone(), suite.clone(), cfg)?.run()?;
        println!("{}", kind.tag());
        for s in summarize(&sweep.rows) {
            let p = s.enc_rate.max(s.dec_rate);
            println!("  {:12} {:3} {p:.1}  acc {:.3}  kept {:.3}", s.group, s.method, s.mean_accuracy, s.mean_kept_fraction);
        }
    }
    Ok(())
}
