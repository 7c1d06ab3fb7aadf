//! Label-free attribution: scores summed in magnitude over every candidate
//! label compared with supervised scores, on unlabeled inputs.
//!
//! cargo run --release --example unsupervised

mod common;

use taskprune::harness::{summarize, Experiment, ExperimentConfig, ExperimentKind, Scope};

fn main() -> taskprune::Result<()> {
    let suite = common::suite()?;
    let params = common::model(&suite)?;
    let mut cfg = ExperimentConfig::new(ExperimentKind::Unsupervised, "", "", "");
    cfg.rates = vec![0.3, 0.6];
    cfg.attribution_samples = 64;
    cfg.eval_limit = 200;
    cfg.scope = Scope::Decoder;
    let exp = Experiment::new(params, suite, cfg)?;
    for task in exp.tasks() {
        println!("{task}: unpruned {:.3}", exp.baseline_accuracy(&task)?);
    }
    for s in summarize(&exp.run()?.rows) {
        println!("{:16} {:8} dec {:.1}  acc {:.3}", s.task, s.method, s.dec_rate, s.mean_accuracy);
    }
    Ok(())
}
