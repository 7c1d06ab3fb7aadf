//! Encoder-only and decoder-only rate sweeps for every method, written as
//! CSVs and SVG charts.
//!
//! cargo run --release --example module_sweep -- [eval limit]

mod common;

use taskprune::harness::{render_plots, summarize, write_outputs, Experiment, ExperimentConfig, ExperimentKind};

fn main() -> taskprune::Result<()> {
    let limit = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let suite = common::suite()?;
    let params = common::model(&suite)?;
    let out = common::out_dir("module-sweep");
    let mut cfg = ExperimentConfig::new(ExperimentKind::ModuleSpecific, "", "", &out);
    cfg.rates = vec![0.0, 0.25, 0.5, 0.75];
    cfg.seeds = vec![0, 1, 2];
    cfg.attribution_samples = 128;
    cfg.eval_limit = limit;
    let sweep = Experiment::new(params, suite, cfg)?.run()?;
    for s in summarize(&sweep.rows).iter().filter(|s| s.task == "polarity" && s.group == "decoder") {
        let std = s.std_accuracy.map(|v| format!(" ± {v:.3}")).unwrap_or_default();
        println!("{:4} dec {:.2}  acc {:.3}{std}", s.method, s.dec_rate, s.mean_accuracy);
    }
    let files = write_outputs(&out, ExperimentKind::ModuleSpecific, &sweep)?;
    let plots = render_plots(&[&files.results], out.join("plots"))?;
    println!("{} rows in {}, {} charts", sweep.rows.len(), files.results.display(), plots.len());
    Ok(())
}
