//! Train the default model on the synthetic suite and report dev accuracy.
//!
//! cargo run --release --example train_toy -- [steps] [batch] [lr] [polarity weight]
//!
//! Mixing weights follow generation order, which puts polarity first.

use std::time::Instant;

use taskprune::data::generate_suite;
use taskprune::model::{ModelConfig, Parameters};
use taskprune::trainer::{predict, train_multitask, TrainConfig, TrainTask};

fn main() -> taskprune::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let suite = generate_suite(0)?;
    let base = TrainConfig::toy(&suite.names());
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let w = arg(3, 0.5);
    let rest = (1.0 - w) / 3.0;
    let cfg = TrainConfig {
        mixing: vec![w, rest, rest, rest],
        steps: arg(0, base.steps as f64) as usize,
        batch_size: arg(1, base.batch_size as f64) as usize,
        lr: arg(2, base.lr),
        log_every: 100,
        log_dev_limit: 100,
        ..base
    };
    let tasks: Vec<_> = suite
        .tasks
        .iter()
        .map(|t| TrainTask { name: &t.spec.name, train: &t.train, dev: &t.dev })
        .collect();
    let params = Parameters::init(ModelConfig::default())?;
    let start = Instant::now();
    let out = train_multitask(&params, &tasks, &cfg)?;
    for row in &out.log {
        let accs: Vec<String> = row.dev_accuracy.iter().map(|(n, a)| format!("{n}={a:.2}")).collect();
        println!("step {:5}  loss {:.4}  {}", row.step, row.loss, accs.join(" "));
    }
    let polarity = suite.get("polarity")?;
    let mut misses = 0;
    for ex in &polarity.dev {
        let got = predict(&out.params, &ex.input, 8)?;
        if got != ex.label {
            misses += 1;
            if misses <= 10 {
                println!("miss: {:?} -> {:?} (gold {})", ex.input, got, ex.label);
            }
        }
    }
    println!("polarity dev misses: {misses}/{}", polarity.dev.len());
    println!("{} steps in {:.1}s", cfg.steps, start.elapsed().as_secs_f64());
    Ok(())
}
