//! Keep one model in memory and a directory of per-task masks; each request
//! prunes a copy for its task.
//!
//! cargo run --release --example on_demand_inference

mod common;

use taskprune::attribution::attribute_dataset;
use taskprune::data::sample_balanced;
use taskprune::harness::{MaskStore, Server};
use taskprune::model::registry_of;
use taskprune::pruner::{build_mask, PrunePlan};

fn main() -> taskprune::Result<()> {
    let suite = common::suite()?;
    let params = common::model(&suite)?;
    let store = MaskStore::new(common::out_dir("masks"));
    let reg = registry_of(&params);
    let plan = PrunePlan::DecoderOnly { p: 0.5 };
    for task in suite.names() {
        let scoring = sample_balanced(&suite.get(&task)?.train, 64, 0)?;
        let mask = build_mask(&reg, &params.config, &attribute_dataset(&params, &scoring, 16)?, &plan)?;
        let path = store.save(&task, &mask)?;
        println!("{task}: kept {:.2} of neurons -> {}", mask.kept_neuron_fraction(), path.display());
    }
    let server = Server::new(params, store);
    for task in suite.names() {
        let examples = &suite.get(&task)?.test[..4];
        let inputs: Vec<String> = examples.iter().map(|e| e.input.clone()).collect();
        for (ex, out) in examples.iter().zip(server.serve(&task, &inputs)?) {
            println!("{:40} -> {out:10} (gold {})", ex.input, ex.label);
        }
    }
    Ok(())
}
