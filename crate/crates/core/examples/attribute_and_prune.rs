//! Score neurons for one task, prune the decoder at a few rates and compare
//! against random pruning.
//!
//! cargo run --release --example attribute_and_prune -- [task] [samples]

mod common;

use taskprune::attribution::attribute_dataset;
use taskprune::data::sample_balanced;
use taskprune::model::registry_of;
use taskprune::pruner::{build_mask, kept_fraction, random_mask, surgery, PrunePlan};
use taskprune::trainer::eval_accuracy;

fn main() -> taskprune::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let task = args.first().map(String::as_str).unwrap_or("polarity");
    let samples = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(128);
    let suite = common::suite()?;
    let params = common::model(&suite)?;
    let data = suite.get(task)?;
    let test = &data.test[..200.min(data.test.len())];

    let scoring = sample_balanced(&data.train, samples, 0)?;
    let attr = attribute_dataset(&params, &scoring, 16)?;
    let reg = registry_of(&params);
    println!("{task}: {} targets scored on {} examples", reg.len(), scoring.len());
    println!("unpruned accuracy {:.3}", eval_accuracy(&params, test)?);
    println!("rate   AP     RP     kept");
    for p in [0.2, 0.4, 0.6, 0.8] {
        let plan = PrunePlan::DecoderOnly { p };
        let ap = surgery(&params, &build_mask(&reg, &params.config, &attr, &plan)?)?;
        let rp = surgery(&params, &random_mask(&reg, &params.config, &plan, 0)?)?;
        println!(
            "{p:.1}   {:.3}  {:.3}  {:.3}",
            eval_accuracy(&ap, test)?,
            eval_accuracy(&rp, test)?,
            kept_fraction(&params, &ap)
        );
    }
    Ok(())
}
