//! Low-rank compression at matched parameter budgets: per-matrix rank,
//! kept fraction and accuracy.
//!
//! cargo run --release --example svd_baseline -- [task]

mod common;

use taskprune::pruner::{kept_fraction, svd_compress, svd_rank};
use taskprune::trainer::eval_accuracy;

fn main() -> taskprune::Result<()> {
    let task = std::env::args().nth(1).unwrap_or_else(|| "polarity".into());
    let suite = common::suite()?;
    let params = common::model(&suite)?;
    let test = &suite.get(&task)?.test[..200];
    let c = &params.config;
    println!("rate  rank(d x d)  rank(d x ff)  kept   acc");
    for i in 0..=5 {
        let p = i as f64 / 5.0;
        let svd = svd_compress(&params, p)?;
        println!(
            "{p:.1}   {:11}  {:12}  {:.3}  {:.3}",
            svd_rank(c.d_model, c.d_model, p),
            svd_rank(c.d_model, c.d_ff, p),
            kept_fraction(&params, &svd),
            eval_accuracy(&svd, test)?
        );
    }
    Ok(())
}
