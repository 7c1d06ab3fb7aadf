//! Compare tape gradients with central differences on a small random model,
//! one probe per parameter leaf.
//!
//! cargo run --release --example gradcheck

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taskprune::data::Example;
use taskprune::model::{forward, ModelConfig, Parameters};
use taskprune::trainer::{encode_example, example_gradient, nll_loss};

fn loss(p: &Parameters, ex: &Example) -> taskprune::Result<f64> {
    let (input, dec_in, target) = encode_example(ex);
    nll_loss(&forward(p, &input, &dec_in)?.log_probs, &target)
}

fn nudged(p: &Parameters, leaf: usize, i: usize, h: f64) -> Parameters {
    let mut q = p.clone();
    let mut n = 0;
    q.visit_mut(|t| {
        if n == leaf {
            t.data_mut()[i] += h;
        }
        n += 1;
    });
    q
}

fn main() -> taskprune::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = Parameters::init(ModelConfig::tiny())?;
    let ex = Example::new("polarity: a fine day", "POS");
    let (_, grads) = example_gradient(&params, &ex)?;
    let mut names = Vec::new();
    params.visit(|n, _| names.push(n));
    let g = grads.flatten();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (leaf, name) in names.iter().enumerate() {
        let i = rng.random_range(0..g[leaf].len());
        let numeric = (loss(&nudged(&params, leaf, i, h), &ex)? - loss(&nudged(&params, leaf, i, -h), &ex)?) / (2.0 * h);
        let analytic = g[leaf].data()[i];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
        println!("{name:24} [{i:4}] analytic {analytic:+.6e}  numeric {numeric:+.6e}  rel {rel:.1e}");
    }
    println!("{} leaves, max relative error {worst:.2e}", names.len());
    Ok(())
}
