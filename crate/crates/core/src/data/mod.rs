//! Synthetic task suite, tokenization, file IO and balanced sampling.

mod io;
mod tasks;
mod vocab;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use io::{load_jsonl, load_suite, load_task_spec, save_jsonl, save_suite, save_task_spec};
pub use tasks::{
    default_specs, generate_suite, generate_suite_with, generate_task, Example, Generator, SplitSizes,
    Suite, TaskData, TaskSpec, INFERENCE_A, INFERENCE_B, PARITY, POLARITY,
};
pub use vocab::{TokenId, Vocab, BOS, EOS, PAD, UNK, UNK_PLACEHOLDER};

use crate::error::{Error, Result};

/// Draw `n` examples with an equal count per label, uniformly within each
/// class. The subset keeps the dataset's order.
pub fn sample_balanced(dataset: &[Example], n: usize, seed: u64) -> Result<Vec<Example>> {
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, ex) in dataset.iter().enumerate() {
        by_class.entry(ex.label.as_str()).or_default().push(i);
    }
    let classes = by_class.len();
    if classes == 0 {
        return Err(Error::input("cannot sample from an empty dataset"));
    }
    if n % classes != 0 {
        return Err(Error::input(format!(
            "sample size {n} is not divisible by {classes} classes"
        )));
    }
    let per_class = n / classes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(n);
    for (label, idx) in &by_class {
        if idx.len() < per_class {
            return Err(Error::input(format!(
                "class `{label}` has {} examples, {per_class} requested",
                idx.len()
            )));
        }
        let chosen = rand::seq::index::sample(&mut rng, idx.len(), per_class);
        picked.extend(chosen.into_iter().map(|j| idx[j]));
    }
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| dataset[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn data() -> Vec<Example> {
        (0..40)
            .map(|i| Example::new(format!("x{i}"), if i % 4 == 0 { "a" } else { "b" }))
            .collect()
    }

    #[test]
    fn five_per_class() {
        let s = sample_balanced(&data(), 10, 1).unwrap();
        assert_eq!(s.iter().filter(|e| e.label == "a").count(), 5);
        assert_eq!(s.iter().filter(|e| e.label == "b").count(), 5);
    }

    #[test]
    fn seeded_subset_without_duplicates() {
        let d = data();
        let a = sample_balanced(&d, 10, 9).unwrap();
        assert_eq!(a, sample_balanced(&d, 10, 9).unwrap());
        let inputs: HashSet<_> = a.iter().map(|e| &e.input).collect();
        assert_eq!(inputs.len(), 10);
        assert!(a.iter().all(|e| d.contains(e)));
    }

    #[test]
    fn errors() {
        assert!(sample_balanced(&data(), 9, 0).is_err());
        // class `a` only has 10 members
        assert!(sample_balanced(&data(), 24, 0).is_err());
        assert!(sample_balanced(&[], 2, 0).is_err());
    }

    #[test]
    fn full_population() {
        let d: Vec<_> = data().into_iter().take(20).filter(|e| e.label == "a").chain(
            data().into_iter().filter(|e| e.label == "b").take(5),
        ).collect();
        let s = sample_balanced(&d, 10, 4).unwrap();
        assert_eq!(s.len(), 10);
    }
}
