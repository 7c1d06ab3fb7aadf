//! Synthetic text-to-text classification tasks.
//!
//! Four tasks share one character vocabulary:
//!
//! | task          | prefix      | labels        | domain    |
//! |---------------|-------------|---------------|-----------|
//! | `polarity`    | `polarity:` | `POS`, `NEG`  | sentiment |
//! | `parity`      | `parity:`   | `EVEN`, `ODD` | counting  |
//! | `inference-a` | `nli-a:`    | `yes`, `no`   | inference |
//! | `inference-b` | `nli-b:`    | `yes`, `no`   | inference |
//!
//! The two inference tasks use disjoint templates but the same label words
//! and the same contradiction cues, so they form a related pair; the
//! polarity labels are upper case and share no characters with `yes`/`no`.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const POLARITY: &str = "polarity";
pub const PARITY: &str = "parity";
pub const INFERENCE_A: &str = "inference-a";
pub const INFERENCE_B: &str = "inference-b";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub input: String,
    pub label: String,
}

impl Example {
    pub fn new(input: impl Into<String>, label: impl Into<String>) -> Self {
        Example {
            input: input.into(),
            label: label.into(),
        }
    }
}

/// Template pools and lexicons a task is generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Generator {
    /// `{s}` subject, `{i}` intensifier, `{w}` sentiment word.
    Polarity {
        templates: Vec<String>,
        subjects: Vec<String>,
        intensifiers: Vec<String>,
        positive: Vec<String>,
        negative: Vec<String>,
    },
    /// Fixed-length strings; the label is the parity of the marker count.
    Parity {
        alphabet: String,
        marker: char,
        length: usize,
        min_count: usize,
        max_count: usize,
    },
    /// Premise/hypothesis pairs. Placeholders `{a}` and `{b}` index the two
    /// slot lexicons; `{v}`/`{vs}` pick a paired base/third-person form.
    Inference {
        premises: Vec<String>,
        entailed: Vec<String>,
        contradicted: Vec<String>,
        slot_a: Vec<String>,
        slot_b: Vec<String>,
        verbs: Vec<(String, String)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub prefix: String,
    /// Candidate label strings; the first is the "positive" class of the
    /// generator (POS / EVEN / yes).
    pub labels: Vec<String>,
    pub domain: String,
    pub seed: u64,
    pub generator: Generator,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        let distinct: HashSet<_> = self.labels.iter().collect();
        if self.labels.is_empty() || distinct.len() != self.labels.len() {
            return Err(Error::input(format!(
                "task `{}`: labels must be non-empty and distinct",
                self.name
            )));
        }
        Ok(())
    }

    pub fn format_input(&self, body: &str) -> String {
        format!("{} {}", self.prefix, body)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes {
            train: 2000,
            dev: 200,
            test: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub spec: TaskSpec,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
}

impl TaskData {
    pub fn split(&self, name: &str) -> Result<&[Example]> {
        match name {
            "train" => Ok(&self.train),
            "dev" => Ok(&self.dev),
            "test" => Ok(&self.test),
            other => Err(Error::input(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub tasks: Vec<TaskData>,
}

impl Suite {
    pub fn get(&self, name: &str) -> Result<&TaskData> {
        self.tasks
            .iter()
            .find(|t| t.spec.name == name)
            .ok_or_else(|| Error::UnknownTask(name.to_string()))
    }

    pub fn names(&self) -> Vec<String> {
        self.tasks.iter().map(|t| t.spec.name.clone()).collect()
    }

    pub fn specs(&self) -> Vec<TaskSpec> {
        self.tasks.iter().map(|t| t.spec.clone()).collect()
    }
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// Default specs of the four tasks for a suite seed.
pub fn default_specs(seed: u64) -> Vec<TaskSpec> {
    let sub = |i: u64| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i);
    vec![
        TaskSpec {
            name: POLARITY.into(),
            prefix: "polarity:".into(),
            labels: strings(&["POS", "NEG"]),
            domain: "sentiment".into(),
            seed: sub(1),
            generator: Generator::Polarity {
                templates: strings(&[
                    "the {s} was {i}{w}",
                    "a {i}{w} {s}",
                    "this {s} is {i}{w}",
                    "what a {i}{w} {s}",
                    "i found the {s} {i}{w}",
                    "my {s} felt {i}{w}",
                ]),
                subjects: strings(&["film", "movie", "meal", "book", "show", "song", "game", "trip"]),
                intensifiers: strings(&["", "very ", "really ", "so ", "truly "]),
                positive: strings(&[
                    "good", "great", "lovely", "superb", "fun", "brilliant", "nice", "wonderful",
                    "charming", "fine",
                ]),
                negative: strings(&[
                    "bad", "awful", "dull", "boring", "poor", "terrible", "weak", "nasty", "bland",
                    "sad",
                ]),
            },
        },
        TaskSpec {
            name: PARITY.into(),
            prefix: "parity:".into(),
            labels: strings(&["EVEN", "ODD"]),
            domain: "counting".into(),
            seed: sub(2),
            generator: Generator::Parity {
                alphabet: "abc".into(),
                marker: 'x',
                length: 8,
                min_count: 1,
                max_count: 4,
            },
        },
        TaskSpec {
            name: INFERENCE_A.into(),
            prefix: "nli-a:".into(),
            labels: strings(&["yes", "no"]),
            domain: "inference".into(),
            seed: sub(3),
            generator: Generator::Inference {
                premises: strings(&["{a} {vs} {b}."]),
                entailed: strings(&["{a} {vs} {b}?", "someone {vs} {b}?", "{a} {vs} something?"]),
                contradicted: strings(&[
                    "{a} does not {v} {b}?",
                    "{a} never {vs} {b}?",
                    "nobody {vs} {b}?",
                ]),
                slot_a: strings(&["tom", "ann", "bob", "eve", "sam", "kim", "joe", "liz", "max", "amy"]),
                slot_b: strings(&["cake", "tea", "soup", "rice", "fish", "bread", "pie", "jam"]),
                verbs: [
                    ("eat", "eats"),
                    ("like", "likes"),
                    ("make", "makes"),
                    ("buy", "buys"),
                    ("want", "wants"),
                    ("hate", "hates"),
                    ("cook", "cooks"),
                    ("sell", "sells"),
                ]
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            },
        },
        TaskSpec {
            name: INFERENCE_B.into(),
            prefix: "nli-b:".into(),
            labels: strings(&["yes", "no"]),
            domain: "inference".into(),
            seed: sub(4),
            generator: Generator::Inference {
                premises: strings(&["it is {b} in {a}.", "{a} is {b} today.", "{a} feels {b}."]),
                entailed: strings(&["{a} is {b}?", "it is {b} there?", "{a} has {b} weather?"]),
                contradicted: strings(&[
                    "{a} is not {b}?",
                    "it is never {b} in {a}?",
                    "{a} is not {b} at all?",
                ]),
                slot_a: strings(&[
                    "paris", "rome", "oslo", "cairo", "lima", "tokyo", "dubai", "delhi", "quito",
                    "bern", "riga", "kyiv", "baku", "doha",
                ]),
                slot_b: strings(&[
                    "sunny", "rainy", "cold", "warm", "windy", "foggy", "dry", "wet", "hot",
                    "humid", "icy", "mild",
                ]),
                verbs: Vec::new(),
            },
        },
    ]
}

/// The four-task suite with the default split sizes.
pub fn generate_suite(seed: u64) -> Result<Suite> {
    generate_suite_with(seed, SplitSizes::default())
}

pub fn generate_suite_with(seed: u64, sizes: SplitSizes) -> Result<Suite> {
    let tasks = default_specs(seed)
        .into_iter()
        .map(|spec| generate_task(spec, sizes))
        .collect::<Result<Vec<_>>>()?;
    Ok(Suite { tasks })
}

/// Generate balanced, pairwise-disjoint splits for one task.
pub fn generate_task(spec: TaskSpec, sizes: SplitSizes) -> Result<TaskData> {
    spec.validate()?;
    let n_classes = spec.labels.len();
    for (name, n) in [("train", sizes.train), ("dev", sizes.dev), ("test", sizes.test)] {
        if n % n_classes != 0 {
            return Err(Error::input(format!(
                "{name} size {n} is not divisible by {n_classes} classes"
            )));
        }
    }
    let per_class = [
        sizes.train / n_classes,
        sizes.dev / n_classes,
        sizes.test / n_classes,
    ];
    let need: usize = per_class.iter().sum();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pools = class_pools(&spec, need, &mut rng)?;

    let mut splits: [Vec<Example>; 3] = Default::default();
    for (label, pool) in spec.labels.iter().zip(pools) {
        if pool.len() < need {
            return Err(Error::input(format!(
                "task `{}` can only produce {} distinct `{label}` examples, {need} needed",
                spec.name,
                pool.len()
            )));
        }
        let mut it = pool.into_iter();
        for (split, &n) in splits.iter_mut().zip(&per_class) {
            split.extend(
                it.by_ref()
                    .take(n)
                    .map(|body| Example::new(spec.format_input(&body), label.clone())),
            );
        }
    }
    for split in &mut splits {
        split.shuffle(&mut rng);
    }
    let [train, dev, test] = splits;
    Ok(TaskData {
        spec,
        train,
        dev,
        test,
    })
}

/// Distinct input bodies per class, shuffled, at least `need` long when the
/// generator allows it.
fn class_pools(spec: &TaskSpec, need: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<String>>> {
    let mut pools = match &spec.generator {
        Generator::Polarity {
            templates,
            subjects,
            intensifiers,
            positive,
            negative,
        } => [positive, negative]
            .iter()
            .map(|words| {
                let mut out = Vec::new();
                for t in templates {
                    for s in subjects {
                        for i in intensifiers {
                            for w in words.iter() {
                                out.push(t.replace("{s}", s).replace("{i}", i).replace("{w}", w));
                            }
                        }
                    }
                }
                out
            })
            .collect::<Vec<_>>(),
        Generator::Parity {
            alphabet,
            marker,
            length,
            min_count,
            max_count,
        } => {
            let alphabet: Vec<char> = alphabet.chars().collect();
            if alphabet.is_empty() || alphabet.contains(marker) || min_count > max_count || max_count > length {
                return Err(Error::input("invalid parity generator parameters"));
            }
            let counts: [Vec<usize>; 2] = [
                (*min_count..=*max_count).filter(|c| c % 2 == 0).collect(),
                (*min_count..=*max_count).filter(|c| c % 2 == 1).collect(),
            ];
            let mut out = vec![Vec::new(), Vec::new()];
            for (class, allowed) in counts.iter().enumerate() {
                if allowed.is_empty() {
                    continue;
                }
                let mut seen = HashSet::new();
                let mut attempts = 0;
                while out[class].len() < need && attempts < need * 50 {
                    attempts += 1;
                    let count = allowed[rng.random_range(0..allowed.len())];
                    let mut s: Vec<char> = (0..*length)
                        .map(|_| alphabet[rng.random_range(0..alphabet.len())])
                        .collect();
                    let positions = rand::seq::index::sample(rng, *length, count);
                    for p in positions {
                        s[p] = *marker;
                    }
                    let s: String = s.into_iter().collect();
                    if seen.insert(s.clone()) {
                        out[class].push(s);
                    }
                }
            }
            out
        }
        Generator::Inference {
            premises,
            entailed,
            contradicted,
            slot_a,
            slot_b,
            verbs,
        } => {
            let verbs: Vec<(String, String)> = if verbs.is_empty() {
                vec![(String::new(), String::new())]
            } else {
                verbs.clone()
            };
            [entailed, contradicted]
                .iter()
                .map(|hyps| {
                    let mut out = Vec::new();
                    for p in premises {
                        for h in hyps.iter() {
                            for a in slot_a {
                                for b in slot_b {
                                    for (v, vs) in &verbs {
                                        let fill = |t: &str| {
                                            t.replace("{a}", a)
                                                .replace("{b}", b)
                                                .replace("{vs}", vs)
                                                .replace("{v}", v)
                                        };
                                        out.push(format!("{} {}", fill(p), fill(h)));
                                    }
                                }
                            }
                        }
                    }
                    out
                })
                .collect()
        }
    };
    if pools.len() != spec.labels.len() {
        return Err(Error::input(format!(
            "task `{}`: generator yields {} classes but {} labels are declared",
            spec.name,
            pools.len(),
            spec.labels.len()
        )));
    }
    // distinct within and across classes
    let mut seen = HashSet::new();
    for pool in &mut pools {
        pool.retain(|s| seen.insert(s.clone()));
        pool.shuffle(rng);
    }
    Ok(pools)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn small() -> Suite {
        generate_suite_with(
            3,
            SplitSizes {
                train: 200,
                dev: 40,
                test: 40,
            },
        )
        .unwrap()
    }

    #[test]
    fn labels_belong_to_spec() {
        for t in &small().tasks {
            for ex in t.train.iter().chain(&t.dev).chain(&t.test) {
                assert!(t.spec.labels.contains(&ex.label));
                assert!(ex.input.starts_with(&t.spec.prefix));
            }
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(small(), small());
        assert_ne!(small(), generate_suite_with(4, SplitSizes { train: 200, dev: 40, test: 40 }).unwrap());
    }

    #[test]
    fn balanced_splits() {
        for t in &small().tasks {
            for split in [&t.train, &t.dev, &t.test] {
                let mut counts: HashMap<&str, usize> = HashMap::new();
                for ex in split.iter() {
                    *counts.entry(ex.label.as_str()).or_default() += 1;
                }
                let v: Vec<_> = counts.values().collect();
                assert_eq!(v.len(), t.spec.labels.len());
                assert!(v.iter().all(|&&c| c == *v[0]));
            }
        }
    }

    #[test]
    fn splits_disjoint() {
        for t in &small().tasks {
            let tr: HashSet<_> = t.train.iter().map(|e| &e.input).collect();
            let dv: HashSet<_> = t.dev.iter().map(|e| &e.input).collect();
            let te: HashSet<_> = t.test.iter().map(|e| &e.input).collect();
            assert_eq!(tr.len(), t.train.len());
            assert!(tr.is_disjoint(&dv) && tr.is_disjoint(&te) && dv.is_disjoint(&te));
        }
    }

    #[test]
    fn default_sizes_are_attainable() {
        let suite = generate_suite(0).unwrap();
        for t in &suite.tasks {
            assert_eq!((t.train.len(), t.dev.len(), t.test.len()), (2000, 200, 200));
        }
    }

    #[test]
    fn related_pair_shares_labels() {
        let specs = default_specs(0);
        let chars = |name: &str| -> HashSet<char> {
            specs
                .iter()
                .find(|s| s.name == name)
                .unwrap()
                .labels
                .iter()
                .flat_map(|l| l.chars())
                .collect()
        };
        assert_eq!(chars(INFERENCE_A), chars(INFERENCE_B));
        assert!(chars(POLARITY).is_disjoint(&chars(INFERENCE_A)));
    }

    #[test]
    fn parity_labels_match_marker_count() {
        let suite = small();
        let t = suite.get(PARITY).unwrap();
        for ex in &t.train {
            let n = ex.input.trim_start_matches("parity:").matches('x').count();
            let want = if n % 2 == 0 { "EVEN" } else { "ODD" };
            assert_eq!(ex.label, want, "{}", ex.input);
        }
    }

    #[test]
    fn indivisible_sizes_rejected() {
        let spec = default_specs(0).remove(0);
        let err = generate_task(spec, SplitSizes { train: 3, dev: 2, test: 2 });
        assert!(err.is_err());
    }
}
