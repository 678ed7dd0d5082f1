//! Parity dataset generation with stratified ones-counts.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One labelled example; label 0 is even, 1 is odd.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParityExample {
    pub input: Vec<u8>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParitySpec {
    pub train_min_len: usize,
    pub train_max_len: usize,
    pub train_total: usize,
    pub ood_min_len: usize,
    pub ood_max_len: usize,
    pub ood_per_length: usize,
}

impl ParitySpec {
    /// Training lengths 1-20 with 100,000 examples; OOD lengths 21-40 with
    /// 1,000 examples per length.
    pub fn full() -> Self {
        ParitySpec {
            train_min_len: 1,
            train_max_len: 20,
            train_total: 100_000,
            ood_min_len: 21,
            ood_max_len: 40,
            ood_per_length: 1_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParityDataset {
    pub spec: ParitySpec,
    pub train: Vec<ParityExample>,
    pub ood: Vec<ParityExample>,
}

fn parity_label(input: &[u8]) -> usize {
    (input.iter().filter(|b| **b == 1).count() % 2) as usize
}

/// A random length-`n` string with exactly `ones` ones.
fn stratified_string(n: usize, ones: usize, rng: &mut impl Rng) -> Vec<u8> {
    let mut s = vec![0u8; n];
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    for i in idx.into_iter().take(ones) {
        s[i] = 1;
    }
    s
}

fn gen_split(
    min_len: usize,
    max_len: usize,
    per_length: usize,
    rng: &mut impl Rng,
) -> Vec<ParityExample> {
    let mut out = Vec::with_capacity((max_len - min_len + 1) * per_length);
    for n in min_len..=max_len {
        for _ in 0..per_length {
            // roughly equal examples per number of ones
            let ones = rng.gen_range(0..=n);
            let input = stratified_string(n, ones, rng);
            let label = parity_label(&input);
            out.push(ParityExample { input, label });
        }
    }
    out
}

/// Deterministic under `seed`.
pub fn gen_parity(spec: &ParitySpec, seed: u64) -> ParityDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lengths = spec.train_max_len - spec.train_min_len + 1;
    let per_length = (spec.train_total + lengths - 1) / lengths;
    let mut train = gen_split(spec.train_min_len, spec.train_max_len, per_length, &mut rng);
    train.truncate(spec.train_total);
    let ood = gen_split(spec.ood_min_len, spec.ood_max_len, spec.ood_per_length, &mut rng);
    ParityDataset {
        spec: spec.clone(),
        train,
        ood,
    }
}

/// Line format used on disk: `bits<TAB>label`.
pub fn to_lines(examples: &[ParityExample]) -> String {
    let mut s = String::new();
    for e in examples {
        for b in &e.input {
            s.push(if *b == 1 { '1' } else { '0' });
        }
        s.push('\t');
        s.push_str(if e.label == 1 { "odd" } else { "even" });
        s.push('\n');
    }
    s
}
