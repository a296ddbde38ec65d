//! Synthetic inputs shared by the benchmarks.

use fairforge::{Group, Split, TabularDataset};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` rows, `d` standard-normal-ish features, one fair feature that drives
/// the label, and a 2:1 privileged/unprivileged split with a score shift.
pub fn synthetic(n: usize, d: usize, seed: u64) -> TabularDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Array2::zeros((n, d));
    let mut fair = Array2::zeros((n, 1));
    let mut labels = Vec::with_capacity(n);
    let mut group = Vec::with_capacity(n);
    let mut split = Vec::with_capacity(n);
    for i in 0..n {
        let g = if i % 3 == 0 { Group::Unprivileged } else { Group::Privileged };
        let shift = if g == Group::Unprivileged { -0.5 } else { 0.0 };
        let score: f64 = rng.random_range(-1.0..1.0) + shift;
        for j in 0..d {
            features[[i, j]] = rng.random_range(-1.0..1.0) + if j == 0 { score } else { 0.0 };
        }
        fair[[i, 0]] = score;
        labels.push(u8::from(score + rng.random_range(-0.3..0.3) > -0.2));
        group.push(g);
        split.push(match i % 5 {
            0 => Split::Dev,
            1 => Split::Test,
            _ => Split::Train,
        });
    }
    TabularDataset::from_parts(
        "synthetic",
        (0..d).map(|j| format!("x{j}")).collect(),
        features,
        labels,
        group,
        vec!["score".into()],
        fair,
        split,
    )
    .expect("consistent shapes")
}
