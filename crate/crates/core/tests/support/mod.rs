#![allow(dead_code)]

pub mod reference;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsam::graph::{DirectedSnapshot, SnapshotSequence};
use tsam::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_digraph(n: usize, p: f64, rng: &mut impl Rng) -> DirectedSnapshot {
    let mut a = DirectedSnapshot::empty(n, 0);
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(p) {
                a.insert(i, j).unwrap();
            }
        }
    }
    a
}

pub fn random_tensor(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// Node `i` links to `i + 1 + (t mod period)` at snapshot `t`.
pub fn rotation_sequence(n: usize, len: usize, period: usize) -> SnapshotSequence {
    let snaps = (0..len)
        .map(|t| {
            let shift = 1 + t % period;
            let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + shift) % n)).collect();
            DirectedSnapshot::build_adjacency(&edges, n).unwrap()
        })
        .collect();
    SnapshotSequence::new(snaps).unwrap()
}
