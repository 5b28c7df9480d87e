//! Fixtures shared by the benchmarks.

use rpcmi::{GaussianTask, PairBatch, Rng, ScoreBatch};

/// Scores from a fixed pseudo-random stream, roughly in the range a trained critic produces.
pub fn score_batch(n: usize, m: usize, seed: u64) -> ScoreBatch {
    let mut rng = Rng::seed_from_u64(seed);
    let pos = (0..n).map(|_| 1.0 + 0.5 * rng.normal()).collect();
    let neg = (0..m).map(|_| -0.5 + 0.5 * rng.normal()).collect();
    ScoreBatch::new(pos, neg).expect("finite scores")
}

/// One staircase batch at `mi` nats.
pub fn pair_batch(dim: usize, mi: f64, n: usize, seed: u64) -> PairBatch {
    let task = GaussianTask::with_mi(dim, mi, false).expect("valid task");
    rpcmi::tasks::sample(&task, n, n, &mut Rng::seed_from_u64(seed)).expect("sampling")
}
