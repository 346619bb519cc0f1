//! Labeled problems with B-rates from a fixed rule, for exercising the
//! learning loop without human data.
//!
//! Block `i` of problem `p` gets
//! `B_i = logistic(SLOPE * BevBminA(p_eff^i) + DRIFT * (i - 3))`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledProblem;
use crate::features::{compute_features, effective_problem, FeatureConfig};
use crate::problem::{sample_problem, Block, Problem};

pub const SLOPE: f64 = 0.1;
pub const DRIFT: f64 = 0.08;

pub fn synthetic_b_rates(p: &Problem, config: &FeatureConfig) -> [f64; Block::COUNT] {
    let mut b = [0.0; Block::COUNT];
    for block in Block::all() {
        let f = compute_features(&effective_problem(p, block), block, config);
        let z = SLOPE * f.bev_b_min_a + DRIFT * (block.index() as f64 - 3.0);
        b[block.index() - 1] = 1.0 / (1.0 + (-z).exp());
    }
    b
}

/// `n` sampled problems labeled by [`synthetic_b_rates`].
pub fn synthetic_dataset(n: usize, seed: u64, config: &FeatureConfig) -> Vec<LabeledProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let problem = sample_problem(&mut rng);
            LabeledProblem {
                id: format!("s{}", k + 1),
                observed: synthetic_b_rates(&problem, config),
                problem,
            }
        })
        .collect()
}
