//! Anti-correlated fractional bootstrap weights.
//!
//! Each SVEM iteration reweights the n training rows with one exponential
//! draw per row and gives the validation copy of the same rows the
//! anti-monotone partner weight: from a single u ~ Uniform(0,1),
//! `train = -ln(u)` and `valid = -ln(1-u)`. Both marginals are
//! Exponential(mean 1) and the pair is maximally anti-correlated within this
//! coupling (rank correlation exactly -1).

use rand::Rng;

use crate::rng::{derive_seed, seeded_rng, tags};

/// Training/validation weights for one bootstrap iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPair {
    pub train: Vec<f64>,
    pub valid: Vec<f64>,
}

impl WeightPair {
    /// Unit weights for both copies; useful for reductions to plain fits.
    pub fn unit(n: usize) -> Self {
        WeightPair {
            train: vec![1.0; n],
            valid: vec![1.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }
}

/// Draws the weight pair for one iteration, deterministic in
/// `(seed, iteration)` and independent of any other iteration's stream.
pub fn draw_weight_pair(n: usize, seed: u64, iteration: u64) -> WeightPair {
    assert!(n >= 1, "weight pair needs at least one row");
    let mut rng = seeded_rng(derive_seed(seed, tags::WEIGHTS, iteration));
    let mut train = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    // clamp away from {0, 1} so both logs stay finite
    let lo = f64::EPSILON;
    let hi = 1.0 - f64::EPSILON / 2.0;
    for _ in 0..n {
        let u: f64 = rng.random::<f64>().clamp(lo, hi);
        train.push(-u.ln());
        valid.push(-(1.0 - u).ln());
    }
    WeightPair { train, valid }
}
