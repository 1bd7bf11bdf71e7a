//! Labelled random substreams derived from a single run seed.
//!
//! Every source of randomness in a run (operator indices, weights,
//! relaxations, noise, ...) draws from its own ChaCha stream. The stream
//! for a label depends only on `(seed, label)`, so consuming one stream
//! never shifts another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamLabel {
    Index,
    Weights,
    Relaxation,
    Noise,
    Audit,
    Problem,
    Initial,
}

impl StreamLabel {
    fn id(self) -> u64 {
        match self {
            StreamLabel::Index => 1,
            StreamLabel::Weights => 2,
            StreamLabel::Relaxation => 3,
            StreamLabel::Noise => 4,
            StreamLabel::Audit => 5,
            StreamLabel::Problem => 6,
            StreamLabel::Initial => 7,
        }
    }
}

/// A single-owner random stream.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, label: StreamLabel) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(label.id());
        RandomStream { rng }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform in `[lo, hi]`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        self.rng.random_range(lo..=hi)
    }

    pub fn index_below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
