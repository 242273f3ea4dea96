//! Per-sample Gaussian noise streams.
//!
//! Sample `n` of a run with master seed `s` draws from the ChaCha8 stream
//! number `n` keyed by `s`. Increments are consumed step-major, mode-minor,
//! so the value used at `(step, mode)` depends only on
//! `(seed, sample, step, mode)` and never on how samples are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, sample: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(sample);
        Self { rng }
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Fills `out` with independent `N(0, variance)` draws.
    #[inline]
    pub fn fill_normal(&mut self, variance: f64, out: &mut [f64]) {
        let sd = variance.sqrt();
        for x in out {
            *x = sd * self.standard_normal();
        }
    }

    pub fn uniform(&mut self) -> f64 {
        use rand::Rng;
        self.rng.random::<f64>()
    }
}
