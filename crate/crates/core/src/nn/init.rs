use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use super::tensor::{Param, Real};

/// Seeded parameter initializer.
pub struct Init {
    rng: Pcg64,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Pcg64::seed_from_u64(seed),
        }
    }

    pub fn uniform<T: Real>(&mut self, shape: &[usize], bound: f64) -> Param<T> {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| T::of(self.rng.random_range(-bound..=bound)))
            .collect();
        Param::from_vec(shape, data)
    }

    /// Uniform in `±1/sqrt(fan_in)`.
    pub fn fan_in<T: Real>(&mut self, shape: &[usize], fan_in: usize) -> Param<T> {
        self.uniform(shape, 1.0 / (fan_in.max(1) as f64).sqrt())
    }

    pub fn range<T: Real>(&mut self, shape: &[usize], lo: f64, hi: f64) -> Param<T> {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| T::of(self.rng.random_range(lo..=hi)))
            .collect();
        Param::from_vec(shape, data)
    }

    pub fn rng(&mut self) -> &mut Pcg64 {
        &mut self.rng
    }
}
