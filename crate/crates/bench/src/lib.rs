//! Shared fixtures for the criterion benches.

use echolab::nn::{Real, Tensor};
use echolab::scenario::{sample_scenario, Scenario, ScenarioPolicy};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

pub fn random_tensor<T: Real>(channels: usize, frames: usize, bins: usize, seed: u64) -> Tensor<T> {
    let mut rng = Pcg64::seed_from_u64(seed);
    Tensor::from_fn(channels, frames, bins, |_, _, _| T::of(rng.random_range(-1.0..1.0)))
}

pub fn random_wave(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = Pcg64::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn scenario(seed: u64) -> Scenario {
    sample_scenario(ScenarioPolicy::Matched, seed)
}
