//! Synthetic stand-ins for speech: pink noise shaped by a syllable-rate
//! envelope with random silent pauses. Not speech, but it has the on/off
//! structure that activity labels and toy training need.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

pub fn white_noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = Pcg64::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Pink noise via Paul Kellet's refined 1/f filter on white noise.
pub fn pink_noise(n: usize, seed: u64) -> Vec<f64> {
    let white = white_noise(n, seed);
    let mut b = [0.0f64; 7];
    let mut out = Vec::with_capacity(n);
    for w in white {
        b[0] = 0.99886 * b[0] + w * 0.0555179;
        b[1] = 0.99332 * b[1] + w * 0.0750759;
        b[2] = 0.96900 * b[2] + w * 0.1538520;
        b[3] = 0.86650 * b[3] + w * 0.3104856;
        b[4] = 0.55000 * b[4] + w * 0.5329522;
        b[5] = -0.7616 * b[5] - w * 0.0168980;
        out.push(b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + w * 0.5362);
        b[6] = w * 0.115926;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub sample_rate: f64,
    pub syllable_hz: f64,
    /// Probability of a pause after each syllable.
    pub pause_prob: f64,
    pub pause_s: (f64, f64),
    pub peak: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000.0,
            syllable_hz: 4.0,
            pause_prob: 0.2,
            pause_s: (0.15, 0.5),
            peak: 0.5,
        }
    }
}

pub fn speech_surrogate(n: usize, seed: u64, cfg: &SurrogateConfig) -> Vec<f64> {
    let mut rng = Pcg64::seed_from_u64(seed ^ 0x5eed_5eed);
    let carrier = pink_noise(n, seed);
    let mut env = vec![0.0; n];
    let base = cfg.sample_rate / cfg.syllable_hz;
    let mut i = 0usize;
    while i < n {
        let len = (base * rng.random_range(0.6..1.4)) as usize;
        let gain = rng.random_range(0.4..1.0);
        for k in 0..len.min(n - i) {
            let ph = std::f64::consts::PI * k as f64 / len as f64;
            env[i + k] = gain * ph.sin().powi(2);
        }
        i += len;
        if rng.random_bool(cfg.pause_prob) {
            i += (cfg.sample_rate * rng.random_range(cfg.pause_s.0..cfg.pause_s.1)) as usize;
        }
    }
    let mut out: Vec<f64> = carrier.iter().zip(&env).map(|(c, e)| c * e).collect();
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let k = cfg.peak / peak;
        out.iter_mut().for_each(|v| *v *= k);
    }
    out
}
