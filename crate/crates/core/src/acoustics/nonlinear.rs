use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Memoryless loudspeaker model: hard clip followed by an asymmetric
/// sigmoid, `b(v) = out_scale * (2 / (1 + exp(-a v)) - 1)` with
/// `a = gain_pos` for `v > 0` and `gain_neg` otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Nonlinearity {
    pub enabled: bool,
    pub clip_ratio: f64,
    pub out_scale: f64,
    pub gain_pos: f64,
    pub gain_neg: f64,
}

impl Default for Nonlinearity {
    fn default() -> Self {
        Self {
            enabled: true,
            clip_ratio: 0.8,
            out_scale: 1.5,
            gain_pos: 4.0,
            gain_neg: 0.5,
        }
    }
}

impl Nonlinearity {
    pub fn bypass() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.clip_ratio > 0.0 && self.clip_ratio <= 1.0) {
            return Err(Error::domain(format!(
                "clip ratio must lie in (0, 1], got {}",
                self.clip_ratio
            )));
        }
        if !(self.out_scale > 0.0 && self.gain_pos > 0.0 && self.gain_neg > 0.0) {
            return Err(Error::domain("sigmoid scale and gains must be positive"));
        }
        Ok(())
    }

    /// Pre-sigmoid clipped signal.
    pub fn clip(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite sample in far-end signal"));
        }
        let peak = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let c = self.clip_ratio * peak;
        Ok(x.iter().map(|&v| v.clamp(-c, c)).collect())
    }

    pub fn sigmoid(&self, v: f64) -> f64 {
        let a = if v > 0.0 { self.gain_pos } else { self.gain_neg };
        self.out_scale * (2.0 / (1.0 + (-a * v).exp()) - 1.0)
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.enabled {
            return Ok(x.to_vec());
        }
        let clipped = self.clip(x)?;
        Ok(clipped.into_iter().map(|v| self.sigmoid(v)).collect())
    }
}

pub fn loudspeaker_nonlinearity(x: &[f64], model: &Nonlinearity) -> Result<Vec<f64>> {
    model.apply(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(n: usize, amp: f64) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16000.0).sin())
            .collect()
    }

    /// Relative residual after the least-squares gain match of `y` to `x`.
    fn distortion(x: &[f64], y: &[f64]) -> f64 {
        let xy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let xx: f64 = x.iter().map(|a| a * a).sum();
        let g = xy / xx;
        let r: f64 = x.iter().zip(y).map(|(a, b)| (b - g * a).powi(2)).sum();
        (r / y.iter().map(|b| b * b).sum::<f64>()).sqrt()
    }

    #[test]
    fn zero_maps_to_zero() {
        let y = loudspeaker_nonlinearity(&[0.0; 64], &Nonlinearity::default()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clipping_bounds_pre_sigmoid_signal() {
        let x: Vec<f64> = (0..400).map(|i| if (i / 50) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let v = Nonlinearity::default().clip(&x).unwrap();
        assert!(v.iter().all(|s| s.abs() <= 0.8 + 1e-15));
        let y = loudspeaker_nonlinearity(&x, &Nonlinearity::default()).unwrap();
        assert!(y.iter().all(|s| s.abs() <= 1.5));
    }

    #[test]
    fn tiny_symmetric_sigmoid_is_linear() {
        let model = Nonlinearity {
            clip_ratio: 1.0,
            gain_neg: 4.0,
            ..Default::default()
        };
        let x = sine(1600, 1e-4);
        let y = model.apply(&x).unwrap();
        assert!(distortion(&x, &y) < 0.01);
    }

    #[test]
    fn default_gains_are_half_wave_linear_at_small_signal() {
        let model = Nonlinearity::default();
        let x = sine(1600, 1e-4);
        let y = model.apply(&x).unwrap();
        let clip = 0.8e-4;
        for (&a, &b) in x.iter().zip(&y) {
            let v = a.clamp(-clip, clip);
            let slope = if v > 0.0 { 1.5 * 4.0 / 2.0 } else { 1.5 * 0.5 / 2.0 };
            assert!((b - slope * v).abs() <= 1e-6 * slope * clip);
        }
    }

    #[test]
    fn rejects_bad_clip_ratio() {
        let m = Nonlinearity {
            clip_ratio: 0.0,
            ..Default::default()
        };
        assert!(m.apply(&[1.0]).is_err());
        assert!(Nonlinearity::default().apply(&[f64::NAN]).is_err());
    }
}
