use nalgebra::{Cholesky, DMatrix, DVector};
use rustfft::FftPlanner;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::acoustics::SPEED_OF_SOUND;
use crate::dsp::SpectroTensor;
use crate::error::{Error, Result};
use crate::scenario::ArraySpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MvdrConfig {
    /// Covariance forgetting factor λ.
    pub forget: f64,
    /// Diagonal loading as a fraction of `trace(R) / Q`.
    pub loading: f64,
}

impl Default for MvdrConfig {
    fn default() -> Self {
        Self {
            forget: 0.98,
            loading: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MvdrOutput {
    /// `1 × T × F` beamformer output.
    pub output: SpectroTensor,
    /// Weights per `(t, f)`, `Q` taps each, frame-major.
    pub weights: Vec<Complex64>,
    /// Largest `|wᴴd − 1|` over all frames and bins.
    pub max_constraint_error: f64,
    /// Frames where the loaded covariance could not be factored and the
    /// previous weights were reused.
    pub fallbacks: usize,
    num_mics: usize,
}

impl MvdrOutput {
    pub fn weight(&self, t: usize, f: usize) -> &[Complex64] {
        let q = self.num_mics;
        let i = (t * self.output.bins + f) * q;
        &self.weights[i..i + q]
    }

    /// Applies the stored weights to another `Q × T × F` spectrogram, e.g.
    /// one source image at a time.
    pub fn apply(&self, spec: &SpectroTensor) -> Result<SpectroTensor> {
        if spec.channels != self.num_mics
            || spec.frames != self.output.frames
            || spec.bins != self.output.bins
        {
            return Err(Error::domain("spectrogram does not match the beamformer weights"));
        }
        let mut out = SpectroTensor::zeros(1, spec.frames, spec.config);
        for t in 0..spec.frames {
            for f in 0..spec.bins {
                let w = self.weight(t, f);
                *out.at_mut(0, t, f) = (0..self.num_mics).map(|q| w[q].conj() * spec.at(q, t, f)).sum();
            }
        }
        Ok(out)
    }
}

/// Far-field steering vector for a horizontal look direction, normalized
/// to microphone 0: `d_q = exp(−j2πf(τ_q − τ_0))`.
pub fn steering_vector(array: &ArraySpec, direction_deg: f64, freq_hz: f64) -> Vec<Complex64> {
    let phi = direction_deg.to_radians();
    let u = [phi.cos(), phi.sin(), 0.0];
    let tau: Vec<f64> = array
        .offsets()
        .iter()
        .map(|o| -(o[0] * u[0] + o[1] * u[1] + o[2] * u[2]) / SPEED_OF_SOUND)
        .collect();
    tau.iter()
        .map(|&t| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * freq_hz * (t - tau[0])))
        .collect()
}

/// Online MVDR steered at a fixed direction.
pub fn mvdr_online(
    spec: &SpectroTensor,
    steer_deg: f64,
    array: &ArraySpec,
    config: &MvdrConfig,
) -> Result<MvdrOutput> {
    mvdr_online_track(spec, &vec![steer_deg; spec.frames], array, config)
}

/// Online MVDR with a per-frame look direction. The recursive covariance
/// estimate and weights live per bin; output is `wᴴy`.
pub fn mvdr_online_track(
    spec: &SpectroTensor,
    steer_deg: &[f64],
    array: &ArraySpec,
    config: &MvdrConfig,
) -> Result<MvdrOutput> {
    let q_n = array.num_mics;
    if spec.channels != q_n || array.mic_positions.len() != q_n {
        return Err(Error::domain(format!(
            "spectrogram has {} channels, array has {q_n} microphones",
            spec.channels
        )));
    }
    if steer_deg.len() != spec.frames {
        return Err(Error::domain("need one look direction per frame"));
    }
    if !(config.forget > 0.0 && config.forget < 1.0) || config.loading < 0.0 {
        return Err(Error::Config("MVDR forgetting factor must lie in (0, 1)".into()));
    }
    let (frames, bins) = (spec.frames, spec.bins);
    let fs = spec.config.sample_rate as f64;
    let n_fft = spec.config.fft_size() as f64;
    let lam = config.forget;
    let mut cov = vec![DMatrix::<Complex64>::zeros(q_n, q_n); bins];
    let mut prev: Vec<Option<DVector<Complex64>>> = vec![None; bins];
    let mut out = SpectroTensor::zeros(1, frames, spec.config);
    let mut weights = Vec::with_capacity(frames * bins * q_n);
    let mut max_err = 0.0_f64;
    let mut fallbacks = 0;
    let mut steer_cache: Option<(f64, Vec<DVector<Complex64>>)> = None;
    for t in 0..frames {
        let look = steer_deg[t];
        if steer_cache.as_ref().is_none_or(|(d, _)| *d != look) {
            let ds = (0..bins)
                .map(|f| DVector::from_vec(steering_vector(array, look, f as f64 * fs / n_fft)))
                .collect();
            steer_cache = Some((look, ds));
        }
        let ds = &steer_cache.as_ref().expect("steering cached").1;
        for f in 0..bins {
            let y = DVector::from_iterator(q_n, (0..q_n).map(|q| spec.at(q, t, f)));
            let r = &mut cov[f];
            *r *= Complex64::from(lam);
            *r += (&y * y.adjoint()) * Complex64::from(1.0 - lam);
            let d = &ds[f];
            let trace = r.trace().re;
            let mut loaded = r.clone();
            for i in 0..q_n {
                loaded[(i, i)] += config.loading * trace / q_n as f64;
            }
            let solved = (trace > 0.0)
                .then(|| Cholesky::new(loaded))
                .flatten()
                .map(|c| c.solve(d))
                .and_then(|u| {
                    let denom = d.dotc(&u);
                    (denom.norm() > 0.0 && denom.is_finite()).then(|| u / denom)
                });
            let w = match solved {
                Some(w) => w,
                None => {
                    fallbacks += 1;
                    match &prev[f] {
                        // The previous weights were built for the old look
                        // direction; rescale to keep the constraint.
                        Some(p) => {
                            let g = d.dotc(p);
                            if g.norm() > 1e-12 {
                                p / g
                            } else {
                                d / Complex64::from(d.norm_squared())
                            }
                        }
                        None => d / Complex64::from(d.norm_squared()),
                    }
                }
            };
            max_err = max_err.max((w.dotc(d) - 1.0).norm());
            *out.at_mut(0, t, f) = w.dotc(&y);
            weights.extend(w.iter().copied());
            prev[f] = Some(w);
        }
    }
    Ok(MvdrOutput {
        output: out,
        weights,
        max_constraint_error: max_err,
        fallbacks,
        num_mics: q_n,
    })
}

/// Band-limited circular delay of `x` by `delay` seconds.
fn delay(x: &[f64], delay: f64, fs: f64) -> Vec<f64> {
    let n = x.len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        if 2 * k == n {
            *z = Complex64::new(0.0, 0.0);
        }
        *z *= Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * kk * fs / n as f64 * delay);
    }
    inv.process(&mut buf);
    buf.iter().map(|z| z.re / n as f64).collect()
}

/// Anechoic far-field images of `src` arriving from `direction_deg`, one
/// per microphone, timed relative to the array center. Delays are
/// circular and band-limited.
pub fn plane_wave_images(src: &[f64], direction_deg: f64, arr: &ArraySpec, fs: f64) -> Vec<Vec<f64>> {
    let phi = direction_deg.to_radians();
    arr.offsets()
        .iter()
        .map(|o| delay(src, -(o[0] * phi.cos() + o[1] * phi.sin()) / SPEED_OF_SOUND, fs))
        .collect()
}
