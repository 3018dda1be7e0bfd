//! STFT analysis and overlap-add synthesis.
//!
//! Framing is strictly causal: frame `t` covers samples
//! `[t * hop, t * hop + win)`. There is no leading pad; a final partial frame
//! is zero-padded at the tail. The FFT length equals the window length.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub win_ms: f64,
    pub hop_ms: f64,
    pub sample_rate: u32,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            win_ms: 20.0,
            hop_ms: 10.0,
            sample_rate: SAMPLE_RATE,
        }
    }
}

impl StftConfig {
    pub fn win_len(&self) -> usize {
        (self.sample_rate as f64 * self.win_ms / 1000.0).round() as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.sample_rate as f64 * self.hop_ms / 1000.0).round() as usize
    }

    pub fn fft_size(&self) -> usize {
        self.win_len()
    }

    pub fn bins(&self) -> usize {
        self.fft_size() / 2 + 1
    }

    /// Frames produced for `n` samples under the tail-pad policy.
    pub fn num_frames(&self, n: usize) -> usize {
        let (win, hop) = (self.win_len(), self.hop_len());
        if n <= win {
            1
        } else {
            (n - win).div_ceil(hop) + 1
        }
    }

    /// Time (s) at the start of frame `t`.
    pub fn frame_start_s(&self, t: usize) -> f64 {
        (t * self.hop_len()) as f64 / self.sample_rate as f64
    }

    pub fn validate(&self) -> Result<()> {
        let (win, hop) = (self.win_len(), self.hop_len());
        if win < 2 || hop == 0 || hop > win || win % hop != 0 {
            return Err(Error::Config(format!(
                "STFT window {win} must be a positive multiple of hop {hop}"
            )));
        }
        Ok(())
    }

    /// Periodic Hamming analysis window.
    pub fn analysis_window(&self) -> Vec<f64> {
        let n = self.win_len();
        (0..n)
            .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / n as f64).cos())
            .collect()
    }

    /// Synthesis window: the analysis window divided by the overlap-added
    /// squared analysis window, so that analysis times synthesis sums to one.
    pub fn synthesis_window(&self) -> Vec<f64> {
        let w = self.analysis_window();
        let hop = self.hop_len();
        (0..w.len())
            .map(|n| {
                let denom: f64 = (n % hop..w.len()).step_by(hop).map(|m| w[m] * w[m]).sum();
                w[n] / denom
            })
            .collect()
    }
}

/// Complex spectrogram, `channels × T × F`, nonnegative bins only.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectroTensor {
    pub channels: usize,
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<Complex64>,
    pub config: StftConfig,
}

impl SpectroTensor {
    pub fn zeros(channels: usize, frames: usize, config: StftConfig) -> Self {
        let bins = config.bins();
        Self {
            channels,
            frames,
            bins,
            data: vec![Complex64::new(0.0, 0.0); channels * frames * bins],
            config,
        }
    }

    fn idx(&self, c: usize, t: usize, f: usize) -> usize {
        (c * self.frames + t) * self.bins + f
    }

    pub fn at(&self, c: usize, t: usize, f: usize) -> Complex64 {
        self.data[self.idx(c, t, f)]
    }

    pub fn at_mut(&mut self, c: usize, t: usize, f: usize) -> &mut Complex64 {
        let i = self.idx(c, t, f);
        &mut self.data[i]
    }

    /// One channel's `T × F` plane.
    pub fn channel(&self, c: usize) -> &[Complex64] {
        let n = self.frames * self.bins;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn select_channel(&self, c: usize) -> SpectroTensor {
        SpectroTensor {
            channels: 1,
            frames: self.frames,
            bins: self.bins,
            data: self.channel(c).to_vec(),
            config: self.config,
        }
    }

    pub fn scale(&self, k: f64) -> SpectroTensor {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= k);
        out
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Reusable forward/inverse FFT plans for one config.
pub struct Stft {
    config: StftConfig,
    window: Vec<f64>,
    synth: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            window: config.analysis_window(),
            synth: config.synthesis_window(),
            forward: planner.plan_fft_forward(config.fft_size()),
            inverse: planner.plan_fft_inverse(config.fft_size()),
            config,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    /// Analyzes each channel; all channels must share one length.
    pub fn analyze(&self, channels: &[&[f64]]) -> Result<SpectroTensor> {
        let n = channels
            .first()
            .map(|c| c.len())
            .ok_or_else(|| Error::domain("stft of zero channels"))?;
        if n == 0 {
            return Err(Error::domain("stft of an empty wave"));
        }
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::domain("stft channels differ in length"));
        }
        let (win, hop, bins) = (self.config.win_len(), self.config.hop_len(), self.config.bins());
        let frames = self.config.num_frames(n);
        let mut out = SpectroTensor::zeros(channels.len(), frames, self.config);
        let mut buf = vec![Complex64::new(0.0, 0.0); win];
        for (c, wave) in channels.iter().enumerate() {
            for t in 0..frames {
                let start = t * hop;
                for (i, z) in buf.iter_mut().enumerate() {
                    let x = wave.get(start + i).copied().unwrap_or(0.0);
                    *z = Complex64::new(x * self.window[i], 0.0);
                }
                self.forward.process(&mut buf);
                let base = out.idx(c, t, 0);
                out.data[base..base + bins].copy_from_slice(&buf[..bins]);
            }
        }
        Ok(out)
    }

    /// Overlap-add synthesis. Output has `(T - 1) * hop + win` samples, or
    /// `len` samples when given.
    pub fn synthesize(&self, spec: &SpectroTensor, len: Option<usize>) -> Result<Vec<Vec<f64>>> {
        if spec.config != self.config || spec.bins != self.config.bins() {
            return Err(Error::domain("istft config does not match the spectrogram"));
        }
        let (win, hop, bins) = (self.config.win_len(), self.config.hop_len(), spec.bins);
        let full = (spec.frames.max(1) - 1) * hop + win;
        let out_len = len.unwrap_or(full);
        let scale = 1.0 / win as f64;
        let mut buf = vec![Complex64::new(0.0, 0.0); win];
        let mut outputs = Vec::with_capacity(spec.channels);
        for c in 0..spec.channels {
            let mut wave = vec![0.0; full.max(out_len)];
            for t in 0..spec.frames {
                for k in 0..win {
                    buf[k] = if k < bins {
                        spec.at(c, t, k)
                    } else {
                        spec.at(c, t, win - k).conj()
                    };
                }
                // DC and Nyquist bins of a real signal are real.
                buf[0].im = 0.0;
                if win % 2 == 0 {
                    buf[win / 2].im = 0.0;
                }
                self.inverse.process(&mut buf);
                let start = t * hop;
                for k in 0..win {
                    wave[start + k] += buf[k].re * scale * self.synth[k];
                }
            }
            wave.truncate(out_len);
            outputs.push(wave);
        }
        Ok(outputs)
    }
}

/// Single-channel convenience wrapper.
pub fn stft(wave: &[f64], config: &StftConfig) -> Result<SpectroTensor> {
    Stft::new(*config)?.analyze(&[wave])
}

pub fn istft(spec: &SpectroTensor, config: &StftConfig, len: Option<usize>) -> Result<Vec<Vec<f64>>> {
    Stft::new(*config)?.synthesize(spec, len)
}

/// Stacks real and imaginary planes of every channel of every input:
/// `[Re(ch1), Im(ch1), Re(ch2), ...]`.
pub fn ri_pack<T: Real>(tensors: &[&SpectroTensor]) -> Result<Tensor<T>> {
    let first = tensors
        .first()
        .ok_or_else(|| Error::domain("ri_pack of zero tensors"))?;
    let (frames, bins) = (first.frames, first.bins);
    if tensors.iter().any(|s| s.frames != frames || s.bins != bins) {
        return Err(Error::domain("ri_pack: inputs differ in (T, F)"));
    }
    let planes: Vec<(&SpectroTensor, usize)> = tensors
        .iter()
        .flat_map(|s| (0..s.channels).map(move |c| (*s, c)))
        .collect();
    Ok(Tensor::from_fn(2 * planes.len(), frames, bins, |ch, t, f| {
        let (s, c) = planes[ch / 2];
        let z = s.at(c, t, f);
        T::of(if ch % 2 == 0 { z.re } else { z.im })
    }))
}

/// Inverse of [`ri_pack`] for a single packed group.
pub fn ri_unpack<T: Real>(packed: &Tensor<T>, config: StftConfig) -> Result<SpectroTensor> {
    let (channels, frames, bins) = packed.shape();
    if channels % 2 != 0 || bins != config.bins() {
        return Err(Error::domain("ri_unpack needs an even channel count and matching bins"));
    }
    let mut out = SpectroTensor::zeros(channels / 2, frames, config);
    for c in 0..channels / 2 {
        for t in 0..frames {
            for f in 0..bins {
                *out.at_mut(c, t, f) = Complex64::new(
                    packed.at(2 * c, t, f).as_f64(),
                    packed.at(2 * c + 1, t, f).as_f64(),
                );
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = Pcg64::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn default_geometry() {
        let cfg = StftConfig::default();
        assert_eq!((cfg.win_len(), cfg.hop_len(), cfg.fft_size(), cfg.bins()), (320, 160, 320, 161));
    }

    #[test]
    fn six_second_frame_count() {
        let cfg = StftConfig::default();
        let n = 6 * 16_000;
        // floor((N - win) / hop) + 1, plus a tail frame only when there is
        // a partial remainder.
        let expected = (n - 320) / 160 + 1 + usize::from((n - 320) % 160 != 0);
        assert_eq!(expected, 599);
        let spec = stft(&vec![0.0; n], &cfg).unwrap();
        assert_eq!((spec.frames, spec.bins), (599, 161));
        assert_eq!(cfg.num_frames(n + 1), 600);
        assert_eq!(cfg.num_frames(100), 1);
    }

    #[test]
    fn sine_peak_bin() {
        let cfg = StftConfig::default();
        let x: Vec<f64> = (0..16_000)
            .map(|n| (2.0 * PI * 1000.0 * n as f64 / 16_000.0).sin())
            .collect();
        let spec = stft(&x, &cfg).unwrap();
        let t = 10;
        let peak = (0..spec.bins)
            .max_by(|&a, &b| spec.at(0, t, a).norm().total_cmp(&spec.at(0, t, b).norm()))
            .unwrap();
        assert_eq!(peak, (1000.0_f64 * 320.0 / 16_000.0).round() as usize);
    }

    #[test]
    fn zero_and_empty() {
        let cfg = StftConfig::default();
        assert!(stft(&[], &cfg).is_err());
        let spec = stft(&vec![0.0; 1000], &cfg).unwrap();
        assert!(spec.data.iter().all(|z| z.norm() == 0.0));
        let back = istft(&spec, &cfg, Some(1000)).unwrap();
        assert!(back[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cola_identity() {
        let cfg = StftConfig::default();
        let (wa, ws, hop) = (cfg.analysis_window(), cfg.synthesis_window(), cfg.hop_len());
        for n in 0..hop {
            let s: f64 = (n..wa.len()).step_by(hop).map(|m| wa[m] * ws[m]).sum();
            assert!((s - 1.0).abs() < 1e-10, "n={n} sum={s}");
        }
    }

    #[test]
    fn round_trip_white_noise() {
        let cfg = StftConfig::default();
        let x = noise(16_000, 3);
        let y = istft(&stft(&x, &cfg).unwrap(), &cfg, Some(x.len())).unwrap();
        let win = cfg.win_len();
        let peak = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let err = x[win..x.len() - win]
            .iter()
            .zip(&y[0][win..x.len() - win])
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err / peak < 1e-6, "max err {err}");
    }

    #[test]
    fn istft_linearity_and_config_check() {
        let cfg = StftConfig::default();
        let x = noise(4000, 8);
        let spec = stft(&x, &cfg).unwrap();
        let a = istft(&spec, &cfg, None).unwrap();
        let b = istft(&spec.scale(2.5), &cfg, None).unwrap();
        for (u, v) in a[0].iter().zip(&b[0]) {
            assert!((2.5 * u - v).abs() < 1e-12);
        }
        let other = StftConfig {
            win_ms: 32.0,
            hop_ms: 16.0,
            ..cfg
        };
        assert!(istft(&spec, &other, None).is_err());
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = StftConfig::default();
        let x = noise(8000, 4);
        let spec = stft(&x, &cfg).unwrap();
        let w = cfg.analysis_window();
        let (win, hop) = (cfg.win_len(), cfg.hop_len());
        let mut time_energy = 0.0;
        let mut freq_energy = 0.0;
        for t in 0..spec.frames {
            for (i, wi) in w.iter().enumerate() {
                let v = x.get(t * hop + i).copied().unwrap_or(0.0) * wi;
                time_energy += v * v;
            }
            for f in 0..spec.bins {
                let k = if f == 0 || f == win / 2 { 1.0 } else { 2.0 };
                freq_energy += k * spec.at(0, t, f).norm_sqr();
            }
        }
        freq_energy /= win as f64;
        assert!((time_energy - freq_energy).abs() / time_energy < 1e-6);
    }

    #[test]
    fn stft_is_linear() {
        let cfg = StftConfig::default();
        let (x, z) = (noise(3000, 1), noise(3000, 2));
        let (a, b) = (0.7, -1.3);
        let mix: Vec<f64> = x.iter().zip(&z).map(|(p, q)| a * p + b * q).collect();
        let (sx, sz, sm) = (
            stft(&x, &cfg).unwrap(),
            stft(&z, &cfg).unwrap(),
            stft(&mix, &cfg).unwrap(),
        );
        for i in 0..sm.data.len() {
            assert!((sm.data[i] - (sx.data[i] * a + sz.data[i] * b)).norm() < 1e-12);
        }
    }

    #[test]
    fn ri_pack_layout() {
        let cfg = StftConfig::default();
        let mics: Vec<Vec<f64>> = (0..6).map(|s| noise(1600, s)).collect();
        let refs: Vec<&[f64]> = mics.iter().map(|m| m.as_slice()).collect();
        let plan = Stft::new(cfg).unwrap();
        let y = plan.analyze(&refs).unwrap();
        let x = plan.analyze(&[&noise(1600, 99)]).unwrap();
        let packed: Tensor<f64> = ri_pack(&[&y, &x]).unwrap();
        assert_eq!(packed.shape(), (14, y.frames, 161));
        assert_eq!(packed.at(2, 3, 5), y.at(1, 3, 5).re);
        assert_eq!(packed.at(13, 3, 5), x.at(0, 3, 5).im);

        let back = ri_unpack(&packed.channel_slice(0, 12), cfg).unwrap();
        assert_eq!(back, y);

        let mut real = x.clone();
        real.data.iter_mut().for_each(|z| z.im = 0.0);
        let p: Tensor<f64> = ri_pack(&[&real]).unwrap();
        assert!(p.channel_slice(1, 1).data().iter().all(|&v| v == 0.0));

        let short = plan.analyze(&[&noise(800, 1)]).unwrap();
        assert!(ri_pack::<f64>(&[&y, &short]).is_err());
    }
}
