use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::nonlinear::Nonlinearity;
use super::rir::{delay_samples, image_rir, room_reflection, RirConfig};
use super::wave::{MultichannelWave, WaveRole};
use crate::error::{Error, Result};
use crate::scenario::{distance, Scenario, TalkPattern};

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Signal-to-echo ratio in dB. Zero echo energy gives `+inf`.
pub fn ser(near: &[f64], echo: &[f64]) -> f64 {
    let e = energy(echo);
    if e == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (energy(near) / e).log10()
}

/// Linear convolution through the FFT, truncated to `x.len()` samples.
pub struct Convolver {
    planner: FftPlanner<f64>,
}

impl Default for Convolver {
    fn default() -> Self {
        Self {
            planner: FftPlanner::new(),
        }
    }
}

impl Convolver {
    fn plans(&mut self, n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
        (self.planner.plan_fft_forward(n), self.planner.plan_fft_inverse(n))
    }

    pub fn convolve(&mut self, x: &[f64], h: &[f64]) -> Vec<f64> {
        if x.is_empty() || h.is_empty() {
            return vec![0.0; x.len()];
        }
        let n = (x.len() + h.len() - 1).next_power_of_two();
        let (fwd, inv) = self.plans(n);
        let mut a: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        a.resize(n, Complex64::default());
        let mut b: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        b.resize(n, Complex64::default());
        fwd.process(&mut a);
        fwd.process(&mut b);
        for (p, q) in a.iter_mut().zip(&b) {
            *p *= q;
        }
        inv.process(&mut a);
        let k = 1.0 / n as f64;
        a[..x.len()].iter().map(|c| c.re * k).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub rir: RirConfig,
    pub nonlinearity: Nonlinearity,
    pub crossfade_ms: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            rir: RirConfig::default(),
            nonlinearity: Nonlinearity::default(),
            crossfade_ms: 10.0,
        }
    }
}

/// Every signal of the mixture model, `Q` channels unless noted.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedMixture {
    pub y: Vec<Vec<f64>>,
    /// Echo summed over loudspeakers.
    pub echo: Vec<Vec<f64>>,
    /// `[p][q]` echo image of loudspeaker `p` at mic `q`.
    pub echo_paths: Vec<Vec<Vec<f64>>>,
    pub near: Vec<Vec<f64>>,
    pub near_direct: Vec<Vec<f64>>,
    pub near_reverb: Vec<Vec<f64>>,
    /// Far-end reference as seen by the canceller (mono).
    pub far_end: Vec<f64>,
    /// Nonlinear loudspeaker drive, one per loudspeaker.
    pub far_end_nl: Vec<Vec<f64>>,
    /// Talker source signal after SER gain and pattern gating (mono, dry).
    pub talker_dry: Vec<f64>,
    pub near_gain: f64,
}

impl RenderedMixture {
    pub fn num_samples(&self) -> usize {
        self.far_end.len()
    }

    pub fn wave(&self, role: WaveRole) -> MultichannelWave {
        let ch = match role {
            WaveRole::Mixture => self.y.clone(),
            WaveRole::Echo => self.echo.clone(),
            WaveRole::NearEnd => self.near.clone(),
            WaveRole::NearEndDirect => self.near_direct.clone(),
            WaveRole::NearEndReverb => self.near_reverb.clone(),
            WaveRole::FarEnd => vec![self.far_end.clone()],
            WaveRole::FarEndNl => self.far_end_nl.clone(),
            WaveRole::Enhanced => vec![vec![0.0; self.num_samples()]],
        };
        let ch = if ch.is_empty() {
            vec![vec![0.0; self.num_samples()]]
        } else {
            ch
        };
        MultichannelWave {
            role,
            sample_rate: crate::dsp::SAMPLE_RATE,
            channels: ch,
        }
    }

    /// Realized SER at the reference microphone.
    pub fn realized_ser_db(&self) -> f64 {
        ser(&self.near[0], &self.echo[0])
    }
}

/// Crossfade weights giving each trajectory segment's share per sample.
fn segment_weights(starts: &[usize], fade: usize, n: usize) -> Vec<Vec<f64>> {
    let fade = fade.max(1) as f64;
    let ramp = |start: usize, i: usize| -> f64 {
        if i < start {
            0.0
        } else {
            ((i - start + 1) as f64 / fade).min(1.0)
        }
    };
    let k = starts.len();
    (0..k)
        .map(|s| {
            (0..n)
                .map(|i| {
                    let on = if s == 0 { 1.0 } else { ramp(starts[s], i) };
                    let off = if s + 1 < k { ramp(starts[s + 1], i) } else { 0.0 };
                    on - off
                })
                .collect()
        })
        .collect()
}

/// Renders `y_q = sum_p h_pq * nl(x) + s_q` for one scenario. The talker is
/// scaled to hit the scenario SER at mic 0 before the talk pattern gates
/// the absent side.
pub fn render_mixture(
    scn: &Scenario,
    far_end: &[f64],
    near_speech: &[f64],
    cfg: &RenderConfig,
) -> Result<RenderedMixture> {
    let n = far_end.len();
    if near_speech.len() != n {
        return Err(Error::domain(format!(
            "far-end has {n} samples but near-end speech has {}",
            near_speech.len()
        )));
    }
    if n == 0 {
        return Err(Error::domain("empty input signals"));
    }
    if scn.talker.is_empty() {
        return Err(Error::domain("scenario has no talker placement"));
    }
    let room = &scn.room;
    let mics = &scn.array.mic_positions;
    let q_count = mics.len();
    let fs = cfg.rir.sample_rate;
    let beta = room_reflection(room, &cfg.rir)?;
    let mut conv = Convolver::default();

    let x_nl = cfg.nonlinearity.apply(far_end)?;
    let mut echo_paths = Vec::with_capacity(scn.loudspeakers.len());
    for ls in &scn.loudspeakers {
        let mut per_mic = Vec::with_capacity(q_count);
        for mic in mics {
            let h = image_rir(room, &ls.position, mic, &cfg.rir, beta)?;
            per_mic.push(conv.convolve(&x_nl, &h.taps));
        }
        echo_paths.push(per_mic);
    }

    let starts: Vec<usize> = scn
        .talker
        .iter()
        .map(|seg| (seg.start_s * fs).round() as usize)
        .collect();
    let fade = (cfg.crossfade_ms * fs / 1000.0).round() as usize;
    let weights = segment_weights(&starts, fade, n);
    // The talker image is built as direct + reverberant parts so that
    // s = s_d + s_r holds exactly.
    let mut near_direct = vec![vec![0.0; n]; q_count];
    let mut near_reverb = vec![vec![0.0; n]; q_count];
    for (seg, w) in scn.talker.iter().zip(&weights) {
        for (q, mic) in mics.iter().enumerate() {
            let pos = &seg.placement.position;
            let mut h = image_rir(room, pos, mic, &cfg.rir, beta)?.taps;
            let d = distance(pos, mic);
            let n0 = delay_samples(d, fs);
            let direct_amp = 1.0 / (4.0 * std::f64::consts::PI * d);
            h[n0] -= direct_amp;
            let rev = conv.convolve(near_speech, &h);
            for i in 0..n {
                if i >= n0 {
                    near_direct[q][i] += w[i] * direct_amp * near_speech[i - n0];
                }
                near_reverb[q][i] += w[i] * rev[i];
            }
        }
    }
    let sum_parts = |d: &[Vec<f64>], r: &[Vec<f64>]| -> Vec<Vec<f64>> {
        d.iter()
            .zip(r)
            .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u + v).collect())
            .collect()
    };
    let near = sum_parts(&near_direct, &near_reverb);

    let mut echo: Vec<Vec<f64>> = (0..q_count)
        .map(|q| {
            let mut acc = vec![0.0; n];
            for path in &echo_paths {
                for (a, &v) in acc.iter_mut().zip(&path[q]) {
                    *a += v;
                }
            }
            acc
        })
        .collect();

    let mut near_gain = 1.0;
    if scn.talk_pattern.has_near_end() {
        let (es, ee) = (energy(&near[0]), energy(&echo[0]));
        if es > 0.0 && ee > 0.0 {
            near_gain = (ee * 10f64.powf(scn.ser_db as f64 / 10.0) / es).sqrt();
        }
    } else {
        near_gain = 0.0;
    }
    let mut talker_dry: Vec<f64> = near_speech.iter().map(|v| v * near_gain).collect();
    for ch in near_direct.iter_mut().chain(near_reverb.iter_mut()) {
        ch.iter_mut().for_each(|v| *v *= near_gain);
    }
    let near = sum_parts(&near_direct, &near_reverb);
    if near_gain == 0.0 {
        talker_dry.iter_mut().for_each(|v| *v = 0.0);
    }

    let mut far = far_end.to_vec();
    let mut far_nl = vec![x_nl; scn.loudspeakers.len()];
    if scn.talk_pattern == TalkPattern::NearEndSingleTalk {
        for path in echo_paths.iter_mut() {
            path.iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v = 0.0));
        }
        echo.iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v = 0.0));
        far.iter_mut().for_each(|v| *v = 0.0);
        far_nl.iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v = 0.0));
    }

    let y = echo
        .iter()
        .zip(&near)
        .map(|(e, s)| e.iter().zip(s).map(|(a, b)| a + b).collect())
        .collect();

    Ok(RenderedMixture {
        y,
        echo,
        echo_paths,
        near,
        near_direct,
        near_reverb,
        far_end: far,
        far_end_nl: far_nl,
        talker_dry,
        near_gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{sample_scenario, ScenarioPolicy};
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = Pcg64::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()
    }

    fn fast_cfg() -> RenderConfig {
        RenderConfig {
            rir: RirConfig {
                length_t60: 0.3,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn scenario(pattern: TalkPattern, seed: u64) -> Scenario {
        let mut s = sample_scenario(ScenarioPolicy::Matched, seed);
        s.talk_pattern = pattern;
        s.room.t60_s = 0.3;
        s
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let x = noise(300, 1);
        let h = noise(40, 2);
        let y = Convolver::default().convolve(&x, &h);
        for n in [0, 17, 39, 150, 299] {
            let mut acc = 0.0;
            for k in 0..=n.min(39) {
                acc += h[k] * x[n - k];
            }
            assert!((acc - y[n]).abs() < 1e-12);
        }
    }

    #[test]
    fn ser_examples() {
        let a = noise(1000, 3);
        assert!(ser(&a, &a).abs() < 1e-12);
        let b: Vec<f64> = a.iter().map(|v| v * 10.0).collect();
        assert!((ser(&a, &b) + 20.0).abs() < 1e-9);
        assert_eq!(ser(&a, &[0.0; 4]), f64::INFINITY);
    }

    #[test]
    fn mixture_identities() {
        let scn = scenario(TalkPattern::DoubleTalk, 4);
        let m = render_mixture(&scn, &noise(4000, 5), &noise(4000, 6), &fast_cfg()).unwrap();
        assert!((m.realized_ser_db() - scn.ser_db as f64).abs() < 0.01);
        for q in 0..m.y.len() {
            let scale = energy(&m.y[q]).sqrt();
            for i in 0..m.num_samples() {
                assert!((m.y[q][i] - m.echo[q][i] - m.near[q][i]).abs() <= 1e-10 * scale);
                assert_eq!(m.near_direct[q][i] + m.near_reverb[q][i], m.near[q][i]);
            }
        }
    }

    #[test]
    fn patterns_gate_sources() {
        let fe = render_mixture(&scenario(TalkPattern::FarEndSingleTalk, 8), &noise(3000, 1), &noise(3000, 2), &fast_cfg())
            .unwrap();
        assert!(fe.near.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(fe.y, fe.echo);
        let ne = render_mixture(&scenario(TalkPattern::NearEndSingleTalk, 8), &noise(3000, 1), &noise(3000, 2), &fast_cfg())
            .unwrap();
        assert!(ne.echo.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(ne.y, ne.near);
    }

    #[test]
    fn no_loudspeakers_gives_near_end_only() {
        let mut scn = scenario(TalkPattern::DoubleTalk, 2);
        scn.loudspeakers.clear();
        let m = render_mixture(&scn, &noise(2000, 1), &noise(2000, 2), &fast_cfg()).unwrap();
        assert_eq!(m.y, m.near);
    }

    #[test]
    fn echo_linear_only_without_nonlinearity() {
        let scn = scenario(TalkPattern::DoubleTalk, 3);
        let x = noise(2000, 1);
        let x2: Vec<f64> = x.iter().map(|v| v * 0.25).collect();
        let s = noise(2000, 2);
        let mut cfg = fast_cfg();
        cfg.nonlinearity = Nonlinearity::bypass();
        let a = render_mixture(&scn, &x, &s, &cfg).unwrap();
        let b = render_mixture(&scn, &x2, &s, &cfg).unwrap();
        for (pa, pb) in a.echo_paths.iter().flatten().zip(b.echo_paths.iter().flatten()) {
            for (u, v) in pa.iter().zip(pb) {
                assert!((0.25 * u - v).abs() <= 1e-12 * (1.0 + u.abs()));
            }
        }
        cfg.nonlinearity = Nonlinearity::default();
        let c = render_mixture(&scn, &x, &s, &cfg).unwrap();
        let d = render_mixture(&scn, &x2, &s, &cfg).unwrap();
        let dev: f64 = c.echo[0].iter().zip(&d.echo[0]).map(|(u, v)| (0.25 * u - v).abs()).sum();
        assert!(dev > 1e-3 * c.echo[0].iter().map(|u| u.abs()).sum::<f64>());
    }

    #[test]
    fn length_mismatch_is_domain_error() {
        let scn = scenario(TalkPattern::DoubleTalk, 1);
        let r = render_mixture(&scn, &noise(100, 1), &noise(99, 2), &fast_cfg());
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn crossfade_weights_partition_unity() {
        let w = segment_weights(&[0, 100], 16, 200);
        for i in 0..200 {
            assert!((w[0][i] + w[1][i] - 1.0).abs() < 1e-15);
        }
        assert_eq!(w[1][99], 0.0);
        assert_eq!(w[0][116], 0.0);
    }
}
