//! Turns scenarios into network-ready examples: rendered waves, RI input
//! planes, the direct-path target and DOA labels.

use serde::{Deserialize, Serialize};

use crate::acoustics::{render_mixture, RenderConfig, RenderedMixture};
use crate::aec::{mvdr_online_track, MvdrConfig};
use crate::dsp::{ri_pack, SpectroTensor, Stft, StftConfig};
use crate::error::{Error, Result};
use crate::labels::{make_labels, ActivityConfig, Branch, DoaLabelTrack, SourceWaves};
use crate::nn::Tensor;
use crate::scenario::{Sampler, SamplerConfig, Scenario, ScenarioPolicy};
use crate::surrogate::{speech_surrogate, SurrogateConfig};

/// Everything needed to go from a seed to an [`Example`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub sampler: SamplerConfig,
    pub render: RenderConfig,
    pub stft: StftConfig,
    pub activity: ActivityConfig,
    pub surrogate: SurrogateConfig,
    pub mvdr: MvdrConfig,
}

/// Far-end and near-end source signals for a scenario, drawn from the
/// speech surrogate with seeds derived from the scenario seed.
pub fn surrogate_sources(scn: &Scenario, cfg: &SurrogateConfig) -> (Vec<f64>, Vec<f64>) {
    let n = (scn.duration_s * cfg.sample_rate).round() as usize;
    let far = speech_surrogate(n, scn.rng_seed.wrapping_mul(2).wrapping_add(1), cfg);
    let near = speech_surrogate(n, scn.rng_seed.wrapping_mul(2).wrapping_add(2), cfg);
    (far, near)
}

/// One rendered scenario with its network views.
#[derive(Clone, Debug)]
pub struct Example {
    pub id: String,
    pub scenario: Scenario,
    pub mixture: RenderedMixture,
    /// `(2Q + 2) × T × F`: RI of each microphone, then of the far end.
    pub input: Tensor<f32>,
    /// `2 × T × F`: RI of the direct-path near end at microphone 0.
    pub target: Tensor<f32>,
    pub labels: DoaLabelTrack,
    /// Multichannel mixture spectrogram, kept for beamforming.
    pub mixture_spec: SpectroTensor,
}

impl Example {
    pub fn frames(&self) -> usize {
        self.input.frames()
    }

    pub fn loudspeaker_targets(&self) -> Vec<f32> {
        self.labels.one_hot(Branch::Loudspeakers)
    }

    pub fn talker_targets(&self) -> Vec<f32> {
        self.labels.one_hot(Branch::Talker)
    }

    /// RI planes of an MVDR steered along the true talker trajectory.
    pub fn beam(&self, cfg: &MvdrConfig) -> Result<Tensor<f32>> {
        let stft = self.mixture_spec.config;
        let look: Vec<f64> = (0..self.frames())
            .map(|t| {
                let center = t * stft.hop_len() + stft.win_len() / 2;
                self.scenario
                    .talker_at(center as f64 / stft.sample_rate as f64)
                    .direction_deg
            })
            .collect();
        let out = mvdr_online_track(&self.mixture_spec, &look, &self.scenario.array, cfg)?;
        ri_pack(&[&out.output])
    }
}

pub fn build_example(
    id: &str,
    scn: &Scenario,
    far_end: &[f64],
    near_speech: &[f64],
    cfg: &DatasetConfig,
) -> Result<Example> {
    let mixture = render_mixture(scn, far_end, near_speech, &cfg.render)?;
    let stft = Stft::new(cfg.stft)?;
    let y: Vec<&[f64]> = mixture.y.iter().map(|c| c.as_slice()).collect();
    let mixture_spec = stft.analyze(&y)?;
    let far_spec = stft.analyze(&[&mixture.far_end])?;
    let target_spec = stft.analyze(&[&mixture.near_direct[0]])?;
    let input = ri_pack(&[&mixture_spec, &far_spec])?;
    let target = ri_pack(&[&target_spec])?;
    let sources = SourceWaves {
        loudspeakers: mixture.far_end_nl.clone(),
        talker: mixture.talker_dry.clone(),
    };
    let labels = make_labels(scn, &sources, &cfg.stft, &cfg.activity)?;
    if labels.frames() != input.frames() {
        return Err(Error::domain("label and spectrogram frame counts differ"));
    }
    Ok(Example {
        id: id.to_string(),
        scenario: scn.clone(),
        mixture,
        input,
        target,
        labels,
        mixture_spec,
    })
}

/// Samples and renders `count` scenarios with surrogate sources. Example
/// `i` uses seed `base_seed + i`.
pub fn synth_examples(
    policy: ScenarioPolicy,
    count: usize,
    base_seed: u64,
    cfg: &DatasetConfig,
) -> Result<Vec<Example>> {
    let sampler = Sampler::new(cfg.sampler.clone())?;
    (0..count as u64)
        .map(|i| {
            let scn = sampler.sample(policy, base_seed + i)?;
            let (far, near) = surrogate_sources(&scn, &cfg.surrogate);
            build_example(&format!("{policy}-{:06}", base_seed + i), &scn, &far, &near, cfg)
        })
        .collect()
}
