//! DOA-informed echo cancellation: an in-place CRN, the ways SS-DOA
//! outputs are fused into its input, and an online MVDR baseline.

mod iscrn;
mod mvdr;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use iscrn::{Iscrn, IscrnCache, IscrnConfig, IscrnState, OutputKind};
pub use mvdr::{mvdr_online, mvdr_online_track, plane_wave_images, steering_vector, MvdrConfig, MvdrOutput};

use crate::error::{Error, Result};
use crate::labels::LABEL_WIDTH;
use crate::nn::{
    prefixed, prefixed_mut, ri_mag_loss, softmax_groups, Complexity,
    FreqLinear, Init, Module, Param, Real, Tensor,
};
use crate::ssdoa::{SsDoaOutput, StreamFrame};

/// Spectral compression exponent of the AEC loss.
pub const LOSS_COMPRESSION: f64 = 0.5;

/// Which directional information is appended to the microphone and
/// far-end planes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FusionMode {
    #[serde(rename = "none")]
    None,
    /// Both planes of the SS-DOA embedding.
    E,
    /// The talker plane of the embedding.
    #[serde(rename = "ET")]
    Et,
    /// Talker DOA posteriors mapped to one plane by a learned linear layer.
    #[serde(rename = "ETA")]
    Eta,
    /// RI planes of a talker-steered MVDR output.
    B,
}

impl FusionMode {
    pub const ALL: [FusionMode; 5] = [
        FusionMode::None,
        FusionMode::E,
        FusionMode::Et,
        FusionMode::Eta,
        FusionMode::B,
    ];

    pub fn extra_channels(self) -> usize {
        match self {
            FusionMode::None => 0,
            FusionMode::E | FusionMode::B => 2,
            FusionMode::Et | FusionMode::Eta => 1,
        }
    }

    pub fn needs_ssdoa(self) -> bool {
        matches!(self, FusionMode::E | FusionMode::Et | FusionMode::Eta)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::None => "none",
            FusionMode::E => "E",
            FusionMode::Et => "ET",
            FusionMode::Eta => "ETA",
            FusionMode::B => "B",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown fusion mode `{s}`")))
    }
}

/// Directional side information for one utterance.
#[derive(Clone, Copy, Debug, Default)]
pub struct DirectionInfo<'a, T> {
    pub ssdoa: Option<&'a SsDoaOutput<T>>,
    /// `2 × T × F` RI planes of the beamformer output.
    pub beam: Option<&'a Tensor<T>>,
}

impl<'a, T> DirectionInfo<'a, T> {
    pub fn none() -> Self {
        Self {
            ssdoa: None,
            beam: None,
        }
    }

    pub fn ssdoa(out: &'a SsDoaOutput<T>) -> Self {
        Self {
            ssdoa: Some(out),
            beam: None,
        }
    }

    pub fn beam(planes: &'a Tensor<T>) -> Self {
        Self {
            ssdoa: None,
            beam: Some(planes),
        }
    }
}

/// Fusion layer plus ISCRN.
#[derive(Clone, Debug, PartialEq)]
pub struct AecModel<T> {
    pub mode: FusionMode,
    pub num_mics: usize,
    /// Linear(72 → F) for [`FusionMode::Eta`].
    pub eta: Option<FreqLinear<T>>,
    pub net: Iscrn<T>,
}

pub struct FuseCache<T> {
    /// Softmaxed talker logits, kept for the ETA backward pass.
    probs: Option<Tensor<T>>,
    /// Side information was supplied that this mode does not use.
    pub ignored: bool,
}

pub struct AecCache<T> {
    pub fuse: FuseCache<T>,
    pub net: IscrnCache<T>,
}

pub fn build_iscrn<T: Real>(num_mics: usize, mode: FusionMode, config: IscrnConfig) -> Result<AecModel<T>> {
    AecModel::new(num_mics, mode, config)
}

impl<T: Real> AecModel<T> {
    pub fn new(num_mics: usize, mode: FusionMode, config: IscrnConfig) -> Result<Self> {
        if num_mics == 0 {
            return Err(Error::Config("AEC needs at least one microphone".into()));
        }
        let in_channels = 2 * num_mics + 2 + mode.extra_channels();
        let net = Iscrn::new(config, in_channels)?;
        let eta = (mode == FusionMode::Eta).then(|| {
            let mut init = Init::new(config.seed ^ 0x5eed_e7a0);
            FreqLinear::new(LABEL_WIDTH, config.bins, &mut init)
        });
        let model = Self {
            mode,
            num_mics,
            eta,
            net,
        };
        assert_eq!(
            model.net.in_channels,
            model.base_channels() + mode.extra_channels(),
            "fusion channel accounting"
        );
        Ok(model)
    }

    pub fn base_channels(&self) -> usize {
        2 * self.num_mics + 2
    }

    pub fn in_channels(&self) -> usize {
        self.net.in_channels
    }

    pub fn bins(&self) -> usize {
        self.net.config.bins
    }

    pub fn cast<U: Real>(&self) -> AecModel<U> {
        let mut out = AecModel::<U>::new(self.num_mics, self.mode, self.net.config).expect("validated config");
        for ((_, dst), (_, src)) in out.params_mut().into_iter().zip(self.params()) {
            *dst = src.cast();
        }
        out
    }

    fn ssdoa_for<'a>(&self, info: &DirectionInfo<'a, T>) -> Result<&'a SsDoaOutput<T>> {
        info.ssdoa
            .ok_or_else(|| Error::domain(format!("fusion mode {} needs SS-DOA outputs", self.mode)))
    }

    /// Concatenates the directional planes onto `(2Q + 2) × T × F` input.
    /// Side information the mode does not use is ignored and flagged in
    /// the cache.
    pub fn fuse(&self, mic_far: &Tensor<T>, info: &DirectionInfo<'_, T>) -> Result<(Tensor<T>, FuseCache<T>)> {
        let ignored = match self.mode {
            FusionMode::None => info.ssdoa.is_some() || info.beam.is_some(),
            FusionMode::B => info.ssdoa.is_some(),
            _ => info.beam.is_some(),
        };
        mic_far.check_shape(self.base_channels(), self.bins(), "AEC microphone/far-end input")?;
        let frames = mic_far.frames();
        let check = |t: &Tensor<T>, what: &str| -> Result<()> {
            if t.frames() != frames {
                return Err(Error::domain(format!("{what} has {} frames, input has {frames}", t.frames())));
            }
            Ok(())
        };
        let mut probs = None;
        let fused = match self.mode {
            FusionMode::None => mic_far.clone(),
            FusionMode::E => {
                let s = self.ssdoa_for(info)?;
                s.embedding.check_shape(2, self.bins(), "SS-DOA embedding")?;
                check(&s.embedding, "SS-DOA embedding")?;
                Tensor::concat_channels(&[mic_far, &s.embedding])?
            }
            FusionMode::Et => {
                let s = self.ssdoa_for(info)?;
                s.embedding.check_shape(2, self.bins(), "SS-DOA embedding")?;
                check(&s.embedding, "SS-DOA embedding")?;
                Tensor::concat_channels(&[mic_far, &s.talker_plane()])?
            }
            FusionMode::Eta => {
                let s = self.ssdoa_for(info)?;
                s.talker_logits.check_shape(1, LABEL_WIDTH, "talker logits")?;
                check(&s.talker_logits, "talker logits")?;
                let p = softmax_groups(s.talker_logits.data(), 2)?;
                let p = Tensor::from_frames(1, frames, LABEL_WIDTH, p)?;
                let plane = self.eta.as_ref().expect("ETA layer").forward(&p)?;
                probs = Some(p);
                Tensor::concat_channels(&[mic_far, &plane])?
            }
            FusionMode::B => {
                let beam = info
                    .beam
                    .ok_or_else(|| Error::domain("fusion mode B needs beamformer planes"))?;
                beam.check_shape(2, self.bins(), "beamformer planes")?;
                check(beam, "beamformer planes")?;
                Tensor::concat_channels(&[mic_far, beam])?
            }
        };
        Ok((fused, FuseCache { probs, ignored }))
    }

    /// Estimated `2 × T × F` RI planes of the direct-path near-end speech.
    pub fn forward(&self, mic_far: &Tensor<T>, info: &DirectionInfo<'_, T>) -> Result<(Tensor<T>, AecCache<T>)> {
        let (fused, fuse) = self.fuse(mic_far, info)?;
        let (est, net) = self.net.forward(&fused)?;
        Ok((est, AecCache { fuse, net }))
    }

    pub fn infer(&self, mic_far: &Tensor<T>, info: &DirectionInfo<'_, T>) -> Result<Tensor<T>> {
        Ok(self.forward(mic_far, info)?.0)
    }

    /// Accumulates gradients of the network and, for ETA, the linear map.
    /// Upstream SS-DOA is frozen, so no gradient leaves this model.
    pub fn backward(&self, cache: &AecCache<T>, d_est: &Tensor<T>, grads: &mut Self) {
        let d_in = self.net.backward(&cache.net, d_est, &mut grads.net);
        if let (Some(eta), Some(p)) = (&self.eta, &cache.fuse.probs) {
            let d_plane = d_in.channel_slice(self.base_channels(), 1);
            eta.backward(p, &d_plane, grads.eta.as_mut().expect("ETA grads"));
        }
    }

    pub fn stream(&self) -> AecStream<'_, T> {
        AecStream {
            model: self,
            state: self.net.new_state(),
            next: 0,
        }
    }

    pub fn param_report(&self) -> String {
        let mut s = String::new();
        for (name, p) in self.params() {
            s += &format!("{name:<36} {:>8}  {:?}\n", p.len(), p.shape);
        }
        s += &format!("{:<36} {:>8}\n", "total", self.num_params());
        s
    }
}

impl<T: Real> Complexity for AecModel<T> {
    fn macs_per_frame(&self) -> u64 {
        self.net.macs_per_frame() + self.eta.as_ref().map_or(0, |e| e.macs_per_frame())
    }
}

impl<T: Real> Module<T> for AecModel<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut v = Vec::new();
        if let Some(e) = &self.eta {
            v.extend(prefixed("eta", e.params()));
        }
        v.extend(prefixed("net", self.net.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut v = Vec::new();
        if let Some(e) = &mut self.eta {
            v.extend(prefixed_mut("eta", e.params_mut()));
        }
        v.extend(prefixed_mut("net", self.net.params_mut()));
        v
    }
}

/// Compressed RI + magnitude loss of a `2 × T × F` estimate against its
/// `2 × T × F` target. Returns the loss and the estimate gradient.
pub fn aec_loss<T: Real>(est: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if est.shape() != target.shape() || est.channels() != 2 {
        return Err(Error::domain("AEC loss needs matching 2 x T x F tensors"));
    }
    let planes = |x: &Tensor<T>, c: usize| -> Vec<T> {
        (0..x.frames())
            .flat_map(|t| x.frame(t)[c * x.bins()..(c + 1) * x.bins()].to_vec())
            .collect()
    };
    let (loss, g_re, g_im) = ri_mag_loss(
        &planes(est, 0),
        &planes(est, 1),
        &planes(target, 0),
        &planes(target, 1),
        LOSS_COMPRESSION,
    )?;
    let f = est.bins();
    let grad = Tensor::from_fn(2, est.frames(), f, |c, t, k| {
        if c == 0 {
            g_re[t * f + k]
        } else {
            g_im[t * f + k]
        }
    });
    Ok((loss, grad))
}

/// Frame-online AEC over fused input frames.
pub struct AecStream<'a, T> {
    model: &'a AecModel<T>,
    state: IscrnState<T>,
    next: usize,
}

impl<T: Real> AecStream<'_, T> {
    /// Fuses one frame of `(2Q + 2) × F` input with the matching SS-DOA
    /// or beamformer frame and returns the `2 × F` estimate.
    pub fn push(
        &mut self,
        index: usize,
        mic_far: &[T],
        ssdoa: Option<&StreamFrame<T>>,
        beam: Option<&[T]>,
    ) -> Result<Vec<T>> {
        if index != self.next {
            return Err(Error::Protocol(format!(
                "expected frame {}, received frame {index}",
                self.next
            )));
        }
        let m = self.model;
        let f = m.bins();
        if mic_far.len() != m.base_channels() * f {
            return Err(Error::domain(format!(
                "frame has {} values, expected {}",
                mic_far.len(),
                m.base_channels() * f
            )));
        }
        let mut frame = mic_far.to_vec();
        let need = |what: &str| Error::domain(format!("fusion mode {} needs {what}", m.mode));
        match m.mode {
            FusionMode::None => {}
            FusionMode::E => frame.extend_from_slice(&ssdoa.ok_or_else(|| need("SS-DOA outputs"))?.embedding),
            FusionMode::Et => {
                let s = ssdoa.ok_or_else(|| need("SS-DOA outputs"))?;
                frame.extend_from_slice(&s.embedding[f..2 * f]);
            }
            FusionMode::Eta => {
                let s = ssdoa.ok_or_else(|| need("SS-DOA outputs"))?;
                let p = softmax_groups(&s.talker_logits, 2)?;
                let mut plane = vec![T::zero(); f];
                m.eta.as_ref().expect("ETA layer").forward_frame(&p, &mut plane);
                frame.extend(plane);
            }
            FusionMode::B => frame.extend_from_slice(beam.ok_or_else(|| need("beamformer planes"))?),
        }
        if frame.len() != m.in_channels() * f {
            return Err(Error::domain("side-information frame has the wrong size"));
        }
        self.next += 1;
        Ok(m.net.step(&mut self.state, &frame))
    }
}
