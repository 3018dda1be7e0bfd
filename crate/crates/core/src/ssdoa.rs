//! SS-DOA: four convolutional-recurrent blocks and two per-frame
//! classification heads over the 36-direction grid, one for the
//! loudspeaker pair and one for the near-end talker.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{decode_frame, Branch, LABEL_WIDTH};
use crate::nn::{
    bce_with_logits, prefixed, prefixed_mut, Complexity, CrBlock, CrBlockCache, CrBlockState,
    Dropout, FreqLinear, Init, Mode, Module, NormGroup, Param, Real, Tensor,
};
use crate::scenario::NUM_DIRECTIONS;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsDoaConfig {
    pub num_mics: usize,
    pub channels: usize,
    pub bins: usize,
    pub num_blocks: usize,
    pub dropout: f64,
    pub norm: NormGroup,
    pub seed: u64,
}

impl Default for SsDoaConfig {
    fn default() -> Self {
        Self {
            num_mics: 6,
            channels: 20,
            bins: 161,
            num_blocks: 4,
            dropout: 0.2,
            norm: NormGroup::ChannelFreq,
            seed: 0,
        }
    }
}

impl SsDoaConfig {
    pub fn in_channels(&self) -> usize {
        2 * self.num_mics + 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_mics < 2 {
            return Err(Error::Config(format!("SS-DOA needs at least 2 mics, got {}", self.num_mics)));
        }
        if self.num_blocks < 1 || self.channels == 0 || self.bins == 0 {
            return Err(Error::Config("SS-DOA needs at least one block, channel and bin".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SsDoa<T> {
    pub config: SsDoaConfig,
    pub blocks: Vec<CrBlock<T>>,
    pub head_loudspeakers: FreqLinear<T>,
    pub head_talker: FreqLinear<T>,
}

/// Network outputs for a whole utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct SsDoaOutput<T> {
    /// `1 × T × 72` loudspeaker logits (per direction: present, absent).
    pub loudspeaker_logits: Tensor<T>,
    pub talker_logits: Tensor<T>,
    /// `2 × T × F` output of the last CR block.
    pub embedding: Tensor<T>,
}

impl<T: Real> SsDoaOutput<T> {
    /// The talker half of the embedding, `1 × T × F`.
    pub fn talker_plane(&self) -> Tensor<T> {
        self.embedding.channel_slice(1, 1)
    }

    pub fn logits(&self, branch: Branch) -> &Tensor<T> {
        match branch {
            Branch::Loudspeakers => &self.loudspeaker_logits,
            Branch::Talker => &self.talker_logits,
        }
    }
}

pub struct SsDoaCache<T> {
    blocks: Vec<CrBlockCache<T>>,
    planes: [Tensor<T>; 2],
    masks: [Vec<T>; 2],
}

impl<T: Real> SsDoa<T> {
    pub fn new(config: SsDoaConfig) -> Result<Self> {
        config.validate()?;
        let mut init = Init::new(config.seed);
        let (c, f) = (config.channels, config.bins);
        let mut blocks = Vec::with_capacity(config.num_blocks);
        for b in 0..config.num_blocks {
            let cin = if b == 0 { config.in_channels() } else { c };
            let last = b + 1 == config.num_blocks;
            let out = if last { 2 } else { c };
            blocks.push(CrBlock::new(cin, out, 2 * c, out, f, config.norm, &mut init));
        }
        Ok(Self {
            config,
            blocks,
            head_loudspeakers: FreqLinear::new(f, LABEL_WIDTH, &mut init),
            head_talker: FreqLinear::new(f, LABEL_WIDTH, &mut init),
        })
    }

    pub fn cast<U: Real>(&self) -> SsDoa<U> {
        let mut out = SsDoa::<U>::new(self.config).expect("validated config");
        for ((_, dst), (_, src)) in out.params_mut().into_iter().zip(self.params()) {
            *dst = src.cast();
        }
        out
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        x.check_shape(self.config.in_channels(), self.config.bins, "SS-DOA input")
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode, seed: u64) -> Result<(SsDoaOutput<T>, SsDoaCache<T>)> {
        self.check_input(x)?;
        let mut caches: Vec<CrBlockCache<T>> = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let input = caches.last().map_or(x, |c| &c.out);
            let cache = block.forward(input)?;
            caches.push(cache);
        }
        let embedding = caches.last().expect("at least one block").out.clone();
        let planes = [embedding.channel_slice(0, 1), embedding.channel_slice(1, 1)];
        let drop = Dropout::new(self.config.dropout);
        let (ls, m0) = drop.forward(&self.head_loudspeakers.forward(&planes[0])?, mode, seed);
        let (tk, m1) = drop.forward(&self.head_talker.forward(&planes[1])?, mode, seed ^ 0x9e37_79b9);
        Ok((
            SsDoaOutput {
                loudspeaker_logits: ls,
                talker_logits: tk,
                embedding,
            },
            SsDoaCache {
                blocks: caches,
                planes,
                masks: [m0, m1],
            },
        ))
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<SsDoaOutput<T>> {
        Ok(self.forward(x, Mode::Eval, 0)?.0)
    }

    /// Accumulates parameter gradients from the two logit gradients and
    /// returns the input gradient.
    pub fn backward(
        &self,
        cache: &SsDoaCache<T>,
        d_loudspeakers: &Tensor<T>,
        d_talker: &Tensor<T>,
        grads: &mut Self,
    ) -> Tensor<T> {
        let drop = Dropout::new(self.config.dropout);
        let d0 = drop.backward(&cache.masks[0], d_loudspeakers);
        let d0 = self
            .head_loudspeakers
            .backward(&cache.planes[0], &d0, &mut grads.head_loudspeakers);
        let d1 = drop.backward(&cache.masks[1], d_talker);
        let d1 = self.head_talker.backward(&cache.planes[1], &d1, &mut grads.head_talker);
        let mut d = Tensor::concat_channels(&[&d0, &d1]).expect("planes share shape");
        for (b, block) in self.blocks.iter().enumerate().rev() {
            d = block.backward(&cache.blocks[b], &d, &mut grads.blocks[b]);
        }
        d
    }

    pub fn stream(&self) -> SsDoaStream<'_, T> {
        SsDoaStream {
            model: self,
            states: self.blocks.iter().map(|b| b.new_state()).collect(),
            next: 0,
        }
    }

    /// One line per parameter tensor plus the total.
    pub fn param_report(&self) -> String {
        let mut s = String::new();
        for (name, p) in self.params() {
            s += &format!("{name:<36} {:>8}  {:?}\n", p.len(), p.shape);
        }
        s += &format!("{:<36} {:>8}\n", "total", self.num_params());
        s
    }
}

impl<T: Real> Complexity for SsDoa<T> {
    fn macs_per_frame(&self) -> u64 {
        self.blocks.iter().map(|b| b.macs_per_frame()).sum::<u64>()
            + self.head_loudspeakers.macs_per_frame()
            + self.head_talker.macs_per_frame()
    }
}

impl<T: Real> Module<T> for SsDoa<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut v = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            v.extend(prefixed(&format!("blocks.{i}"), b.params()));
        }
        v.extend(prefixed("head_loudspeakers", self.head_loudspeakers.params()));
        v.extend(prefixed("head_talker", self.head_talker.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut v = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            v.extend(prefixed_mut(&format!("blocks.{i}"), b.params_mut()));
        }
        v.extend(prefixed_mut("head_loudspeakers", self.head_loudspeakers.params_mut()));
        v.extend(prefixed_mut("head_talker", self.head_talker.params_mut()));
        v
    }
}

/// DOA loss: mean BCE of each branch against its one-hot targets, summed.
/// Returns the loss and the two logit gradients.
pub fn doa_loss<T: Real>(
    out: &SsDoaOutput<T>,
    loudspeaker_targets: &[T],
    talker_targets: &[T],
) -> Result<(f64, Tensor<T>, Tensor<T>)> {
    let (l0, g0) = bce_with_logits(out.loudspeaker_logits.data(), loudspeaker_targets)?;
    let (l1, g1) = bce_with_logits(out.talker_logits.data(), talker_targets)?;
    let t = out.loudspeaker_logits.frames();
    Ok((
        l0 + l1,
        Tensor::from_frames(1, t, LABEL_WIDTH, g0)?,
        Tensor::from_frames(1, t, LABEL_WIDTH, g1)?,
    ))
}

/// Frame-online SS-DOA: carries conv history and LSTM state per block.
pub struct SsDoaStream<'a, T> {
    model: &'a SsDoa<T>,
    states: Vec<CrBlockState<T>>,
    next: usize,
}

/// Outputs for one streamed frame.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamFrame<T> {
    pub index: usize,
    pub loudspeaker_logits: Vec<T>,
    pub talker_logits: Vec<T>,
    /// `2 × F` slice of the last-block output.
    pub embedding: Vec<T>,
}

impl<T: Real> SsDoaStream<'_, T> {
    pub fn next_index(&self) -> usize {
        self.next
    }

    /// Consumes frame `index` (a `(2Q + 2) × F` block, channel-major).
    pub fn push(&mut self, index: usize, frame: &[T]) -> Result<StreamFrame<T>> {
        if index != self.next {
            return Err(Error::Protocol(format!(
                "expected frame {}, received frame {index}",
                self.next
            )));
        }
        let cfg = &self.model.config;
        let want = cfg.in_channels() * cfg.bins;
        if frame.len() != want {
            return Err(Error::domain(format!("frame has {} values, expected {want}", frame.len())));
        }
        let mut h = frame.to_vec();
        for (block, state) in self.model.blocks.iter().zip(self.states.iter_mut()) {
            h = block.step(state, &h);
        }
        let f = cfg.bins;
        let mut ls = vec![T::zero(); LABEL_WIDTH];
        let mut tk = vec![T::zero(); LABEL_WIDTH];
        self.model.head_loudspeakers.forward_frame(&h[..f], &mut ls);
        self.model.head_talker.forward_frame(&h[f..2 * f], &mut tk);
        self.next += 1;
        Ok(StreamFrame {
            index,
            loudspeaker_logits: ls,
            talker_logits: tk,
            embedding: h,
        })
    }
}

/// Per-frame decoded record, written as one JSON line by the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub frame: usize,
    pub loudspeakers: Vec<usize>,
    pub talker: Vec<usize>,
    pub p_loudspeakers: Vec<f64>,
    pub p_talker: Vec<f64>,
}

fn probs<T: Real>(logits: &[T]) -> Vec<f64> {
    logits
        .chunks_exact(2)
        .map(|c| 1.0 / (1.0 + (c[1].as_f64() - c[0].as_f64()).exp()))
        .collect()
}

impl StreamRecord {
    pub fn from_logits<T: Real>(frame: usize, ls: &[T], tk: &[T], threshold: f64) -> Self {
        let (pl, pt) = (probs(ls), probs(tk));
        Self {
            frame,
            loudspeakers: decode_frame(&pl, Branch::Loudspeakers.max_sources(), threshold),
            talker: decode_frame(&pt, Branch::Talker.max_sources(), threshold),
            p_loudspeakers: pl,
            p_talker: pt,
        }
    }
}

/// Streams `(index, frame)` pairs through the model and decodes each frame.
pub fn stream_infer<T: Real, I>(model: &SsDoa<T>, frames: I, threshold: f64) -> Result<Vec<StreamRecord>>
where
    I: IntoIterator<Item = (usize, Vec<T>)>,
{
    let mut stream = model.stream();
    let mut out = Vec::new();
    for (index, frame) in frames {
        let f = stream.push(index, &frame)?;
        out.push(StreamRecord::from_logits(
            index,
            &f.loudspeaker_logits,
            &f.talker_logits,
            threshold,
        ));
    }
    Ok(out)
}

/// Decodes a batch output into per-frame records.
pub fn decode_output<T: Real>(out: &SsDoaOutput<T>, threshold: f64) -> Vec<StreamRecord> {
    (0..out.loudspeaker_logits.frames())
        .map(|t| {
            StreamRecord::from_logits(
                t,
                out.loudspeaker_logits.frame(t),
                out.talker_logits.frame(t),
                threshold,
            )
        })
        .collect()
}

const _: () = assert!(LABEL_WIDTH == 2 * NUM_DIRECTIONS);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Init;

    fn small() -> SsDoaConfig {
        SsDoaConfig {
            num_mics: 2,
            channels: 4,
            bins: 9,
            ..Default::default()
        }
    }

    fn input(cfg: &SsDoaConfig, frames: usize, seed: u64) -> Tensor<f64> {
        let mut init = Init::new(seed);
        let p = init.uniform::<f64>(&[cfg.in_channels() * frames * cfg.bins], 1.0);
        Tensor::from_frames(cfg.in_channels(), frames, cfg.bins, p.data).unwrap()
    }

    #[test]
    fn default_parameter_count() {
        let m = SsDoa::<f32>::new(SsDoaConfig::default()).unwrap();
        assert_eq!(m.config.in_channels(), 14);
        assert_eq!(m.num_params(), 92_776);
        let mmacs = m.macs(1.0, 100.0) / 1e6;
        assert!((mmacs - 826.8).abs() / 826.8 < 0.25, "{mmacs} MMAC/s");
    }

    #[test]
    fn shapes_and_single_frame() {
        let cfg = small();
        let m = SsDoa::<f64>::new(cfg).unwrap();
        let out = m.infer(&input(&cfg, 1, 3)).unwrap();
        assert_eq!(out.loudspeaker_logits.shape(), (1, 1, 72));
        assert_eq!(out.embedding.shape(), (2, 1, 9));
        assert!(m.infer(&Tensor::zeros(3, 2, 9)).is_err());
    }

    #[test]
    fn stream_equals_batch() {
        let cfg = small();
        let m = SsDoa::<f32>::new(cfg).unwrap();
        let x = input(&cfg, 12, 4).cast::<f32>();
        let batch = m.infer(&x).unwrap();
        let mut s = m.stream();
        for t in 0..12 {
            let f = s.push(t, x.frame(t)).unwrap();
            assert_eq!(f.loudspeaker_logits, batch.loudspeaker_logits.frame(t));
            assert_eq!(f.talker_logits, batch.talker_logits.frame(t));
            assert_eq!(f.embedding, batch.embedding.frame(t));
        }
        assert!(matches!(s.push(20, x.frame(0)), Err(Error::Protocol(_))));
    }

    #[test]
    fn injected_silent_logits_decode_empty() {
        let mut ls = vec![0.0f32; LABEL_WIDTH];
        for d in 0..NUM_DIRECTIONS {
            ls[2 * d] = -4.0;
            ls[2 * d + 1] = 4.0;
        }
        let r = StreamRecord::from_logits(0, &ls, &ls, 0.5);
        assert!(r.loudspeakers.is_empty() && r.talker.is_empty());
        let uniform = vec![1.0f32; LABEL_WIDTH];
        let r = StreamRecord::from_logits(0, &vec![3.0f32; LABEL_WIDTH], &uniform, 0.5);
        assert!(r.loudspeakers.is_empty());
        let mut many = vec![-2.0f32; LABEL_WIDTH];
        for d in 0..NUM_DIRECTIONS {
            many[2 * d] = 2.0 + d as f32 * 0.01;
        }
        let r = StreamRecord::from_logits(0, &many, &many, 0.5);
        assert_eq!(r.loudspeakers, vec![34, 35]);
        assert_eq!(r.talker, vec![35]);
    }

    #[test]
    fn eval_is_deterministic_and_train_drops() {
        let cfg = small();
        let m = SsDoa::<f64>::new(cfg).unwrap();
        let x = input(&cfg, 5, 8);
        assert_eq!(m.infer(&x).unwrap(), m.infer(&x).unwrap());
        let (tr, _) = m.forward(&x, Mode::Train, 1).unwrap();
        assert_ne!(tr.loudspeaker_logits, m.infer(&x).unwrap().loudspeaker_logits);
    }
}
