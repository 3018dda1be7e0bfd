use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    prefixed, prefixed_mut, tanh_backward, tanh_forward, ChannelLinear, Complexity, Conv2dCausal,
    ConvState, ConvUnit, ConvUnitCache, Init, LstmCache, LstmState, Module, NormGroup, Param, Real,
    S4d, S4dCache, S4dState, TchLstm, Tensor,
};

/// How the output head turns its two planes into the estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    /// Bounded complex ratio mask (tanh) on the reference microphone.
    Mask,
    /// Real and imaginary parts of the estimate directly.
    Direct,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IscrnConfig {
    pub channels: usize,
    pub bins: usize,
    /// Conv units before the recurrent core.
    pub pre_units: usize,
    /// Conv units after the S4D block.
    pub post_units: usize,
    pub s4d_state: usize,
    pub norm: NormGroup,
    pub output: OutputKind,
    pub seed: u64,
}

impl Default for IscrnConfig {
    fn default() -> Self {
        Self {
            channels: 24,
            bins: 161,
            pre_units: 3,
            post_units: 3,
            s4d_state: 16,
            norm: NormGroup::ChannelFreq,
            output: OutputKind::Mask,
            seed: 0,
        }
    }
}

impl IscrnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.bins == 0 || self.s4d_state == 0 {
            return Err(Error::Config("ISCRN needs nonzero channels, bins and S4D state".into()));
        }
        if self.pre_units == 0 {
            return Err(Error::Config("ISCRN needs at least one conv unit before the core".into()));
        }
        Ok(())
    }
}

/// In-place convolutional recurrent network. Every layer keeps all `F`
/// bins: conv units, a sub-band LSTM core with a residual channel map, an
/// S4D block along time, more conv units and a 2-channel output conv.
#[derive(Clone, Debug, PartialEq)]
pub struct Iscrn<T> {
    pub config: IscrnConfig,
    pub in_channels: usize,
    pub pre: Vec<ConvUnit<T>>,
    pub lstm: TchLstm<T>,
    pub proj: ChannelLinear<T>,
    pub s4d: S4d<T>,
    pub post: Vec<ConvUnit<T>>,
    pub head: Conv2dCausal<T>,
}

pub struct IscrnCache<T> {
    input: Tensor<T>,
    pre: Vec<ConvUnitCache<T>>,
    lstm: LstmCache<T>,
    lstm_out: Tensor<T>,
    core: Tensor<T>,
    s4d: S4dCache<T>,
    post: Vec<ConvUnitCache<T>>,
    head_in: Tensor<T>,
    /// Mask (after tanh) or the direct estimate.
    head_out: Tensor<T>,
    /// Every intermediate activation's bin count, for shape checks.
    pub bins_seen: Vec<usize>,
}

/// Recurrent and convolutional history for frame-online inference.
#[derive(Clone, Debug)]
pub struct IscrnState<T> {
    pre: Vec<ConvState<T>>,
    lstm: LstmState<T>,
    s4d: S4dState<T>,
    post: Vec<ConvState<T>>,
    head: ConvState<T>,
}

/// `Ŝ = M ⊙ Y` per bin on interleaved-by-plane `[re, im]` frames.
fn complex_mul<T: Real>(m_re: T, m_im: T, y_re: T, y_im: T) -> (T, T) {
    (m_re * y_re - m_im * y_im, m_re * y_im + m_im * y_re)
}

impl<T: Real> Iscrn<T> {
    pub fn new(config: IscrnConfig, in_channels: usize) -> Result<Self> {
        config.validate()?;
        if in_channels < 2 {
            return Err(Error::Config("ISCRN input needs the reference RI planes".into()));
        }
        let mut init = Init::new(config.seed);
        let (c, f) = (config.channels, config.bins);
        let pre = (0..config.pre_units)
            .map(|i| ConvUnit::new(if i == 0 { in_channels } else { c }, c, f, config.norm, &mut init))
            .collect();
        let lstm = TchLstm::new(c, 2 * c, &mut init);
        let proj = ChannelLinear::new(2 * c, c, &mut init);
        let s4d = S4d::new(c, config.s4d_state, &mut init);
        let post = (0..config.post_units)
            .map(|_| ConvUnit::new(c, c, f, config.norm, &mut init))
            .collect();
        let head = Conv2dCausal::new(c, 2, &mut init);
        Ok(Self {
            config,
            in_channels,
            pre,
            lstm,
            proj,
            s4d,
            post,
            head,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, IscrnCache<T>)> {
        x.check_shape(self.in_channels, self.config.bins, "ISCRN input")?;
        let mut bins_seen = Vec::new();
        let mut pre: Vec<ConvUnitCache<T>> = Vec::with_capacity(self.pre.len());
        for unit in &self.pre {
            let cache = unit.forward(pre.last().map_or(x, |c| &c.out))?;
            bins_seen.push(cache.out.bins());
            pre.push(cache);
        }
        let u = &pre.last().expect("at least one pre unit").out;
        let (lstm_out, lstm) = self.lstm.forward(u)?;
        let mut core = self.proj.forward(&lstm_out)?;
        core.add_assign(u);
        let (s4d_out, s4d) = self.s4d.forward(&core)?;
        bins_seen.extend([lstm_out.bins(), core.bins(), s4d_out.bins()]);
        let mut post: Vec<ConvUnitCache<T>> = Vec::with_capacity(self.post.len());
        for unit in &self.post {
            let cache = unit.forward(post.last().map_or(&s4d_out, |c| &c.out))?;
            bins_seen.push(cache.out.bins());
            post.push(cache);
        }
        let head_in = post.last().map_or(&s4d_out, |c| &c.out).clone();
        let raw = self.head.forward(&head_in)?;
        bins_seen.push(raw.bins());
        let (est, head_out) = match self.config.output {
            OutputKind::Direct => (raw.clone(), raw),
            OutputKind::Mask => {
                let m = tanh_forward(&raw);
                let mut est = Tensor::zeros(2, x.frames(), self.config.bins);
                let f_n = self.config.bins;
                for t in 0..x.frames() {
                    let (mf, yf) = (m.frame(t), x.frame(t));
                    let out = est.frame_mut(t);
                    for f in 0..f_n {
                        let (re, im) = complex_mul(mf[f], mf[f_n + f], yf[f], yf[f_n + f]);
                        out[f] = re;
                        out[f_n + f] = im;
                    }
                }
                (est, m)
            }
        };
        Ok((
            est,
            IscrnCache {
                input: x.clone(),
                pre,
                lstm,
                lstm_out,
                core,
                s4d,
                post,
                head_in,
                head_out,
                bins_seen,
            },
        ))
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(x)?.0)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, cache: &IscrnCache<T>, d_est: &Tensor<T>, grads: &mut Self) -> Tensor<T> {
        let f_n = self.config.bins;
        let frames = d_est.frames();
        let mut d_ref = Tensor::zeros(2, frames, f_n);
        let d_raw = match self.config.output {
            OutputKind::Direct => d_est.clone(),
            OutputKind::Mask => {
                let m = &cache.head_out;
                let mut dm = Tensor::zeros(2, frames, f_n);
                for t in 0..frames {
                    let (mf, yf, gf) = (m.frame(t), cache.input.frame(t), d_est.frame(t));
                    let mut dmf = vec![T::zero(); 2 * f_n];
                    let dyf = d_ref.frame_mut(t);
                    for f in 0..f_n {
                        let (gr, gi) = (gf[f], gf[f_n + f]);
                        let (mr, mi) = (mf[f], mf[f_n + f]);
                        let (yr, yi) = (yf[f], yf[f_n + f]);
                        dmf[f] = gr * yr + gi * yi;
                        dmf[f_n + f] = gi * yr - gr * yi;
                        dyf[f] = gr * mr + gi * mi;
                        dyf[f_n + f] = gi * mr - gr * mi;
                    }
                    dm.frame_mut(t).copy_from_slice(&dmf);
                }
                tanh_backward(m, &dm)
            }
        };
        let mut d = self.head.backward(&cache.head_in, &d_raw, &mut grads.head);
        for (i, unit) in self.post.iter().enumerate().rev() {
            d = unit.backward(&cache.post[i], &d, &mut grads.post[i]);
        }
        let d_core = self.s4d.backward(&cache.core, &cache.s4d, &d, &mut grads.s4d);
        let d_lstm = self.proj.backward(&cache.lstm_out, &d_core, &mut grads.proj);
        let u = &cache.pre.last().expect("at least one pre unit").out;
        let mut d = self
            .lstm
            .backward(u, &cache.lstm_out, &cache.lstm, &d_lstm, &mut grads.lstm);
        d.add_assign(&d_core);
        for (i, unit) in self.pre.iter().enumerate().rev() {
            d = unit.backward(&cache.pre[i], &d, &mut grads.pre[i]);
        }
        if self.config.output == OutputKind::Mask {
            for t in 0..frames {
                let src = d_ref.frame(t).to_vec();
                d.frame_mut(t)[..2 * f_n]
                    .iter_mut()
                    .zip(src)
                    .for_each(|(a, b)| *a += b);
            }
        }
        d
    }

    pub fn new_state(&self) -> IscrnState<T> {
        let f = self.config.bins;
        IscrnState {
            pre: self.pre.iter().map(|u| u.new_state()).collect(),
            lstm: self.lstm.new_state(f),
            s4d: self.s4d.new_state(f),
            post: self.post.iter().map(|u| u.new_state()).collect(),
            head: self.head.new_state(f),
        }
    }

    /// One frame of `in_channels × F` input to one `2 × F` estimate frame.
    pub fn step(&self, state: &mut IscrnState<T>, frame: &[T]) -> Vec<T> {
        let f_n = self.config.bins;
        let mut h = frame.to_vec();
        for (unit, s) in self.pre.iter().zip(state.pre.iter_mut()) {
            h = unit.step(s, &h);
        }
        let l = self.lstm.step(&mut state.lstm, &h);
        let mut core = vec![T::zero(); self.config.channels * f_n];
        self.proj.forward_frame(&l, f_n, &mut core);
        core.iter_mut().zip(&h).for_each(|(a, &b)| *a += b);
        let mut h = self.s4d.step(&mut state.s4d, &core);
        for (unit, s) in self.post.iter().zip(state.post.iter_mut()) {
            h = unit.step(s, &h);
        }
        let raw = self.head.step(&mut state.head, &h);
        match self.config.output {
            OutputKind::Direct => raw,
            OutputKind::Mask => {
                let mut out = vec![T::zero(); 2 * f_n];
                for f in 0..f_n {
                    let (re, im) = complex_mul(
                        raw[f].tanh(),
                        raw[f_n + f].tanh(),
                        frame[f],
                        frame[f_n + f],
                    );
                    out[f] = re;
                    out[f_n + f] = im;
                }
                out
            }
        }
    }
}

impl<T: Real> Complexity for Iscrn<T> {
    fn macs_per_frame(&self) -> u64 {
        let f = self.config.bins;
        self.pre.iter().map(|u| u.macs_per_frame()).sum::<u64>()
            + self.lstm.macs_per_frame(f)
            + self.proj.macs_per_frame(f)
            + self.s4d.macs_per_frame(f)
            + self.post.iter().map(|u| u.macs_per_frame()).sum::<u64>()
            + self.head.macs_per_frame(f)
    }
}

impl<T: Real> Module<T> for Iscrn<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut v = Vec::new();
        for (i, u) in self.pre.iter().enumerate() {
            v.extend(prefixed(&format!("pre.{i}"), u.params()));
        }
        v.extend(prefixed("lstm", self.lstm.params()));
        v.extend(prefixed("proj", self.proj.params()));
        v.extend(prefixed("s4d", self.s4d.params()));
        for (i, u) in self.post.iter().enumerate() {
            v.extend(prefixed(&format!("post.{i}"), u.params()));
        }
        v.extend(prefixed("head", self.head.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut v = Vec::new();
        for (i, u) in self.pre.iter_mut().enumerate() {
            v.extend(prefixed_mut(&format!("pre.{i}"), u.params_mut()));
        }
        v.extend(prefixed_mut("lstm", self.lstm.params_mut()));
        v.extend(prefixed_mut("proj", self.proj.params_mut()));
        v.extend(prefixed_mut("s4d", self.s4d.params_mut()));
        for (i, u) in self.post.iter_mut().enumerate() {
            v.extend(prefixed_mut(&format!("post.{i}"), u.params_mut()));
        }
        v.extend(prefixed_mut("head", self.head.params_mut()));
        v
    }
}
