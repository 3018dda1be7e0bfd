use super::activation::{elu_backward, elu_forward, elu_frame};
use super::conv::{Conv2dCausal, ConvState};
use super::init::Init;
use super::linear::ChannelLinear;
use super::lstm::{LstmCache, LstmState, TchLstm};
use super::norm::{LayerNorm, NormCache, NormGroup};
use super::tensor::{prefixed, prefixed_mut, Module, Param, Real, Tensor};
use crate::error::Result;

/// Causal Conv2D, LayerNorm, ELU.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvUnit<T> {
    pub conv: Conv2dCausal<T>,
    pub norm: LayerNorm<T>,
}

#[derive(Clone, Debug)]
pub struct ConvUnitCache<T> {
    input: Tensor<T>,
    norm: NormCache<T>,
    pre_act: Tensor<T>,
    pub out: Tensor<T>,
}

impl<T: Real> ConvUnit<T> {
    pub fn new(cin: usize, cout: usize, bins: usize, group: NormGroup, init: &mut Init) -> Self {
        Self {
            conv: Conv2dCausal::new(cin, cout, init),
            norm: LayerNorm::new(cout, bins, group),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<ConvUnitCache<T>> {
        let c = self.conv.forward(x)?;
        let (pre_act, norm) = self.norm.forward(&c)?;
        let out = elu_forward(&pre_act);
        Ok(ConvUnitCache {
            input: x.clone(),
            norm,
            pre_act,
            out,
        })
    }

    pub fn backward(&self, cache: &ConvUnitCache<T>, dy: &Tensor<T>, grads: &mut Self) -> Tensor<T> {
        let d = elu_backward(&cache.pre_act, &cache.out, dy);
        let d = self.norm.backward(&cache.norm, &d, &mut grads.norm);
        self.conv.backward(&cache.input, &d, &mut grads.conv)
    }

    pub fn new_state(&self) -> ConvState<T> {
        self.conv.new_state(self.norm.bins)
    }

    pub fn step(&self, state: &mut ConvState<T>, frame: &[T]) -> Vec<T> {
        let c = self.conv.step(state, frame);
        let mut out = vec![T::zero(); c.len()];
        self.norm.forward_frame(&c, &mut out, None, None);
        elu_frame(&mut out);
        out
    }

    pub fn macs_per_frame(&self) -> u64 {
        self.conv.macs_per_frame(self.norm.bins) + self.norm.macs_per_frame()
    }
}

impl<T: Real> Module<T> for ConvUnit<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut v = prefixed("conv", self.conv.params());
        v.extend(prefixed("norm", self.norm.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut v = prefixed_mut("conv", self.conv.params_mut());
        v.extend(prefixed_mut("norm", self.norm.params_mut()));
        v
    }
}

/// Convolutional-recurrent block: [`ConvUnit`], sub-band time LSTM with
/// `hidden` units, then a channel Linear down to `out` channels.
#[derive(Clone, Debug, PartialEq)]
pub struct CrBlock<T> {
    pub unit: ConvUnit<T>,
    pub lstm: TchLstm<T>,
    pub linear: ChannelLinear<T>,
}

#[derive(Clone, Debug)]
pub struct CrBlockCache<T> {
    unit: ConvUnitCache<T>,
    lstm: LstmCache<T>,
    lstm_out: Tensor<T>,
    pub out: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct CrBlockState<T> {
    conv: ConvState<T>,
    lstm: LstmState<T>,
}

impl<T: Real> CrBlock<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cin: usize,
        conv_out: usize,
        hidden: usize,
        out: usize,
        bins: usize,
        group: NormGroup,
        init: &mut Init,
    ) -> Self {
        Self {
            unit: ConvUnit::new(cin, conv_out, bins, group, init),
            lstm: TchLstm::new(conv_out, hidden, init),
            linear: ChannelLinear::new(hidden, out, init),
        }
    }

    pub fn bins(&self) -> usize {
        self.unit.norm.bins
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<CrBlockCache<T>> {
        let unit = self.unit.forward(x)?;
        let (lstm_out, lstm) = self.lstm.forward(&unit.out)?;
        let out = self.linear.forward(&lstm_out)?;
        Ok(CrBlockCache {
            unit,
            lstm,
            lstm_out,
            out,
        })
    }

    pub fn backward(&self, cache: &CrBlockCache<T>, dy: &Tensor<T>, grads: &mut Self) -> Tensor<T> {
        let d = self.linear.backward(&cache.lstm_out, dy, &mut grads.linear);
        let d = self
            .lstm
            .backward(&cache.unit.out, &cache.lstm_out, &cache.lstm, &d, &mut grads.lstm);
        self.unit.backward(&cache.unit, &d, &mut grads.unit)
    }

    pub fn new_state(&self) -> CrBlockState<T> {
        CrBlockState {
            conv: self.unit.new_state(),
            lstm: self.lstm.new_state(self.bins()),
        }
    }

    pub fn step(&self, state: &mut CrBlockState<T>, frame: &[T]) -> Vec<T> {
        let u = self.unit.step(&mut state.conv, frame);
        let h = self.lstm.step(&mut state.lstm, &u);
        let mut out = vec![T::zero(); self.linear.out_dim * self.bins()];
        self.linear.forward_frame(&h, self.bins(), &mut out);
        out
    }

    pub fn macs_per_frame(&self) -> u64 {
        let bins = self.bins();
        self.unit.macs_per_frame() + self.lstm.macs_per_frame(bins) + self.linear.macs_per_frame(bins)
    }
}

impl<T: Real> Module<T> for CrBlock<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut v = prefixed("unit", self.unit.params());
        v.extend(prefixed("lstm", self.lstm.params()));
        v.extend(prefixed("linear", self.linear.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut v = prefixed_mut("unit", self.unit.params_mut());
        v.extend(prefixed_mut("lstm", self.lstm.params_mut()));
        v.extend(prefixed_mut("linear", self.linear.params_mut()));
        v
    }
}
