//! Minimal layer kernel with per-layer analytic gradients.
//!
//! There is no autograd tape: each layer exposes `forward` (returning
//! whatever it needs for the backward pass) and `backward`, which
//! accumulates parameter gradients into a same-shaped gradient container
//! and returns the input gradient. Every layer also has a frame-online
//! `step` built on the same per-frame kernel as the batch path, so the two
//! agree bit for bit.

mod activation;
mod blocks;
pub mod checkpoint;
mod conv;
mod init;
mod linear;
pub mod loss;
mod lstm;
mod norm;
mod optim;
mod s4d;
mod tensor;

pub use activation::{
    elu, elu_backward, elu_forward, elu_frame, elu_grad, sigmoid, sigmoid_backward,
    sigmoid_forward, softmax_groups, softmax_groups_backward, tanh_backward, tanh_forward,
    Dropout, Mode,
};
pub use blocks::{ConvUnit, ConvUnitCache, CrBlock, CrBlockCache, CrBlockState};
pub use conv::{Conv2dCausal, ConvState, KF, KT};
pub use init::Init;
pub use linear::{ChannelLinear, FreqLinear};
pub use loss::{bce_with_logits, ri_mag_loss};
pub use lstm::{LstmCache, LstmState, TchLstm};
pub use norm::{LayerNorm, NormCache, NormGroup};
pub use optim::{Adam, PlateauSchedule, ScheduleStep};
pub use s4d::{pole_clamp_count, Discrete, S4d, S4dCache, S4dState};
pub use tensor::{Module, Param, Real, Tensor};

pub(crate) use tensor::{prefixed, prefixed_mut};

/// Analytic multiply-accumulate count for one frame of input.
pub trait Complexity {
    fn macs_per_frame(&self) -> u64;

    /// MACs for `seconds` of audio at `frames_per_second`.
    fn macs(&self, seconds: f64, frames_per_second: f64) -> f64 {
        self.macs_per_frame() as f64 * frames_per_second * seconds
    }
}

pub fn count_params<T: Real, M: Module<T>>(model: &M) -> usize {
    model.num_params()
}
