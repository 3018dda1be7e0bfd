//! Room acoustics and the echo/near-end mixture model.

mod mixture;
mod nonlinear;
mod rir;
mod wave;

pub use mixture::{energy, render_mixture, ser, Convolver, RenderConfig, RenderedMixture};
pub use nonlinear::{loudspeaker_nonlinearity, Nonlinearity};
pub use rir::{
    delay_samples, direct_path_rir, energy_decay_curve, image_rir, reflection_coefficient,
    room_reflection, schroeder_t60, simulate_rir, AbsorptionModel, Rir, RirConfig, SPEED_OF_SOUND,
};
pub use wave::{MultichannelWave, SampleFormat, WaveRole};
