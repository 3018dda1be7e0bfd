pub mod acoustics;
pub mod aec;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod labels;
pub mod nn;
pub mod scenario;
pub mod ssdoa;
pub mod surrogate;
pub mod train;

pub use error::{Error, Result};
