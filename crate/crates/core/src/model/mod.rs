//! The operator network: lift, gated wavelet-expert blocks, projection.

mod config;
mod network;
mod params;

pub use config::{GateMode, ModelConfig};
pub use network::{coordinates, Bound, Ncwno};
pub use params::{ParamGroup, Parameter};
