pub mod cli;
pub mod config;
pub mod continual;
pub mod error;
pub mod model;
pub mod pde;
pub mod tensor;
pub mod wavelet;

pub use error::{Error, ErrorCategory, Result};
pub use tensor::{Element, Tensor};
