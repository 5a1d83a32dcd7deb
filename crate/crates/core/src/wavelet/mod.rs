//! Multilevel discrete wavelet transforms over the Daubechies family.
//!
//! Borders are zero-padded by default, so each level yields
//! `floor((n + taps - 1) / 2)` coefficients per axis and the deepest level is
//! widened to [`coeff_length`]. The synthesis stage is implemented as the
//! exact adjoint of analysis; with orthonormal filters that adjoint is the
//! inverse.

mod filters;
mod transform;

pub use filters::{daubechies_filters, FilterBank};
pub use transform::{
    coeff_length, dwt_multilevel, idwt_multilevel, Boundary, CoarseBands, LevelPlan, WaveletCoeffs,
};
