//! Spectral super-resolution from multispectral observations.
//!
//! The reconstruction runs in three stages:
//!
//! 1. [`gmp::project`] lifts the multispectral image onto the full band grid, guided by an
//!    atmospheric beam-irradiance prior ([`art`]);
//! 2. a U-shaped spectral neural operator ([`operator`]) refines the estimate residually;
//! 3. a second projection restores exact consistency with the observation.
//!
//! The operator is generic over [`Scalar`] (`f32` or `f64`); projection and all
//! verification code run in `f64`.

// `!(x > 0.0)` is used on purpose so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod art;
pub mod cube;
pub mod error;
pub mod gmp;
pub mod io;
pub mod numerics;
pub mod operator;
pub mod pipeline;
pub mod scalar;
pub mod srf;

pub use cube::{HsiCube, MsiImage};
pub use error::{Error, Result};
pub use scalar::{Dtype, Scalar};

pub type SpectralTensor32 = numerics::SpectralTensor<f32>;
pub type SpectralTensor64 = numerics::SpectralTensor<f64>;
pub type OperatorParams32 = operator::OperatorParams<f32>;
pub type OperatorParams64 = operator::OperatorParams<f64>;
