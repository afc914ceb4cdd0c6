//! Shared numerical kernels: dense SPD solves, band-axis FFTs, kernel regression
//! and a finite-difference gradient checker.

mod fft;
mod gradcheck;
mod kernel;
mod linalg;

pub use fft::{irfft_bands, rfft_bands, BandFft, HalfSpectrum, SpectralTensor};
pub use gradcheck::finite_diff_grad;
pub use kernel::{kernel_regress, median_spacing};
pub use linalg::{solve_spd, Cholesky, DenseMatrix};
