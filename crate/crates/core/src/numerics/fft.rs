use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::{gemm_strided, Scalar, View, ViewMut};

fn as_real<T: Scalar>(v: &[Complex<T>]) -> &[T] {
    // SAFETY: `Complex<T>` is `repr(C)` with fields `re, im` of type `T`.
    unsafe { std::slice::from_raw_parts(v.as_ptr().cast::<T>(), 2 * v.len()) }
}

fn as_real_mut<T: Scalar>(v: &mut [Complex<T>]) -> &mut [T] {
    // SAFETY: as in `as_real`; the borrow is exclusive.
    unsafe { std::slice::from_raw_parts_mut(v.as_mut_ptr().cast::<T>(), 2 * v.len()) }
}

/// Real tensor laid out `[batch, channels, height, width, bands]`, bands innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTensor<T> {
    dims: [usize; 5],
    data: Vec<T>,
}

impl<T: Scalar> SpectralTensor<T> {
    pub fn zeros(dims: [usize; 5]) -> Self {
        Self { dims, data: vec![T::zero(); dims.iter().product()] }
    }

    pub fn from_vec(dims: [usize; 5], data: Vec<T>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::ShapeMismatch(format!("dims {dims:?} need {len} values, got {}", data.len())));
        }
        if dims[4] == 0 {
            return Err(Error::ShapeMismatch("tensor needs at least one band".into()));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 5] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn height(&self) -> usize {
        self.dims[2]
    }

    pub fn width(&self) -> usize {
        self.dims[3]
    }

    pub fn bands(&self) -> usize {
        self.dims[4]
    }

    /// Number of (row, column, band) positions per channel.
    pub fn positions(&self) -> usize {
        self.dims[2] * self.dims[3] * self.dims[4]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Slice of one batch item, `[channels, positions]`.
    pub fn item(&self, b: usize) -> &[T] {
        let n = self.dims[1] * self.positions();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn item_mut(&mut self, b: usize) -> &mut [T] {
        let n = self.dims[1] * self.positions();
        &mut self.data[b * n..(b + 1) * n]
    }

    /// Same spatial/band geometry, different channel count.
    pub fn with_channels(&self, channels: usize) -> [usize; 5] {
        [self.dims[0], channels, self.dims[2], self.dims[3], self.dims[4]]
    }

    pub fn cast<U: Scalar>(&self) -> SpectralTensor<U> {
        SpectralTensor { dims: self.dims, data: self.data.iter().map(|v| U::of(v.f64())).collect() }
    }
}

/// Half spectrum along the band axis, `[batch, channels, height, width, modes]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpectrum<T> {
    dims: [usize; 5],
    data: Vec<Complex<T>>,
}

impl<T: Scalar> HalfSpectrum<T> {
    pub fn from_vec(dims: [usize; 5], data: Vec<Complex<T>>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::ShapeMismatch(format!("dims {dims:?} need {len} values, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 5] {
        self.dims
    }

    pub fn modes(&self) -> usize {
        self.dims[4]
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }
}

/// Mode counts up to this use dense cos/sin tables instead of an FFT.
const DENSE_MAX_MODES: usize = 48;

/// Planned transforms for real series of one fixed length.
///
/// Series are packed back to back. Only the first `modes ≤ n/2 + 1` coefficients are
/// produced or consumed; the inverse treats the missing ones as zero. Few modes are
/// computed as a truncated DFT with GEMM, which beats an FFT at that size.
#[derive(Clone)]
pub struct BandFft<T: Scalar> {
    n: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    /// `[c][k]`: `cos(2πkc/n)` and `−sin(2πkc/n)`, `k < n/2 + 1`.
    fwd_re: Vec<T>,
    fwd_im: Vec<T>,
    /// `[k][c]`: Hermitian-completion weights of the real inverse, including `1/n`.
    inv_re: Vec<T>,
    inv_im: Vec<T>,
}

impl<T: Scalar> BandFft<T> {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "fft length must be positive");
        let mut planner = FftPlanner::new();
        let h = n / 2 + 1;
        let dense = h.min(DENSE_MAX_MODES);
        let (mut fwd_re, mut fwd_im) = (vec![T::zero(); n * dense], vec![T::zero(); n * dense]);
        let (mut inv_re, mut inv_im) = (vec![T::zero(); dense * n], vec![T::zero(); dense * n]);
        for c in 0..n {
            for k in 0..dense {
                let phase = std::f64::consts::TAU * ((k * c) % n) as f64 / n as f64;
                let (sin, cos) = phase.sin_cos();
                fwd_re[c * dense + k] = T::of(cos);
                fwd_im[c * dense + k] = T::of(-sin);
                let w = if k == 0 || 2 * k == n { 1.0 } else { 2.0 } / n as f64;
                inv_re[k * n + c] = T::of(w * cos);
                inv_im[k * n + c] = T::of(-w * sin);
            }
        }
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            fwd_re,
            fwd_im,
            inv_re,
            inv_im,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn half_len(&self) -> usize {
        self.n / 2 + 1
    }

    fn dense_modes(&self) -> usize {
        self.half_len().min(DENSE_MAX_MODES)
    }

    /// `out[s·modes + k] = Σ_c x[s·n + c]·e^{−2πikc/n}` for `k < modes`.
    pub fn forward_modes(&self, series: &[T], modes: usize, out: &mut [Complex<T>]) {
        let n = self.n;
        assert!(modes <= self.half_len());
        assert_eq!(series.len() % n, 0);
        let count = series.len() / n;
        assert_eq!(out.len(), count * modes);
        if count == 0 || modes == 0 {
            return;
        }
        if modes <= self.dense_modes() {
            let d = self.dense_modes();
            let flat = as_real_mut(out);
            let x = View { data: series, offset: 0, rs: n, cs: 1 };
            let (one, zero) = (T::one(), T::zero());
            gemm_strided(
                count,
                n,
                modes,
                one,
                x,
                View { data: &self.fwd_re, offset: 0, rs: d, cs: 1 },
                zero,
                ViewMut { data: &mut *flat, offset: 0, rs: 2 * modes, cs: 2 },
            );
            gemm_strided(
                count,
                n,
                modes,
                one,
                x,
                View { data: &self.fwd_im, offset: 0, rs: d, cs: 1 },
                zero,
                ViewMut { data: flat, offset: 1, rs: 2 * modes, cs: 2 },
            );
            return;
        }
        let mut buf: Vec<Complex<T>> = series.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.forward.process(&mut buf);
        for s in 0..count {
            out[s * modes..(s + 1) * modes].copy_from_slice(&buf[s * n..s * n + modes]);
        }
    }

    /// Real inverse with `1/n` normalisation and Hermitian completion. Imaginary parts of
    /// the DC and (even-length) terminal coefficients are ignored.
    pub fn inverse_modes(&self, spec: &[Complex<T>], modes: usize, out: &mut [T]) {
        let n = self.n;
        assert!(modes <= self.half_len() && modes >= 1);
        assert_eq!(spec.len() % modes, 0);
        let count = spec.len() / modes;
        assert_eq!(out.len(), count * n);
        if count == 0 {
            return;
        }
        if modes <= self.dense_modes() {
            let flat = as_real(spec);
            let (one, zero) = (T::one(), T::zero());
            let a = |offset| View { data: flat, offset, rs: 2 * modes, cs: 2 };
            gemm_strided(
                count,
                modes,
                n,
                one,
                a(0),
                View { data: &self.inv_re, offset: 0, rs: n, cs: 1 },
                zero,
                ViewMut { data: &mut *out, offset: 0, rs: n, cs: 1 },
            );
            gemm_strided(
                count,
                modes,
                n,
                one,
                a(1),
                View { data: &self.inv_im, offset: 0, rs: n, cs: 1 },
                one,
                ViewMut { data: out, offset: 0, rs: n, cs: 1 },
            );
            return;
        }
        let zero = Complex::new(T::zero(), T::zero());
        let mut buf = vec![zero; count * n];
        for s in 0..count {
            let src = &spec[s * modes..(s + 1) * modes];
            let dst = &mut buf[s * n..(s + 1) * n];
            dst[0] = Complex::new(src[0].re, T::zero());
            for k in 1..modes {
                if 2 * k == n {
                    dst[k] = Complex::new(src[k].re, T::zero());
                } else {
                    dst[k] = src[k];
                    dst[n - k] = src[k].conj();
                }
            }
        }
        self.inverse.process(&mut buf);
        let scale = T::one() / T::of(n as f64);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re * scale;
        }
    }

    /// Adjoint of [`forward_modes`](Self::forward_modes) with respect to the real inner
    /// product on (re, im) pairs: `x_c = Re Σ_{k<modes} g_k e^{2πikc/n}`.
    pub fn forward_adjoint(&self, grad: &[Complex<T>], modes: usize, out: &mut [T]) {
        let n = self.n;
        let two = T::of(2.0);
        let scaled: Vec<Complex<T>> = grad
            .chunks(modes)
            .flat_map(|g| g.iter().enumerate().map(move |(k, &v)| if k == 0 || 2 * k == n { v } else { v / two }))
            .collect();
        self.inverse_modes(&scaled, modes, out);
        let nn = T::of(n as f64);
        for v in out.iter_mut() {
            *v = *v * nn;
        }
        // Imaginary parts at DC / terminal modes do not reach the real output of the
        // inverse, and the forward map has no such sensitivity either: nothing to add.
    }

    /// Adjoint of [`inverse_modes`](Self::inverse_modes).
    pub fn inverse_adjoint(&self, grad: &[T], modes: usize, out: &mut [Complex<T>]) {
        let n = self.n;
        self.forward_modes(grad, modes, out);
        let inv_n = T::one() / T::of(n as f64);
        let two = T::of(2.0);
        for chunk in out.chunks_mut(modes) {
            for (k, v) in chunk.iter_mut().enumerate() {
                let w = if k == 0 || 2 * k == n { inv_n } else { two * inv_n };
                *v = Complex::new(v.re * w, if k == 0 || 2 * k == n { T::zero() } else { v.im * w });
            }
        }
    }
}

/// Forward real FFT along the band axis; `⌊bands/2⌋ + 1` modes per series.
pub fn rfft_bands<T: Scalar>(x: &SpectralTensor<T>) -> HalfSpectrum<T> {
    let fft = BandFft::new(x.bands());
    let modes = fft.half_len();
    let mut dims = x.dims();
    dims[4] = modes;
    let mut data = vec![Complex::new(T::zero(), T::zero()); dims.iter().product()];
    fft.forward_modes(x.data(), modes, &mut data);
    HalfSpectrum { dims, data }
}

/// Inverse of [`rfft_bands`].
pub fn irfft_bands<T: Scalar>(x: &HalfSpectrum<T>, bands: usize) -> Result<SpectralTensor<T>> {
    if bands == 0 || x.modes() != bands / 2 + 1 {
        return Err(Error::ShapeMismatch(format!("{} modes cannot be inverted to {bands} bands", x.modes())));
    }
    let fft = BandFft::new(bands);
    let mut dims = x.dims();
    dims[4] = bands;
    let mut data = vec![T::zero(); dims.iter().product()];
    fft.inverse_modes(x.data(), x.modes(), &mut data);
    SpectralTensor::from_vec(dims, data)
}
