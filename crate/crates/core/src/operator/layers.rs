use rustfft::num_complex::Complex;

use super::config::{Activation, LayerRole};
use super::params::SacLayerParams;
use crate::error::{Error, Result};
use crate::numerics::{BandFft, SpectralTensor};
use crate::scalar::{gemm, gemm_strided, Op, Scalar, View, ViewMut};

fn check_channels<T: Scalar>(x: &SpectralTensor<T>, want: usize, what: &str) -> Result<()> {
    if x.channels() != want {
        return Err(Error::ShapeMismatch(format!("{what}: expected {want} channels, got {}", x.channels())));
    }
    Ok(())
}

/// `y[o] = Σ_i w[o, i]·x[i] + bias[o]` at every position.
pub(crate) fn pointwise<T: Scalar>(w: &[T], bias: &[T], x: &SpectralTensor<T>) -> SpectralTensor<T> {
    let (d_in, d_out, p) = (x.channels(), bias.len(), x.positions());
    debug_assert_eq!(w.len(), d_out * d_in);
    let mut out = SpectralTensor::zeros(x.with_channels(d_out));
    for b in 0..x.batch() {
        let ob = out.item_mut(b);
        for (row, &bv) in ob.chunks_mut(p).zip(bias) {
            row.fill(bv);
        }
        gemm(Op::N, Op::N, d_out, p, d_in, w, x.item(b), T::one(), ob);
    }
    out
}

/// Accumulates weight and bias gradients; returns the input gradient.
pub(crate) fn pointwise_backward<T: Scalar>(
    w: &[T],
    x: &SpectralTensor<T>,
    gy: &SpectralTensor<T>,
    gw: &mut [T],
    gb: &mut [T],
) -> SpectralTensor<T> {
    let (d_in, d_out, p) = (x.channels(), gy.channels(), x.positions());
    let mut gx = SpectralTensor::zeros(x.dims());
    for b in 0..x.batch() {
        let gyb = gy.item(b);
        gemm(Op::N, Op::T, d_out, d_in, p, gyb, x.item(b), T::one(), gw);
        for (g, row) in gb.iter_mut().zip(gyb.chunks(p)) {
            *g = *g + row.iter().copied().sum::<T>();
        }
        gemm(Op::T, Op::N, d_in, p, d_out, w, gyb, T::zero(), gx.item_mut(b));
    }
    gx
}

fn split<T: Scalar>(spec: &[Complex<T>]) -> (Vec<T>, Vec<T>) {
    spec.iter().map(|c| (c.re, c.im)).unzip()
}

fn join<T: Scalar>(re: &[T], im: &[T]) -> Vec<Complex<T>> {
    re.iter().zip(im).map(|(&r, &i)| Complex::new(r, i)).collect()
}

fn v<T>(data: &[T], offset: usize, rs: usize, cs: usize) -> View<'_, T> {
    View { data, offset, rs, cs }
}

fn vm<T>(data: &mut [T], offset: usize, rs: usize, cs: usize) -> ViewMut<'_, T> {
    ViewMut { data, offset, rs, cs }
}

fn effective_modes(requested: usize, stored: usize, bands: usize) -> usize {
    requested.min(stored).min(bands / 2 + 1)
}

/// Spectral-aware convolution along the band axis.
///
/// Transforms each band series, contracts input channels against the per-mode complex
/// weights on the first `min(d_modes, C/2 + 1)` modes, drops the rest and transforms back.
pub fn sac_forward<T: Scalar>(
    x: &SpectralTensor<T>,
    params: &SacLayerParams<T>,
    d_modes: usize,
) -> Result<SpectralTensor<T>> {
    check_channels(x, params.d_in, "spectral convolution")?;
    if d_modes == 0 {
        return Err(Error::InvalidConfig("d_modes must be at least 1".into()));
    }
    let c = x.bands();
    let m = effective_modes(d_modes, params.d_modes, c);
    let fft = BandFft::<T>::new(c);
    let (bsz, di, dout, np) = (x.batch(), params.d_in, params.d_out, x.height() * x.width());
    let mf = params.d_modes;

    let mut spec = vec![Complex::new(T::zero(), T::zero()); bsz * di * np * m];
    fft.forward_modes(x.data(), m, &mut spec);
    let (xr, xi) = split(&spec);
    let mut yr = vec![T::zero(); bsz * dout * np * m];
    let mut yi = vec![T::zero(); bsz * dout * np * m];
    let (one, zero) = (T::one(), T::zero());

    let (wr, wi) = (&params.fourier_re[..], &params.fourier_im[..]);
    for b in 0..bsz {
        for k in 0..m {
            let (xo, yo) = (b * di * np * m + k, b * dout * np * m + k);
            // W_kᵀ is read as a (d_out × d_in) matrix
            let (wrs, wcs) = (mf, dout * mf);
            gemm_strided(
                dout,
                di,
                np,
                one,
                v(wr, k, wrs, wcs),
                v(&xr, xo, np * m, m),
                zero,
                vm(&mut yr, yo, np * m, m),
            );
            gemm_strided(
                dout,
                di,
                np,
                -one,
                v(wi, k, wrs, wcs),
                v(&xi, xo, np * m, m),
                one,
                vm(&mut yr, yo, np * m, m),
            );
            gemm_strided(
                dout,
                di,
                np,
                one,
                v(wr, k, wrs, wcs),
                v(&xi, xo, np * m, m),
                zero,
                vm(&mut yi, yo, np * m, m),
            );
            gemm_strided(dout, di, np, one, v(wi, k, wrs, wcs), v(&xr, xo, np * m, m), one, vm(&mut yi, yo, np * m, m));
        }
    }
    let mut out = SpectralTensor::zeros(x.with_channels(dout));
    fft.inverse_modes(&join(&yr, &yi), m, out.data_mut());
    Ok(out)
}

/// Reverse mode of [`sac_forward`]: accumulates into `g_re`/`g_im` and returns the
/// input gradient.
pub fn sac_backward<T: Scalar>(
    x: &SpectralTensor<T>,
    params: &SacLayerParams<T>,
    d_modes: usize,
    gy: &SpectralTensor<T>,
    g_re: &mut [T],
    g_im: &mut [T],
) -> Result<SpectralTensor<T>> {
    check_channels(x, params.d_in, "spectral convolution")?;
    check_channels(gy, params.d_out, "spectral convolution gradient")?;
    let c = x.bands();
    let m = effective_modes(d_modes.max(1), params.d_modes, c);
    let fft = BandFft::<T>::new(c);
    let (bsz, di, dout, np) = (x.batch(), params.d_in, params.d_out, x.height() * x.width());
    let mf = params.d_modes;
    let zero_c = Complex::new(T::zero(), T::zero());

    let mut spec = vec![zero_c; bsz * di * np * m];
    fft.forward_modes(x.data(), m, &mut spec);
    let (xr, xi) = split(&spec);
    let mut gspec = vec![zero_c; bsz * dout * np * m];
    fft.inverse_adjoint(gy.data(), m, &mut gspec);
    let (gyr, gyi) = split(&gspec);
    let mut gxr = vec![T::zero(); bsz * di * np * m];
    let mut gxi = vec![T::zero(); bsz * di * np * m];
    let (one, zero) = (T::one(), T::zero());
    let (wr, wi) = (&params.fourier_re[..], &params.fourier_im[..]);

    for b in 0..bsz {
        for k in 0..m {
            let (xo, go) = (b * di * np * m + k, b * dout * np * m + k);
            let (xrs, xcs) = (np * m, m);
            // upstream spectrum read transposed as (np × d_out); weights as (d_in × d_out)
            let (trs, tcs) = (m, np * m);
            let (wrs, wcs) = (dout * mf, mf);

            gemm_strided(di, np, dout, one, v(&xr, xo, xrs, xcs), v(&gyr, go, trs, tcs), one, vm(g_re, k, wrs, wcs));
            gemm_strided(di, np, dout, one, v(&xi, xo, xrs, xcs), v(&gyi, go, trs, tcs), one, vm(g_re, k, wrs, wcs));
            gemm_strided(di, np, dout, one, v(&xr, xo, xrs, xcs), v(&gyi, go, trs, tcs), one, vm(g_im, k, wrs, wcs));
            gemm_strided(di, np, dout, -one, v(&xi, xo, xrs, xcs), v(&gyr, go, trs, tcs), one, vm(g_im, k, wrs, wcs));

            gemm_strided(
                di,
                dout,
                np,
                one,
                v(wr, k, wrs, wcs),
                v(&gyr, go, xrs, xcs),
                zero,
                vm(&mut gxr, xo, xrs, xcs),
            );
            gemm_strided(di, dout, np, one, v(wi, k, wrs, wcs), v(&gyi, go, xrs, xcs), one, vm(&mut gxr, xo, xrs, xcs));
            gemm_strided(
                di,
                dout,
                np,
                one,
                v(wr, k, wrs, wcs),
                v(&gyi, go, xrs, xcs),
                zero,
                vm(&mut gxi, xo, xrs, xcs),
            );
            gemm_strided(
                di,
                dout,
                np,
                -one,
                v(wi, k, wrs, wcs),
                v(&gyr, go, xrs, xcs),
                one,
                vm(&mut gxi, xo, xrs, xcs),
            );
        }
    }
    let mut gx = SpectralTensor::zeros(x.dims());
    fft.forward_adjoint(&join(&gxr, &gxi), m, gx.data_mut());
    Ok(gx)
}

/// Sum of the local and spectral paths, before the activation.
pub(crate) fn pre_activation<T: Scalar>(
    x: &SpectralTensor<T>,
    params: &SacLayerParams<T>,
    d_modes: usize,
) -> Result<SpectralTensor<T>> {
    check_channels(x, params.d_in, "layer input")?;
    let mut z = pointwise(&params.local, &params.bias, x);
    let s = sac_forward(x, params, d_modes)?;
    for (a, b) in z.data_mut().iter_mut().zip(s.data()) {
        *a = *a + *b;
    }
    Ok(z)
}

pub(crate) fn activate<T: Scalar>(z: &SpectralTensor<T>, act: Activation) -> SpectralTensor<T> {
    let data = z.data().iter().map(|&v| act.apply(v)).collect();
    SpectralTensor::from_vec(z.dims(), data).expect("same dims")
}

/// Gradient through the activation and both paths; accumulates parameter gradients.
pub(crate) fn pre_activation_backward<T: Scalar>(
    x: &SpectralTensor<T>,
    pre: &SpectralTensor<T>,
    params: &SacLayerParams<T>,
    d_modes: usize,
    act: Activation,
    gout: &SpectralTensor<T>,
    grads: &mut SacLayerParams<T>,
) -> Result<SpectralTensor<T>> {
    let gz: Vec<T> = pre.data().iter().zip(gout.data()).map(|(&z, &g)| g * act.derivative(z)).collect();
    let gz = SpectralTensor::from_vec(pre.dims(), gz)?;
    let mut gx = pointwise_backward(&params.local, x, &gz, &mut grads.local, &mut grads.bias);
    let gs = sac_backward(x, params, d_modes, &gz, &mut grads.fourier_re, &mut grads.fourier_im)?;
    for (a, b) in gx.data_mut().iter_mut().zip(gs.data()) {
        *a = *a + *b;
    }
    Ok(gx)
}

fn check_role<T: Scalar>(params: &SacLayerParams<T>, role: LayerRole) -> Result<()> {
    let ok = match role {
        LayerRole::Contract => params.d_out == 2 * params.d_in,
        LayerRole::Transform => params.d_out == params.d_in,
        LayerRole::Expand => true,
    };
    if !ok {
        return Err(Error::ShapeMismatch(format!(
            "{role:?} layer cannot map {} to {} channels",
            params.d_in, params.d_out
        )));
    }
    Ok(())
}

/// `σ(L(x) + SAC(x))` for a contracting or transformation layer.
pub fn layer_forward<T: Scalar>(
    x: &SpectralTensor<T>,
    params: &SacLayerParams<T>,
    role: LayerRole,
    act: Activation,
) -> Result<SpectralTensor<T>> {
    check_role(params, role)?;
    Ok(activate(&pre_activation(x, params, params.d_modes)?, act))
}

/// Reverse mode of [`layer_forward`]; returns the input gradient.
pub fn layer_backward<T: Scalar>(
    x: &SpectralTensor<T>,
    params: &SacLayerParams<T>,
    act: Activation,
    gout: &SpectralTensor<T>,
    grads: &mut SacLayerParams<T>,
) -> Result<SpectralTensor<T>> {
    let pre = pre_activation(x, params, params.d_modes)?;
    pre_activation_backward(x, &pre, params, params.d_modes, act, gout, grads)
}

/// Stacks `a` and `b` along the channel axis.
pub(crate) fn concat<T: Scalar>(a: &SpectralTensor<T>, b: &SpectralTensor<T>) -> Result<SpectralTensor<T>> {
    let (da, db) = (a.dims(), b.dims());
    if da[0] != db[0] || da[2..] != db[2..] {
        return Err(Error::ShapeMismatch(format!("cannot concatenate {da:?} with {db:?}")));
    }
    let mut out = Vec::with_capacity(a.data().len() + b.data().len());
    for i in 0..a.batch() {
        out.extend_from_slice(a.item(i));
        out.extend_from_slice(b.item(i));
    }
    SpectralTensor::from_vec(a.with_channels(da[1] + db[1]), out)
}

/// Splits a channel-stacked gradient into its first `ca` channels and the rest.
pub(crate) fn split_channels<T: Scalar>(g: &SpectralTensor<T>, ca: usize) -> (SpectralTensor<T>, SpectralTensor<T>) {
    let p = g.positions();
    let cb = g.channels() - ca;
    let mut a = Vec::with_capacity(g.batch() * ca * p);
    let mut b = Vec::with_capacity(g.batch() * cb * p);
    for i in 0..g.batch() {
        let item = g.item(i);
        a.extend_from_slice(&item[..ca * p]);
        b.extend_from_slice(&item[ca * p..]);
    }
    (
        SpectralTensor::from_vec(g.with_channels(ca), a).expect("split dims"),
        SpectralTensor::from_vec(g.with_channels(cb), b).expect("split dims"),
    )
}

/// `σ(L(Concat(x, skip)) + SAC(Concat(x, skip)))`.
pub fn expansive_forward<T: Scalar>(
    x: &SpectralTensor<T>,
    skip: &SpectralTensor<T>,
    params: &SacLayerParams<T>,
    act: Activation,
) -> Result<SpectralTensor<T>> {
    let xc = concat(x, skip)?;
    Ok(activate(&pre_activation(&xc, params, params.d_modes)?, act))
}

/// Reverse mode of [`expansive_forward`]; returns `(grad_x, grad_skip)`.
pub fn expansive_backward<T: Scalar>(
    x: &SpectralTensor<T>,
    skip: &SpectralTensor<T>,
    params: &SacLayerParams<T>,
    act: Activation,
    gout: &SpectralTensor<T>,
    grads: &mut SacLayerParams<T>,
) -> Result<(SpectralTensor<T>, SpectralTensor<T>)> {
    let xc = concat(x, skip)?;
    let pre = pre_activation(&xc, params, params.d_modes)?;
    let g = pre_activation_backward(&xc, &pre, params, params.d_modes, act, gout, grads)?;
    Ok(split_channels(&g, x.channels()))
}
