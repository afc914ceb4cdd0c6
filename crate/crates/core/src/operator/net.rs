use super::config::{Activation, CoordinateGrid};
use super::layers::{
    activate, concat, pointwise, pointwise_backward, pre_activation, pre_activation_backward, split_channels,
};
use super::params::{Mlp, OperatorParams};
use crate::cube::HsiCube;
use crate::error::{Error, Result};
use crate::numerics::SpectralTensor;
use crate::scalar::Scalar;
use crate::srf::check_same_grid;

/// Intermediates cached by [`forward_tensor`] for [`backward_tensor`].
pub struct Tape<T> {
    lift_in: SpectralTensor<T>,
    lift_pre: SpectralTensor<T>,
    lift_hidden: SpectralTensor<T>,
    /// Hidden states; state 0 is the lifted input, state `t + 1` the output of layer `t`.
    states: Vec<SpectralTensor<T>>,
    pre: Vec<SpectralTensor<T>>,
    proj_pre: SpectralTensor<T>,
    proj_hidden: SpectralTensor<T>,
}

fn mlp_forward<T: Scalar>(
    m: &Mlp<T>,
    x: &SpectralTensor<T>,
    act: Activation,
) -> (SpectralTensor<T>, SpectralTensor<T>, SpectralTensor<T>) {
    let pre = pointwise(&m.w1, &m.b1, x);
    let hidden = activate(&pre, act);
    let out = pointwise(&m.w2, &m.b2, &hidden);
    (pre, hidden, out)
}

fn mlp_backward<T: Scalar>(
    m: &Mlp<T>,
    x: &SpectralTensor<T>,
    pre: &SpectralTensor<T>,
    hidden: &SpectralTensor<T>,
    act: Activation,
    gout: &SpectralTensor<T>,
    grads: &mut Mlp<T>,
) -> SpectralTensor<T> {
    let gh = pointwise_backward(&m.w2, hidden, gout, &mut grads.w2, &mut grads.b2);
    let gz: Vec<T> = pre.data().iter().zip(gh.data()).map(|(&z, &g)| g * act.derivative(z)).collect();
    let gz = SpectralTensor::from_vec(pre.dims(), gz).expect("same dims");
    pointwise_backward(&m.w1, x, &gz, &mut grads.w1, &mut grads.b1)
}

/// Runs the operator on a `[B, 1, H, W, C]` value tensor with per-band normalized
/// coordinates. Returns `values + R(values, coords)` and the tape.
pub fn forward_tensor<T: Scalar>(
    params: &OperatorParams<T>,
    values: &SpectralTensor<T>,
    coords: &[T],
) -> Result<(SpectralTensor<T>, Tape<T>)> {
    if values.channels() != 1 {
        return Err(Error::ShapeMismatch(format!("operator input needs 1 channel, got {}", values.channels())));
    }
    if coords.len() != values.bands() {
        return Err(Error::ShapeMismatch(format!("{} coordinates for {} bands", coords.len(), values.bands())));
    }
    let cfg = &params.config;
    let act = cfg.activation;
    let c = values.bands();
    let coord_plane: Vec<T> = (0..values.positions()).map(|i| coords[i % c]).collect();
    let coord_t = SpectralTensor::from_vec(values.dims(), coord_plane.repeat(values.batch()))?;
    let lift_in = concat(values, &coord_t)?;

    let (lift_pre, lift_hidden, s0) = mlp_forward(&params.lift, &lift_in, act);
    let mut states = vec![s0];
    let mut pre = Vec::with_capacity(params.layers.len());
    for (t, spec) in cfg.layer_plan().iter().enumerate() {
        let layer = &params.layers[t];
        let z = match spec.skip {
            Some(s) => pre_activation(&concat(&states[t], &states[s])?, layer, cfg.d_modes)?,
            None => pre_activation(&states[t], layer, cfg.d_modes)?,
        };
        states.push(activate(&z, act));
        pre.push(z);
    }
    let last = states.last().expect("at least the lifted state");
    let (proj_pre, proj_hidden, r) = mlp_forward(&params.proj, last, act);
    let out: Vec<T> = values.data().iter().zip(r.data()).map(|(&v, &d)| v + d).collect();
    let out = SpectralTensor::from_vec(values.dims(), out)?;
    Ok((out, Tape { lift_in, lift_pre, lift_hidden, states, pre, proj_pre, proj_hidden }))
}

/// Reverse mode of [`forward_tensor`]: parameter gradients and the value-input gradient.
pub fn backward_tensor<T: Scalar>(
    params: &OperatorParams<T>,
    tape: &Tape<T>,
    gy: &SpectralTensor<T>,
) -> Result<(OperatorParams<T>, SpectralTensor<T>)> {
    if gy.dims() != tape.lift_in.with_channels(1) {
        return Err(Error::ShapeMismatch(format!("upstream gradient has dims {:?}", gy.dims())));
    }
    let cfg = &params.config;
    let act = cfg.activation;
    let mut grads = params.zeros_like();
    let plan = cfg.layer_plan();
    let n = plan.len();

    let mut gstates: Vec<Option<SpectralTensor<T>>> = vec![None; n + 1];
    let accumulate = |slot: &mut Option<SpectralTensor<T>>, g: SpectralTensor<T>| match slot {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a = *a + *b;
            }
        }
        None => *slot = Some(g),
    };

    let g_last =
        mlp_backward(&params.proj, &tape.states[n], &tape.proj_pre, &tape.proj_hidden, act, gy, &mut grads.proj);
    accumulate(&mut gstates[n], g_last);

    for t in (0..n).rev() {
        let Some(gout) = gstates[t + 1].take() else { continue };
        let layer = &params.layers[t];
        match plan[t].skip {
            Some(s) => {
                let xin = concat(&tape.states[t], &tape.states[s])?;
                let g =
                    pre_activation_backward(&xin, &tape.pre[t], layer, cfg.d_modes, act, &gout, &mut grads.layers[t])?;
                let (gx, gskip) = split_channels(&g, tape.states[t].channels());
                accumulate(&mut gstates[t], gx);
                accumulate(&mut gstates[s], gskip);
            }
            None => {
                let g = pre_activation_backward(
                    &tape.states[t],
                    &tape.pre[t],
                    layer,
                    cfg.d_modes,
                    act,
                    &gout,
                    &mut grads.layers[t],
                )?;
                accumulate(&mut gstates[t], g);
            }
        }
    }

    let mut gv = gy.clone();
    if let Some(g0) = gstates[0].take() {
        let g_in =
            mlp_backward(&params.lift, &tape.lift_in, &tape.lift_pre, &tape.lift_hidden, act, &g0, &mut grads.lift);
        let (g_val, _) = split_channels(&g_in, 1);
        for (a, b) in gv.data_mut().iter_mut().zip(g_val.data()) {
            *a = *a + *b;
        }
    }
    Ok((grads, gv))
}

/// Values per chunk when the operator is run on a whole cube.
const CHUNK_VALUES: usize = 1 << 22;

fn cube_values<T: Scalar>(cube: &HsiCube, pixels: std::ops::Range<usize>) -> SpectralTensor<T> {
    let c = cube.c_bands();
    let np = cube.n_pixels();
    let mut data = Vec::with_capacity(pixels.len() * c);
    for p in pixels.clone() {
        data.extend((0..c).map(|b| T::of(cube.data()[b * np + p])));
    }
    SpectralTensor::from_vec([1, 1, 1, pixels.len(), c], data).expect("chunk dims")
}

fn check_grid(y_bar: &HsiCube, grid: &CoordinateGrid) -> Result<()> {
    if y_bar.c_bands() < 2 {
        return Err(Error::ShapeMismatch("operator needs at least 2 bands".into()));
    }
    check_same_grid(grid.wavelengths_nm(), y_bar.grid()).map_err(|e| Error::ShapeMismatch(e.to_string()))
}

/// `Ỹ = Ȳ + R(Ȳ, w)` on a full cube. Pixels are processed independently in chunks.
pub fn operator_forward<T: Scalar>(
    y_bar: &HsiCube,
    grid: &CoordinateGrid,
    params: &OperatorParams<T>,
) -> Result<HsiCube> {
    check_grid(y_bar, grid)?;
    let c = y_bar.c_bands();
    let np = y_bar.n_pixels();
    let widest = params.layers.iter().map(|l| l.d_in.max(l.d_out)).max().unwrap_or(1).max(params.config.hidden);
    let chunk = (CHUNK_VALUES / (c * widest)).max(1);
    let coords: Vec<T> = grid.normalized().iter().map(|&w| T::of(w)).collect();
    let mut out = HsiCube::zeros(y_bar.height(), y_bar.width(), y_bar.grid().to_vec())?;
    let mut start = 0;
    while start < np {
        let end = (start + chunk).min(np);
        let (y, _) = forward_tensor(params, &cube_values(y_bar, start..end), &coords)?;
        let data = out.data_mut();
        for (i, p) in (start..end).enumerate() {
            for b in 0..c {
                data[b * np + p] = y.data()[i * c + b].f64();
            }
        }
        start = end;
    }
    Ok(out)
}

/// Gradients of `⟨upstream, operator_forward(y_bar)⟩` with respect to the parameters and
/// to `y_bar`.
pub fn operator_backward<T: Scalar>(
    y_bar: &HsiCube,
    grid: &CoordinateGrid,
    params: &OperatorParams<T>,
    upstream: &HsiCube,
) -> Result<(OperatorParams<T>, HsiCube)> {
    check_grid(y_bar, grid)?;
    if upstream.height() != y_bar.height() || upstream.width() != y_bar.width() || upstream.c_bands() != y_bar.c_bands()
    {
        return Err(Error::ShapeMismatch("upstream gradient shape differs from the input".into()));
    }
    let np = y_bar.n_pixels();
    let c = y_bar.c_bands();
    let coords: Vec<T> = grid.normalized().iter().map(|&w| T::of(w)).collect();
    let (_, tape) = forward_tensor(params, &cube_values(y_bar, 0..np), &coords)?;
    let (grads, gv) = backward_tensor(params, &tape, &cube_values(upstream, 0..np))?;
    let mut g = HsiCube::zeros(y_bar.height(), y_bar.width(), y_bar.grid().to_vec())?;
    let data = g.data_mut();
    for p in 0..np {
        for b in 0..c {
            data[b * np + p] = gv.data()[p * c + b].f64();
        }
    }
    Ok((grads, g))
}
