use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssrno::cube::linspace;
use ssrno::numerics::{finite_diff_grad, SpectralTensor};
use ssrno::operator::*;
use ssrno::HsiCube;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_tensor(r: &mut ChaCha8Rng, dims: [usize; 5]) -> SpectralTensor<f64> {
    let n = dims.iter().product();
    SpectralTensor::from_vec(dims, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_layer(r: &mut ChaCha8Rng, d_in: usize, d_out: usize, d_modes: usize) -> SacLayerParams<f64> {
    let mut p = SacLayerParams::zeros(d_in, d_out, d_modes);
    for v in p.fourier_re.iter_mut().chain(p.fourier_im.iter_mut()) {
        *v = r.gen_range(-0.5..0.5);
    }
    for v in p.local.iter_mut().chain(p.bias.iter_mut()) {
        *v = r.gen_range(-0.5..0.5);
    }
    p
}

fn dot(a: &SpectralTensor<f64>, b: &SpectralTensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Direct circular convolution with the kernel whose spectrum is the zero-padded weights.
fn circular_oracle(x: &SpectralTensor<f64>, p: &SacLayerParams<f64>, modes: usize) -> SpectralTensor<f64> {
    let c = x.bands();
    let m = modes.min(p.d_modes).min(c / 2 + 1);
    let np = x.height() * x.width();
    let kernel = |i: usize, o: usize| -> Vec<f64> {
        (0..c)
            .map(|j| {
                let mut h = 0.0;
                for k in 0..m {
                    let idx = p.fourier_index(i, o, k);
                    let (wr, wi) = (p.fourier_re[idx], p.fourier_im[idx]);
                    let th = 2.0 * std::f64::consts::PI * (k * j) as f64 / c as f64;
                    if k == 0 || 2 * k == c {
                        h += wr * th.cos();
                    } else {
                        h += 2.0 * (wr * th.cos() - wi * th.sin());
                    }
                }
                h / c as f64
            })
            .collect()
    };
    let mut out = SpectralTensor::zeros(x.with_channels(p.d_out));
    for b in 0..x.batch() {
        for o in 0..p.d_out {
            for i in 0..p.d_in {
                let h = kernel(i, o);
                for q in 0..np {
                    let xs = &x.item(b)[(i * np + q) * c..(i * np + q + 1) * c];
                    let dst = &mut out.item_mut(b)[(o * np + q) * c..(o * np + q + 1) * c];
                    for (n, d) in dst.iter_mut().enumerate() {
                        *d += (0..c).map(|j| h[j] * xs[(n + c - j) % c]).sum::<f64>();
                    }
                }
            }
        }
    }
    out
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / scale).fold(0.0, f64::max)
}

#[test]
fn identity_filter_is_exact() {
    let mut r = rng(1);
    for c in [7, 8, 31] {
        let x = random_tensor(&mut r, [2, 1, 2, 3, c]);
        let mut p = SacLayerParams::zeros(1, 1, c / 2 + 1);
        p.fourier_re.fill(1.0);
        let y = sac_forward(&x, &p, c / 2 + 1).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn dc_mode_replicates_mean() {
    let x = SpectralTensor::<f64>::from_vec([1, 1, 1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let mut p = SacLayerParams::zeros(1, 1, 1);
    p.fourier_re[0] = 1.0;
    let y = sac_forward(&x, &p, 16).unwrap();
    for v in y.data() {
        assert!((v - 2.5).abs() < 1e-14);
    }
}

#[test]
fn matches_direct_circular_convolution() {
    let mut r = rng(2);
    for trial in 0..40 {
        let c = [7, 8, 16, 31][trial % 4];
        let (di, dout) = (r.gen_range(1..=4), r.gen_range(1..=4));
        let dm = r.gen_range(1..=c / 2 + 2);
        let p = random_layer(&mut r, di, dout, dm);
        let x = random_tensor(&mut r, [2, di, 2, 1, c]);
        let y = sac_forward(&x, &p, dm).unwrap();
        let want = circular_oracle(&x, &p, dm);
        assert!(max_rel(y.data(), want.data()) < 1e-10, "trial {trial}");
    }
}

#[test]
fn sac_is_linear() {
    let mut r = rng(3);
    let p = random_layer(&mut r, 3, 2, 5);
    let x = random_tensor(&mut r, [1, 3, 2, 2, 16]);
    let z = random_tensor(&mut r, [1, 3, 2, 2, 16]);
    let (a, b) = (0.7, -1.9);
    let mix = SpectralTensor::from_vec(x.dims(), x.data().iter().zip(z.data()).map(|(u, v)| a * u + b * v).collect())
        .unwrap();
    let lhs = sac_forward(&mix, &p, 5).unwrap();
    let (fx, fz) = (sac_forward(&x, &p, 5).unwrap(), sac_forward(&z, &p, 5).unwrap());
    for ((l, u), v) in lhs.data().iter().zip(fx.data()).zip(fz.data()) {
        assert!((l - (a * u + b * v)).abs() < 1e-10);
    }
}

#[test]
fn more_modes_approach_identity() {
    let mut r = rng(4);
    let c = 16;
    let x = random_tensor(&mut r, [1, 1, 1, 3, c]);
    let mut p = SacLayerParams::zeros(1, 1, c / 2 + 1);
    p.fourier_re.fill(1.0);
    let mut prev = f64::INFINITY;
    for m in 1..=c / 2 + 1 {
        let y = sac_forward(&x, &p, m).unwrap();
        let err: f64 = y.data().iter().zip(x.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < prev, "modes {m}: {err} !< {prev}");
        prev = err;
    }
    assert!(prev < 1e-12);
}

#[test]
fn wrong_channel_count_is_rejected() {
    let p = SacLayerParams::<f64>::zeros(2, 2, 3);
    let x = SpectralTensor::zeros([1, 3, 1, 1, 8]);
    assert!(sac_forward(&x, &p, 3).is_err());
    assert!(layer_forward(&x, &p, LayerRole::Transform, Activation::Gelu).is_err());
    let contract = SacLayerParams::<f64>::zeros(2, 3, 3);
    assert!(layer_forward(&SpectralTensor::zeros([1, 2, 1, 1, 8]), &contract, LayerRole::Contract, Activation::Gelu)
        .is_err());
}

#[test]
fn layer_special_cases() {
    let mut r = rng(5);
    let act = Activation::Gelu;
    let x = random_tensor(&mut r, [1, 2, 2, 2, 8]);
    let zero = SacLayerParams::zeros(2, 4, 3);
    let y = layer_forward(&x, &zero, LayerRole::Contract, act).unwrap();
    assert!(y.data().iter().all(|v| *v == 0.0));

    let mut local_only = random_layer(&mut r, 2, 4, 3);
    local_only.fourier_re.fill(0.0);
    local_only.fourier_im.fill(0.0);
    let y = layer_forward(&x, &local_only, LayerRole::Contract, act).unwrap();
    let np = 4 * 8;
    for o in 0..4 {
        for q in 0..np {
            let z =
                local_only.bias[o] + (0..2).map(|i| local_only.local[o * 2 + i] * x.data()[i * np + q]).sum::<f64>();
            assert!((y.data()[o * np + q] - act.apply(z)).abs() < 1e-14);
        }
    }
}

#[test]
fn layer_matches_composition() {
    let mut r = rng(6);
    let act = Activation::Gelu;
    let p = random_layer(&mut r, 3, 3, 4);
    let x = random_tensor(&mut r, [2, 3, 1, 2, 9]);
    let y = layer_forward(&x, &p, LayerRole::Transform, act).unwrap();
    let s = sac_forward(&x, &p, p.d_modes).unwrap();
    let np = 2 * 9;
    for b in 0..2 {
        for o in 0..3 {
            for q in 0..np {
                let mut z = p.bias[o] + s.item(b)[o * np + q];
                for i in 0..3 {
                    z += p.local[o * 3 + i] * x.item(b)[i * np + q];
                }
                assert!((y.item(b)[o * np + q] - act.apply(z)).abs() < 1e-13);
            }
        }
    }
}

#[test]
fn expansive_skip_ablation_and_cancellation() {
    let mut r = rng(7);
    let act = Activation::Gelu;
    let x = random_tensor(&mut r, [1, 2, 2, 1, 8]);
    let inner = random_layer(&mut r, 2, 2, 3);
    let mut wide = SacLayerParams::zeros(4, 2, 3);
    for i in 0..2 {
        for o in 0..2 {
            wide.local[o * 4 + i] = inner.local[o * 2 + i];
            for k in 0..3 {
                let (dst, src) = (wide.fourier_index(i, o, k), inner.fourier_index(i, o, k));
                wide.fourier_re[dst] = inner.fourier_re[src];
                wide.fourier_im[dst] = inner.fourier_im[src];
            }
        }
    }
    wide.bias.clone_from(&inner.bias);
    let zeros = SpectralTensor::zeros(x.dims());
    let a = expansive_forward(&x, &zeros, &wide, act).unwrap();
    let b = layer_forward(&x, &inner, LayerRole::Transform, act).unwrap();
    assert_eq!(a.data().len(), b.data().len());
    for (u, v) in a.data().iter().zip(b.data()) {
        assert!((u - v).abs() < 1e-14);
    }

    // skip block carries the negated weights and equals x
    let mut anti = wide.clone();
    anti.bias.fill(0.0);
    for i in 0..2 {
        for o in 0..2 {
            anti.local[o * 4 + 2 + i] = -anti.local[o * 4 + i];
            for k in 0..3 {
                let (src, dst) = (anti.fourier_index(i, o, k), anti.fourier_index(i + 2, o, k));
                anti.fourier_re[dst] = -anti.fourier_re[src];
                anti.fourier_im[dst] = -anti.fourier_im[src];
            }
        }
    }
    let y = expansive_forward(&x, &x, &anti, act).unwrap();
    assert!(y.data().iter().all(|v| v.abs() < 1e-14));
}

/// Central-difference check of `θ ↦ ⟨r, f(θ)⟩`; per-entry error relative to the
/// largest gradient entry.
fn check_grad(analytic: &[f64], theta: &[f64], mut f: impl FnMut(&[f64]) -> f64) {
    let fd = finite_diff_grad(&mut f, theta, 1e-4).unwrap();
    let err = max_rel(analytic, &fd);
    assert!(err < 1e-4, "relative gradient error {err}");
}

#[test]
fn sac_gradients() {
    let mut r = rng(8);
    for c in [8, 7] {
        let p = random_layer(&mut r, 2, 3, 3);
        let x = random_tensor(&mut r, [1, 2, 2, 2, c]);
        let up = random_tensor(&mut r, [1, 3, 2, 2, c]);
        let mut g = p.clone();
        g.fourier_re.fill(0.0);
        g.fourier_im.fill(0.0);
        let gx = sac_backward(&x, &p, 3, &up, &mut g.fourier_re, &mut g.fourier_im).unwrap();

        check_grad(gx.data(), x.data(), |v| {
            dot(&up, &sac_forward(&SpectralTensor::from_vec(x.dims(), v.to_vec()).unwrap(), &p, 3).unwrap())
        });
        let theta: Vec<f64> = p.fourier_re.iter().chain(&p.fourier_im).copied().collect();
        let analytic: Vec<f64> = g.fourier_re.iter().chain(&g.fourier_im).copied().collect();
        let n = p.fourier_re.len();
        check_grad(&analytic, &theta, |v| {
            let mut q = p.clone();
            q.fourier_re.copy_from_slice(&v[..n]);
            q.fourier_im.copy_from_slice(&v[n..]);
            dot(&up, &sac_forward(&x, &q, 3).unwrap())
        });
    }
}

fn layer_theta(p: &SacLayerParams<f64>) -> Vec<f64> {
    [&p.fourier_re, &p.fourier_im, &p.local, &p.bias].into_iter().flatten().copied().collect()
}

fn set_layer_theta(p: &mut SacLayerParams<f64>, v: &[f64]) {
    let mut at = 0;
    for t in [&mut p.fourier_re, &mut p.fourier_im, &mut p.local, &mut p.bias] {
        let n = t.len();
        t.copy_from_slice(&v[at..at + n]);
        at += n;
    }
}

#[test]
fn layer_gradients() {
    let mut r = rng(9);
    let act = Activation::Gelu;
    for (role, di, dout) in [(LayerRole::Contract, 2, 4), (LayerRole::Transform, 3, 3)] {
        let p = random_layer(&mut r, di, dout, 3);
        let x = random_tensor(&mut r, [1, di, 2, 2, 8]);
        let up = random_tensor(&mut r, [1, dout, 2, 2, 8]);
        let mut g = SacLayerParams::zeros(di, dout, 3);
        let gx = layer_backward(&x, &p, act, &up, &mut g).unwrap();
        check_grad(gx.data(), x.data(), |v| {
            let xv = SpectralTensor::from_vec(x.dims(), v.to_vec()).unwrap();
            dot(&up, &layer_forward(&xv, &p, role, act).unwrap())
        });
        check_grad(&layer_theta(&g), &layer_theta(&p), |v| {
            let mut q = p.clone();
            set_layer_theta(&mut q, v);
            dot(&up, &layer_forward(&x, &q, role, act).unwrap())
        });
    }
}

#[test]
fn expansive_gradients() {
    let mut r = rng(10);
    let act = Activation::Gelu;
    let p = random_layer(&mut r, 6, 2, 3);
    let x = random_tensor(&mut r, [1, 4, 2, 2, 8]);
    let skip = random_tensor(&mut r, [1, 2, 2, 2, 8]);
    let up = random_tensor(&mut r, [1, 2, 2, 2, 8]);
    let mut g = SacLayerParams::zeros(6, 2, 3);
    let (gx, gs) = expansive_backward(&x, &skip, &p, act, &up, &mut g).unwrap();
    check_grad(gx.data(), x.data(), |v| {
        let xv = SpectralTensor::from_vec(x.dims(), v.to_vec()).unwrap();
        dot(&up, &expansive_forward(&xv, &skip, &p, act).unwrap())
    });
    check_grad(gs.data(), skip.data(), |v| {
        let sv = SpectralTensor::from_vec(skip.dims(), v.to_vec()).unwrap();
        dot(&up, &expansive_forward(&x, &sv, &p, act).unwrap())
    });
    check_grad(&layer_theta(&g), &layer_theta(&p), |v| {
        let mut q = p.clone();
        set_layer_theta(&mut q, v);
        dot(&up, &expansive_forward(&x, &skip, &q, act).unwrap())
    });
}

fn tiny_config() -> OperatorConfig {
    OperatorConfig { d_modes: 3, hidden: 4, t_contract: 1, t_transform: 1, seed: 11, ..Default::default() }
}

fn random_cube(r: &mut ChaCha8Rng, h: usize, w: usize, grid: Vec<f64>) -> HsiCube {
    let n = h * w * grid.len();
    HsiCube::new(h, w, grid, (0..n).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap()
}

#[test]
fn end_to_end_gradients() {
    let mut r = rng(12);
    let mut params = init_params::<f64>(&tiny_config()).unwrap();
    // nonzero biases so that every bias gradient is exercised away from zero
    let mut flat = params.flatten();
    for v in flat.iter_mut() {
        *v += r.gen_range(-0.1..0.1);
    }
    params.unflatten(&flat).unwrap();
    let grid = linspace(400.0, 2500.0, 8);
    let cg = CoordinateGrid::new(&grid).unwrap();
    let y = random_cube(&mut r, 2, 2, grid.clone());
    let up = random_cube(&mut r, 2, 2, grid.clone());
    let (g, gy) = operator_backward(&y, &cg, &params, &up).unwrap();
    let loss = |p: &OperatorParams<f64>, y: &HsiCube| -> f64 {
        let out = operator_forward(y, &cg, p).unwrap();
        out.data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
    };
    check_grad(&g.flatten(), &flat, |v| {
        let mut q = params.clone();
        q.unflatten(v).unwrap();
        loss(&q, &y)
    });
    check_grad(gy.data(), y.data(), |v| loss(&params, &HsiCube::new(2, 2, grid.clone(), v.to_vec()).unwrap()));
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let mut r = rng(13);
    let params = init_params::<f64>(&tiny_config()).unwrap();
    let grid = linspace(400.0, 2500.0, 8);
    let cg = CoordinateGrid::new(&grid).unwrap();
    let y = random_cube(&mut r, 2, 2, grid.clone());
    let up = HsiCube::zeros(2, 2, grid).unwrap();
    let (g, gy) = operator_backward(&y, &cg, &params, &up).unwrap();
    assert!(g.flatten().iter().all(|v| *v == 0.0));
    assert!(gy.data().iter().all(|v| *v == 0.0));
}

#[test]
fn residual_identity() {
    let mut r = rng(14);
    let mut params = init_params::<f64>(&tiny_config()).unwrap();
    params.proj.w2.fill(0.0);
    params.proj.b2.fill(0.0);
    let grid = linspace(400.0, 2500.0, 8);
    let cg = CoordinateGrid::new(&grid).unwrap();
    let y = random_cube(&mut r, 3, 2, grid.clone());
    assert_eq!(operator_forward(&y, &cg, &params).unwrap(), y);
    let ones = HsiCube::new(3, 2, grid.clone(), vec![1.0; y.data().len()]).unwrap();
    let (_, gy) = operator_backward(&y, &cg, &params, &ones).unwrap();
    assert!(gy.data().iter().all(|v| *v == 1.0));
}

#[test]
fn resolution_invariance_and_determinism() {
    let mut r = rng(15);
    let cfg = OperatorConfig { d_modes: 16, hidden: 4, t_contract: 2, t_transform: 1, seed: 3, ..Default::default() };
    let params = init_params::<f64>(&cfg).unwrap();
    for c in [31, 62] {
        let grid = linspace(400.0, 2500.0, c);
        let cg = CoordinateGrid::new(&grid).unwrap();
        let y = random_cube(&mut r, 2, 3, grid.clone());
        let a = operator_forward(&y, &cg, &params).unwrap();
        let b = operator_forward(&y, &cg, &params).unwrap();
        assert_eq!(a.c_bands(), c);
        assert_eq!(a.grid(), y.grid());
        assert_eq!(a, b);
    }
    let f32_params: OperatorParams<f32> = params.cast();
    let grid = linspace(400.0, 2500.0, 31);
    let y = random_cube(&mut r, 2, 2, grid.clone());
    let cg = CoordinateGrid::new(&grid).unwrap();
    let a = operator_forward(&y, &cg, &params).unwrap();
    let b = operator_forward(&y, &cg, &f32_params).unwrap();
    for (u, v) in a.data().iter().zip(b.data()) {
        assert!((u - v).abs() < 1e-4);
    }
}

#[test]
fn grid_mismatch_is_rejected() {
    let params = init_params::<f64>(&tiny_config()).unwrap();
    let y = HsiCube::zeros(1, 1, linspace(400.0, 2500.0, 8)).unwrap();
    let cg = CoordinateGrid::new(&linspace(400.0, 2400.0, 8)).unwrap();
    assert!(operator_forward(&y, &cg, &params).is_err());
}

#[test]
fn discretization_consistency() {
    // a periodic band-limited spectrum sampled on nested uniform grids
    let cfg = OperatorConfig { d_modes: 4, hidden: 4, t_contract: 1, t_transform: 1, seed: 21, ..Default::default() };
    let params = init_params::<f64>(&cfg).unwrap();
    let signal = |t: f64| 0.5 + 0.3 * (std::f64::consts::TAU * t).cos() + 0.1 * (2.0 * std::f64::consts::TAU * t).sin();
    let run = |c: usize| -> Vec<f64> {
        let grid: Vec<f64> = (0..c).map(|i| 400.0 + 2100.0 * i as f64 / c as f64).collect();
        let vals: Vec<f64> = (0..c).map(|i| signal(i as f64 / c as f64)).collect();
        let cube = HsiCube::new(1, 1, grid.clone(), vals).unwrap();
        operator_forward(&cube, &CoordinateGrid::new(&grid).unwrap(), &params).unwrap().into_data()
    };
    let devs: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&c| {
            let (coarse, fine) = (run(c), run(2 * c));
            coarse.iter().enumerate().map(|(i, v)| (v - fine[2 * i]).abs()).fold(0.0, f64::max)
        })
        .collect();
    assert!(devs[0] > devs[1] && devs[1] > devs[2], "{devs:?}");
}
