use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{LayerSpec, OperatorConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Two-layer pointwise MLP; weights are row-major `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
}

impl<T: Scalar> Mlp<T> {
    pub fn zeros(d_in: usize, d_hidden: usize, d_out: usize) -> Self {
        Self {
            d_in,
            d_hidden,
            d_out,
            w1: vec![T::zero(); d_hidden * d_in],
            b1: vec![T::zero(); d_hidden],
            w2: vec![T::zero(); d_out * d_hidden],
            b2: vec![T::zero(); d_out],
        }
    }
}

/// One spectral-aware convolution layer.
///
/// Complex Fourier weights are stored as separate real and imaginary arrays laid out
/// `[d_in, d_out, d_modes]`; the local path is a `[d_out, d_in]` matrix plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct SacLayerParams<T> {
    pub d_in: usize,
    pub d_out: usize,
    pub d_modes: usize,
    pub fourier_re: Vec<T>,
    pub fourier_im: Vec<T>,
    pub local: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> SacLayerParams<T> {
    pub fn zeros(d_in: usize, d_out: usize, d_modes: usize) -> Self {
        let n = d_in * d_out * d_modes;
        Self {
            d_in,
            d_out,
            d_modes,
            fourier_re: vec![T::zero(); n],
            fourier_im: vec![T::zero(); n],
            local: vec![T::zero(); d_out * d_in],
            bias: vec![T::zero(); d_out],
        }
    }

    #[inline]
    pub fn fourier_index(&self, i: usize, o: usize, k: usize) -> usize {
        (i * self.d_out + o) * self.d_modes + k
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorParams<T> {
    pub config: OperatorConfig,
    pub lift: Mlp<T>,
    pub layers: Vec<SacLayerParams<T>>,
    pub proj: Mlp<T>,
}

impl<T: Scalar> OperatorParams<T> {
    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: OperatorConfig) -> Result<Self> {
        config.validate()?;
        let d = config.hidden;
        let layers = config
            .layer_plan()
            .iter()
            .map(|&LayerSpec { d_in, d_out, .. }| SacLayerParams::zeros(d_in, d_out, config.d_modes))
            .collect();
        Ok(Self { config, lift: Mlp::zeros(2, d, d), layers, proj: Mlp::zeros(d, d, 1) })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config).expect("config was validated on construction")
    }

    /// `(name, shape, values)` for every tensor, in a fixed order.
    pub fn named_tensors(&self) -> Vec<Named<'_, T>> {
        let mut out = Vec::new();
        push_mlp(&mut out, "lift", &self.lift);
        for (t, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{t}.fourier_re"), vec![l.d_in, l.d_out, l.d_modes], &l.fourier_re[..]));
            out.push((format!("layer{t}.fourier_im"), vec![l.d_in, l.d_out, l.d_modes], &l.fourier_im[..]));
            out.push((format!("layer{t}.local"), vec![l.d_out, l.d_in], &l.local[..]));
            out.push((format!("layer{t}.bias"), vec![l.d_out], &l.bias[..]));
        }
        push_mlp(&mut out, "proj", &self.proj);
        out
    }

    /// Mutable views in the same order as [`named_tensors`](Self::named_tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        let Self { lift, layers, proj, .. } = self;
        out.extend([&mut lift.w1[..], &mut lift.b1[..], &mut lift.w2[..], &mut lift.b2[..]]);
        for l in layers.iter_mut() {
            out.extend([&mut l.fourier_re[..], &mut l.fourier_im[..], &mut l.local[..], &mut l.bias[..]]);
        }
        out.extend([&mut proj.w1[..], &mut proj.b1[..], &mut proj.w2[..], &mut proj.b2[..]]);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|t| t.2.len()).sum()
    }

    /// All values concatenated in tensor order.
    pub fn flatten(&self) -> Vec<T> {
        self.named_tensors().into_iter().flat_map(|t| t.2.iter().copied()).collect()
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn unflatten(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.num_parameters() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.num_parameters(),
                values.len()
            )));
        }
        let mut at = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&values[at..at + t.len()]);
            at += t.len();
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> OperatorParams<U> {
        let mut out = OperatorParams::<U>::zeros(self.config).expect("config was validated on construction");
        let src: Vec<U> = self.flatten().into_iter().map(|v| U::of(v.f64())).collect();
        out.unflatten(&src).expect("same config, same shapes");
        out
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|t| t.2.iter().all(|v| v.is_finite()))
    }
}

type Named<'a, T> = (String, Vec<usize>, &'a [T]);

fn push_mlp<'a, T>(out: &mut Vec<Named<'a, T>>, tag: &str, m: &'a Mlp<T>) {
    out.push((format!("{tag}.w1"), vec![m.d_hidden, m.d_in], &m.w1));
    out.push((format!("{tag}.b1"), vec![m.d_hidden], &m.b1));
    out.push((format!("{tag}.w2"), vec![m.d_out, m.d_hidden], &m.w2));
    out.push((format!("{tag}.b2"), vec![m.d_out], &m.b2));
}

fn fill_uniform<T: Scalar>(rng: &mut ChaCha8Rng, w: &mut [T], fan_in: usize) {
    let a = 1.0 / (fan_in as f64).sqrt();
    for v in w {
        *v = T::of(rng.gen_range(-a..a));
    }
}

/// Seeded initialization.
///
/// Fourier weights are uniform in the complex disc of radius `1/(d_in·d_modes)`; every
/// matrix is uniform in `±1/√fan_in`; biases start at zero.
pub fn init_params<T: Scalar>(config: &OperatorConfig) -> Result<OperatorParams<T>> {
    let mut p = OperatorParams::<T>::zeros(*config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    fill_uniform(&mut rng, &mut p.lift.w1, p.lift.d_in);
    fill_uniform(&mut rng, &mut p.lift.w2, p.lift.d_hidden);
    for l in &mut p.layers {
        let radius = 1.0 / (l.d_in * l.d_modes) as f64;
        for (re, im) in l.fourier_re.iter_mut().zip(l.fourier_im.iter_mut()) {
            let r = radius * rng.gen::<f64>().sqrt();
            let phi = std::f64::consts::TAU * rng.gen::<f64>();
            *re = T::of(r * phi.cos());
            *im = T::of(r * phi.sin());
        }
        fill_uniform(&mut rng, &mut l.local, l.d_in);
    }
    fill_uniform(&mut rng, &mut p.proj.w1, p.proj.d_in);
    fill_uniform(&mut rng, &mut p.proj.w2, p.proj.d_hidden);
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> OperatorConfig {
        OperatorConfig { d_modes: 3, hidden: 4, t_contract: 1, t_transform: 1, seed: 9, ..Default::default() }
    }

    #[test]
    fn same_seed_same_params() {
        let a = init_params::<f64>(&tiny()).unwrap();
        let b = init_params::<f64>(&tiny()).unwrap();
        assert_eq!(a.flatten(), b.flatten());
        let c = init_params::<f64>(&OperatorConfig { seed: 10, ..tiny() }).unwrap();
        assert_ne!(a.flatten(), c.flatten());
    }

    #[test]
    fn default_has_twelve_layers() {
        let p = OperatorParams::<f32>::zeros(OperatorConfig::default()).unwrap();
        assert_eq!(p.layers.len(), 12);
        assert_eq!(p.layers[3].d_out, 512);
    }

    #[test]
    fn init_respects_bounds() {
        let p = init_params::<f64>(&tiny()).unwrap();
        for l in &p.layers {
            let r = 1.0 / (l.d_in * l.d_modes) as f64;
            for (a, b) in l.fourier_re.iter().zip(&l.fourier_im) {
                assert!(a.hypot(*b) <= r);
            }
            let a = 1.0 / (l.d_in as f64).sqrt();
            assert!(l.local.iter().all(|v| v.abs() <= a));
            assert!(l.bias.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn flatten_order_matches_names() {
        let mut p = init_params::<f64>(&tiny()).unwrap();
        let names: Vec<String> = p.named_tensors().into_iter().map(|t| t.0).collect();
        assert_eq!(names.first().unwrap(), "lift.w1");
        assert_eq!(names[4], "layer0.fourier_re");
        assert_eq!(names.last().unwrap(), "proj.b2");
        let lens: Vec<usize> = p.named_tensors().iter().map(|t| t.2.len()).collect();
        let lens_mut: Vec<usize> = p.tensors_mut().iter().map(|t| t.len()).collect();
        assert_eq!(lens, lens_mut);
        let flat = p.flatten();
        let mut q = p.zeros_like();
        q.unflatten(&flat).unwrap();
        assert_eq!(p, q);
        let r: OperatorParams<f64> = p.cast::<f32>().cast();
        for (a, b) in r.flatten().iter().zip(&flat) {
            assert!((a - b).abs() < 1e-7);
        }
    }
}
