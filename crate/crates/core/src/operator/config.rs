use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower and upper ends of the wavelength normalization, in nm.
pub const COORD_RANGE_NM: (f64, f64) = (400.0, 2500.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    /// Tanh approximation of GELU.
    #[default]
    Gelu,
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

/// `σ(2u)` with `u = √(2/π)(x + 0.044715x³)`, which equals `(1 + tanh u)/2`.
#[inline]
fn gelu_gate<T: Scalar>(x: T) -> T {
    let u = T::of(GELU_K) * (x + T::of(GELU_C) * x * x * x);
    T::one() / (T::one() + (-(u + u)).exp())
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Gelu => x * gelu_gate(x),
        }
    }

    #[inline]
    pub fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Gelu => {
                let s = gelu_gate(x);
                let du = T::of(GELU_K) * (T::one() + T::of(3.0 * GELU_C) * x * x);
                s + x * (s + s) * (T::one() - s) * du
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("gelu")
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gelu" => Ok(Activation::Gelu),
            other => Err(Error::InvalidConfig(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperatorConfig {
    pub d_modes: usize,
    pub hidden: usize,
    pub t_contract: usize,
    pub t_transform: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self { d_modes: 16, hidden: 32, t_contract: 4, t_transform: 4, activation: Activation::Gelu, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerRole {
    Contract,
    Transform,
    Expand,
}

/// Channel bookkeeping for one SAC layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub role: LayerRole,
    /// Input channels after any skip concatenation.
    pub d_in: usize,
    pub d_out: usize,
    /// Index of the hidden state concatenated to the input (expansive layers only).
    pub skip: Option<usize>,
}

impl OperatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_modes == 0 {
            return Err(Error::InvalidConfig("d_modes must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::InvalidConfig("hidden width must be at least 1".into()));
        }
        if self.t_contract == 0 {
            return Err(Error::InvalidConfig("t_contract must be at least 1".into()));
        }
        if self.t_contract > 16 || self.hidden.checked_shl(self.t_contract as u32).is_none_or(|w| w > 1 << 20) {
            return Err(Error::InvalidConfig("bottleneck width too large".into()));
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        2 * self.t_contract + self.t_transform
    }

    pub fn bottleneck(&self) -> usize {
        self.hidden << self.t_contract
    }

    /// Per-layer channel plan. Hidden state `k` is the output of layer `k − 1`, state 0
    /// being the lifted input; expansive layer `t` also reads state `2·T_c + T_r − 1 − t`.
    pub fn layer_plan(&self) -> Vec<LayerSpec> {
        let (d, tc, tr) = (self.hidden, self.t_contract, self.t_transform);
        (0..self.n_layers())
            .map(|t| {
                if t < tc {
                    LayerSpec { role: LayerRole::Contract, d_in: d << t, d_out: d << (t + 1), skip: None }
                } else if t < tc + tr {
                    LayerSpec { role: LayerRole::Transform, d_in: d << tc, d_out: d << tc, skip: None }
                } else {
                    let j = t - tc - tr;
                    let skip = 2 * tc + tr - 1 - t;
                    LayerSpec {
                        role: LayerRole::Expand,
                        d_in: (d << (tc - j)) + (d << skip),
                        d_out: d << (tc - j - 1),
                        skip: Some(skip),
                    }
                }
            })
            .collect()
    }
}

/// Band-center wavelengths and their normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateGrid {
    wavelengths_nm: Vec<f64>,
    normalized: Vec<f64>,
}

impl CoordinateGrid {
    pub fn new(wavelengths_nm: &[f64]) -> Result<Self> {
        if wavelengths_nm.is_empty() {
            return Err(Error::ShapeMismatch("coordinate grid is empty".into()));
        }
        if wavelengths_nm.iter().any(|w| !w.is_finite()) || wavelengths_nm.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::ShapeMismatch("wavelengths must be finite and strictly increasing".into()));
        }
        let (lo, hi) = COORD_RANGE_NM;
        let normalized = wavelengths_nm.iter().map(|w| (w - lo) / (hi - lo)).collect();
        Ok(Self { wavelengths_nm: wavelengths_nm.to_vec(), normalized })
    }

    pub fn wavelengths_nm(&self) -> &[f64] {
        &self.wavelengths_nm
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    pub fn len(&self) -> usize {
        self.wavelengths_nm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelengths_nm.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plan_channels() {
        let cfg = OperatorConfig::default();
        let plan = cfg.layer_plan();
        assert_eq!(plan.len(), 12);
        assert_eq!(cfg.bottleneck(), 512);
        let outs: Vec<usize> = plan.iter().map(|l| l.d_out).collect();
        assert_eq!(outs, vec![64, 128, 256, 512, 512, 512, 512, 512, 256, 128, 64, 32]);
        let exp_in: Vec<usize> = plan.iter().filter(|l| l.role == LayerRole::Expand).map(|l| l.d_in).collect();
        assert_eq!(exp_in, vec![768, 384, 192, 96]);
        let skips: Vec<usize> = plan.iter().filter_map(|l| l.skip).collect();
        assert_eq!(skips, vec![3, 2, 1, 0]);
    }

    #[test]
    fn config_validation() {
        assert!(OperatorConfig { d_modes: 0, ..Default::default() }.validate().is_err());
        assert!(OperatorConfig { t_contract: 0, ..Default::default() }.validate().is_err());
        assert!(OperatorConfig { t_transform: 0, ..Default::default() }.validate().is_ok());
    }

    #[test]
    fn gelu_values() {
        let g = Activation::Gelu;
        assert_eq!(g.apply(0.0f64), 0.0);
        assert!((g.apply(1.0f64) - 0.841_191_990_1).abs() < 1e-9);
        for x in [-2.0f64, -0.3, 0.0, 0.7, 3.0] {
            let h = 1e-6;
            let fd = (g.apply(x + h) - g.apply(x - h)) / (2.0 * h);
            assert!((fd - g.derivative(x)).abs() < 1e-8);
            let u = GELU_K * (x + GELU_C * x * x * x);
            assert!((g.apply(x) - 0.5 * x * (1.0 + u.tanh())).abs() < 1e-14);
        }
        assert_eq!(g.apply(-1e3f64), 0.0);
        assert_eq!(g.apply(1e3f32), 1e3);
        assert!(g.derivative(-1e3f32).is_finite() && g.derivative(1e3f64) == 1.0);
    }

    #[test]
    fn coordinates() {
        let g = CoordinateGrid::new(&[400.0, 1450.0, 2500.0]).unwrap();
        assert_eq!(g.normalized(), &[0.0, 0.5, 1.0]);
        assert!(CoordinateGrid::new(&[500.0, 500.0]).is_err());
    }
}
