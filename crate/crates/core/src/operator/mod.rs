//! U-shaped spectral neural operator.
//!
//! Every (pixel, band) value is lifted together with its normalized wavelength, pushed
//! through contracting, transformation and expansive layers that mix along the band axis
//! in the Fourier domain, and projected back to one value that is added to the input.
//! Spatial positions never interact, so the batch, height and width axes are
//! interchangeable.

mod config;
mod layers;
mod net;
mod params;

pub use config::{Activation, CoordinateGrid, LayerRole, LayerSpec, OperatorConfig};
pub use layers::{expansive_backward, expansive_forward, layer_backward, layer_forward, sac_backward, sac_forward};
pub use net::{backward_tensor, forward_tensor, operator_backward, operator_forward, Tape};
pub use params::{init_params, Mlp, OperatorParams, SacLayerParams};
