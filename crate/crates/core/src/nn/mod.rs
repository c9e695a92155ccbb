//! Multilayer perceptrons and the Adam optimizer shared by predictor and critic.

mod adam;
pub mod checkpoint;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use mlp::{
    init_params, mlp_forward, mlp_input_gradient, Activation, BoundParams, Layer, MlpConfig,
    Parameters,
};
