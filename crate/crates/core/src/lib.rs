//! Adversarial constraint learning.

pub mod autodiff;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod objectives;
pub mod simulators;
pub mod tensor;
pub mod trainer;

pub use autodiff::{Gradients, Graph, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
