//! Convolutional networks for leaf-image classification, deconvnet feature
//! visualisation, and the dataset and classifier-comparison pipeline around
//! them.

pub mod classify;
pub mod datapipe;
pub mod deconv;
pub mod error;
pub mod network;
pub mod pipeline;
pub mod tensor;
pub mod util;

pub use error::{Error, Result};
pub use network::{ForwardTrace, Network, NetworkSpec, Params};
pub use tensor::Tensor;
