pub mod autodiff;
pub mod cli;
pub mod config;
pub mod dataio;
pub mod error;
pub mod harness;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod signal;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
