pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
mod fsio;
pub mod model;
pub mod plot;
pub mod signal;
pub mod tensor;
pub mod train;
pub mod tsne;

pub use error::{Error, Result};
pub use tensor::Tensor;
