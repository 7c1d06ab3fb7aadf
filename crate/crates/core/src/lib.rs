//! Training-free, task-specific structured pruning of a toy encoder-decoder
//! transformer.

pub mod attribution;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod harness;
pub mod model;
pub mod pruner;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
