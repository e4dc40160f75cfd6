//! Integrated gradients with maximum-entropy baselines, built on a small
//! dense/convolutional network with exact input gradients.

pub mod attribution;
pub mod baselines;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod nn;
pub mod runner;
pub mod tensor;

pub use error::{Error, ErrorKind, Result};
pub use tensor::TensorF;
