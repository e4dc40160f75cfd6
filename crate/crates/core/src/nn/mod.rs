//! Minimal dense/convolutional networks with exact input gradients.

pub mod io;
mod layer;
mod network;
mod train;

pub use layer::{BackwardRule, Conv2D, Dense, Layer};
pub use network::Network;
pub use train::{accuracy, train, Optimizer, TrainConfig, TrainReport, TrainedNetwork};
