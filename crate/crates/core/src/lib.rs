//! Depth-image sign classification with greedily pretrained sparse
//! autoencoders stacked under a softmax output layer.
//!
//! Samples are stored as matrix columns throughout: a batch of `N` images of
//! `P` pixels is a `P x N` [`Matrix`].

pub mod autoencoder;
pub mod classifier;
pub mod cli;
pub mod codec;
pub mod data;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod stack;

pub use autoencoder::{AeHyper, AutoencoderParams};
pub use classifier::{SoftmaxHyper, SoftmaxParams};
pub use data::{Dataset, DepthImage, Split};
pub use error::{Error, Result};
pub use linalg::{Matrix, RngState};
pub use metrics::{BinaryCounts, ConfusionMatrix, EvalReport};
pub use optim::{EpochRecord, TrainTrace};
pub use stack::{PipelineConfig, StackedNetwork};
