//! Multiple-choice video question answering.
//!
//! The crate contains a small reverse-mode autodiff engine ([`graph`]),
//! bidirectional LSTM encoders ([`encoder`]), four scoring models
//! ([`model`]), Adam training with clipping and early stopping ([`train`]),
//! a distractor-based dataset builder ([`dataset`]), accuracy and WUPS
//! evaluation ([`metrics`]) and the file formats and synthetic tasks used by
//! the `fwqa` command-line tool.

pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod embeddings;
pub mod encoder;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod model;
pub mod params;
pub mod pipeline;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use model::{ModelConfig, ModelKind};
pub use params::ParamStore;
pub use tensor::Tensor;
