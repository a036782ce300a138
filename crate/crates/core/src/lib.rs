//! Temporal link prediction for directed networks.
//!
//! A window of adjacency snapshots is encoded per snapshot by graph attention
//! over in-neighbors and graph convolutions over motif-derived matrices, then
//! by a GRU and causal multi-head attention across time. A dense decoder
//! scores every ordered node pair for the next snapshot.
//!
//! Numerics are generic over [`numerics::Scalar`] (`f32` or `f64`); the
//! aliases below fix the common choices.

pub mod cli;
pub mod error;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod model;
pub mod motif;
pub mod numerics;
pub mod training;

pub use error::{Result, TsamError};
pub use graph::{DirectedSnapshot, NetworkStats, SnapshotSequence, WindowSample};
pub use model::{ModelConfig, ModelParams, NodeFeatures, Preset, ScoreMatrix, TsamModel};
pub use motif::TransformKind;
pub use numerics::{Scalar, Tensor};

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Model64 = TsamModel<f64>;
pub type Model32 = TsamModel<f32>;
pub type Params64 = ModelParams<Tensor<f64>>;
pub type Params32 = ModelParams<Tensor<f32>>;
pub type ScoreMatrix64 = ScoreMatrix<f64>;
pub type ScoreMatrix32 = ScoreMatrix<f32>;
