//! Controller-Handler design compliance assessment from the geometry of
//! program embeddings.
//!
//! The pipeline embeds every program of a corpus, averages the
//! controller-to-handler offsets of known pattern instances into a
//! benchmark vector, and ranks each query pair by how well
//! `controller + benchmark` predicts the handler.

pub mod assessor;
pub mod cli;
pub mod corpus;
pub mod embedder;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod scalar;
pub mod tokenizer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type EmbeddingVector64 = embedder::EmbeddingVector<f64>;
pub type EmbeddingVector32 = embedder::EmbeddingVector<f32>;
pub type EmbeddingStore64 = embedder::EmbeddingStore<f64>;
pub type EmbeddingStore32 = embedder::EmbeddingStore<f32>;
pub type TrainableEmbedder64 = embedder::TrainableEmbedder<f64>;
pub type TrainableEmbedder32 = embedder::TrainableEmbedder<f32>;
pub type HashedBagEmbedder64 = embedder::HashedBagEmbedder<f64>;
pub type HashedBagEmbedder32 = embedder::HashedBagEmbedder<f32>;
pub type JointnessBenchmark64 = assessor::JointnessBenchmark<f64>;
pub type JointnessBenchmark32 = assessor::JointnessBenchmark<f32>;
