//! Emotion-adaptive music recommendation.
//!
//! Free-text mood descriptions are mapped to a valence-arousal (VA) point by a
//! wide-and-deep regression head over precomputed sentence embeddings. A lyrics
//! catalog is annotated with VA points by chunk averaging, play logs are folded
//! into user-emotion and emotion-artist memory tables, and songs are ranked by
//! negative VA distance plus the two memory terms.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix the scalar to `f64`, which is what the command-line tool uses.

pub mod annotator;
pub mod cli;
pub mod corpus;
pub mod embedder;
pub mod engine;
mod error;
pub mod features;
pub mod memory;
pub mod model;
pub mod numfmt;
mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type VaPoint = features::VaPoint<f64>;
pub type VaScaler = features::VaScaler<f64>;
pub type EmbeddingStore = embedder::EmbeddingStore<f64>;
pub type DenseLayer = model::DenseLayer<f64>;
pub type WideDeepHead = model::WideDeepHead<f64>;
pub type Checkpoint = model::Checkpoint<f64>;
pub type TrainReport = model::TrainReport<f64>;
pub type AnnotatedSong = annotator::AnnotatedSong<f64>;
pub type SongDatabase = annotator::SongDatabase<f64>;
pub type UserEmotionTable = memory::UserEmotionTable<f64>;
pub type EmotionArtistTable = memory::EmotionArtistTable<f64>;
pub type MemoryTables = memory::MemoryTables<f64>;
pub type Query = engine::Query<f64>;
pub type ScoredSong<'a> = engine::ScoredSong<'a, f64>;

pub type VaPoint32 = features::VaPoint<f32>;
pub type VaScaler32 = features::VaScaler<f32>;
pub type EmbeddingStore32 = embedder::EmbeddingStore<f32>;
pub type WideDeepHead32 = model::WideDeepHead<f32>;
pub type SongDatabase32 = annotator::SongDatabase<f32>;
pub type MemoryTables32 = memory::MemoryTables<f32>;
