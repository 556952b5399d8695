//! Reconstruction and simulation of contagion networks over news articles.
//!
//! The pipeline runs in two halves. The first turns a stream of dated
//! articles into an empirical spread network:
//!
//! 1. [`corpus`] loads and tokenizes articles and computes TFIDF weights.
//! 2. [`embedding`] trains (or loads) skip-gram word vectors.
//! 3. [`docvec`] builds weighted document vectors and their cosine similarities.
//! 4. [`netreconstruct`] masks similarities by a time window and a threshold and
//!    assigns each article its most similar earlier article as infector.
//!
//! The second half models the spread as a network SIR process:
//!
//! 5. [`sirmodel`] estimates a publisher-level adjacency matrix from the
//!    reconstructed network and integrates the per-article SIR equations.
//! 6. [`realization`] samples binary state histories and simulated spread
//!    networks from the probability curves, and runs seeded ensembles.
//!
//! [`synth`] generates corpora with planted cascades so every stage has a
//! ground truth to be checked against.

pub mod corpus;
pub mod docvec;
pub mod embedding;
mod error;
pub mod export;
pub mod netreconstruct;
pub mod realization;
pub mod sirmodel;
pub mod stats;
pub mod synth;

pub use corpus::{Article, ArticleSet, Vocabulary, WeightMatrix};
pub use docvec::{DocVector, SimMatrix};
pub use embedding::{SkipGramParams, WordVectors};
pub use error::{Error, Result};
pub use netreconstruct::{LagMatrix, SpreadNetwork, ThresholdCurve};
pub use realization::{ComparisonReport, EnsembleSummary, RealizationConfig, StateMatrix};
pub use sirmodel::{AdjacencyMatrix, DailyCounts, ForceMode, SirParams, SirTrajectory};
pub use synth::{PlantedMetrics, SynthConfig};
