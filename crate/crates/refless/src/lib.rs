//! Reference-free quality estimation for machine-generated summaries.
//!
//! The toolkit predicts the five DUC linguistic quality scores (Q1
//! grammaticality, Q2 non-redundancy, Q3 referential clarity, Q4 focus,
//! Q5 structure & coherence) from summary text alone, and evaluates
//! predictions by system-level rank correlation against human ratings.
//!
//! Main pieces:
//!
//! - [`corpus`]: data model, line-record ingestion, per-system
//!   aggregation and a seeded synthetic-corpus generator for desk-scale
//!   experiments.
//! - [`encoders`]: trainable text encoders (a small transformer loaded
//!   from a checkpoint directory, and a BiGRU stack with additive
//!   self-attention).
//! - [`heads`]: affine regression heads over encoder output, the three
//!   training flavors (S-1, M-1, M-5), loss combination and the training
//!   loop.
//! - [`baselines`]: ROUGE recall variants with best-on-dev selection,
//!   k-worst-token LM perplexity, next-sentence perplexity and the LM
//!   scorer adapters / score cache.
//! - [`eval`]: Spearman/Kendall/Pearson correlation, the 3-fold
//!   cross-dataset protocol, grid tuning and report files.
//! - [`runner`]: end-to-end experiment orchestration with run manifests,
//!   deterministic outputs and SVG plots.

pub mod baselines;
pub mod corpus;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod heads;
pub mod nn;
pub mod runner;
pub mod text;

pub use error::{Error, Result};
