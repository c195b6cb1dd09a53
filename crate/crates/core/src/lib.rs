//! Desk-scale associative memory engine for chest X-ray report generation.
//!
//! The pipeline mirrors a two-stage retrieval-augmented reporting flow on
//! fully synthetic data: a linear multi-label classifier over encoded image
//! patches provides activation maps, the maps mask images down to
//! disease-relevant regions, masked-region features and report-sentence
//! embeddings fill two disease-tagged memory banks, and modern Hopfield
//! retrieval against those banks drives deterministic report assembly. An
//! evaluation suite (BLEU, ROUGE-L, CIDEr, clinical-efficacy P/R/F1) scores
//! the output.
//!
//! Modules:
//! - [`numerics`]: dense f64 vectors/matrices and stable reductions
//! - [`hopfield`]: energy, association weights, gradient and fixed-point
//!   retrieval, dual-bank wrappers
//! - [`bank`]: bank construction, apportionment, binary persistence
//! - [`roi`]: patch statistics, RoI selection, masking, raster files
//! - [`classifier`]: multi-label linear head, BCE training, linear CAM
//! - [`encoder`]: seeded random-projection and signed-hash encoders
//! - [`metrics`]: BLEU / ROUGE-L / CIDEr / CE scoring
//! - [`corpus`], [`config`], [`pipeline`], [`sweep`]: synthetic data and the
//!   end-to-end flow

pub mod bank;
pub mod classifier;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod hopfield;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod roi;
pub mod sweep;

pub use config::{EnhanceMode, PipelineConfig};
pub use error::{Error, Result};
pub use hopfield::{HopfieldConfig, PatternMatrix, RetrievalMode, RetrievalResult};
pub use metrics::{LabelVector, NUM_DISEASES};
pub use numerics::{Matrix, Vector};
