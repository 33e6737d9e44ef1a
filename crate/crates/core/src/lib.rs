//! Residual-vector-quantization tokenizer toolkit for continuous
//! audio-representation features.
//!
//! The pipeline: k-means codebooks trained greedily on residuals ([`rvq`]),
//! multi-layer discrete token encode/decode, language-model input assembly
//! with seeded parameter tables ([`assembly`]), span masking for masked codec
//! modeling ([`mcm`]), a synthetic semantic-preservation probe ([`probe`]),
//! and bit-exact binary formats ([`persistence`]).

pub mod assembly;
pub mod error;
pub mod kmeans;
pub mod mcm;
pub mod persistence;
pub mod probe;
pub mod rvq;

pub use error::{Error, Result};
pub use kmeans::{Codebook, KmeansConfig, KmeansReport, PointSet};
pub use rvq::{CodebookStack, FeatureSequence, QuantizationStats, TokenSequence};
