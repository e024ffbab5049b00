//! Numeric core for pseudo-event regulated video moment retrieval.

pub mod embedstore;
pub mod error;
pub mod events;
pub mod feasibility;
pub mod losses;
pub mod matching;
pub mod matrix;
pub mod metrics;
pub mod seed;
pub mod synthlab;
pub mod temporal;

pub use embedstore::{EmbeddingTable, Format};
pub use error::{Error, Result};
pub use events::{DetectorConfig, EventSet, FrameFeatures};
pub use losses::{LossReport, RegulationWeights};
pub use matching::{Assignment, MatchWeights};
pub use matrix::Matrix;
pub use temporal::Span;
