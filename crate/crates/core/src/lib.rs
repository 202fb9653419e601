//! Recovery of additive structure (ability minus difficulty) from bounded,
//! sparsely observed evaluation-score matrices, with integrability
//! diagnostics, connectivity-safe sampling masks, baseline estimators, and
//! bootstrap evaluation.

pub mod data_io;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod integrability;
pub mod link;
pub mod sampling;
mod stats;
pub mod types;

pub use error::{Error, Result};
pub use link::{Link, LinkKind};
pub use types::{AdditiveParams, AgentClass, AgentLabels, ObservationMask, ScoreMatrix};
