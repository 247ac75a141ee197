//! Structured width pruning for GLU feed-forward blocks.
//!
//! Neurons of each MLP's intermediate dimension are scored ([`importance`]),
//! the lowest-scoring ones are removed in gate/up/down triples ([`pruner`]),
//! and the result is checked with a small decoder ([`transformer`]),
//! byte-level perplexity ([`eval`]) and a generation profiler ([`profiler`]).
//! [`analytics`] recomputes derived statistics from published result tables.

pub mod analytics;
pub mod error;
pub mod eval;
pub mod glu;
pub mod importance;
pub mod model_io;
pub mod profiler;
pub mod pruner;
pub mod tensor;
pub mod transformer;

pub use error::{Error, Result};
pub use glu::{glu_forward, GluLayer};
pub use importance::{Criterion, ImportanceVector};
pub use model_io::ModelConfig;
pub use pruner::PruningPlan;
pub use tensor::{DataKind, Matrix};
pub use transformer::ToyTransformer;
