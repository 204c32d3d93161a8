//! Schema-constrained decoding and an ambiguity-resolution pipeline over a
//! symbolic tabletop world.
//!
//! Schemas compile to regular expressions, then to pruned DFAs and token
//! indices that mask a scoring backend step by step. The pipeline grounds a
//! task's objects, asks a clarifying question when a description is
//! ambiguous, folds the answer back in and locates the result in the
//! rendered image. [`eval`] scores transcripts against generated datasets.

pub mod dataset;
pub mod decoder;
pub mod eval;
pub mod fsm;
pub mod pipeline;
pub mod scalar;
pub mod schema;
pub mod seed;
pub mod world;

use num_rational::Ratio;

pub use dataset::{generate_dataset, read_dataset, write_dataset, Dataset, DatasetConfig};
pub use decoder::{CompiledSchema, SamplingPolicy, TokenBackend};
pub use eval::{evaluate, EvalReport};
pub use fsm::{Dfa, TokenIndex, Vocabulary};
pub use pipeline::{run_episode, OracleReasoner, Reasoner, ReasoningTranscript, SimulatedUser};
pub use schema::{compile_schema, SchemaNode};

/// Backend scores.
pub type Score = f32;
/// Reported metrics.
pub type Rate = f64;
/// Metrics computed without rounding.
pub type ExactRate = Ratio<u64>;
