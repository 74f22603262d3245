//! Allocation-only building blocks for memory-of-thought question answering.
//!
//! Everything here is pure: answer extraction, vote summaries and answer
//! entropy, confidence filters, spherical k-means over question embeddings,
//! per-cluster candidate lookup, prompt assembly and evaluation metrics.
//! Model backends, persistence and the command line live in the `mot` crate.

#![no_std]

extern crate alloc;

pub mod cluster;
pub mod embedding;
pub mod error;
pub mod format;
pub mod memory;
pub mod metrics;
pub mod parse;
pub mod pool;
pub mod prompt;
pub mod retrieval;
pub mod seed;
pub mod task;
pub mod vote;

pub use embedding::EmbeddingVector;
pub use error::CoreError;
pub use format::{FormatKind, ParseStatus, ParsedAnswer, TaskFormat};
pub use memory::{MemoryEntry, MemorySource};
pub use pool::{BuildMeta, CandidateSet, MemoryPool};
pub use prompt::{CompletionRequest, Demonstration, InferenceMode, Message, ModeKind, Role};
pub use task::{Split, TaskItem};
pub use vote::{ThoughtSample, VoteSummary};
