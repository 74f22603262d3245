pub mod backend;
pub mod cli;
pub mod config;
pub mod demos;
pub mod error;
pub mod exec;
pub mod harness;
pub mod inference;
pub mod persist;
pub mod prethink;
pub mod recall;

pub use error::{BackendError, Error, Result};
