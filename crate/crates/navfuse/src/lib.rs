//! File formats and command-line front end for `navfuse-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod records;
pub mod worldfile;

pub use error::{Error, Result};
pub use navfuse_core;
