#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod agent;
pub mod attention;
pub mod encoders;
pub mod eval;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod numerics;
pub mod params;
pub mod reasoning;
pub mod rng;
pub mod training;
pub mod world;

pub use error::{Error, Result};
