//! Off-policy evaluation for short-memory policies in POMDPs with
//! future-dependent value functions.

pub mod data;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod features;
pub mod linalg;
pub mod model;

pub use error::{Error, Result};
