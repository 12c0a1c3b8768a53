//! Variable-length lossless source coding with side-information: ε-cutoff
//! entropies, exact optimal code lengths, guessing with giving up, and
//! second-order approximations.

pub mod asymptotics;
pub mod coding;
pub mod cutoff;
pub mod error;
pub mod fixtures;
pub mod gaussian;
pub mod guessing;
pub mod lift;
pub mod mass;
pub mod sim;
pub mod source;
pub mod sweep;

pub use error::{Error, Result};
