//! Time-convolutionless master equations up to fourth order for the biased
//! spin-boson model, plus the exact small-bath oracles and the comparison
//! metrics used to benchmark them.

pub mod bath;
pub mod benchmark;
pub mod error;
pub mod generators;
pub mod oracle;
pub mod propagation;
mod quad;

pub use error::{Error, Result};
