//! Simulator and goal-conditioned discrete soft actor-critic trainer for
//! pivoting-cube modular satellites.

pub mod checks;
pub mod env;
pub mod error;
pub mod geometry;
pub mod matching;
pub mod net;
pub mod oracle;
pub mod replay;
pub mod sac;

pub use error::{Error, Result};
