//! Incentive schemes that make crowd workers evaluate truthfully.
//!
//! Workers choose how much effort to spend on each task; a supervisor (or a
//! superior worker) compares answers and charges a penalty on disagreement.
//! The crate computes the penalties and audit rates that make low error
//! probabilities a best response, builds the supervision structures, picks
//! the tasks a supervisor has to check, and simulates the whole thing.

pub mod allocation;
pub mod binary;
pub mod effort;
pub mod error;
pub mod flat;
pub mod quant;
pub mod sim;
pub mod structure;

pub use effort::{Clamp, EffortFamily, EffortFunction, Root, SchemeParams};
pub use error::{Error, Result};
