//! Phase-estimation bounds for two-mode interferometers.
//!
//! States live in a truncated two-mode Fock space organised into
//! fixed-total-number sectors; transformations are generated by the
//! collective spin `J_n` and the total number `N̂`.

pub mod error;
pub mod fisher;
pub mod fockspace;
pub mod linalg;
pub mod measurement;
pub mod simulate;
pub mod spinops;
pub mod witness;

pub use error::{Error, Result};
