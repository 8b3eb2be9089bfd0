//! Finite-scale constructions and audits for one-sided symbolic dynamics.
//!
//! The crate builds explicit points of mixing shifts of finite type, tracks
//! their empirical measures in a truncated weak* metric, glues orbit segments
//! with exact connector words, assembles DC1-scrambled families and measures
//! recurrence densities of the resulting orbits. A separate module handles
//! β-expansions and Parry admissibility.

pub mod betashift;
pub mod birkhoff;
pub mod chaos;
pub mod error;
pub mod measures;
pub mod recurrence;
pub mod shiftspace;
pub mod specification;

pub use error::{Error, Result};
