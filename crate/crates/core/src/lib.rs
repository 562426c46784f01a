//! Exact analysis of rank one cutting-and-stacking transformations.
//!
//! Towers are built from a cut rule and a spacer rule, then queried for
//! certified enclosures of correlation and ergodic-average quantities.

pub mod analysis;
pub mod bitset;
pub mod constructions;
pub mod dynseq;
pub mod error;
pub mod numeric;
pub mod tower;

pub use error::{Error, Result};
pub use numeric::{Enclosure, ExactScalar};
