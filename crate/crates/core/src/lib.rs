//! Central limit theorems for conjugacy classes in free groups.
//!
//! Words and spheres of the free group, conjugacy classes and their spheres,
//! the symbolic coding with locally constant weights, transfer operators with
//! pressure and its derivatives, and the empirical statistics of weights over
//! conjugacy class spheres.

pub mod conjugacy;
pub mod error;
pub mod stats;
pub mod symbolic;
pub mod thermo;
pub mod words;

pub use conjugacy::{class_of, ConjugacyClass};
pub use error::{Error, Result};
pub use symbolic::{WeightFunction, WeightSpec};
pub use words::{Letter, Rank, Word};
