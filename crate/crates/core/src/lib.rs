//! Symbolic and numeric toolkit for the tangent groupoid pseudodifferential
//! calculus on filtered manifolds.

pub mod enveloping_calculus;
pub mod error;
pub mod expansion_parametrix;
pub mod expr;
pub mod expr_parse;
pub mod filtered_patch;
pub mod graded_nilpotent;
pub mod kernel_zoom;

pub use error::{Error, Result};
