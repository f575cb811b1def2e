//! Expansions, asymptotic sums, parametrices and the Heisenberg demo.

pub mod expansion;
pub mod heisenberg;
pub mod parametrix;

pub use expansion::{asymptotic_sum, extract_expansion, homogenize, Expansion};
pub use parametrix::{hypoellipticity_demo, invert_cosymbol, parametrix, ParametrixState};
