//! Shipped symbol families and the JSON form the CLI reads them from.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::kernel::log_symbol;
use super::{dyadic_t_grid, Lattice, SymbolFamily, C64};
use crate::enveloping_calculus::{FilteredDiffOp, OperatorSpec};
use crate::error::{Error, Result};
use crate::filtered_patch::catalog;

/// Grid parameters shared by every family constructor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub gx: usize,
    pub geta: usize,
    /// Dyadic t-levels below 1.
    pub t_levels: u32,
}

impl Default for Grid {
    fn default() -> Self {
        Grid { gx: 256, geta: 256, t_levels: 12 }
    }
}

impl Grid {
    pub fn t(&self) -> Vec<f64> {
        dyadic_t_grid(self.t_levels, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilySpec {
    /// `(t² + η²)^{1/2}` on 𝕋¹.
    Root,
    /// `η²` on 𝕋¹.
    Square,
    /// Fourier side of `log|ξ|` on 𝕋¹, constant in `t`.
    LogKernel,
    /// `-(X² + Y²)` on the Heisenberg patch.
    HeisSublaplacian,
    Operator { operator: OperatorSpec },
}

impl FamilySpec {
    pub fn build(&self, grid: &Grid) -> Result<SymbolFamily> {
        match self {
            FamilySpec::Root => root(grid),
            FamilySpec::Square => square(grid),
            FamilySpec::LogKernel => log_kernel(grid),
            FamilySpec::HeisSublaplacian => heis_sublaplacian([32, 32, 512], vec![-1.0, -0.5, 0.0, 0.5, 1.0]),
            FamilySpec::Operator { operator } => from_operator(operator, grid),
        }
    }
}

fn x_free(n: usize, geta: usize) -> Result<Lattice> {
    Lattice::new(vec![1; n], vec![geta; n])
}

pub fn root(grid: &Grid) -> Result<SymbolFamily> {
    SymbolFamily::from_fn(x_free(1, grid.geta)?, vec![1], grid.t(), 1.0, |_, e, t| {
        C64::new((t * t + (e[0] * e[0]) as f64).sqrt(), 0.0)
    })
}

pub fn square(grid: &Grid) -> Result<SymbolFamily> {
    SymbolFamily::from_fn(x_free(1, grid.geta)?, vec![1], grid.t(), 2.0, |_, e, _| C64::new((e[0] * e[0]) as f64, 0.0))
}

pub fn log_kernel(grid: &Grid) -> Result<SymbolFamily> {
    SymbolFamily::from_fn(x_free(1, grid.geta)?, vec![1], grid.t(), -1.0, |_, e, _| C64::new(log_symbol(e[0]), 0.0))
}

/// The sublaplacian in frame coordinates has constant coefficients, so its
/// family is `η₁² + η₂²` with no `x` dependence.
pub fn heis_sublaplacian(geta: [usize; 3], t: Vec<f64>) -> Result<SymbolFamily> {
    let patch = Arc::new(catalog::heisenberg());
    let op = FilteredDiffOp::from_word(patch.clone(), &[0, 0], crate::expr::Expr::int(3, -1))?
        .add(&FilteredDiffOp::from_word(patch, &[1, 1], crate::expr::Expr::int(3, -1))?)?;
    let lat = Lattice::new(vec![1; 3], geta.to_vec())?;
    SymbolFamily::from_differential(&op.kernel_family(), lat, t, 2.0)
}

/// Operators on a torus patch, tabulated at their H-order.
pub fn from_operator(spec: &OperatorSpec, grid: &Grid) -> Result<SymbolFamily> {
    let patch = catalog::by_name(&spec.patch_ref)
        .ok_or_else(|| Error::Malformed(format!("unknown patch '{}'", spec.patch_ref)))?;
    let n = patch.dim();
    let gx = if patch.periodic() { grid.gx } else { 1 };
    let op = FilteredDiffOp::from_spec(spec, Arc::new(patch))?;
    let m = op.h_order().ok_or_else(|| Error::Domain("the zero operator has no family".into()))?;
    let mut t = grid.t();
    if !t.contains(&1.0) {
        t.push(1.0);
    }
    SymbolFamily::from_differential(&op.kernel_family(), Lattice::new(vec![gx; n], vec![grid.geta; n])?, t, m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_round_trip() {
        let s: FamilySpec = serde_json::from_str(r#"{"kind":"log_kernel"}"#).unwrap();
        assert_eq!(s, FamilySpec::LogKernel);
        let op: FamilySpec = serde_json::from_str(
            r#"{"kind":"operator","operator":{"patch_ref":"torus1","terms":[
                {"multi_index":[2],"coeff_expr":"-1"},{"multi_index":[0],"coeff_expr":"2 + cos(x)"}]}}"#,
        )
        .unwrap();
        let grid = Grid { gx: 16, geta: 16, t_levels: 2 };
        let f = op.build(&grid).unwrap();
        assert_eq!(f.weight(), 2.0);
        let v = f.at(f.t_index(1.0).unwrap(), 0, &[3]).unwrap();
        assert!((v.re - 12.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn heis_family_is_planar_square() {
        let f = heis_sublaplacian([8, 8, 16], vec![0.0, 1.0]).unwrap();
        assert_eq!(f.at(1, 0, &[2, -3, 5]).unwrap(), C64::new(13.0, 0.0));
    }
}
