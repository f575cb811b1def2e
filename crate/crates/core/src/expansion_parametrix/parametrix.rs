//! Cosymbol inversion, Neumann-series parametrices and the hypoellipticity
//! demonstration on the torus.

use nalgebra::DVector;
use serde::Serialize;

use super::expansion::{cutoff, homogenize};
use crate::error::{Error, Result};
use crate::graded_nilpotent::homogeneous_norm;
use crate::kernel_zoom::compose::{apply_symbol, compose_symbols, grid_coefficients, operator_matrix};
use crate::kernel_zoom::reports::{shell_slope, SlopeFit};
use crate::kernel_zoom::{Lattice, SymbolFamily, C64};

/// Edge band excluded from residual fits: compositions wrap `η + k` around
/// the lattice.
const FIT_MARGIN: i64 = 8;

fn norms(s: &SymbolFamily) -> Vec<f64> {
    s.eta_norms()
}

/// First point with `‖η‖_H ≥ 1` where `|c| ≤ 1e-12 sup |c|`.
fn ellipticity_witness(c: &SymbolFamily) -> Option<Error> {
    let n = norms(c);
    let floor = 1e-12 * c.sup().max(f64::MIN_POSITIVE);
    for xi in 0..c.nx() {
        for (e, &r) in n.iter().enumerate() {
            if r < 1.0 {
                continue;
            }
            if let Some(v) = c.get(0, xi, e) {
                if v.norm() <= floor {
                    return Some(Error::NotElliptic {
                        x: c.lattice().x_coords(xi),
                        eta: c.lattice().eta(e),
                        value: v.norm(),
                    });
                }
            }
        }
    }
    None
}

fn single_slice(c: &SymbolFamily) -> Result<SymbolFamily> {
    if c.nt() == 1 {
        Ok(c.clone())
    } else {
        c.restrict_t(0.0)
    }
}

/// Pointwise reciprocal of a weight-`m` cosymbol beyond the unit shell,
/// cut off inside it and homogenized to weight `-m`.
pub fn invert_cosymbol(c: &SymbolFamily, m: f64) -> Result<SymbolFamily> {
    let c = single_slice(c)?;
    if let Some(err) = ellipticity_witness(&c) {
        return Err(err);
    }
    let n = norms(&c);
    let inv = c.map_indexed(|_, eta, _, v| {
        let e = c.lattice().eta_index(eta).expect("own lattice");
        let chi = cutoff(n[e]);
        if chi == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            v.inv() * chi
        }
    });
    homogenize(&inv.with_weight(-m), -m)
}

/// `χ(‖η‖_H) / P_1`: a lift of the cosymbol inverse whose `t = 1` slice
/// inverts the full symbol wherever it is elliptic.
fn reciprocal_lift(p1: &SymbolFamily) -> Result<SymbolFamily> {
    if let Some(err) = ellipticity_witness(p1) {
        return Err(err);
    }
    let n = norms(p1);
    Ok(p1.map_indexed(|_, eta, _, v| {
        let e = p1.lattice().eta_index(eta).expect("own lattice");
        let chi = cutoff(n[e]);
        if chi == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            v.inv() * chi
        }
    }))
}

fn identity_like(s: &SymbolFamily) -> Result<SymbolFamily> {
    let lat = Lattice::new(vec![1; s.lattice().dim()], s.lattice().geta.clone())?;
    let n = lat.ne() * s.nt();
    SymbolFamily::new(lat, s.orders().to_vec(), s.t_grid().to_vec(), 0.0, vec![C64::new(1.0, 0.0); n], vec![true; n])
}

fn one_minus(s: &SymbolFamily) -> SymbolFamily {
    s.map(|v| C64::new(1.0, 0.0) - v).with_weight(0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParametrixState {
    pub weight: f64,
    pub k: usize,
    /// `t = 1` slices.
    pub p: SymbolFamily,
    pub q0: SymbolFamily,
    pub residual0: SymbolFamily,
    pub partial_sum: SymbolFamily,
    pub q: SymbolFamily,
    /// `I - P∘Q'` and `I - Q'∘P`.
    pub right_residual: SymbolFamily,
    pub left_residual: SymbolFamily,
    pub report: ParametrixReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParametrixReport {
    pub weight: f64,
    pub k: usize,
    /// Fit of `I - P∘Q₀∘A_j` for `j = 0..=k`.
    pub steps: Vec<SlopeFit>,
    pub right: SlopeFit,
    pub left: SlopeFit,
}

impl ParametrixReport {
    /// Measured residual order on both sides is at most `bound`.
    pub fn order_at_most(&self, bound: f64) -> bool {
        let ok = |f: &SlopeFit| f.tail_negligible || f.slope <= bound;
        ok(&self.right) && ok(&self.left)
    }
}

/// `Q' = Q₀ ∘ Σ_{j ≤ k} R^j` with `R = I - P∘Q₀`, from a family whose t-grid
/// contains `0` and `1`.
pub fn parametrix(p: &SymbolFamily, k: usize) -> Result<ParametrixState> {
    let m = p.weight();
    invert_cosymbol(&p.restrict_t(0.0)?, m)?;
    let p1 = p.restrict_t(1.0)?;
    let q0 = reciprocal_lift(&p1)?.with_weight(-m);
    let r = one_minus(&compose_symbols(&p1, &q0)?);
    let id = identity_like(&p1)?;
    let mut a = id.clone();
    let mut steps = vec![shell_slope(&r, FIT_MARGIN)];
    for _ in 0..k {
        let ra = compose_symbols(&r, &a)?;
        a = ra.map(|v| v + 1.0);
        let q = compose_symbols(&q0, &a)?;
        steps.push(shell_slope(&one_minus(&compose_symbols(&p1, &q)?), FIT_MARGIN));
    }
    let q = compose_symbols(&q0, &a)?;
    let right_residual = one_minus(&compose_symbols(&p1, &q)?);
    let left_residual = one_minus(&compose_symbols(&q, &p1)?);
    let report = ParametrixReport {
        weight: m,
        k,
        steps,
        right: shell_slope(&right_residual, FIT_MARGIN),
        left: shell_slope(&left_residual, FIT_MARGIN),
    };
    Ok(ParametrixState {
        weight: m,
        k,
        p: p1,
        q0,
        residual0: r,
        partial_sum: a,
        q,
        right_residual,
        left_residual,
        report,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypoellipticityReport {
    pub parametrix: ParametrixReport,
    /// `max |u - u_ref| / max |u_ref|` against the dense solve.
    pub solution_error: f64,
    /// Shell sups of the coefficients of `P u - f`.
    pub residual_shells: Vec<(i32, f64)>,
    /// Shell sups of the coefficients of `u - u_ref`.
    pub error_shells: Vec<(i32, f64)>,
    /// Shell sups of the coefficients of `u`.
    pub solution_shells: Vec<(i32, f64)>,
    pub beyond_shell: i32,
    pub residual_beyond: f64,
    pub error_beyond: f64,
}

fn coefficient_shells(lat: &Lattice, orders: &[u32], coeffs: &[C64]) -> Vec<(i32, f64)> {
    let mut out: Vec<(i32, f64)> = Vec::new();
    for (e, c) in coeffs.iter().enumerate() {
        let eta: Vec<f64> = lat.eta(e).iter().map(|&v| v as f64).collect();
        let r = homogeneous_norm(orders, &eta);
        let s = if r < 1.0 { -1 } else { r.log2().floor() as i32 };
        match out.iter_mut().find(|p| p.0 == s) {
            Some(p) => p.1 = p.1.max(c.norm()),
            None => out.push((s, c.norm())),
        }
    }
    out.sort_by_key(|p| p.0);
    out
}

fn beyond(shells: &[(i32, f64)], s: i32) -> f64 {
    shells.iter().filter(|p| p.0 >= s).map(|p| p.1).fold(0.0, f64::max)
}

/// Solves `P u = f` by `u = Q' f` and compares with a dense LU solve of the
/// discretized operator.
pub fn hypoellipticity_demo(p: &SymbolFamily, k: usize, f: &[C64], beyond_shell: i32) -> Result<HypoellipticityReport> {
    let state = parametrix(p, k)?;
    let u = apply_symbol(&state.q, 1.0, f)?;
    let pu = apply_symbol(&state.p, 1.0, &u)?;
    let r: Vec<C64> = pu.iter().zip(f).map(|(a, b)| a - b).collect();
    let mat = operator_matrix(&state.p, 1.0)?;
    let rhs = DVector::from_column_slice(f);
    let u_ref = mat
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NonConvergent("discretized operator is singular".into()))?;
    let diff: Vec<C64> = u.iter().zip(u_ref.iter()).map(|(a, b)| a - b).collect();
    let scale = u_ref.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let solution_error = diff.iter().map(|v| v.norm()).fold(0.0, f64::max) / scale;
    let lat = Lattice::new(p.lattice().geta.clone(), p.lattice().geta.clone())?;
    let orders = p.orders();
    let residual_shells = coefficient_shells(&lat, orders, &grid_coefficients(&lat, &r));
    let error_shells = coefficient_shells(&lat, orders, &grid_coefficients(&lat, &diff));
    let solution_shells = coefficient_shells(&lat, orders, &grid_coefficients(&lat, &u));
    Ok(HypoellipticityReport {
        parametrix: state.report,
        solution_error,
        residual_beyond: beyond(&residual_shells, beyond_shell),
        error_beyond: beyond(&error_shells, beyond_shell),
        residual_shells,
        error_shells,
        solution_shells,
        beyond_shell,
    })
}
