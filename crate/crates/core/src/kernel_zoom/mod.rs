//! Extended full symbols `ℙ̂(x, η, t)` on a torus patch: an x-grid, an
//! integer frequency lattice and a t-grid, with the dual zoom action
//! `β_λ(x, η, t) = (x, δ'_λ η, λ t)`.

pub mod compose;
pub mod families;
pub mod io;
pub mod kernel;
pub mod reports;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::enveloping_calculus::SymbolicKernelFamily;
use crate::error::{Error, Result};
use crate::graded_nilpotent::homogeneous_norm;

pub type C64 = Complex64;

/// Grid sizes per axis. The x-grid has `gx[j]` equispaced points on
/// `[0, 2π)` (size 1 for x-independent data); the frequency lattice holds the
/// integers `-geta[j]/2 ..= geta[j]/2 - 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    pub gx: Vec<usize>,
    pub geta: Vec<usize>,
}

impl Lattice {
    pub fn new(gx: Vec<usize>, geta: Vec<usize>) -> Result<Self> {
        if gx.is_empty() || gx.len() != geta.len() {
            return Err(Error::Malformed("x-grid and frequency lattice need one size per axis".into()));
        }
        if gx.iter().any(|g| !g.is_power_of_two()) || geta.iter().any(|g| !g.is_power_of_two() || *g < 2) {
            return Err(Error::Malformed(format!("grid sizes must be powers of two, got x {gx:?}, η {geta:?}")));
        }
        Ok(Lattice { gx, geta })
    }

    /// `n`-torus with the same sizes on every axis.
    pub fn torus(n: usize, gx: usize, geta: usize) -> Result<Self> {
        Lattice::new(vec![gx; n], vec![geta; n])
    }

    pub fn dim(&self) -> usize {
        self.gx.len()
    }

    pub fn nx(&self) -> usize {
        self.gx.iter().product()
    }

    pub fn ne(&self) -> usize {
        self.geta.iter().product()
    }

    pub fn x_independent(&self) -> bool {
        self.nx() == 1
    }

    pub fn x_multi(&self, mut xi: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for j in (0..self.dim()).rev() {
            out[j] = xi % self.gx[j];
            xi /= self.gx[j];
        }
        out
    }

    pub fn x_flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.gx).fold(0, |acc, (i, g)| acc * g + i)
    }

    pub fn x_coords(&self, xi: usize) -> Vec<f64> {
        self.x_multi(xi)
            .iter()
            .zip(&self.gx)
            .map(|(&i, &g)| 2.0 * std::f64::consts::PI * i as f64 / g as f64)
            .collect()
    }

    pub fn eta(&self, mut ei: usize) -> Vec<i64> {
        let mut out = vec![0; self.dim()];
        for j in (0..self.dim()).rev() {
            let g = self.geta[j];
            out[j] = (ei % g) as i64 - (g / 2) as i64;
            ei /= g;
        }
        out
    }

    pub fn eta_index(&self, eta: &[i64]) -> Option<usize> {
        let mut acc = 0usize;
        for (e, &g) in eta.iter().zip(&self.geta) {
            let i = e + (g / 2) as i64;
            if i < 0 || i >= g as i64 {
                return None;
            }
            acc = acc * g + i as usize;
        }
        Some(acc)
    }

    /// Largest `s` such that every `η` with `‖η‖_H < 2^{s+1}` lies in the
    /// lattice at distance at least `margin` from its edge.
    pub fn max_complete_shell(&self, orders: &[u32], margin: i64) -> i32 {
        let mut s = -1;
        loop {
            let r = 2f64.powi(s + 2);
            let fits = orders
                .iter()
                .zip(&self.geta)
                .all(|(&d, &g)| r.powi(d as i32) - 1.0 + margin as f64 <= (g / 2) as f64 - 1.0);
            if !fits {
                return s;
            }
            s += 1;
        }
    }
}

/// `{±2^j : -k_down ≤ j ≤ j_up} ∪ {0}`, ascending.
pub fn dyadic_t_grid(k_down: u32, j_up: u32) -> Vec<f64> {
    let pos: Vec<f64> = (-(k_down as i32)..=j_up as i32).map(|j| 2f64.powi(j)).collect();
    let mut t: Vec<f64> = pos.iter().rev().map(|v| -v).collect();
    t.push(0.0);
    t.extend(pos);
    t
}

/// Returns `k` when `λ = 2^k` exactly.
pub fn dyadic_exponent(lambda: f64) -> Option<i32> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return None;
    }
    let k = lambda.log2().round() as i32;
    (2f64.powi(k) == lambda).then_some(k)
}

/// Values indexed `[t][x][η]` with a mask of defined entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolFamily {
    lattice: Lattice,
    orders: Vec<u32>,
    t: Vec<f64>,
    weight: f64,
    values: Vec<C64>,
    mask: Vec<bool>,
}

/// Outcome of [`SymbolFamily::cosymbol_limit`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitReport {
    pub radius: f64,
    pub differences: Vec<(f64, f64)>,
    pub converged: bool,
}

pub(crate) fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / s).exp();
        let b = (-1.0 / (1.0 - s)).exp();
        a / (a + b)
    }
}

impl SymbolFamily {
    pub fn new(
        lattice: Lattice,
        orders: Vec<u32>,
        t: Vec<f64>,
        weight: f64,
        values: Vec<C64>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if orders.len() != lattice.dim() || orders.contains(&0) {
            return Err(Error::Malformed(format!("weights {orders:?} do not fit a {}-dimensional lattice", lattice.dim())));
        }
        if t.is_empty() || t.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Malformed("t-grid must be nonempty and strictly increasing".into()));
        }
        let size = t.len() * lattice.nx() * lattice.ne();
        if values.len() != size || mask.len() != size {
            return Err(Error::Malformed(format!("expected {size} values, got {} (mask {})", values.len(), mask.len())));
        }
        // masked entries are stored as zero so that equality ignores them
        let values = values.into_iter().zip(&mask).map(|(v, &m)| if m { v } else { C64::new(0.0, 0.0) }).collect();
        Ok(SymbolFamily { lattice, orders, t, weight, values, mask })
    }

    /// Tabulates `f(x, η, t)`; non-finite values are masked out.
    pub fn from_fn<F>(lattice: Lattice, orders: Vec<u32>, t: Vec<f64>, weight: f64, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &[i64], f64) -> C64 + Sync,
    {
        let (nx, ne) = (lattice.nx(), lattice.ne());
        let etas: Vec<Vec<i64>> = (0..ne).map(|e| lattice.eta(e)).collect();
        let rows: Vec<Vec<C64>> = (0..t.len() * nx)
            .into_par_iter()
            .map(|r| {
                let (ti, xi) = (r / nx, r % nx);
                let x = lattice.x_coords(xi);
                etas.iter().map(|eta| f(&x, eta, t[ti])).collect()
            })
            .collect();
        let values: Vec<C64> = rows.into_iter().flatten().collect();
        let mask = values.iter().map(|v| v.re.is_finite() && v.im.is_finite()).collect();
        SymbolFamily::new(lattice, orders, t, weight, values, mask)
    }

    /// Symbol of the family `Σ t^p c_a(x) δ^{(a)}(-ξ)`: each `δ^{(a)}`
    /// contributes `(iη)^a`.
    pub fn from_differential(fam: &SymbolicKernelFamily, lattice: Lattice, t: Vec<f64>, weight: f64) -> Result<Self> {
        if fam.orders.len() != lattice.dim() {
            return Err(Error::LatticeMismatch("operator and lattice dimensions differ".into()));
        }
        if !fam.smooth_terms.is_empty() {
            return Err(Error::Domain("only differential families can be tabulated directly".into()));
        }
        let i = C64::new(0.0, 1.0);
        SymbolFamily::from_fn(lattice, fam.orders.clone(), t, weight, |x, eta, t| {
            let mut acc = C64::new(0.0, 0.0);
            for term in &fam.terms {
                let mut v = C64::new(term.coeff.eval(x) * t.powi(term.t_power as i32), 0.0);
                for (&a, &e) in term.multi_index.iter().zip(eta) {
                    v *= (i * e as f64).powu(a);
                }
                acc += v;
            }
            acc
        })
    }

    /// The slice `K` extended constantly in `t`.
    pub fn constant_in_t(slice: &SymbolFamily, t: Vec<f64>) -> Result<Self> {
        if slice.nt() != 1 {
            return Err(Error::Malformed("expected a single t-slice".into()));
        }
        let n = t.len();
        let values = (0..n).flat_map(|_| slice.values.iter().copied()).collect();
        let mask = (0..n).flat_map(|_| slice.mask.iter().copied()).collect();
        SymbolFamily::new(slice.lattice.clone(), slice.orders.clone(), t, slice.weight, values, mask)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn with_weight(mut self, m: f64) -> Self {
        self.weight = m;
        self
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn nt(&self) -> usize {
        self.t.len()
    }

    pub fn nx(&self) -> usize {
        self.lattice.nx()
    }

    pub fn ne(&self) -> usize {
        self.lattice.ne()
    }

    pub fn index(&self, ti: usize, xi: usize, ei: usize) -> usize {
        (ti * self.nx() + xi) * self.ne() + ei
    }

    pub fn get(&self, ti: usize, xi: usize, ei: usize) -> Option<C64> {
        let i = self.index(ti, xi, ei);
        self.mask[i].then(|| self.values[i])
    }

    /// Value at an explicit frequency, `None` off the lattice or masked.
    pub fn at(&self, ti: usize, xi: usize, eta: &[i64]) -> Option<C64> {
        self.lattice.eta_index(eta).and_then(|e| self.get(ti, xi, e))
    }

    pub fn t_index(&self, t: f64) -> Result<usize> {
        self.t.iter().position(|&s| s == t).ok_or(Error::NonGridT(t))
    }

    pub fn eta_norms(&self) -> Vec<f64> {
        (0..self.ne())
            .map(|e| {
                let eta: Vec<f64> = self.lattice.eta(e).iter().map(|&v| v as f64).collect();
                homogeneous_norm(&self.orders, &eta)
            })
            .collect()
    }

    pub fn restrict_t(&self, t: f64) -> Result<SymbolFamily> {
        let ti = self.t_index(t)?;
        let block = self.nx() * self.ne();
        let r = ti * block..(ti + 1) * block;
        SymbolFamily::new(
            self.lattice.clone(),
            self.orders.clone(),
            vec![t],
            self.weight,
            self.values[r.clone()].to_vec(),
            self.mask[r].to_vec(),
        )
    }

    /// Pointwise combination on a common grid; undefined where either side is.
    pub fn zip_with(&self, other: &SymbolFamily, f: impl Fn(C64, C64) -> C64) -> Result<SymbolFamily> {
        if self.lattice != other.lattice || self.t != other.t || self.orders != other.orders {
            return Err(Error::LatticeMismatch("symbol families live on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect();
        let mask = self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect();
        SymbolFamily::new(self.lattice.clone(), self.orders.clone(), self.t.clone(), self.weight, values, mask)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> SymbolFamily {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    /// Applies `f(x, η, t, value)` at every defined point.
    pub fn map_indexed(&self, f: impl Fn(&[f64], &[i64], f64, C64) -> C64 + Sync) -> SymbolFamily {
        let mut out = self.clone();
        let (nx, ne) = (self.nx(), self.ne());
        out.values.par_chunks_mut(ne).enumerate().for_each(|(r, row)| {
            let (ti, xi) = (r / nx, r % nx);
            let x = self.lattice.x_coords(xi);
            for (e, v) in row.iter_mut().enumerate() {
                *v = f(&x, &self.lattice.eta(e), self.t[ti], *v);
            }
        });
        out
    }

    pub fn sub(&self, other: &SymbolFamily) -> Result<SymbolFamily> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &SymbolFamily) -> Result<SymbolFamily> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Maximum modulus over defined points.
    pub fn sup(&self) -> f64 {
        self.values.iter().zip(&self.mask).filter(|(_, m)| **m).map(|(v, _)| v.norm()).fold(0.0, f64::max)
    }

    /// `δ'_{2^k} η`, or `None` when it leaves the lattice.
    pub(crate) fn dilate_eta(&self, eta: &[i64], k: i32) -> Option<Vec<i64>> {
        let mut out = Vec::with_capacity(eta.len());
        for (&e, &d) in eta.iter().zip(&self.orders) {
            let p = k * d as i32;
            if p >= 0 {
                out.push(e.checked_mul(1i64.checked_shl(p as u32)?)?);
            } else {
                let q = 1i64.checked_shl((-p) as u32)?;
                if e % q != 0 {
                    return None;
                }
                out.push(e / q);
            }
        }
        self.lattice.eta_index(&out).map(|_| out)
    }

    /// `β_λ^* S`, i.e. the values at `(x, δ'_λ η, λ t)`, for dyadic `λ`.
    /// Points whose image leaves the grid are masked.
    pub fn zoom_pullback(&self, lambda: f64) -> Result<SymbolFamily> {
        let k = dyadic_exponent(lambda).ok_or_else(|| {
            Error::LatticeMismatch(format!("λ = {lambda} is not a power of two, so δ'_λ does not preserve the lattice"))
        })?;
        let (nx, ne) = (self.nx(), self.ne());
        let t_map: Vec<Option<usize>> = self.t.iter().map(|&t| self.t.iter().position(|&s| s == lambda * t)).collect();
        let e_map: Vec<Option<usize>> = (0..ne)
            .map(|e| self.dilate_eta(&self.lattice.eta(e), k).and_then(|v| self.lattice.eta_index(&v)))
            .collect();
        let mut values = vec![C64::new(0.0, 0.0); self.values.len()];
        let mut mask = vec![false; self.values.len()];
        for ti in 0..self.nt() {
            let Some(tj) = t_map[ti] else { continue };
            for xi in 0..nx {
                for e in 0..ne {
                    if let Some(f) = e_map[e] {
                        let src = self.index(tj, xi, f);
                        let dst = self.index(ti, xi, e);
                        values[dst] = self.values[src];
                        mask[dst] = self.mask[src];
                    }
                }
            }
        }
        SymbolFamily::new(self.lattice.clone(), self.orders.clone(), self.t.clone(), self.weight, values, mask)
    }

    /// Largest relative defect `|K(δ'_2 η) - 2^m K(η)| / |2^m K(η)|` over
    /// `‖η‖_H ≥ 1` with both points on the lattice.
    pub fn homogeneity_defect(&self, m: f64) -> f64 {
        let norms = self.eta_norms();
        let scale = 2f64.powf(m);
        let mut worst: f64 = 0.0;
        for ti in 0..self.nt() {
            for xi in 0..self.nx() {
                for e in 0..self.ne() {
                    if norms[e] < 1.0 {
                        continue;
                    }
                    let Some(v) = self.get(ti, xi, e) else { continue };
                    let Some(eta2) = self.dilate_eta(&self.lattice.eta(e), 1) else { continue };
                    let Some(w) = self.at(ti, xi, &eta2) else { continue };
                    let expect = v * scale;
                    let denom = expect.norm().max(1e-300);
                    if expect.norm() == 0.0 && w.norm() == 0.0 {
                        continue;
                    }
                    worst = worst.max((w - expect).norm() / denom);
                }
            }
        }
        worst
    }

    /// Constant-in-t extension of a homogeneous cosymbol slice. On the
    /// shipped torus patches the injectivity radius is π, which covers the
    /// whole fundamental domain, so the exponential cut-off is identically 1.
    pub fn extend_cosymbol(slice: &SymbolFamily, m: f64, t: Vec<f64>) -> Result<SymbolFamily> {
        let defect = slice.homogeneity_defect(m);
        if defect > 1e-8 {
            let fit = reports::shell_slope(slice, 0);
            return Err(Error::NotHomogeneous(format!(
                "slice is not homogeneous of weight {m}: relative dyadic defect {defect:e}, fitted shell slope {:.4}",
                fit.slope
            )));
        }
        Ok(SymbolFamily::constant_in_t(slice, t)?.with_weight(m))
    }

    /// Replaces the family for `|t| ≥ 1` by the nose-homogeneous extensions
    /// of its `t = ±1` slices, blending with `φ₋, φ₀, φ₊`.
    pub fn normalize_outside_interval(&self) -> Result<SymbolFamily> {
        let m = self.weight;
        let one = self.t.iter().position(|&s| s == 1.0);
        let minus_one = self.t.iter().position(|&s| s == -1.0);
        let (nx, ne) = (self.nx(), self.ne());
        let mut out = self.clone();
        for ti in 0..self.nt() {
            let t = self.t[ti];
            let phi = smooth_step(2.0 * t.abs() - 1.0);
            if phi == 0.0 {
                continue;
            }
            let src = if t > 0.0 { one } else { minus_one };
            let Some(src) = src else {
                return Err(Error::NonGridT(t.signum()));
            };
            for xi in 0..nx {
                for e in 0..ne {
                    let dst = self.index(ti, xi, e);
                    let eta = self.lattice.eta(e);
                    let ext = self.scaled_lookup(src, xi, &eta, t.abs()).map(|v| v * t.abs().powf(m));
                    let own = self.mask[dst].then(|| self.values[dst]);
                    let blended = match (ext, own) {
                        (Some(e), _) if phi == 1.0 => Some(e),
                        (Some(e), Some(o)) => Some(o * (1.0 - phi) + e * phi),
                        _ => None,
                    };
                    out.mask[dst] = blended.is_some();
                    out.values[dst] = blended.unwrap_or_default();
                }
            }
        }
        Ok(out)
    }

    /// `S(x, δ'_{1/s} η, t_src)` when that point is on the lattice.
    fn scaled_lookup(&self, src: usize, xi: usize, eta: &[i64], s: f64) -> Option<C64> {
        if s == 1.0 {
            return self.at(src, xi, eta);
        }
        let k = dyadic_exponent(s)?;
        let eta2 = self.dilate_eta(eta, -k)?;
        self.at(src, xi, &eta2)
    }

    /// The `t = 0` slice together with the sup differences
    /// `|ℙ̂_{2^{-k}} - ℙ̂_0|` over `‖η‖_H ≤ radius`.
    pub fn cosymbol_limit(&self, radius: f64) -> Result<(SymbolFamily, LimitReport)> {
        let t0 = self.t_index(0.0)?;
        let norms = self.eta_norms();
        let mut differences = Vec::new();
        for ti in (t0 + 1..self.nt()).rev() {
            let mut d: f64 = 0.0;
            for xi in 0..self.nx() {
                for e in 0..self.ne() {
                    if norms[e] > radius {
                        continue;
                    }
                    if let (Some(a), Some(b)) = (self.get(ti, xi, e), self.get(t0, xi, e)) {
                        d = d.max((a - b).norm());
                    }
                }
            }
            differences.push((self.t[ti], d));
        }
        let converged = match (differences.first(), differences.last()) {
            (Some(&(_, first)), Some(&(_, last))) => {
                let monotone = differences.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-9) + 1e-14);
                monotone && (last <= 1e-2 * first.max(1.0) || last <= 1e-12)
            }
            _ => false,
        };
        Ok((self.restrict_t(0.0)?, LimitReport { radius, differences, converged }))
    }
}
