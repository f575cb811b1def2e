//! Gridded Schwartz kernels on the torus, the kernel ↔ symbol transforms and
//! kernel-side zoom cocycles.

use rustfft::FftPlanner;

use super::{Lattice, SymbolFamily, C64};
use crate::error::{Error, Result};
use crate::filtered_patch::FilteredPatch;

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// `k(x_i, y_j)` on a product grid of `𝕋ⁿ`; `(K u)(x_i) = Σ_j k(x_i, y_j) u(y_j) h^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct GriddedKernel {
    pub g: Vec<usize>,
    pub values: Vec<C64>,
}

/// In-place unnormalized DFT along every axis of a row-major block.
pub fn fft_axes(buf: &mut [C64], shape: &[usize], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let total: usize = shape.iter().product();
    for (axis, &n) in shape.iter().enumerate() {
        if n == 1 {
            continue;
        }
        let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
        let stride: usize = shape[axis + 1..].iter().product();
        let mut line = vec![C64::new(0.0, 0.0); n];
        for start in 0..total {
            if !(start / stride).is_multiple_of(n) {
                continue;
            }
            for (i, l) in line.iter_mut().enumerate() {
                *l = buf[start + i * stride];
            }
            fft.process(&mut line);
            for (i, l) in line.iter().enumerate() {
                buf[start + i * stride] = *l;
            }
        }
    }
}

fn wrap(v: i64, g: usize) -> usize {
    v.rem_euclid(g as i64) as usize
}

impl GriddedKernel {
    pub fn new(g: Vec<usize>, values: Vec<C64>) -> Result<Self> {
        let n: usize = g.iter().product();
        if values.len() != n * n {
            return Err(Error::Malformed(format!("kernel on {g:?} needs {} values, got {}", n * n, values.len())));
        }
        Ok(GriddedKernel { g, values })
    }

    pub fn from_fn(g: Vec<usize>, f: impl Fn(&[f64], &[f64]) -> C64) -> Result<Self> {
        let lat = Lattice::new(g.clone(), vec![2; g.len()])?;
        let n = lat.nx();
        let pts: Vec<Vec<f64>> = (0..n).map(|i| lat.x_coords(i)).collect();
        let values = (0..n * n).map(|r| f(&pts[r / n], &pts[r % n])).collect();
        GriddedKernel::new(g, values)
    }

    pub fn npoints(&self) -> usize {
        self.g.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.g.iter().map(|&g| TAU / g as f64).product()
    }

    pub fn apply(&self, u: &[C64]) -> Vec<C64> {
        let n = self.npoints();
        let h = self.cell_volume();
        (0..n).map(|i| (0..n).map(|j| self.values[i * n + j] * u[j]).sum::<C64>() * h).collect()
    }

    pub fn compose(&self, other: &GriddedKernel) -> Result<GriddedKernel> {
        if self.g != other.g {
            return Err(Error::LatticeMismatch("kernels live on different grids".into()));
        }
        let n = self.npoints();
        let h = self.cell_volume();
        let mut values = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                let a = self.values[i * n + j] * h;
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for l in 0..n {
                    values[i * n + l] += a * other.values[j * n + l];
                }
            }
        }
        GriddedKernel::new(self.g.clone(), values)
    }

    fn offset_index(&self, i: usize, m: usize, sign: i64) -> usize {
        // flat index of x_i + sign·ξ_m on the grid
        let lat = Lattice { gx: self.g.clone(), geta: vec![2; self.g.len()] };
        let xi = lat.x_multi(i);
        let mi = lat.x_multi(m);
        let idx: Vec<usize> = xi
            .iter()
            .zip(&mi)
            .zip(&self.g)
            .map(|((&a, &b), &g)| wrap(a as i64 + sign * b as i64, g))
            .collect();
        lat.x_flat(&idx)
    }
}

/// `ã(x, ξ) = k(x, x - ξ)` followed by the fibrewise DFT in `ξ`, giving the
/// `t = 1` slice on the full lattice of the grid.
pub fn symbol_from_kernel(k: &GriddedKernel, patch: &FilteredPatch, weight: f64) -> Result<SymbolFamily> {
    if !patch.periodic() || patch.dim() != k.g.len() || patch.orders().iter().any(|&d| d != 1) {
        return Err(Error::PatchMismatch(format!(
            "kernels are supported on flat torus patches of dimension {}",
            k.g.len()
        )));
    }
    let n = k.npoints();
    let h = k.cell_volume();
    let lat = Lattice::new(k.g.clone(), k.g.clone())?;
    let radius = patch.injectivity_radius();
    let (mut leak, mut total) = (0.0, 0.0);
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    let ne = lat.ne();
    for i in 0..n {
        let mut row = vec![C64::new(0.0, 0.0); n];
        for m in 0..n {
            let v = k.values[i * n + k.offset_index(i, m, -1)];
            row[m] = v * h;
            let r = lat
                .x_multi(m)
                .iter()
                .zip(&k.g)
                .map(|(&mm, &g)| {
                    let s = if mm >= g / 2 { mm as f64 - g as f64 } else { mm as f64 };
                    (s * TAU / g as f64).abs()
                })
                .fold(0.0, f64::max);
            total += v.norm();
            if r > radius {
                leak += v.norm();
            }
        }
        fft_axes(&mut row, &k.g, false);
        for e in 0..ne {
            let eta = lat.eta(e);
            let idx: Vec<usize> = eta.iter().zip(&k.g).map(|(&v, &g)| wrap(v, g)).collect();
            out[i * ne + e] = row[lat.x_flat(&idx)];
        }
    }
    if total > 0.0 && leak / total > 1e-12 {
        return Err(Error::CutoffRequired { leak: leak / total });
    }
    let orders = vec![1; k.g.len()];
    SymbolFamily::new(lat, orders, vec![1.0], weight, out, vec![true; n * n])
}

/// Inverse of [`symbol_from_kernel`] for the slice at `t`.
pub fn kernel_from_symbol(s: &SymbolFamily, t: f64) -> Result<GriddedKernel> {
    let ti = s.t_index(t)?;
    let lat = s.lattice();
    let g = lat.geta.clone();
    if !lat.x_independent() && lat.gx != g {
        return Err(Error::LatticeMismatch("kernel synthesis needs the x-grid to match the lattice".into()));
    }
    let xl = Lattice::new(g.clone(), g.clone())?;
    let n = xl.nx();
    let norm = (TAU).powi(g.len() as i32);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let sx = if lat.x_independent() { 0 } else { i };
        let mut row = vec![C64::new(0.0, 0.0); n];
        for e in 0..s.ne() {
            let v = s.get(ti, sx, e).ok_or_else(|| Error::Domain("symbol slice has undefined points".into()))?;
            let idx: Vec<usize> = lat.eta(e).iter().zip(&g).map(|(&v, &gg)| wrap(v, gg)).collect();
            row[xl.x_flat(&idx)] = v;
        }
        fft_axes(&mut row, &g, true);
        rows.push(row.into_iter().map(|v| v / norm).collect::<Vec<_>>());
    }
    let kern = GriddedKernel { g: g.clone(), values: vec![C64::new(0.0, 0.0); n * n] };
    let mut values = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for m in 0..n {
            let j = kern.offset_index(i, m, -1);
            values[i * n + j] = rows[i][m];
        }
    }
    GriddedKernel::new(g, values)
}

/// Kernel-side zoom difference `α_λ* P - λ^m P` for a translation-invariant
/// kernel `f(ξ)` on `𝕋¹`, where `(α_λ* f)(ξ) = λ^{-d_H} f(ξ/λ)`.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct KernelCocycle {
    pub lambda: f64,
    pub weight: f64,
    /// DFT of the difference at `η = 0`.
    pub zero_mode: f64,
    /// `-λ^{-1} log λ · 2π` for the logarithmic kernel.
    pub expected: f64,
    pub relative_error: f64,
    /// `λ^{-m}` times the zero mode, i.e. the normalized `F_λ`.
    pub normalized_zero_mode: f64,
    /// Largest `|DFT|` away from `η = 0`.
    pub off_zero_sup: f64,
}

/// Samples `λ^{-d_H} f(ξ/λ) - λ^m f(ξ)` at the midpoints of `g` cells of
/// `[-π, π)` and returns it with its DFT on the lattice `-g/2..g/2`.
pub fn kernel_zoom_difference(
    f: impl Fn(f64) -> f64,
    m: f64,
    d_h: f64,
    lambda: f64,
    g: usize,
) -> (Vec<f64>, Vec<C64>) {
    let h = TAU / g as f64;
    let xs: Vec<f64> = (0..g).map(|j| -std::f64::consts::PI + (j as f64 + 0.5) * h).collect();
    let d: Vec<f64> = xs.iter().map(|&x| lambda.powf(-d_h) * f(x / lambda) - lambda.powf(m) * f(x)).collect();
    let spectrum = (0..g)
        .map(|e| {
            let eta = e as f64 - (g / 2) as f64;
            xs.iter()
                .zip(&d)
                .map(|(&x, &v)| C64::from_polar(v * h, -eta * x))
                .sum::<C64>()
        })
        .collect();
    (d, spectrum)
}

/// The logarithmic kernel `log|ξ|` on `𝕋¹` (weight `-1`).
pub fn log_kernel_cocycle(lambda: f64, g: usize) -> Result<KernelCocycle> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("λ must be positive, got {lambda}")));
    }
    let m = -1.0;
    let (_, spec) = kernel_zoom_difference(|x| x.abs().ln(), m, 1.0, lambda, g);
    let zero_mode = spec[g / 2].re;
    let expected = -lambda.recip() * lambda.ln() * TAU;
    let off_zero_sup = spec.iter().enumerate().filter(|(e, _)| *e != g / 2).map(|(_, v)| v.norm()).fold(0.0, f64::max);
    let relative_error = if expected == 0.0 { zero_mode.abs() } else { ((zero_mode - expected) / expected).abs() };
    Ok(KernelCocycle {
        lambda,
        weight: m,
        zero_mode,
        expected,
        relative_error,
        normalized_zero_mode: lambda.powf(-m) * zero_mode,
        off_zero_sup,
    })
}

/// Fourier coefficients of the periodized logarithmic kernel
/// `log|2 sin(ξ/2)|`: `-π/|η|` off zero and `0` at zero.
pub fn log_symbol(eta: i64) -> f64 {
    if eta == 0 {
        0.0
    } else {
        -std::f64::consts::PI / eta.abs() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtered_patch::catalog;

    #[test]
    fn identity_kernel_has_unit_symbol() {
        let g = 32;
        let h = TAU / g as f64;
        let k = GriddedKernel::from_fn(vec![g], |x, y| C64::new(if x == y { 1.0 / h } else { 0.0 }, 0.0)).unwrap();
        let s = symbol_from_kernel(&k, &catalog::trivial(1, true), 0.0).unwrap();
        assert!(s.values().iter().all(|v| (v - C64::new(1.0, 0.0)).norm() < 1e-13));
    }

    #[test]
    fn round_trip_in_two_dimensions() {
        let lat = Lattice::torus(2, 8, 8).unwrap();
        let s = SymbolFamily::from_fn(lat, vec![1, 1], vec![1.0], 0.0, |x, e, _| {
            C64::new((x[0] + 2.0 * x[1]).cos() * (e[0] * e[0] + e[1]) as f64, e[1] as f64 * x[0].sin())
        })
        .unwrap();
        let k = kernel_from_symbol(&s, 1.0).unwrap();
        let back = symbol_from_kernel(&k, &catalog::trivial(2, true), 0.0).unwrap();
        let err = back.sub(&s).unwrap().sup();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn log_cocycle_zero_mode() {
        for lambda in [2.0, 4.0, 8.0] {
            let c = log_kernel_cocycle(lambda, 256).unwrap();
            assert!(c.relative_error < 1e-12, "{c:?}");
            assert!(c.off_zero_sup < 1e-10);
        }
    }
}
