//! Composition of symbol slices on the torus and their grid-operator form.
//!
//! With `b(x, η) = Σ_k b̂_k(η) e^{ikx}` the symbol of `A ∘ B` is
//! `c(x, η) = Σ_k e^{ikx} b̂_k(η) a(x, η + k)`, with `η + k` wrapped onto the
//! lattice. On a grid with as many frequencies as points this is exactly the
//! product of the discretized operators.

use nalgebra::DMatrix;

use super::kernel::fft_axes;
use super::{Lattice, SymbolFamily, C64};
use crate::error::{Error, Result};

fn wrap_eta(v: i64, g: usize) -> i64 {
    (v + (g / 2) as i64).rem_euclid(g as i64) - (g / 2) as i64
}

/// x-Fourier modes of one slice: `modes[k][η]`, indexed like a lattice of
/// sizes `gx`.
fn x_modes(s: &SymbolFamily, ti: usize) -> Result<Vec<Vec<C64>>> {
    let (nx, ne) = (s.nx(), s.ne());
    let gx = s.lattice().gx.clone();
    let mut modes = vec![vec![C64::new(0.0, 0.0); ne]; nx];
    let mut line = vec![C64::new(0.0, 0.0); nx];
    let xl = Lattice { gx: gx.clone(), geta: gx.clone() };
    for e in 0..ne {
        for (xi, l) in line.iter_mut().enumerate() {
            *l = s.get(ti, xi, e).ok_or_else(|| Error::Domain("composition needs fully defined slices".into()))?;
        }
        fft_axes(&mut line, &gx, false);
        for k in 0..nx {
            // FFT slot of the mode vector xl.eta(k)
            let idx: Vec<usize> = xl.eta(k).iter().zip(&gx).map(|(&v, &g)| v.rem_euclid(g as i64) as usize).collect();
            modes[k][e] = line[xl.x_flat(&idx)] / nx as f64;
        }
    }
    Ok(modes)
}

/// Relative x-spectral content at `|k_j| ≥ gx_j/4`; large values mean the
/// x-grid no longer resolves products.
fn high_mode_content(s: &SymbolFamily, modes: &[Vec<C64>]) -> f64 {
    let gx = &s.lattice().gx;
    let xl = Lattice { gx: gx.clone(), geta: gx.clone() };
    let total = modes.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
    let mut high: f64 = 0.0;
    for (k, row) in modes.iter().enumerate() {
        let kv = xl.eta(k);
        if kv.iter().zip(gx).any(|(&v, &g)| g >= 4 && v.unsigned_abs() as usize >= g / 4) {
            high = high.max(row.iter().map(|v| v.norm()).fold(0.0, f64::max));
        }
    }
    high / total
}

/// Symbol of `A ∘ B` on every common t-slice.
pub fn compose_symbols(a: &SymbolFamily, b: &SymbolFamily) -> Result<SymbolFamily> {
    if a.t_grid() != b.t_grid() || a.orders() != b.orders() || a.lattice().geta != b.lattice().geta {
        return Err(Error::LatticeMismatch("composed symbols must share t-grid, weights and lattice".into()));
    }
    let geta = a.lattice().geta.clone();
    let gx = match (a.lattice().x_independent(), b.lattice().x_independent()) {
        (true, true) => vec![1; geta.len()],
        (false, true) => a.lattice().gx.clone(),
        (true, false) => b.lattice().gx.clone(),
        (false, false) => {
            if a.lattice().gx != b.lattice().gx {
                return Err(Error::LatticeMismatch("x-grids differ".into()));
            }
            a.lattice().gx.clone()
        }
    };
    if gx.iter().any(|&g| g > 1) && gx != geta {
        return Err(Error::LatticeMismatch(
            "x-dependent composition needs as many frequencies as grid points".into(),
        ));
    }
    let lat = Lattice::new(gx.clone(), geta.clone())?;
    let (nx, ne) = (lat.nx(), lat.ne());
    let nt = a.nt();
    let mut values = vec![C64::new(0.0, 0.0); nt * nx * ne];
    let mut mask = vec![true; nt * nx * ne];
    let ax = |xi: usize| if a.lattice().x_independent() { 0 } else { xi };
    for ti in 0..nt {
        let off = ti * nx * ne;
        if b.lattice().x_independent() {
            for xi in 0..nx {
                for e in 0..ne {
                    match (a.get(ti, ax(xi), e), b.get(ti, 0, e)) {
                        (Some(p), Some(q)) => values[off + xi * ne + e] = p * q,
                        _ => mask[off + xi * ne + e] = false,
                    }
                }
            }
            continue;
        }
        let modes = x_modes(b, ti)?;
        if high_mode_content(b, &modes) > 1e-10 {
            return Err(Error::RefineGrid("right factor has x-modes beyond a quarter of the grid".into()));
        }
        if !a.lattice().x_independent() {
            let am = x_modes(a, ti)?;
            if high_mode_content(a, &am) > 1e-10 {
                return Err(Error::RefineGrid("left factor has x-modes beyond a quarter of the grid".into()));
            }
        }
        let bsup = modes.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max);
        let xl = Lattice { gx: gx.clone(), geta: gx.clone() };
        let active: Vec<usize> = (0..nx)
            .filter(|&k| modes[k].iter().any(|v| v.norm() > 1e-16 * bsup))
            .collect();
        for xi in 0..nx {
            let x = lat.x_coords(xi);
            for e in 0..ne {
                let eta = lat.eta(e);
                let mut acc = C64::new(0.0, 0.0);
                let mut ok = true;
                for &k in &active {
                    let kv = xl.eta(k);
                    let phase: f64 = kv.iter().zip(&x).map(|(&kk, &xx)| kk as f64 * xx).sum();
                    let shifted: Vec<i64> =
                        eta.iter().zip(&kv).zip(&geta).map(|((&h, &kk), &g)| wrap_eta(h + kk, g)).collect();
                    match a.at(ti, ax(xi), &shifted) {
                        Some(av) => acc += C64::from_polar(1.0, phase) * modes[k][e] * av,
                        None => ok = false,
                    }
                }
                values[off + xi * ne + e] = acc;
                mask[off + xi * ne + e] = ok;
            }
        }
    }
    SymbolFamily::new(lat, a.orders().to_vec(), a.t_grid().to_vec(), a.weight() + b.weight(), values, mask)
}

/// Matrix of `u ↦ Σ_η e^{iηx} a(x, η) û(η)` on the x-grid of size `geta`,
/// with `û(η) = N^{-1} Σ_j u(x_j) e^{-iη x_j}`.
pub fn operator_matrix(s: &SymbolFamily, t: f64) -> Result<DMatrix<C64>> {
    let ti = s.t_index(t)?;
    let geta = s.lattice().geta.clone();
    let lat = Lattice::new(geta.clone(), geta.clone())?;
    let n = lat.nx();
    let xs: Vec<Vec<f64>> = (0..n).map(|i| lat.x_coords(i)).collect();
    let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for i in 0..n {
        let sx = if s.lattice().x_independent() { 0 } else { i };
        for e in 0..s.ne() {
            let eta = lat.eta(e);
            let a = s.get(ti, sx, e).ok_or_else(|| Error::Domain("symbol slice has undefined points".into()))?;
            for j in 0..n {
                let phase: f64 = eta.iter().zip(xs[i].iter().zip(&xs[j])).map(|(&h, (a, b))| h as f64 * (a - b)).sum();
                m[(i, j)] += a * C64::from_polar(1.0, phase) / n as f64;
            }
        }
    }
    Ok(m)
}

/// Applies the t-slice operator to grid values `u`.
pub fn apply_symbol(s: &SymbolFamily, t: f64, u: &[C64]) -> Result<Vec<C64>> {
    let ti = s.t_index(t)?;
    let geta = s.lattice().geta.clone();
    let lat = Lattice::new(geta.clone(), geta.clone())?;
    let n = lat.nx();
    if u.len() != n {
        return Err(Error::LatticeMismatch(format!("expected {n} grid values, got {}", u.len())));
    }
    let uh = grid_coefficients(&lat, u);
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (i, o) in out.iter_mut().enumerate() {
        let x = lat.x_coords(i);
        let sx = if s.lattice().x_independent() { 0 } else { i };
        for e in 0..s.ne() {
            let eta = lat.eta(e);
            let a = s.get(ti, sx, e).ok_or_else(|| Error::Domain("symbol slice has undefined points".into()))?;
            let phase: f64 = eta.iter().zip(&x).map(|(&h, &xx)| h as f64 * xx).sum();
            *o += a * uh[e] * C64::from_polar(1.0, phase);
        }
    }
    Ok(out)
}

/// Fourier coefficients `û(η)` on the lattice order of `lat`.
pub fn grid_coefficients(lat: &Lattice, u: &[C64]) -> Vec<C64> {
    let n = lat.nx();
    let mut buf = u.to_vec();
    fft_axes(&mut buf, &lat.gx, false);
    (0..lat.ne())
        .map(|e| {
            let idx: Vec<usize> =
                lat.eta(e).iter().zip(&lat.gx).map(|(&v, &g)| v.rem_euclid(g as i64) as usize).collect();
            buf[lat.x_flat(&idx)] / n as f64
        })
        .collect()
}
