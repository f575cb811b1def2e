//! Polyhomogeneous expansions: extraction by `B_{j+1} = t^{-1}(B_j - A_j)`
//! and Borel-type asymptotic summation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graded_nilpotent::homogeneous_norm;
use crate::kernel_zoom::reports::{shell_slope, SlopeFit};
use crate::kernel_zoom::{smooth_step, Lattice, SymbolFamily, C64};

/// `χ(r)`: 0 for `r ≤ 1/2`, 1 for `r ≥ 1`.
pub fn cutoff(r: f64) -> f64 {
    smooth_step(2.0 * r - 1.0)
}

fn eta_norm(orders: &[u32], eta: &[i64]) -> f64 {
    let v: Vec<f64> = eta.iter().map(|&e| e as f64).collect();
    homogeneous_norm(orders, &v)
}

/// Replaces a single slice by the exactly homogeneous extension of weight `m`
/// of its values on the outermost complete shell, times `χ` inside the unit
/// ball. Points whose dyadic orbit misses that shell are masked.
pub fn homogenize(slice: &SymbolFamily, m: f64) -> Result<SymbolFamily> {
    if slice.nt() != 1 {
        return Err(Error::Malformed("expected a single t-slice".into()));
    }
    let lat = slice.lattice();
    let orders = slice.orders();
    let reference = lat.max_complete_shell(orders, 0);
    if reference < 0 {
        return Err(Error::RefineGrid("lattice has no complete shell".into()));
    }
    let (nx, ne) = (slice.nx(), slice.ne());
    let mut values = vec![C64::new(0.0, 0.0); nx * ne];
    let mut mask = vec![false; nx * ne];
    for e in 0..ne {
        let eta = lat.eta(e);
        let r = eta_norm(orders, &eta);
        if r < 1.0 {
            let chi = cutoff(r);
            for xi in 0..nx {
                let i = xi * ne + e;
                if chi == 0.0 {
                    mask[i] = true;
                } else if let Some(v) = slice.get(0, xi, e) {
                    values[i] = v * chi;
                    mask[i] = true;
                }
            }
            continue;
        }
        let k = reference - r.log2().floor() as i32;
        let Some(target) = slice.dilate_eta(&eta, k) else { continue };
        let scale = 2f64.powf(-(k as f64) * m);
        for xi in 0..nx {
            if let Some(v) = slice.at(0, xi, &target) {
                values[xi * ne + e] = v * scale;
                mask[xi * ne + e] = true;
            }
        }
    }
    SymbolFamily::new(lat.clone(), orders.to_vec(), slice.t_grid().to_vec(), m, values, mask)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CutoffRecord {
    pub term: usize,
    /// `χ` vanishes for `‖η‖_H ≤ inner` and is one for `‖η‖_H ≥ outer`.
    pub inner: f64,
    pub outer: f64,
    /// Shell whose values were propagated by dyadic scaling.
    pub reference_shell: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtrapolationRecord {
    pub term: usize,
    pub worst_consistency: f64,
    pub smallest_step: f64,
    pub largest_step: f64,
}

/// Terms `a_j` of weight `m - j`, stored as slices tagged `t = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Expansion {
    pub weight: f64,
    pub lattice: Lattice,
    pub orders: Vec<u32>,
    pub terms: Vec<SymbolFamily>,
    pub cutoffs: Vec<CutoffRecord>,
    pub extrapolation: Vec<ExtrapolationRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermSummary {
    pub index: usize,
    pub weight: f64,
    pub homogeneity_defect: f64,
    pub sup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpansionReport {
    pub weight: f64,
    pub terms: Vec<TermSummary>,
    pub cutoffs: Vec<CutoffRecord>,
    pub extrapolation: Vec<ExtrapolationRecord>,
    /// Fits of `S|_{t=1} - Σ_{j<k} a_j` for `k = 1..=J`.
    pub remainders: Vec<SlopeFit>,
}

impl Expansion {
    /// `Σ_{j<k} a_j` as a `t = 1` slice.
    pub fn partial_sum(&self, k: usize) -> Result<SymbolFamily> {
        let n = self.lattice.nx() * self.lattice.ne();
        let mut acc = SymbolFamily::new(
            self.lattice.clone(),
            self.orders.clone(),
            vec![1.0],
            self.weight,
            vec![C64::new(0.0, 0.0); n],
            vec![true; n],
        )?;
        for term in self.terms.iter().take(k) {
            acc = acc.add(term)?;
        }
        Ok(acc)
    }

    /// Remainder fits against the `t = 1` slice of `s`.
    pub fn remainder_fits(&self, s: &SymbolFamily) -> Result<Vec<SlopeFit>> {
        let one = s.restrict_t(1.0)?;
        (1..=self.terms.len())
            .map(|k| {
                let rest = one.sub(&self.partial_sum(k)?)?;
                Ok(shell_slope(&rest, 0))
            })
            .collect()
    }

    pub fn report(&self, s: &SymbolFamily) -> Result<ExpansionReport> {
        Ok(ExpansionReport {
            weight: self.weight,
            terms: self
                .terms
                .iter()
                .enumerate()
                .map(|(index, a)| TermSummary {
                    index,
                    weight: a.weight(),
                    homogeneity_defect: a.homogeneity_defect(a.weight()),
                    sup: a.sup(),
                })
                .collect(),
            cutoffs: self.cutoffs.clone(),
            extrapolation: self.extrapolation.clone(),
            remainders: self.remainder_fits(s)?,
        })
    }
}

/// `(8 f(h) - 6 f(2h) + f(4h)) / 3`, the quadratic through `h, 2h, 4h` at 0.
fn extrapolate(f1: C64, f2: C64, f4: C64) -> C64 {
    (f1 * 8.0 - f2 * 6.0 + f4) / 3.0
}

/// Fills the `t = 0` slice of `b` by one-sided extrapolation from `t > 0`.
/// Per point the step `h` minimizing `|E(h) - E(2h)|` (relative to the size
/// `⟨η⟩^{order}` of the expected term) is used.
fn fill_t0(b: &mut Vec<C64>, mask: &mut Vec<bool>, s: &SymbolFamily, order: f64, tol: f64, term: usize) -> Result<ExtrapolationRecord> {
    let t = s.t_grid();
    let t0 = s.t_index(0.0)?;
    let pos: Vec<(f64, usize)> = t.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(i, &v)| (v, i)).collect();
    let find = |v: f64| pos.iter().find(|p| p.0 == v).map(|p| p.1);
    // steps h with h, 2h, 4h, 8h all on the grid
    let steps: Vec<[usize; 4]> = pos
        .iter()
        .filter_map(|&(h, i)| Some([i, find(2.0 * h)?, find(4.0 * h)?, find(8.0 * h)?]))
        .collect();
    if steps.is_empty() {
        return Err(Error::UnstableExtrapolation {
            location: "t-grid".into(),
            consistency: f64::INFINITY,
        });
    }
    let (nx, ne) = (s.nx(), s.ne());
    let block = nx * ne;
    let lat = s.lattice();
    let mut worst: f64 = 0.0;
    let (mut hmin, mut hmax) = (f64::INFINITY, 0.0f64);
    for xi in 0..nx {
        for e in 0..ne {
            let i = xi * ne + e;
            let eta = lat.eta(e);
            let scale = eta_norm(s.orders(), &eta).max(1.0).powf(order);
            let mut best: Option<(f64, C64, f64)> = None;
            for st in &steps {
                let idx: Vec<usize> = st.iter().map(|&ti| ti * block + i).collect();
                if !idx.iter().all(|&j| mask[j]) {
                    continue;
                }
                let e1 = extrapolate(b[idx[0]], b[idx[1]], b[idx[2]]);
                let e2 = extrapolate(b[idx[1]], b[idx[2]], b[idx[3]]);
                let c = (e1 - e2).norm() / e1.norm().max(scale);
                if best.is_none_or(|bst| c < bst.0) {
                    best = Some((c, e1, t[st[0]]));
                }
            }
            let Some((c, v, h)) = best else { continue };
            if c > tol {
                return Err(Error::UnstableExtrapolation {
                    location: format!("term {term}, x index {xi}, eta {eta:?}"),
                    consistency: c,
                });
            }
            worst = worst.max(c);
            hmin = hmin.min(h);
            hmax = hmax.max(h);
            b[t0 * block + i] = v;
            mask[t0 * block + i] = true;
        }
    }
    Ok(ExtrapolationRecord { term, worst_consistency: worst, smallest_step: hmin, largest_step: hmax })
}

/// Extracts `j_terms` homogeneous terms from an essentially homogeneous,
/// nose-normalized family whose t-grid contains `0` and dyadic `t > 0`.
pub fn extract_expansion(s: &SymbolFamily, j_terms: usize, tol: f64) -> Result<Expansion> {
    let m = s.weight();
    let t = s.t_grid().to_vec();
    let t0 = s.t_index(0.0)?;
    s.t_index(1.0)?;
    let block = s.nx() * s.ne();
    let mut b: Vec<C64> = s.values().to_vec();
    let mut mask: Vec<bool> = s.mask().to_vec();
    let reference = s.lattice().max_complete_shell(s.orders(), 0);
    let mut terms = Vec::new();
    let mut cutoffs = Vec::new();
    let mut extrapolation = Vec::new();
    for j in 0..j_terms {
        let w = m - j as f64;
        if j > 0 {
            extrapolation.push(fill_t0(&mut b, &mut mask, s, w, tol, j)?);
        }
        let slice0 = SymbolFamily::new(
            s.lattice().clone(),
            s.orders().to_vec(),
            vec![1.0],
            w,
            b[t0 * block..(t0 + 1) * block].to_vec(),
            mask[t0 * block..(t0 + 1) * block].to_vec(),
        )?;
        let a = homogenize(&slice0, w)?;
        cutoffs.push(CutoffRecord { term: j, inner: 0.5, outer: 1.0, reference_shell: reference });
        if j + 1 < j_terms {
            // A_j extends B_j|_{t=0} itself: it differs from χ·a_j by a
            // Schwartz term, and subtracting χ·a_j would leave a 1/t pole.
            for (ti, &tv) in t.iter().enumerate() {
                for i in 0..block {
                    let k = ti * block + i;
                    if tv == 0.0 {
                        mask[k] = false;
                        continue;
                    }
                    let ai = slice0.values()[i];
                    mask[k] = mask[k] && slice0.mask()[i];
                    b[k] = (b[k] - ai) / tv;
                }
            }
        }
        terms.push(a);
    }
    Ok(Expansion {
        weight: m,
        lattice: s.lattice().clone(),
        orders: s.orders().to_vec(),
        terms,
        cutoffs,
        extrapolation,
    })
}

/// Radii of the Borel summation: `R_j` is the least power of two `≥ 1`
/// with `sup_{‖η‖ ≥ R_j} |a_j| ‖η‖^{-(m-j)-1} ≤ 2^{-j}`.
pub fn borel_radii(exp: &Expansion) -> Vec<f64> {
    let norms: Vec<f64> = (0..exp.lattice.ne()).map(|e| eta_norm(&exp.orders, &exp.lattice.eta(e))).collect();
    exp.terms
        .iter()
        .enumerate()
        .map(|(j, a)| {
            let w = a.weight();
            let mut r = 1.0;
            loop {
                let mut sup: f64 = 0.0;
                for xi in 0..a.nx() {
                    for (e, &n) in norms.iter().enumerate() {
                        if n >= r {
                            if let Some(v) = a.get(0, xi, e) {
                                sup = sup.max(v.norm() * n.powf(-w - 1.0));
                            }
                        }
                    }
                }
                if sup <= 2f64.powi(-(j as i32)) || r > 2f64.powi(40) {
                    return r;
                }
                r *= 2.0;
            }
        })
        .collect()
}

/// `ℙ̂_t(x, η) = Σ_j t^j χ(‖η‖_H / R_j) a_j(x, η)` on the t-grid `t`.
pub fn asymptotic_sum(exp: &Expansion, t: Vec<f64>) -> Result<SymbolFamily> {
    for w in exp.terms.windows(2) {
        if !(w[1].weight() < w[0].weight()) {
            return Err(Error::Domain(format!(
                "term weights must decrease strictly, got {} then {}",
                w[0].weight(),
                w[1].weight()
            )));
        }
    }
    let radii = borel_radii(exp);
    let (nx, ne) = (exp.lattice.nx(), exp.lattice.ne());
    let norms: Vec<f64> = (0..ne).map(|e| eta_norm(&exp.orders, &exp.lattice.eta(e))).collect();
    let mut values = vec![C64::new(0.0, 0.0); t.len() * nx * ne];
    let mut mask = vec![true; t.len() * nx * ne];
    for (ti, &tv) in t.iter().enumerate() {
        for (j, a) in exp.terms.iter().enumerate() {
            let tp = tv.powi(j as i32);
            for xi in 0..nx {
                for e in 0..ne {
                    let k = (ti * nx + xi) * ne + e;
                    match a.get(0, xi, e) {
                        Some(v) => values[k] += v * tp * cutoff(norms[e] / radii[j]),
                        None => mask[k] = false,
                    }
                }
            }
        }
    }
    SymbolFamily::new(exp.lattice.clone(), exp.orders.clone(), t, exp.weight, values, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_zoom::dyadic_t_grid;

    fn root_family(g: usize) -> SymbolFamily {
        let lat = Lattice::torus(1, 1, g).unwrap();
        SymbolFamily::from_fn(lat, vec![1], dyadic_t_grid(12, 0), 1.0, |_, e, t| {
            C64::new((t * t + (e[0] * e[0]) as f64).sqrt(), 0.0)
        })
        .unwrap()
    }

    #[test]
    fn homogenize_is_exact_on_powers() {
        let lat = Lattice::torus(1, 1, 64).unwrap();
        let s = SymbolFamily::from_fn(lat, vec![1], vec![1.0], 2.0, |_, e, _| C64::new((e[0] * e[0]) as f64, 0.0))
            .unwrap();
        let h = homogenize(&s, 2.0).unwrap();
        assert_eq!(h, s);
    }

    #[test]
    fn root_family_terms() {
        let s = root_family(256);
        let exp = extract_expansion(&s, 3, 1e-6).unwrap();
        for e in 0..256 {
            let eta = e as f64 - 128.0;
            if eta.abs() < 1.0 {
                continue;
            }
            let a0 = exp.terms[0].get(0, 0, e).unwrap().re;
            let a1 = exp.terms[1].get(0, 0, e).unwrap().re;
            let a2 = exp.terms[2].get(0, 0, e).unwrap().re;
            assert!((a0 - eta.abs()).abs() < 1e-12 * eta.abs());
            assert!(a1.abs() < 1e-6, "{eta} {a1}");
            let want = 0.5 / eta.abs();
            assert!((a2 - want).abs() < 1e-6 * want, "{eta} {a2} {want}");
        }
    }

    #[test]
    fn identity_family_has_single_term() {
        let lat = Lattice::torus(1, 1, 64).unwrap();
        let s = SymbolFamily::from_fn(lat, vec![1], dyadic_t_grid(8, 0), 0.0, |_, _, _| C64::new(1.0, 0.0)).unwrap();
        let exp = extract_expansion(&s, 3, 1e-6).unwrap();
        assert!(exp.terms[1].sup() < 1e-9 && exp.terms[2].sup() < 1e-9);
    }

    #[test]
    fn summation_checks() {
        let s = root_family(256);
        let exp = extract_expansion(&s, 3, 1e-6).unwrap();
        let sum = asymptotic_sum(&exp, vec![0.0, 1.0]).unwrap();
        let diff = sum.restrict_t(1.0).unwrap().sub(&s.restrict_t(1.0).unwrap()).unwrap();
        let fit = shell_slope(&diff, 0);
        assert!(fit.tail_negligible || fit.slope <= -2.8, "{fit:?}");
        let mut bad = exp.clone();
        bad.terms.swap(0, 1);
        assert!(matches!(asymptotic_sum(&bad, vec![1.0]), Err(Error::Domain(_))));
        let mut empty = exp.clone();
        empty.terms.clear();
        assert_eq!(asymptotic_sum(&empty, vec![1.0]).unwrap().sup(), 0.0);
    }
}
