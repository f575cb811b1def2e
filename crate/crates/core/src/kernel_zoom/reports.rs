//! Measurements on symbol families: sups over dyadic shells of the joint
//! gauge `max(‖η‖_H, |t|)`, fitted growth exponents, rapid-decay reports for
//! cocycles, decay-estimate slopes, pseudolocality and regularity checks.

use rayon::prelude::*;
use serde::Serialize;

use super::{dyadic_exponent, SymbolFamily, C64};
use crate::error::Result;

/// Shell selection and noise floor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShellOptions {
    /// First shell used in fits.
    pub min_shell: i32,
    /// Sups at or below this are treated as zero.
    pub floor: f64,
}

impl ShellOptions {
    /// Shells from 2 on, floor `1e-12 · max(1, sup |S|)`.
    pub fn for_family(s: &SymbolFamily) -> Self {
        ShellOptions { min_shell: 2, floor: 1e-12 * s.sup().max(1.0) }
    }
}

/// Sup over one shell and the gauge at which it is attained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShellSup {
    pub shell: i32,
    pub sup: f64,
    pub gauge: f64,
}

/// Least-squares slope of `log2 sup` against `log2 gauge` at the maximizers,
/// plus the slope between the two outermost non-negligible shells.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    /// `-inf` when every shell is negligible.
    pub slope: f64,
    pub tail_slope: f64,
    pub shells: Vec<ShellSup>,
    /// The outermost measured shell is below the floor.
    pub tail_negligible: bool,
}

pub fn fit_slope(shells: &[ShellSup], floor: f64) -> SlopeFit {
    let used: Vec<(f64, f64)> =
        shells.iter().filter(|s| s.sup > floor).map(|s| (s.gauge.log2(), s.sup.log2())).collect();
    let tail_negligible = shells.last().is_none_or(|s| s.sup <= floor);
    let (slope, tail_slope) = match used.len() {
        0 => (f64::NEG_INFINITY, f64::NEG_INFINITY),
        1 if tail_negligible => (f64::NEG_INFINITY, f64::NEG_INFINITY),
        1 => (f64::NAN, f64::NAN),
        n => {
            let nf = n as f64;
            let mx = used.iter().map(|p| p.0).sum::<f64>() / nf;
            let my = used.iter().map(|p| p.1).sum::<f64>() / nf;
            let sxy: f64 = used.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = used.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
            let (a, b) = (used[n - 2], used[n - 1]);
            (sxy / sxx, (b.1 - a.1) / (b.0 - a.0))
        }
    };
    SlopeFit { slope, tail_slope, shells: shells.to_vec(), tail_negligible }
}

/// Shell index of the joint gauge, or `None` inside the unit ball.
fn shell_of(gauge: f64) -> Option<i32> {
    (gauge >= 1.0).then(|| gauge.log2().floor() as i32)
}

/// Sups of `weight(η, gauge) · |field|` over complete shells `min_shell..=max_shell`;
/// shells without defined points are skipped.
fn shell_sups(
    field: &SymbolFamily,
    norms: &[f64],
    min_shell: i32,
    max_shell: i32,
    weight: impl Fn(usize, f64) -> f64,
) -> Vec<ShellSup> {
    if max_shell < min_shell {
        return Vec::new();
    }
    let mut sups = vec![None::<(f64, f64)>; (max_shell - min_shell + 1) as usize];
    let (nx, ne) = (field.nx(), field.ne());
    for ti in 0..field.nt() {
        let t = field.t_grid()[ti];
        for e in 0..ne {
            let gauge = norms[e].max(t.abs());
            let Some(s) = shell_of(gauge) else { continue };
            if s < min_shell || s > max_shell {
                continue;
            }
            let w = weight(e, gauge);
            for xi in 0..nx {
                if let Some(v) = field.get(ti, xi, e) {
                    let slot = &mut sups[(s - min_shell) as usize];
                    let val = w * v.norm();
                    if slot.is_none_or(|(old, _)| val > old) {
                        *slot = Some((val, gauge));
                    }
                }
            }
        }
    }
    sups.into_iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|(sup, gauge)| ShellSup { shell: i as i32 + min_shell, sup, gauge }))
        .collect()
}

/// Fitted growth exponent of `|S|` over its complete shells.
pub fn shell_slope(s: &SymbolFamily, margin: i64) -> SlopeFit {
    let opts = ShellOptions::for_family(s);
    let max_shell = s.lattice().max_complete_shell(s.orders(), margin);
    fit_slope(&shell_sups(s, &s.eta_norms(), opts.min_shell, max_shell, |_, _| 1.0), opts.floor)
}

/// Shell table of `|S|` as CSV rows `shell,sup`.
pub fn shell_table_csv(fit: &SlopeFit) -> String {
    let mut out = String::from("shell,sup\n");
    for s in &fit.shells {
        out.push_str(&format!("{},{:e}\n", s.shell, s.sup));
    }
    out
}

fn multi_indices(n: usize, max_total: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0; n]];
    let mut frontier = vec![vec![0u32; n]];
    for _ in 0..max_total {
        let mut next = Vec::new();
        for a in &frontier {
            let last = a.iter().rposition(|&v| v > 0).unwrap_or(0);
            for j in last..n {
                let mut b = a.clone();
                b[j] += 1;
                next.push(b);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// `∂_η^b ∂_t^k S` by centred differences: unit steps on the lattice and
/// three-point non-uniform stencils on the t-grid. Points whose stencil
/// leaves the grid are masked.
pub fn derivative(s: &SymbolFamily, b: &[u32], k: u32) -> SymbolFamily {
    let mut cur = s.clone();
    for (j, &bj) in b.iter().enumerate() {
        for _ in 0..bj / 2 {
            cur = eta_difference(&cur, j, true);
        }
        if bj % 2 == 1 {
            cur = eta_difference(&cur, j, false);
        }
    }
    for _ in 0..k / 2 {
        cur = t_difference(&cur, true);
    }
    if k % 2 == 1 {
        cur = t_difference(&cur, false);
    }
    cur
}

fn eta_difference(s: &SymbolFamily, axis: usize, second: bool) -> SymbolFamily {
    let lat = s.lattice().clone();
    let stride: usize = lat.geta[axis + 1..].iter().product();
    let g = lat.geta[axis];
    let mut values = vec![C64::new(0.0, 0.0); s.values().len()];
    let mut mask = vec![false; s.values().len()];
    let ne = s.ne();
    values.par_chunks_mut(ne).zip(mask.par_chunks_mut(ne)).enumerate().for_each(|(r, (vals, msk))| {
        let base = r * ne;
        for e in 0..ne {
            let pos = (e / stride) % g;
            if pos == 0 || pos + 1 == g {
                continue;
            }
            let (lo, mid, hi) = (base + e - stride, base + e, base + e + stride);
            if !(s.mask()[lo] && s.mask()[hi] && (!second || s.mask()[mid])) {
                continue;
            }
            let v = s.values();
            vals[e] = if second { v[hi] - v[mid] * 2.0 + v[lo] } else { (v[hi] - v[lo]) * 0.5 };
            msk[e] = true;
        }
    });
    SymbolFamily::new(lat, s.orders().to_vec(), s.t_grid().to_vec(), s.weight(), values, mask).expect("same shape")
}

fn t_difference(s: &SymbolFamily, second: bool) -> SymbolFamily {
    let t = s.t_grid();
    let block = s.nx() * s.ne();
    let mut values = vec![C64::new(0.0, 0.0); s.values().len()];
    let mut mask = vec![false; s.values().len()];
    for ti in 1..t.len().saturating_sub(1) {
        let (h1, h2) = (t[ti] - t[ti - 1], t[ti + 1] - t[ti]);
        // Written against the middle value so constants difference to exactly zero.
        let (wl, wh) = if second {
            (2.0 / (h1 * (h1 + h2)), 2.0 / (h2 * (h1 + h2)))
        } else {
            (-h2 / (h1 * (h1 + h2)), h1 / (h2 * (h1 + h2)))
        };
        for i in 0..block {
            let (lo, mid, hi) = ((ti - 1) * block + i, ti * block + i, (ti + 1) * block + i);
            if s.mask()[lo] && s.mask()[mid] && s.mask()[hi] {
                let v = s.values();
                values[mid] = (v[lo] - v[mid]) * wl + (v[hi] - v[mid]) * wh;
                mask[mid] = true;
            }
        }
    }
    SymbolFamily::new(s.lattice().clone(), s.orders().to_vec(), t.to_vec(), s.weight(), values, mask)
        .expect("same shape")
}

fn h_degree(orders: &[u32], a: &[u32]) -> u32 {
    a.iter().zip(orders).map(|(x, d)| x * d).sum()
}

fn eta_power(s: &SymbolFamily, a: &[u32], e: usize) -> f64 {
    s.lattice().eta(e).iter().zip(a).map(|(&v, &p)| (v as f64).abs().powi(p as i32)).product()
}

/// One seminorm `sup |η^a ∂_η^b ∂_t^k f|` tracked across shells.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeminormEntry {
    pub a: Vec<u32>,
    pub b: Vec<u32>,
    pub k: u32,
    pub fit: SlopeFit,
    pub pass: bool,
}

/// Rapid-decay report: an entry passes when its outermost shell is
/// negligible or the exponent between its two outermost shells is at most
/// `-max_order`. A global fit is dragged up by the flat pre-asymptotic part
/// of Gaussian-type tails on the small grids we can afford.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchwartzSeminormReport {
    pub max_order: u32,
    pub entries: Vec<SeminormEntry>,
    pub pass: bool,
}

pub fn rapid_decay_report(field: &SymbolFamily, opts: ShellOptions, max_order: u32) -> SchwartzSeminormReport {
    let n = field.lattice().dim();
    let norms = field.eta_norms();
    let max_shell = field.lattice().max_complete_shell(field.orders(), 2);
    let mut combos = Vec::new();
    for a in multi_indices(n, 1) {
        for b in multi_indices(n, 1) {
            for k in 0..=1 {
                combos.push((a.clone(), b.clone(), k));
            }
        }
    }
    let entries: Vec<SeminormEntry> = combos
        .into_par_iter()
        .map(|(a, b, k)| {
            let d = derivative(field, &b, k);
            let sups = shell_sups(&d, &norms, opts.min_shell, max_shell, |e, _| eta_power(field, &a, e));
            let fit = fit_slope(&sups, opts.floor);
            let pass = fit.tail_negligible || fit.tail_slope <= -(max_order as f64);
            SeminormEntry { a, b, k, fit, pass }
        })
        .collect();
    let pass = entries.iter().all(|e| e.pass);
    SchwartzSeminormReport { max_order, entries, pass }
}

/// `F_λ = λ^{-m} β_λ^* S - S` and its rapid-decay report.
#[derive(Clone, Debug, PartialEq)]
pub struct CocycleResult {
    pub lambda: f64,
    pub difference: SymbolFamily,
    pub report: SchwartzSeminormReport,
}

pub fn cocycle(s: &SymbolFamily, lambda: f64) -> Result<CocycleResult> {
    let pulled = s.zoom_pullback(lambda)?;
    let scale = lambda.powf(-s.weight());
    let difference = pulled.zip_with(s, |p, v| p * scale - v)?;
    let report = rapid_decay_report(&difference, ShellOptions::for_family(s), 8);
    Ok(CocycleResult { lambda, difference, report })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomogeneityReport {
    pub weight: f64,
    pub lambdas: Vec<f64>,
    pub passes: Vec<bool>,
    pub pass: bool,
}

/// Default dyadic test set `{2^-3, ..., 2^3}`.
pub fn default_lambdas() -> Vec<f64> {
    (-3..=3).map(|k| 2f64.powi(k)).collect()
}

/// Essential homogeneity of weight `m`: every cocycle `F_λ` decays rapidly.
pub fn essential_homogeneity_test(s: &SymbolFamily, m: f64, lambdas: &[f64]) -> Result<HomogeneityReport> {
    let s = s.clone().with_weight(m);
    let mut passes = Vec::new();
    for &l in lambdas {
        passes.push(cocycle(&s, l)?.report.pass);
    }
    Ok(HomogeneityReport { weight: m, lambdas: lambdas.to_vec(), pass: passes.iter().all(|p| *p), passes })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayEntry {
    pub a: Vec<u32>,
    pub b: Vec<u32>,
    pub k: u32,
    pub bound: f64,
    /// `bound + fit.slope`.
    pub exponent: f64,
    /// Fit of the normalized field `|η^a ∂_η^b ∂_t^k ℙ̂| · gauge^{-bound}`.
    pub fit: SlopeFit,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub weight: f64,
    pub entries: Vec<DecayEntry>,
    pub pass: bool,
}

/// Growth exponents of `η^a ∂_η^b ∂_t^k ℙ̂` against
/// `m + |a|_H - |b|_H - k` (plus `slack`). The field is divided by
/// `gauge^bound` before fitting: a homogeneous field then has shell sups that
/// depend only on which directions the lattice resolves, which on coarse
/// shells biases raw log-sup fits upward.
/// Fits start at shell 2, or lower when that would leave fewer than two shells.
pub fn decay_estimates(s: &SymbolFamily, max_a: u32, max_b: u32, max_k: u32, slack: f64) -> DecayReport {
    let mut opts = ShellOptions::for_family(s);
    let max_shell = s.lattice().max_complete_shell(s.orders(), max_b.div_ceil(2) as i64);
    opts.min_shell = opts.min_shell.min(max_shell - 1).max(0);
    decay_estimates_with(s, opts, max_a, max_b, max_k, slack)
}

/// Each pair of η-differences eats one lattice point per side, hence the margin.
pub fn decay_estimates_with(
    s: &SymbolFamily,
    opts: ShellOptions,
    max_a: u32,
    max_b: u32,
    max_k: u32,
    slack: f64,
) -> DecayReport {
    let n = s.lattice().dim();
    let norms = s.eta_norms();
    let max_shell = s.lattice().max_complete_shell(s.orders(), max_b.div_ceil(2) as i64);
    let a_list = multi_indices(n, max_a);
    let mut fields = Vec::new();
    for b in multi_indices(n, max_b) {
        for k in 0..=max_k {
            fields.push((b.clone(), k));
        }
    }
    let entries: Vec<Vec<DecayEntry>> = fields
        .into_par_iter()
        .map(|(b, k)| {
            let d = derivative(s, &b, k);
            a_list
                .iter()
                .map(|a| {
                    let bound =
                        s.weight() + h_degree(s.orders(), a) as f64 - h_degree(s.orders(), &b) as f64 - k as f64;
                    let raw = shell_sups(&d, &norms, opts.min_shell, max_shell, |e, _| eta_power(s, a, e));
                    let scaled =
                        shell_sups(&d, &norms, opts.min_shell, max_shell, |e, g| eta_power(s, a, e) * g.powf(-bound));
                    let kept: Vec<ShellSup> =
                        scaled.iter().zip(&raw).filter(|(_, r)| r.sup > opts.floor).map(|(v, _)| *v).collect();
                    let fit = if kept.is_empty() { fit_slope(&raw, opts.floor) } else { fit_slope(&kept, 0.0) };
                    let pass = fit.slope.is_nan() || fit.slope <= slack;
                    DecayEntry { a: a.clone(), b: b.clone(), k, bound, exponent: bound + fit.slope, fit, pass }
                })
                .collect()
        })
        .collect();
    let entries: Vec<DecayEntry> = entries.into_iter().flatten().collect();
    let pass = entries.iter().all(|e| e.pass);
    DecayReport { weight: s.weight(), entries, pass }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PseudolocalityEntry {
    pub axis: usize,
    pub order: u32,
    pub bound: f64,
    pub fit: SlopeFit,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PseudolocalityReport {
    pub entries: Vec<PseudolocalityEntry>,
    pub pass: bool,
}

/// Off-diagonal smoothness surrogate on the `t = 1` slice: the `N`-th
/// forward differences along axis `j` grow at most like `m - N d_j`.
pub fn pseudolocality(s: &SymbolFamily, max_n: u32, slack: f64) -> Result<PseudolocalityReport> {
    let slice = s.restrict_t(1.0)?;
    let opts = ShellOptions::for_family(&slice);
    let norms = slice.eta_norms();
    let max_shell = slice.lattice().max_complete_shell(slice.orders(), max_n as i64);
    let mut entries = Vec::new();
    for axis in 0..slice.lattice().dim() {
        let mut cur = slice.clone();
        for order in 1..=max_n {
            cur = forward_difference(&cur, axis);
            let fit = fit_slope(&shell_sups(&cur, &norms, opts.min_shell, max_shell, |_, _| 1.0), opts.floor);
            let bound = slice.weight() - (order * slice.orders()[axis]) as f64;
            let pass = fit.slope.is_nan() || fit.slope <= bound + slack;
            entries.push(PseudolocalityEntry { axis, order, bound, fit, pass });
        }
    }
    let pass = entries.iter().all(|e| e.pass);
    Ok(PseudolocalityReport { entries, pass })
}

fn forward_difference(s: &SymbolFamily, axis: usize) -> SymbolFamily {
    let lat = s.lattice();
    let stride: usize = lat.geta[axis + 1..].iter().product();
    let g = lat.geta[axis];
    let ne = s.ne();
    let mut values = vec![C64::new(0.0, 0.0); s.values().len()];
    let mut mask = vec![false; s.values().len()];
    for i in 0..s.values().len() {
        let e = i % ne;
        if (e / stride) % g + 1 == g {
            continue;
        }
        if s.mask()[i] && s.mask()[i + stride] {
            values[i] = s.values()[i + stride] - s.values()[i];
            mask[i] = true;
        }
    }
    SymbolFamily::new(lat.clone(), s.orders().to_vec(), s.t_grid().to_vec(), s.weight(), values, mask)
        .expect("same shape")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityReport {
    pub derivative_order: u32,
    pub grids: Vec<usize>,
    pub sups: Vec<f64>,
    pub bounded: bool,
}

/// Kernel of an x-independent symbol on `𝕋¹`, sampled on `g` points of
/// `[-π, π)`, and the sup of its `k`-th forward difference quotient, for
/// each grid size. `bounded` when the sups settle to within 5 %.
pub fn regularity_check(symbol: impl Fn(i64) -> f64, k: u32, grids: &[usize]) -> RegularityReport {
    let mut sups = Vec::new();
    for &g in grids {
        let h = 2.0 * std::f64::consts::PI / g as f64;
        let etas: Vec<i64> = (-(g as i64) / 2..(g as i64) / 2).collect();
        let kernel: Vec<f64> = (0..g)
            .map(|j| {
                let xi = -std::f64::consts::PI + j as f64 * h;
                etas.iter().map(|&e| symbol(e) * (e as f64 * xi).cos()).sum::<f64>() / (2.0 * std::f64::consts::PI)
            })
            .collect();
        let mut d = kernel;
        for _ in 0..k {
            d = (0..g).map(|j| (d[(j + 1) % g] - d[j]) / h).collect();
        }
        sups.push(d.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    let bounded = match (sups.first(), sups.last()) {
        (Some(a), Some(b)) => *b <= 1.05 * *a,
        _ => false,
    };
    RegularityReport { derivative_order: k, grids: grids.to_vec(), sups, bounded }
}

/// Whether `λ` is admissible for [`cocycle`].
pub fn is_dyadic(lambda: f64) -> bool {
    dyadic_exponent(lambda).is_some()
}

#[cfg(test)]
mod tests {
    use super::super::{dyadic_t_grid, Lattice};
    use super::*;

    fn family(f: impl Fn(f64, f64) -> f64 + Sync, m: f64) -> SymbolFamily {
        let lat = Lattice::torus(1, 1, 256).unwrap();
        SymbolFamily::from_fn(lat, vec![1], dyadic_t_grid(4, 3), m, |_, e, t| C64::new(f(e[0] as f64, t), 0.0))
            .unwrap()
    }

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(multi_indices(3, 2).len(), 10);
        assert_eq!(multi_indices(1, 2), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn slope_of_quadratic() {
        let s = family(|e, _| e * e, 2.0);
        let fit = shell_slope(&s, 0);
        assert!((fit.slope - 2.0).abs() < 0.1, "{fit:?}");
    }

    #[test]
    fn homogeneity_tests() {
        let sq = family(|e, _| e * e, 2.0);
        assert!(essential_homogeneity_test(&sq, 2.0, &default_lambdas()).unwrap().pass);
        assert!(!essential_homogeneity_test(&sq, 1.0, &default_lambdas()).unwrap().pass);
        let pert = family(|e, t| (t * t + e * e).sqrt() + (-e * e - t * t).exp(), 1.0);
        assert!(essential_homogeneity_test(&pert, 1.0, &default_lambdas()).unwrap().pass);
    }

    #[test]
    fn decay_of_root_family() {
        let s = family(|e, t| (t * t + e * e).sqrt(), 1.0);
        let r = decay_estimates(&s, 2, 2, 2, 0.1);
        let bad: Vec<_> = r.entries.iter().filter(|e| !e.pass).collect();
        assert!(r.pass, "{bad:?}");
    }

    #[test]
    fn regularity_of_smooth_kernel() {
        let r = regularity_check(|e| (1.0 + (e * e) as f64).powf(-1.5), 1, &[64, 128, 256, 512]);
        assert!(r.bounded, "{r:?}");
        let r = regularity_check(|e| (1.0 + (e * e) as f64).powf(-1.0), 1, &[64, 128, 256, 512]);
        assert!(!r.bounded, "{r:?}");
    }
}
