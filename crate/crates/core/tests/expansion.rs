use proptest::prelude::*;

use osculate::expansion_parametrix::{extract_expansion, homogenize, invert_cosymbol, parametrix};
use osculate::kernel_zoom::families::{self, Grid};
use osculate::kernel_zoom::compose::compose_symbols;
use osculate::kernel_zoom::reports::{rapid_decay_report, ShellOptions};
use osculate::kernel_zoom::{dyadic_t_grid, Lattice, SymbolFamily, C64};

fn slice(g: usize, f: impl Fn(f64) -> f64 + Sync, m: f64) -> SymbolFamily {
    SymbolFamily::from_fn(Lattice::torus(1, 1, g).unwrap(), vec![1], vec![0.0], m, |_, e, _| C64::new(f(e[0] as f64), 0.0))
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn homogenize_is_idempotent(m in -3.0f64..3.0, c in 0.5f64..4.0, d in -1.0f64..1.0) {
        let s = slice(64, |e| c * e.abs().max(1e-300).powf(m) + d * (-e * e).exp(), m);
        let h = homogenize(&s, m).unwrap();
        prop_assert!(h.homogeneity_defect(m) < 1e-12);
        let hh = homogenize(&h, m).unwrap();
        prop_assert!(hh.sub(&h).unwrap().sup() <= 1e-12 * h.sup());
    }

    #[test]
    fn cosymbol_inverse_has_opposite_weight(c in 0.5f64..4.0, p in 1u32..=3) {
        let m = p as f64;
        let s = slice(64, |e| c * e.abs().powi(p as i32), m);
        let inv = invert_cosymbol(&s, m).unwrap();
        prop_assert_eq!(inv.weight(), -m);
        prop_assert!(inv.homogeneity_defect(-m) < 1e-12);
    }
}

#[test]
fn expansion_then_sum_reproduces_input() {
    let s = families::root(&Grid { gx: 1, geta: 256, t_levels: 12 }).unwrap();
    let exp = extract_expansion(&s, 3, 1e-6).unwrap();
    let fits = exp.remainder_fits(&s).unwrap();
    for (k, f) in fits.iter().enumerate() {
        assert!(f.tail_negligible || f.slope <= 1.0 - (k + 1) as f64 + 0.1, "{k}: {f:?}");
    }
}

#[test]
fn parametrix_two_steps() {
    let p = SymbolFamily::from_fn(Lattice::torus(1, 64, 64).unwrap(), vec![1], dyadic_t_grid(1, 0), 2.0, |x, e, t| {
        let e = e[0] as f64;
        C64::new(e * e + t * t * (2.0 + x[0].cos()), 0.0)
    })
    .unwrap();
    let st = parametrix(&p, 2).unwrap();
    assert!(st.report.order_at_most(-2.8), "{:?}", st.report);
}

#[test]
fn smoothing_slices_form_an_ideal() {
    let lat = Lattice::torus(1, 64, 64).unwrap();
    let p = SymbolFamily::from_fn(lat.clone(), vec![1], vec![1.0], 2.0, |x, e, _| {
        let e = e[0] as f64;
        C64::new(e * e + 2.0 + x[0].cos(), e * x[0].sin())
    })
    .unwrap();
    let smooth = SymbolFamily::from_fn(lat, vec![1], vec![1.0], 0.0, |x, e, _| {
        let e = e[0] as f64;
        C64::new((-e * e / 4.0).exp() * (1.0 + 0.5 * (2.0 * x[0]).sin()), 0.0)
    })
    .unwrap();
    for c in [compose_symbols(&p, &smooth).unwrap(), compose_symbols(&smooth, &p).unwrap()] {
        let r = rapid_decay_report(&c, ShellOptions::for_family(&c), 6);
        assert!(r.pass, "{r:?}");
    }
}
