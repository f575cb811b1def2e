use nalgebra::DVector;
use proptest::prelude::*;

use osculate::filtered_patch::catalog;
use osculate::kernel_zoom::compose::{apply_symbol, compose_symbols, operator_matrix};
use osculate::kernel_zoom::io::{read_family, write_family};
use osculate::kernel_zoom::kernel::{kernel_from_symbol, log_symbol, symbol_from_kernel};
use osculate::kernel_zoom::{dyadic_t_grid, Lattice, SymbolFamily, C64};

/// Band-limited symbol on `𝕋¹`: a few x-modes times smooth functions of `η`.
fn symbol(g: usize, modes: &[(i64, f64, f64)], t: Vec<f64>) -> SymbolFamily {
    let modes = modes.to_vec();
    SymbolFamily::from_fn(Lattice::torus(1, g, g).unwrap(), vec![1], t, 0.0, move |x, e, t| {
        let eta = e[0] as f64;
        modes.iter().fold(C64::new(0.0, 0.0), |acc, &(k, a, b)| {
            acc + C64::from_polar(1.0, k as f64 * x[0]) * C64::new(a / (1.0 + eta * eta + t * t), b * eta.atan())
        })
    })
    .unwrap()
}

fn modes() -> impl Strategy<Value = Vec<(i64, f64, f64)>> {
    proptest::collection::vec((-3i64..=3, -2.0f64..2.0, -2.0f64..2.0), 1..=4)
}

fn max_norm<'a>(v: impl Iterator<Item = &'a C64>) -> f64 {
    v.map(|c| c.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kernel_symbol_round_trip(m in modes()) {
        let s = symbol(32, &m, vec![1.0]);
        let back = symbol_from_kernel(&kernel_from_symbol(&s, 1.0).unwrap(), &catalog::trivial(1, true), 0.0).unwrap();
        prop_assert!(back.sub(&s).unwrap().sup() <= 1e-12 * s.sup().max(1.0));
    }

    #[test]
    fn composition_is_matrix_product(ma in modes(), mb in modes()) {
        let a = symbol(16, &ma, vec![1.0]);
        let b = symbol(16, &mb, vec![1.0]);
        let c = compose_symbols(&a, &b).unwrap();
        let want = operator_matrix(&a, 1.0).unwrap() * operator_matrix(&b, 1.0).unwrap();
        let got = operator_matrix(&c, 1.0).unwrap();
        prop_assert!(max_norm((got - &want).iter()) <= 1e-11 * max_norm(want.iter()).max(1.0));
    }

    #[test]
    fn apply_matches_matrix(m in modes(), u in proptest::collection::vec(-1.0f64..1.0, 16)) {
        let s = symbol(16, &m, vec![1.0]);
        let u: Vec<C64> = u.into_iter().map(|v| C64::new(v, 0.0)).collect();
        let direct = apply_symbol(&s, 1.0, &u).unwrap();
        let via = operator_matrix(&s, 1.0).unwrap() * DVector::from_column_slice(&u);
        prop_assert!(direct.iter().zip(via.iter()).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn zoom_pullbacks_compose(m in modes()) {
        let s = symbol(16, &m, dyadic_t_grid(3, 2));
        let twice = s.zoom_pullback(2.0).unwrap().zoom_pullback(2.0).unwrap();
        let once = s.zoom_pullback(4.0).unwrap();
        for ((a, b), (ma, mb)) in twice.values().iter().zip(once.values()).zip(twice.mask().iter().zip(once.mask())) {
            if *ma && *mb {
                prop_assert_eq!(a, b);
            }
        }
    }
}

#[test]
fn family_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = symbol(8, &[(1, 1.0, 0.5), (-2, 0.25, 1.0)], dyadic_t_grid(2, 1)).zoom_pullback(0.5).unwrap();
    let stem = dir.path().join("family");
    write_family(&stem, &s).unwrap();
    assert_eq!(read_family(&stem).unwrap(), s);
}

/// Fourier coefficients of `log|2 sin(ξ/2)|` by midpoint quadrature.
#[test]
fn log_symbol_matches_quadrature() {
    let n = 1 << 16;
    let h = std::f64::consts::TAU / n as f64;
    for eta in [1i64, 2, 5, 9] {
        let c: f64 = (0..n)
            .map(|j| {
                let xi = (j as f64 + 0.5) * h;
                (2.0 * (xi / 2.0).sin()).abs().ln() * (eta as f64 * xi).cos()
            })
            .sum::<f64>()
            * h;
        assert!((c - log_symbol(eta)).abs() < 1e-4, "{eta}: {c} vs {}", log_symbol(eta));
    }
}
