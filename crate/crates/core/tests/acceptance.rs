use std::sync::Arc;
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use osculate::enveloping_calculus::FilteredDiffOp;
use osculate::expansion_parametrix::heisenberg::heisenberg_demo;
use osculate::expansion_parametrix::{extract_expansion, hypoellipticity_demo, parametrix};
use osculate::expr::{rat, Expr};
use osculate::filtered_patch::{catalog as patches, FilteredPatch};
use osculate::graded_nilpotent::catalog as algebras;
use osculate::kernel_zoom::families::{self, Grid};
use osculate::kernel_zoom::kernel::{kernel_from_symbol, log_kernel_cocycle, symbol_from_kernel};
use osculate::kernel_zoom::reports::{cocycle, decay_estimates, rapid_decay_report, DecayReport, ShellOptions};
use osculate::kernel_zoom::{dyadic_t_grid, Lattice, SymbolFamily, C64};

type Outcome = (bool, String);

fn random_rational(rng: &mut ChaCha8Rng) -> BigRational {
    BigRational::new(BigInt::from(rng.gen_range(-20i64..=20)), BigInt::from(rng.gen_range(1i64..=9)))
}

fn algebra_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut notes = Vec::new();
    let mut ok = true;
    for name in ["abelian3", "heis", "engel"] {
        let g = algebras::by_name(name).unwrap();
        if let Err(v) = g.validate() {
            return (false, format!("{name}: {v:?}"));
        }
        let n = g.dim();
        let mut bad = 0;
        for _ in 0..1000 {
            let [a, b, c]: [Vec<BigRational>; 3] =
                std::array::from_fn(|_| (0..n).map(|_| random_rational(&mut rng)).collect());
            let lam = BigRational::new(BigInt::from(rng.gen_range(1i64..=12)), BigInt::from(rng.gen_range(1i64..=7)));
            let left = g.bch_multiply(&g.bch_multiply(&a, &b).unwrap(), &c).unwrap();
            let right = g.bch_multiply(&a, &g.bch_multiply(&b, &c).unwrap()).unwrap();
            let d = |v: &[BigRational]| g.dilate_exact(&lam, v).unwrap();
            let hom = d(&g.bch_multiply(&a, &b).unwrap()) == g.bch_multiply(&d(&a), &d(&b)).unwrap();
            if left != right || !hom {
                bad += 1;
            }
        }
        ok &= bad == 0;
        notes.push(format!("{name}: {bad}/1000 failures"));
    }
    (ok, notes.join(", "))
}

fn filtration_suite() -> Outcome {
    let heis = patches::heisenberg().check_filtration().unwrap();
    let engel = patches::engel().check_filtration().unwrap();
    let bad = patches::heisenberg_misfiltered().check_filtration().unwrap();
    let ok = heis.is_ok() && engel.is_ok() && bad.is_err();
    (ok, format!("heis {:?}, engel {:?}, heis_bad rejected: {}", heis.is_ok(), engel.is_ok(), bad.is_err()))
}

fn random_coeff(rng: &mut ChaCha8Rng, n: usize, trig: bool) -> Expr {
    let mut e = Expr::int(n, rng.gen_range(1..=3) * if rng.gen_bool(0.5) { 1 } else { -1 });
    for _ in 0..rng.gen_range(0..=2) {
        let i = rng.gen_range(0..n);
        let f = if trig {
            let mut k = vec![0; n];
            k[i] = rng.gen_range(1..=2);
            Expr::cos(n, k)
        } else {
            Expr::var(n, i)
        };
        e = e.add(&f.scale(&rat(rng.gen_range(-3..=3), rng.gen_range(1..=2))));
    }
    e
}

fn random_operator(rng: &mut ChaCha8Rng, patch: &Arc<FilteredPatch>, max_h: u32, trig: bool) -> FilteredDiffOp {
    let n = patch.dim();
    let orders = patch.orders().to_vec();
    let mut terms = Vec::new();
    for _ in 0..rng.gen_range(1..=3) {
        let mut a = vec![0u32; n];
        let mut h = 0;
        for _ in 0..rng.gen_range(0..=max_h) {
            let i = rng.gen_range(0..n);
            if h + orders[i] <= max_h {
                a[i] += 1;
                h += orders[i];
            }
        }
        terms.push((a, random_coeff(rng, n, trig)));
    }
    FilteredDiffOp::from_terms(patch.clone(), terms).unwrap()
}

fn cosymbol_morphism() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let heis = Arc::new(patches::heisenberg());
    let mut checked = 0;
    let mut failures = 0;
    while checked < 200 {
        let a = random_operator(&mut rng, &heis, 3, false);
        let b = random_operator(&mut rng, &heis, 3, false);
        let (Some(ma), Some(mb)) = (a.h_order(), b.h_order()) else { continue };
        let prod = a.compose(&b).unwrap();
        let lhs = prod.cosymbol_at_weight(ma + mb);
        let rhs = a.principal_cosymbol().unwrap().compose(&b.principal_cosymbol().unwrap()).unwrap();
        if rhs.is_zero() {
            continue;
        }
        checked += 1;
        if lhs != rhs || prod.h_order() != Some(ma + mb) {
            failures += 1;
        }
    }
    let torus = Arc::new(patches::trivial(2, true));
    let mut drops = 0;
    for _ in 0..50 {
        let a = random_operator(&mut rng, &torus, 2, true);
        let b = random_operator(&mut rng, &torus, 2, true);
        let (Some(ma), Some(mb)) = (a.h_order(), b.h_order()) else { continue };
        let comm = a.compose(&b).unwrap().sub(&b.compose(&a).unwrap()).unwrap();
        let in_kernel = comm.cosymbol_at_weight(ma + mb).is_zero();
        let dropped = comm.h_order().is_none_or(|h| h < ma + mb);
        if in_kernel && dropped {
            drops += 1;
        } else {
            failures += 1;
        }
    }
    (failures == 0, format!("{checked} heis pairs, {drops} torus commutators in ker σ, {failures} failures"))
}

fn differential_families() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let patchset = [Arc::new(patches::heisenberg()), Arc::new(patches::engel()), Arc::new(patches::trivial(1, true))];
    let mut failures = 0;
    let mut worst_defect: f64 = 0.0;
    for i in 0..50 {
        let patch = &patchset[i % 3];
        let op = random_operator(&mut rng, patch, 4, patch.periodic());
        let Some(m) = op.h_order() else { continue };
        let fam = op.kernel_family();
        let closed_form: Vec<(Vec<u32>, Expr, i64)> = op
            .terms()
            .map(|(a, c)| {
                let h: u32 = a.iter().zip(patch.orders()).map(|(x, d)| x * d).sum();
                (a.clone(), c.clone(), m as i64 - h as i64)
            })
            .collect();
        let got: Vec<(Vec<u32>, Expr, i64)> =
            fam.terms.iter().map(|t| (t.multi_index.clone(), t.coeff.clone(), t.t_power)).collect();
        if got != closed_form || !fam.is_homogeneous_on_nose(m as i64) || !fam.smooth_terms.is_empty() {
            failures += 1;
        }
        if patch.periodic() {
            let lat = Lattice::torus(1, 8, 64).unwrap();
            let s = SymbolFamily::from_differential(&fam, lat, dyadic_t_grid(3, 1), m as f64).unwrap();
            for lambda in [0.5, 2.0] {
                let c = cocycle(&s, lambda).unwrap();
                worst_defect = worst_defect.max(c.difference.sup() / s.sup().max(1.0));
            }
        }
    }
    let ok = failures == 0 && worst_defect < 1e-12;
    (ok, format!("{failures} mismatches, torus zoom defect {worst_defect:.2e}"))
}

fn log_cocycle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for lambda in [2.0, 4.0, 8.0] {
        let c = log_kernel_cocycle(lambda, 256).unwrap();
        worst = worst.max(c.relative_error);
        parts.push(format!("λ={lambda}: {:.12} vs {:.12}", c.zero_mode, c.expected));
    }
    (worst < 1e-6, format!("{}; worst relative error {worst:.2e}", parts.join(", ")))
}

fn worst_excess(r: &DecayReport) -> f64 {
    r.entries.iter().map(|e| e.exponent - e.bound).filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max)
}

fn decay() -> Outcome {
    let grid = Grid::default();
    let mut parts = Vec::new();
    let mut ok = true;
    let fams = [
        ("sqrt", families::root(&grid).unwrap()),
        ("square", families::square(&grid).unwrap()),
        ("log", families::log_kernel(&grid).unwrap()),
    ];
    for (name, f) in &fams {
        let r = decay_estimates(f, 2, 2, 2, 0.1);
        ok &= r.pass;
        let worst = worst_excess(&r);
        parts.push(format!("{name} worst excess {worst:+.3}"));
    }
    let heis = families::heis_sublaplacian([32, 32, 512], vec![-1.0, -0.5, 0.0, 0.5, 1.0]).unwrap();
    let r = decay_estimates(&heis, 2, 2, 2, 0.1);
    ok &= r.pass;
    let worst = worst_excess(&r);
    parts.push(format!("heis worst excess {worst:+.3}"));
    (ok, parts.join(", "))
}

fn expansion() -> Outcome {
    let s = families::root(&Grid::default()).unwrap();
    let exp = extract_expansion(&s, 3, 1e-6).unwrap();
    let mut worst: [f64; 3] = [0.0; 3];
    for e in 0..s.ne() {
        let eta = s.lattice().eta(e)[0] as f64;
        if eta.abs() < 1.0 {
            continue;
        }
        let want = [eta.abs(), 0.0, 0.5 / eta.abs()];
        for j in 0..3 {
            let got = exp.terms[j].get(0, 0, e).unwrap().re;
            let scale = if j == 1 { 1.0 / eta.abs() } else { want[j] };
            worst[j] = worst[j].max((got - want[j]).abs() / scale);
        }
    }
    let fits = exp.remainder_fits(&s).unwrap();
    let slope = fits[2].slope;
    let ok = worst.iter().all(|&w| w < 1e-6) && slope <= -1.8;
    (ok, format!("term errors {:.1e} {:.1e} {:.1e}, remainder slope {slope:.3}", worst[0], worst[1], worst[2]))
}

fn lap_potential(g: usize) -> SymbolFamily {
    let patch = Arc::new(patches::trivial(1, true));
    let op = FilteredDiffOp::from_terms(
        patch,
        vec![(vec![2], Expr::int(1, -1)), (vec![0], Expr::parse("2 + cos(x)", 1).unwrap())],
    )
    .unwrap();
    let lat = Lattice::torus(1, g, g).unwrap();
    SymbolFamily::from_differential(&op.kernel_family(), lat, vec![0.0, 1.0], 2.0).unwrap()
}

fn parametrix_check() -> Outcome {
    let p = lap_potential(256);
    let st = parametrix(&p, 3).unwrap();
    let sides = st.report.order_at_most(-3.8);
    let f: Vec<C64> = (0..256).map(|j| C64::new((std::f64::consts::TAU * j as f64 / 256.0).cos().exp(), 0.0)).collect();
    let h = hypoellipticity_demo(&p, 3, &f, 6).unwrap();
    let ok = sides && h.residual_beyond < 1e-6 && h.error_beyond < 1e-6;
    (
        ok,
        format!(
            "right slope {:.3}, left slope {:.3}, residual beyond 2^6 {:.1e}, error vs LU {:.1e}",
            st.report.right.slope, st.report.left.slope, h.residual_beyond, h.error_beyond
        ),
    )
}

fn heisenberg() -> Outcome {
    let r = heisenberg_demo(8, 0.25);
    (
        r.pass,
        format!(
            "c={:.11} κ={:.9}, max|LΓ|={:.2e} on {} points, homogeneity {:.1e}, convolution {:.1e}",
            r.constant, r.kappa, r.residual_max, r.points_checked, r.homogeneity_defect, r.convolution_error
        ),
    )
}

fn round_trips() -> Outcome {
    let torus1 = patches::trivial(1, true);
    let s1 = SymbolFamily::from_fn(Lattice::torus(1, 256, 256).unwrap(), vec![1], vec![1.0], 0.0, |x, e, _| {
        let e = e[0] as f64;
        C64::new((1.0 + e * e).sqrt() * (1.0 + 0.5 * (3.0 * x[0]).cos()), e * (2.0 * x[0]).sin() / (1.0 + e * e))
    })
    .unwrap();
    let back = symbol_from_kernel(&kernel_from_symbol(&s1, 1.0).unwrap(), &torus1, 0.0).unwrap();
    let err1 = back.sub(&s1).unwrap().sup() / s1.sup();
    let torus2 = patches::trivial(2, true);
    let s2 = SymbolFamily::from_fn(Lattice::torus(2, 64, 64).unwrap(), vec![1, 1], vec![1.0], 0.0, |x, e, _| {
        let (a, b) = (e[0] as f64, e[1] as f64);
        C64::new((1.0 + a * a + b * b).sqrt() * (x[0] - x[1]).cos(), a * x[1].sin())
    })
    .unwrap();
    let back = symbol_from_kernel(&kernel_from_symbol(&s2, 1.0).unwrap(), &torus2, 0.0).unwrap();
    let err2 = back.sub(&s2).unwrap().sup() / s2.sup();

    let lat = Lattice::new(vec![1], vec![256]).unwrap();
    let t = dyadic_t_grid(12, 1);
    let e1 = SymbolFamily::from_fn(lat.clone(), vec![1], t.clone(), 1.0, |_, e, t| {
        C64::new((t * t + (e[0] * e[0]) as f64).sqrt(), 0.0)
    })
    .unwrap();
    let e2 = SymbolFamily::from_fn(lat, vec![1], t, 1.0, |_, e, t| {
        let e = e[0] as f64;
        C64::new((t * t + e * e).sqrt() + (1.0 - t * t) * (-e * e).exp(), 0.0)
    })
    .unwrap()
    .normalize_outside_interval()
    .unwrap();
    let same_one = e1.restrict_t(1.0).unwrap().sub(&e2.restrict_t(1.0).unwrap()).unwrap().sup();
    let (c1, _) = e1.cosymbol_limit(8.0).unwrap();
    let (c2, _) = e2.cosymbol_limit(8.0).unwrap();
    let diff = c2.sub(&c1).unwrap();
    let distinct = diff.sup() > 0.5;
    let decay = rapid_decay_report(&diff, ShellOptions::for_family(&diff), 4);
    let ok = err1 < 1e-10 && err2 < 1e-10 && same_one < 1e-14 && distinct && decay.pass;
    (
        ok,
        format!(
            "𝕋¹ error {err1:.1e}, 𝕋² error {err2:.1e}, t=1 slices agree to {same_one:.1e}, t=0 difference sup {:.2} rapidly decaying: {}",
            diff.sup(),
            decay.pass
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("algebra suite", algebra_suite),
        ("filtration suite", filtration_suite),
        ("cosymbol morphism", cosymbol_morphism),
        ("differential-operator families", differential_families),
        ("log-kernel cocycle", log_cocycle),
        ("decay estimates", decay),
        ("expansion extraction", expansion),
        ("parametrix", parametrix_check),
        ("heisenberg demo", heisenberg),
        ("round trips", round_trips),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = run();
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {name}: {} ({detail}) [{:.1}s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/10 passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
