use std::sync::Arc;

use proptest::prelude::*;

use osculate::enveloping_calculus::FilteredDiffOp;
use osculate::expr::{rat, Expr};
use osculate::filtered_patch::{catalog, FilteredPatch};

fn patch() -> impl Strategy<Value = Arc<FilteredPatch>> {
    prop_oneof![
        Just(Arc::new(catalog::heisenberg())),
        Just(Arc::new(catalog::engel())),
        Just(Arc::new(catalog::trivial(2, true))),
    ]
}

fn coeff(n: usize, periodic: bool) -> impl Strategy<Value = Expr> {
    (-3i64..=3, proptest::collection::vec((0..n, -2i64..=2, 1i64..=2), 0..=2)).prop_map(move |(c0, parts)| {
        let mut e = Expr::int(n, c0);
        for (i, c, k) in parts {
            let f = if periodic {
                let mut kv = vec![0; n];
                kv[i] = k;
                Expr::sin(n, kv)
            } else {
                Expr::var(n, i).pow(k as u32)
            };
            e = e.add(&f.scale(&rat(c, 1)));
        }
        e
    })
}

fn operator(p: Arc<FilteredPatch>, max_len: usize) -> impl Strategy<Value = FilteredDiffOp> {
    let n = p.dim();
    let periodic = p.periodic();
    proptest::collection::vec((proptest::collection::vec(0u32..=1, n), coeff(n, periodic)), 1..=max_len)
        .prop_map(move |terms| FilteredDiffOp::from_terms(p.clone(), terms).unwrap())
}

fn pair() -> impl Strategy<Value = (FilteredDiffOp, FilteredDiffOp)> {
    patch().prop_flat_map(|p| (operator(p.clone(), 3), operator(p, 3)))
}

fn test_function(p: &FilteredPatch) -> Expr {
    let n = p.dim();
    if p.periodic() {
        Expr::cos(n, vec![1; n]).add(&Expr::sin(n, (1..=n as i64).collect()))
    } else {
        let mut f = Expr::one(n);
        for i in 0..n {
            f = f.mul(&Expr::var(n, i).add(&Expr::int(n, i as i64 + 1)));
        }
        f.mul(&f)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composition_acts_as_composition((a, b) in pair()) {
        let f = test_function(a.patch());
        let ab = a.compose(&b).unwrap();
        prop_assert!(ab.apply(&f).sub(&a.apply(&b.apply(&f))).is_zero());
    }

    #[test]
    fn normal_forms_are_stable((a, b) in pair()) {
        let ab = a.compose(&b).unwrap();
        prop_assert_eq!(ab.renormalize().unwrap(), ab.clone());
        prop_assert_eq!(a.renormalize().unwrap(), a);
    }

    #[test]
    fn principal_cosymbol_is_multiplicative((a, b) in pair()) {
        let (Some(ma), Some(mb)) = (a.h_order(), b.h_order()) else { return Ok(()) };
        let prod = a.compose(&b).unwrap().cosymbol_at_weight(ma + mb);
        let sa = a.principal_cosymbol().unwrap();
        let sb = b.principal_cosymbol().unwrap();
        prop_assert_eq!(prod, sa.compose(&sb).unwrap());
    }

    #[test]
    fn kernel_family_restricts_to_operator((a, _) in pair()) {
        let fam = a.kernel_family();
        prop_assert!(fam.is_homogeneous_on_nose(a.h_order().unwrap_or(0) as i64));
        prop_assert_eq!(fam.at_one(a.patch().clone()).unwrap(), a);
    }

    #[test]
    fn spec_round_trip((a, _) in pair()) {
        let spec = a.to_spec("p");
        prop_assert_eq!(FilteredDiffOp::from_spec(&spec, a.patch().clone()).unwrap(), a);
    }
}

#[test]
fn shipped_patches_filter() {
    assert!(catalog::heisenberg().check_filtration().unwrap().is_ok());
    assert!(catalog::engel().check_filtration().unwrap().is_ok());
    assert!(catalog::heisenberg_misfiltered().check_filtration().unwrap().is_err());
}

#[test]
fn heisenberg_commutator_is_central_letter() {
    let p = Arc::new(catalog::heisenberg());
    let x = FilteredDiffOp::letter(p.clone(), 0);
    let y = FilteredDiffOp::letter(p.clone(), 1);
    let comm = x.compose(&y).unwrap().sub(&y.compose(&x).unwrap()).unwrap();
    assert_eq!(comm.h_order(), Some(2));
    assert!(!comm.principal_cosymbol().unwrap().is_zero());
}
