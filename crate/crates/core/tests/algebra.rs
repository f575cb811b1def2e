use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use proptest::prelude::*;

use osculate::graded_nilpotent::{catalog, GradedLieAlgebra};

fn rational() -> impl Strategy<Value = BigRational> {
    (-30i64..=30, 1i64..=12).prop_map(|(p, q)| BigRational::new(BigInt::from(p), BigInt::from(q)))
}

fn positive() -> impl Strategy<Value = BigRational> {
    (1i64..=16, 1i64..=16).prop_map(|(p, q)| BigRational::new(BigInt::from(p), BigInt::from(q)))
}

fn algebra() -> impl Strategy<Value = GradedLieAlgebra> {
    prop_oneof![Just(catalog::abelian(2)), Just(catalog::heisenberg()), Just(catalog::engel())]
}

fn vector(n: usize) -> impl Strategy<Value = Vec<BigRational>> {
    proptest::collection::vec(rational(), n)
}

fn with_points(k: usize) -> impl Strategy<Value = (GradedLieAlgebra, Vec<Vec<BigRational>>)> {
    algebra().prop_flat_map(move |g| {
        let n = g.dim();
        (Just(g), proptest::collection::vec(vector(n), k))
    })
}

proptest! {
    #[test]
    fn bch_is_associative((g, p) in with_points(3)) {
        let ab = g.bch_multiply(&p[0], &p[1]).unwrap();
        let bc = g.bch_multiply(&p[1], &p[2]).unwrap();
        prop_assert_eq!(g.bch_multiply(&ab, &p[2]).unwrap(), g.bch_multiply(&p[0], &bc).unwrap());
    }

    #[test]
    fn inverse_and_identity((g, p) in with_points(1)) {
        let zero = vec![BigRational::zero(); g.dim()];
        prop_assert_eq!(g.bch_multiply(&p[0], &g.inverse(&p[0])).unwrap(), zero.clone());
        prop_assert_eq!(g.bch_multiply(&zero, &p[0]).unwrap(), p[0].clone());
    }

    #[test]
    fn dilations_are_automorphisms((g, p) in with_points(2), l in positive()) {
        let d = |v: &[BigRational]| g.dilate_exact(&l, v).unwrap();
        prop_assert_eq!(d(&g.bch_multiply(&p[0], &p[1]).unwrap()), g.bch_multiply(&d(&p[0]), &d(&p[1])).unwrap());
        prop_assert_eq!(d(&g.bracket(&p[0], &p[1])), g.bracket(&d(&p[0]), &d(&p[1])));
    }

    #[test]
    fn dilations_compose((g, p) in with_points(1), l in positive(), m in positive()) {
        let once = g.dilate_exact(&(&l * &m), &p[0]).unwrap();
        let twice = g.dilate_exact(&l, &g.dilate_exact(&m, &p[0]).unwrap()).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn homogeneous_norm_scales(xi in proptest::collection::vec(-5.0f64..5.0, 4), l in 0.1f64..10.0) {
        let g = catalog::engel();
        let d = g.dilate(l, &xi).unwrap();
        let (a, b) = (g.homogeneous_norm(&d), l * g.homogeneous_norm(&xi));
        prop_assert!((a - b).abs() <= 1e-12 * b.max(1.0));
    }
}

#[test]
fn shipped_algebras_validate() {
    for name in ["abelian4", "heis", "engel"] {
        let g = catalog::by_name(name).unwrap();
        assert!(g.validate().is_ok(), "{name}");
    }
    assert_eq!(catalog::engel().homogeneous_dimension(), 7);
    assert_eq!(catalog::heisenberg().step(), 2);
}

#[test]
fn algebra_json_round_trip() {
    let g = catalog::engel();
    let src = serde_json::to_string(&g.to_spec()).unwrap();
    assert_eq!(GradedLieAlgebra::from_json(&src).unwrap(), g);
}
