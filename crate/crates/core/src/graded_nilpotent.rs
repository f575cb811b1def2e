//! Graded nilpotent Lie algebras with exact rational structure constants,
//! their dilations, the Baker–Campbell–Hausdorff group law in exponential
//! coordinates of the first kind, and a canonical homogeneous norm.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Neg;

use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Num, One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{format_rational, parse_rational, rat, rat_int, rational_to_f64};

/// Scalars that group coordinates may take: exact rationals for the symbolic
/// layer, `f64` for the numeric layer.
pub trait Coord: Clone + Num + Neg<Output = Self> {
    fn from_rational(r: &BigRational) -> Self;
}

impl Coord for BigRational {
    fn from_rational(r: &BigRational) -> Self {
        r.clone()
    }
}

impl Coord for f64 {
    fn from_rational(r: &BigRational) -> Self {
        rational_to_f64(r)
    }
}

/// First identity found to fail during [`GradedLieAlgebra::validate`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "identity", rename_all = "snake_case")]
pub enum Violation {
    Antisymmetry { i: usize, j: usize, k: usize },
    Jacobi { i: usize, j: usize, l: usize, k: usize },
    Grading { i: usize, j: usize, k: usize },
    Nilpotency { i: usize, j: usize, k: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Antisymmetry { i, j, k } => write!(f, "c[{i}][{j}][{k}] != -c[{j}][{i}][{k}]"),
            Violation::Jacobi { i, j, l, k } => {
                write!(f, "Jacobi identity fails for (e{i}, e{j}, e{l}) in component {k}")
            }
            Violation::Grading { i, j, k } => {
                write!(f, "c[{i}][{j}][{k}] != 0 but d{k} != d{i} + d{j}")
            }
            Violation::Nilpotency { i, j, k } => {
                write!(f, "c[{i}][{j}][{k}] != 0 although d{i} + d{j} exceeds the step")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradedLieAlgebra {
    weights: Vec<u32>,
    constants: Vec<Vec<Vec<BigRational>>>,
    bch_words: Vec<(Vec<u8>, BigRational)>,
}

/// JSON exchange form: `{dim, weights, brackets: [{i, j, coeffs: {k: "p/q"}}]}`,
/// 0-based indices, each listed pair also fixes its antisymmetric partner.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AlgebraSpec {
    pub dim: usize,
    pub weights: Vec<u32>,
    #[serde(default)]
    pub brackets: Vec<BracketSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BracketSpec {
    pub i: usize,
    pub j: usize,
    pub coeffs: BTreeMap<String, String>,
}

impl GradedLieAlgebra {
    /// Builds an algebra from a dense constants array `c[i][j][k]` without
    /// any symmetrisation; call [`validate`](Self::validate) afterwards.
    pub fn from_dense(weights: Vec<u32>, constants: Vec<Vec<Vec<BigRational>>>) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::Malformed("algebra dimension must be positive".into()));
        }
        if weights.contains(&0) {
            return Err(Error::Malformed("weights must be positive".into()));
        }
        if constants.len() != n || constants.iter().any(|r| r.len() != n || r.iter().any(|c| c.len() != n)) {
            return Err(Error::Malformed(format!(
                "structure constants must be a {n}x{n}x{n} array to match {n} weights"
            )));
        }
        let step = *weights.iter().max().unwrap();
        Ok(GradedLieAlgebra { bch_words: dynkin_words(step as usize), weights, constants })
    }

    /// Builds an algebra from the nonzero brackets `[e_i, e_j] = Σ c_k e_k`.
    pub fn from_brackets(weights: Vec<u32>, brackets: &[(usize, usize, usize, BigRational)]) -> Result<Self> {
        let n = weights.len();
        let mut c = vec![vec![vec![BigRational::zero(); n]; n]; n];
        for (i, j, k, v) in brackets {
            if *i >= n || *j >= n || *k >= n {
                return Err(Error::Malformed(format!("bracket index ({i},{j},{k}) out of range for dim {n}")));
            }
            if i == j && !v.is_zero() {
                return Err(Error::Malformed(format!("[e{i}, e{i}] must vanish")));
            }
            c[*i][*j][*k] = v.clone();
            c[*j][*i][*k] = -v.clone();
        }
        GradedLieAlgebra::from_dense(weights, c)
    }

    pub fn from_spec(spec: &AlgebraSpec) -> Result<Self> {
        if spec.weights.len() != spec.dim {
            return Err(Error::Malformed(format!(
                "dim is {} but {} weights were given",
                spec.dim,
                spec.weights.len()
            )));
        }
        let mut seen: BTreeMap<(usize, usize, usize), BigRational> = BTreeMap::new();
        for b in &spec.brackets {
            for (k, v) in &b.coeffs {
                let k: usize = k.parse().map_err(|_| Error::Malformed(format!("bad component index `{k}`")))?;
                let v = parse_rational(v)?;
                let (key, val) = if b.i <= b.j { ((b.i, b.j, k), v) } else { ((b.j, b.i, k), -v) };
                if let Some(prev) = seen.get(&key) {
                    if *prev != val {
                        return Err(Error::Malformed(format!(
                            "bracket ({}, {}) component {k} given inconsistently",
                            key.0, key.1
                        )));
                    }
                }
                seen.insert(key, val);
            }
        }
        let list: Vec<_> = seen.into_iter().map(|((i, j, k), v)| (i, j, k, v)).collect();
        GradedLieAlgebra::from_brackets(spec.weights.clone(), &list)
    }

    pub fn from_json(src: &str) -> Result<Self> {
        let spec: AlgebraSpec = serde_json::from_str(src)?;
        GradedLieAlgebra::from_spec(&spec)
    }

    pub fn to_spec(&self) -> AlgebraSpec {
        let n = self.dim();
        let mut brackets = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let coeffs: BTreeMap<String, String> = (0..n)
                    .filter(|&k| !self.constants[i][j][k].is_zero())
                    .map(|k| (k.to_string(), format_rational(&self.constants[i][j][k])))
                    .collect();
                if !coeffs.is_empty() {
                    brackets.push(BracketSpec { i, j, coeffs });
                }
            }
        }
        AlgebraSpec { dim: n, weights: self.weights.clone(), brackets }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    pub fn step(&self) -> u32 {
        *self.weights.iter().max().unwrap()
    }

    pub fn homogeneous_dimension(&self) -> u32 {
        self.weights.iter().sum()
    }

    pub fn constant(&self, i: usize, j: usize, k: usize) -> &BigRational {
        &self.constants[i][j][k]
    }

    pub fn constants(&self) -> &Vec<Vec<Vec<BigRational>>> {
        &self.constants
    }

    pub fn is_abelian(&self) -> bool {
        self.constants.iter().flatten().flatten().all(Zero::is_zero)
    }

    /// Checks antisymmetry, grading compatibility, nilpotency and the
    /// Jacobi identity, all in exact arithmetic.
    pub fn validate(&self) -> std::result::Result<(), Violation> {
        let n = self.dim();
        let d = &self.weights;
        let step = self.step();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let c = &self.constants[i][j][k];
                    if *c != -self.constants[j][i][k].clone() {
                        return Err(Violation::Antisymmetry { i, j, k });
                    }
                    if c.is_zero() {
                        continue;
                    }
                    if d[i] + d[j] > step {
                        return Err(Violation::Nilpotency { i, j, k });
                    }
                    if d[k] != d[i] + d[j] {
                        return Err(Violation::Grading { i, j, k });
                    }
                }
            }
        }
        let basis = |i: usize| {
            let mut v = vec![BigRational::zero(); n];
            v[i] = BigRational::one();
            v
        };
        for i in 0..n {
            for j in i + 1..n {
                for l in j + 1..n {
                    let (a, b, c) = (basis(i), basis(j), basis(l));
                    let t1 = self.bracket(&a, &self.bracket(&b, &c));
                    let t2 = self.bracket(&b, &self.bracket(&c, &a));
                    let t3 = self.bracket(&c, &self.bracket(&a, &b));
                    for k in 0..n {
                        if !(t1[k].clone() + t2[k].clone() + t3[k].clone()).is_zero() {
                            return Err(Violation::Jacobi { i, j, l, k });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn bracket<T: Coord>(&self, u: &[T], v: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut out = vec![T::zero(); n];
        for i in 0..n {
            if u[i].is_zero() {
                continue;
            }
            for j in 0..n {
                if v[j].is_zero() {
                    continue;
                }
                let uv = u[i].clone() * v[j].clone();
                for (k, o) in out.iter_mut().enumerate() {
                    let c = &self.constants[i][j][k];
                    if !c.is_zero() {
                        *o = o.clone() + uv.clone() * T::from_rational(c);
                    }
                }
            }
        }
        out
    }

    /// `δ_λ ξ` with component `j` scaled by `λ^{d_j}`.
    pub fn dilate(&self, lambda: f64, xi: &[f64]) -> Result<Vec<f64>> {
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!("dilation parameter must be positive, got {lambda}")));
        }
        self.check_len(xi.len())?;
        Ok(xi.iter().zip(&self.weights).map(|(x, &d)| x * lambda.powi(d as i32)).collect())
    }

    pub fn dilate_exact(&self, lambda: &BigRational, xi: &[BigRational]) -> Result<Vec<BigRational>> {
        if *lambda <= BigRational::zero() {
            return Err(Error::Domain(format!("dilation parameter must be positive, got {lambda}")));
        }
        self.check_len(xi.len())?;
        Ok(xi
            .iter()
            .zip(&self.weights)
            .map(|(x, &d)| x * num_traits::pow(lambda.clone(), d as usize))
            .collect())
    }

    /// `log(exp ξ · exp ζ)`. The Dynkin series is cut at word length equal
    /// to the step, which is exact because longer brackets vanish.
    pub fn bch_multiply<T: Coord>(&self, xi: &[T], zeta: &[T]) -> Result<Vec<T>> {
        self.check_len(xi.len())?;
        self.check_len(zeta.len())?;
        let mut out = vec![T::zero(); self.dim()];
        for (word, coeff) in &self.bch_words {
            let letter = |w: u8| if w == 0 { xi } else { zeta };
            let mut acc: Vec<T> = letter(word[word.len() - 1]).to_vec();
            for &w in word[..word.len() - 1].iter().rev() {
                acc = self.bracket(letter(w), &acc);
            }
            let c = T::from_rational(coeff);
            for (o, a) in out.iter_mut().zip(acc) {
                *o = o.clone() + c.clone() * a;
            }
        }
        Ok(out)
    }

    pub fn inverse<T: Coord>(&self, xi: &[T]) -> Vec<T> {
        xi.iter().map(|x| -x.clone()).collect()
    }

    /// `(Σ_j |ξ_j|^{2L/d_j})^{1/(2L)}` with `L = lcm(d_1..d_n)`.
    pub fn homogeneous_norm(&self, xi: &[f64]) -> f64 {
        homogeneous_norm(&self.weights, xi)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::Malformed(format!(
                "coordinate vector has length {len}, algebra has dimension {}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// `(Σ_j |ξ_j|^{2L/d_j})^{1/(2L)}` with `L = lcm(d_1..d_n)`.
pub fn homogeneous_norm(weights: &[u32], xi: &[f64]) -> f64 {
    let l = weights.iter().fold(1u32, |a, &d| a.lcm(&d)) as i32;
    let s: f64 = xi.iter().zip(weights).map(|(x, &d)| x.abs().powi(2 * l / d as i32)).sum();
    s.powf(1.0 / (2 * l) as f64)
}

/// Element of the simply connected group in exponential coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement<'a, T: Coord> {
    pub algebra: &'a GradedLieAlgebra,
    pub coords: Vec<T>,
}

impl<'a, T: Coord> GroupElement<'a, T> {
    pub fn new(algebra: &'a GradedLieAlgebra, coords: Vec<T>) -> Result<Self> {
        algebra.check_len(coords.len())?;
        Ok(GroupElement { algebra, coords })
    }

    pub fn identity(algebra: &'a GradedLieAlgebra) -> Self {
        GroupElement { algebra, coords: vec![T::zero(); algebra.dim()] }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let coords = self.algebra.bch_multiply(&self.coords, &other.coords).expect("same algebra");
        GroupElement { algebra: self.algebra, coords }
    }

    pub fn inverse(&self) -> Self {
        GroupElement { algebra: self.algebra, coords: self.algebra.inverse(&self.coords) }
    }
}

fn factorial(n: usize) -> BigRational {
    (1..=n as i64).fold(BigRational::one(), |a, k| a * rat_int(k))
}

/// Words in {X=0, Y=1} with their aggregated Dynkin coefficients, up to the
/// given length.
fn dynkin_words(max_len: usize) -> Vec<(Vec<u8>, BigRational)> {
    let mut acc: BTreeMap<Vec<u8>, BigRational> = BTreeMap::new();
    fn rec(
        k_left: usize,
        k_total: usize,
        len_left: usize,
        word: &mut Vec<u8>,
        denom: &BigRational,
        acc: &mut BTreeMap<Vec<u8>, BigRational>,
    ) {
        if k_left == 0 {
            let n = word.len();
            // Right-nested brackets ending in a repeated letter vanish.
            if n >= 2 && word[n - 1] == word[n - 2] {
                return;
            }
            let sign = if k_total % 2 == 1 { 1 } else { -1 };
            let c = rat(sign, (k_total * n) as i64) / denom.clone();
            let e = acc.entry(word.clone()).or_insert_with(BigRational::zero);
            *e += c;
            return;
        }
        for r in 0..=len_left {
            for s in 0..=(len_left - r) {
                if r + s == 0 {
                    continue;
                }
                let before = word.len();
                word.extend(std::iter::repeat_n(0, r));
                word.extend(std::iter::repeat_n(1, s));
                let d = denom.clone() * factorial(r) * factorial(s);
                rec(k_left - 1, k_total, len_left - r - s, word, &d, acc);
                word.truncate(before);
            }
        }
    }
    for k in 1..=max_len {
        rec(k, k, max_len, &mut Vec::new(), &BigRational::one(), &mut acc);
    }
    acc.into_iter().filter(|(_, c)| !c.is_zero()).collect()
}

/// Shipped algebras.
pub mod catalog {
    use super::*;

    pub fn abelian(n: usize) -> GradedLieAlgebra {
        GradedLieAlgebra::from_brackets(vec![1; n], &[]).expect("abelian algebra")
    }

    /// Basis (X, Y, Z), weights (1, 1, 2), `[X, Y] = Z`.
    pub fn heisenberg() -> GradedLieAlgebra {
        GradedLieAlgebra::from_brackets(vec![1, 1, 2], &[(0, 1, 2, rat_int(1))]).expect("heisenberg")
    }

    /// Weights (1, 1, 2, 3), `[e0, e1] = e2`, `[e0, e2] = e3`.
    pub fn engel() -> GradedLieAlgebra {
        GradedLieAlgebra::from_brackets(vec![1, 1, 2, 3], &[(0, 1, 2, rat_int(1)), (0, 2, 3, rat_int(1))])
            .expect("engel")
    }

    pub fn by_name(name: &str) -> Option<GradedLieAlgebra> {
        match name {
            "heis" | "heisenberg" => Some(heisenberg()),
            "engel" => Some(engel()),
            _ => name.strip_prefix("abelian").and_then(|d| d.parse().ok()).map(abelian),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::catalog::*;
    use super::*;

    fn q(v: &[(i64, i64)]) -> Vec<BigRational> {
        v.iter().map(|&(a, b)| rat(a, b)).collect()
    }

    #[test]
    fn shipped_algebras_validate() {
        assert_eq!(abelian(2).validate(), Ok(()));
        assert_eq!(heisenberg().validate(), Ok(()));
        assert_eq!(engel().validate(), Ok(()));
        assert_eq!(heisenberg().homogeneous_dimension(), 4);
    }

    #[test]
    fn grading_violation_is_reported() {
        let bad = GradedLieAlgebra::from_brackets(vec![1, 1, 1], &[(0, 1, 2, rat_int(1))]).unwrap();
        assert_eq!(bad.validate(), Err(Violation::Nilpotency { i: 0, j: 1, k: 2 }));
        let fine = GradedLieAlgebra::from_brackets(vec![1, 1, 2, 2], &[(0, 1, 3, rat_int(1)), (0, 1, 2, rat_int(1))])
            .unwrap();
        assert_eq!(fine.validate(), Ok(()));
        let bad = GradedLieAlgebra::from_brackets(vec![1, 1, 2, 3], &[(0, 1, 3, rat_int(1))]).unwrap();
        assert_eq!(bad.validate(), Err(Violation::Grading { i: 0, j: 1, k: 3 }));
    }

    #[test]
    fn antisymmetry_and_jacobi_violations() {
        let n = 3;
        let mut c = vec![vec![vec![BigRational::zero(); n]; n]; n];
        c[0][1][2] = rat_int(1);
        let alg = GradedLieAlgebra::from_dense(vec![1, 1, 2], c).unwrap();
        assert_eq!(alg.validate(), Err(Violation::Antisymmetry { i: 0, j: 1, k: 2 }));

        // Graded, but [e2,[e0,e1]] = e4 is the only surviving Jacobi term.
        let alg = GradedLieAlgebra::from_brackets(
            vec![1, 1, 1, 2, 3],
            &[(0, 1, 3, rat_int(1)), (2, 3, 4, rat_int(1))],
        )
        .unwrap();
        assert!(matches!(alg.validate(), Err(Violation::Jacobi { .. })));
    }

    #[test]
    fn malformed_dimensions() {
        let spec = AlgebraSpec { dim: 3, weights: vec![1, 1], brackets: vec![] };
        assert!(matches!(GradedLieAlgebra::from_spec(&spec), Err(Error::Malformed(_))));
        let c = vec![vec![vec![BigRational::zero(); 2]; 2]; 3];
        assert!(matches!(GradedLieAlgebra::from_dense(vec![1, 1, 2], c), Err(Error::Malformed(_))));
    }

    #[test]
    fn dilation_examples() {
        let h = heisenberg();
        assert_eq!(h.dilate(2.0, &[1.0, 1.0, 1.0]).unwrap(), vec![2.0, 2.0, 4.0]);
        assert_eq!(h.dilate(0.5, &[2.0, 2.0, 4.0]).unwrap(), vec![1.0, 1.0, 1.0]);
        assert_eq!(h.dilate(1.0, &[0.3, -0.2, 7.0]).unwrap(), vec![0.3, -0.2, 7.0]);
        assert!(matches!(h.dilate(0.0, &[1.0, 1.0, 1.0]), Err(Error::Domain(_))));
        assert!(h.dilate_exact(&rat(-1, 2), &q(&[(1, 1), (1, 1), (1, 1)])).is_err());
    }

    #[test]
    fn bch_examples() {
        let h = heisenberg();
        let r = h.bch_multiply(&q(&[(1, 1), (0, 1), (0, 1)]), &q(&[(0, 1), (1, 1), (0, 1)])).unwrap();
        assert_eq!(r, q(&[(1, 1), (1, 1), (1, 2)]));
        let r = h.bch_multiply(&q(&[(1, 1), (0, 1), (0, 1)]), &q(&[(-1, 1), (0, 1), (0, 1)])).unwrap();
        assert_eq!(r, q(&[(0, 1), (0, 1), (0, 1)]));
        let a = abelian(2);
        let r = a.bch_multiply(&q(&[(1, 3), (2, 1)]), &q(&[(1, 6), (-1, 1)])).unwrap();
        assert_eq!(r, q(&[(1, 2), (1, 1)]));
    }

    #[test]
    fn engel_bch_matches_third_order_formula() {
        // X + Y + [X,Y]/2 + [X,[X,Y]]/12 - [Y,[X,Y]]/12
        let e = engel();
        let x = q(&[(2, 1), (1, 3), (-1, 2), (5, 7)]);
        let y = q(&[(-1, 5), (3, 1), (1, 1), (0, 1)]);
        let xy = e.bracket(&x, &y);
        let xxy = e.bracket(&x, &xy);
        let yxy = e.bracket(&y, &xy);
        let expected: Vec<BigRational> = (0..4)
            .map(|k| {
                x[k].clone() + y[k].clone() + xy[k].clone() * rat(1, 2) + xxy[k].clone() * rat(1, 12)
                    - yxy[k].clone() * rat(1, 12)
            })
            .collect();
        assert_eq!(e.bch_multiply(&x, &y).unwrap(), expected);
    }

    #[test]
    fn homogeneous_norm_examples() {
        let h = heisenberg();
        assert!((h.homogeneous_norm(&[0.0, 0.0, 4.0]) - 2.0).abs() < 1e-15);
        assert_eq!(h.homogeneous_norm(&[0.0, 0.0, 0.0]), 0.0);
        let xi = [0.3, -1.2, 0.7];
        let lam = 3.7;
        let scaled = h.dilate(lam, &xi).unwrap();
        let rel = (h.homogeneous_norm(&scaled) - lam * h.homogeneous_norm(&xi)).abs() / (lam * h.homogeneous_norm(&xi));
        assert!(rel < 1e-12);
    }

    #[test]
    fn spec_round_trip() {
        let e = engel();
        let json = serde_json::to_string(&e.to_spec()).unwrap();
        assert_eq!(GradedLieAlgebra::from_json(&json).unwrap(), e);
        let src = r#"{"dim":3,"weights":[1,1,2],"brackets":[{"i":1,"j":0,"coeffs":{"2":"-1"}}]}"#;
        assert_eq!(GradedLieAlgebra::from_json(src).unwrap(), heisenberg());
        let clash = r#"{"dim":3,"weights":[1,1,2],"brackets":[{"i":0,"j":1,"coeffs":{"2":"1"}},{"i":1,"j":0,"coeffs":{"2":"1"}}]}"#;
        assert!(GradedLieAlgebra::from_json(clash).is_err());
    }
}
