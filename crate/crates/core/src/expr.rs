//! Exact coefficient functions: rational linear combinations of
//! `x^p cos(k·x)` and `x^p sin(k·x)` with integer frequency vectors `k`.
//!
//! The class is closed under products and partial derivatives, and the
//! canonical form below is unique, so the zero test is exact.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Trigonometric factor of a monomial.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Trig {
    One,
    Cos(Vec<i64>),
    Sin(Vec<i64>),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    pub powers: Vec<u32>,
    pub trig: Trig,
}

/// Canonical sum of monomials with exact rational coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Expr {
    nvars: usize,
    terms: BTreeMap<Monomial, BigRational>,
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Parses `"p/q"`, `"p"` or a decimal literal into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::Malformed(format!("invalid rational `{s}`"));
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(p, q));
    }
    if let Some((ip, fp)) = s.split_once('.') {
        let neg = ip.starts_with('-');
        let digits = format!("{}{}", ip.trim_start_matches(['-', '+']), fp);
        let num: BigInt = digits.parse().map_err(|_| bad())?;
        let den = num_traits::pow(BigInt::from(10), fp.len());
        let r = BigRational::new(num, den);
        return Ok(if neg { -r } else { r });
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(BigRational::from_integer(n))
}

pub fn format_rational(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
    })
}

fn canonical_trig(trig: Trig) -> Option<(Trig, bool)> {
    // Returns the canonical factor and whether the sign flipped; None means zero.
    let leading_negative = |k: &[i64]| k.iter().find(|&&c| c != 0).map(|&c| c < 0);
    match trig {
        Trig::One => Some((Trig::One, false)),
        Trig::Cos(k) => match leading_negative(&k) {
            None => Some((Trig::One, false)),
            Some(true) => Some((Trig::Cos(k.iter().map(|c| -c).collect()), false)),
            Some(false) => Some((Trig::Cos(k), false)),
        },
        Trig::Sin(k) => match leading_negative(&k) {
            None => None,
            Some(true) => Some((Trig::Sin(k.iter().map(|c| -c).collect()), true)),
            Some(false) => Some((Trig::Sin(k), false)),
        },
    }
}

fn add_vec(a: &[i64], b: &[i64], sign: i64) -> Vec<i64> {
    a.iter().zip(b).map(|(x, y)| x + sign * y).collect()
}

/// Product-to-sum expansion of two trigonometric factors.
fn trig_product(a: &Trig, b: &Trig) -> Vec<(Trig, BigRational)> {
    let half = rat(1, 2);
    let (ka, kb) = match (a, b) {
        (Trig::One, t) | (t, Trig::One) => return vec![(t.clone(), BigRational::one())],
        (Trig::Cos(x), Trig::Cos(y))
        | (Trig::Sin(x), Trig::Sin(y))
        | (Trig::Sin(x), Trig::Cos(y))
        | (Trig::Cos(x), Trig::Sin(y)) => (x.clone(), y.clone()),
    };
    let diff = add_vec(&ka, &kb, -1);
    let sum = add_vec(&ka, &kb, 1);
    match (a, b) {
        (Trig::Cos(_), Trig::Cos(_)) => vec![
            (Trig::Cos(diff), half.clone()),
            (Trig::Cos(sum), half),
        ],
        (Trig::Sin(_), Trig::Sin(_)) => vec![
            (Trig::Cos(diff), half.clone()),
            (Trig::Cos(sum), -half),
        ],
        (Trig::Sin(_), Trig::Cos(_)) => vec![
            (Trig::Sin(sum), half.clone()),
            (Trig::Sin(diff), half),
        ],
        (Trig::Cos(_), Trig::Sin(_)) => vec![
            (Trig::Sin(sum), half.clone()),
            (Trig::Sin(diff), -half),
        ],
        _ => unreachable!(),
    }
}

impl Expr {
    pub fn zero(nvars: usize) -> Self {
        Expr { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: BigRational) -> Self {
        let mut e = Expr::zero(nvars);
        e.add_term(vec![0; nvars], Trig::One, c);
        e
    }

    pub fn one(nvars: usize) -> Self {
        Expr::constant(nvars, BigRational::one())
    }

    pub fn int(nvars: usize, c: i64) -> Self {
        Expr::constant(nvars, rat_int(c))
    }

    /// The coordinate function `x_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut p = vec![0; nvars];
        p[i] = 1;
        let mut e = Expr::zero(nvars);
        e.add_term(p, Trig::One, BigRational::one());
        e
    }

    pub fn cos(nvars: usize, k: Vec<i64>) -> Self {
        let mut e = Expr::zero(nvars);
        e.add_term(vec![0; nvars], Trig::Cos(k), BigRational::one());
        e
    }

    pub fn sin(nvars: usize, k: Vec<i64>) -> Self {
        let mut e = Expr::zero(nvars);
        e.add_term(vec![0; nvars], Trig::Sin(k), BigRational::one());
        e
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn has_trig(&self) -> bool {
        self.terms.keys().any(|m| m.trig != Trig::One)
    }

    /// Returns the value if the expression is a constant.
    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => {
                let (m, c) = self.terms.iter().next().unwrap();
                (m.trig == Trig::One && m.powers.iter().all(|&p| p == 0)).then(|| c.clone())
            }
            _ => None,
        }
    }

    fn add_term(&mut self, powers: Vec<u32>, trig: Trig, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let Some((trig, flip)) = canonical_trig(trig) else {
            return;
        };
        let c = if flip { -c } else { c };
        let key = Monomial { powers, trig };
        let entry = self.terms.entry(key.clone()).or_insert_with(BigRational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn add(&self, other: &Expr) -> Expr {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.powers.clone(), m.trig.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Expr) -> Expr {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Expr {
        self.scale(&-BigRational::one())
    }

    pub fn scale(&self, s: &BigRational) -> Expr {
        let mut out = Expr::zero(self.nvars);
        if s.is_zero() {
            return out;
        }
        for (m, c) in &self.terms {
            out.terms.insert(m.clone(), c * s);
        }
        out
    }

    pub fn mul(&self, other: &Expr) -> Expr {
        let mut out = Expr::zero(self.nvars);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let powers: Vec<u32> = ma.powers.iter().zip(&mb.powers).map(|(a, b)| a + b).collect();
                for (trig, f) in trig_product(&ma.trig, &mb.trig) {
                    out.add_term(powers.clone(), trig, ca * cb * f);
                }
            }
        }
        out
    }

    pub fn pow(&self, e: u32) -> Expr {
        let mut out = Expr::one(self.nvars);
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    /// Partial derivative in `x_i`.
    pub fn diff(&self, i: usize) -> Expr {
        let mut out = Expr::zero(self.nvars);
        for (m, c) in &self.terms {
            if m.powers[i] > 0 {
                let mut p = m.powers.clone();
                p[i] -= 1;
                out.add_term(p, m.trig.clone(), c * rat_int(m.powers[i] as i64));
            }
            match &m.trig {
                Trig::One => {}
                Trig::Cos(k) if k[i] != 0 => {
                    out.add_term(m.powers.clone(), Trig::Sin(k.clone()), -c * rat_int(k[i]));
                }
                Trig::Sin(k) if k[i] != 0 => {
                    out.add_term(m.powers.clone(), Trig::Cos(k.clone()), c * rat_int(k[i]));
                }
                _ => {}
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        // Fixed iteration order over the BTreeMap keeps this bit-reproducible.
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            let mut v = rational_to_f64(c);
            for (xi, &p) in x.iter().zip(&m.powers) {
                v *= xi.powi(p as i32);
            }
            let phase = |k: &[i64]| k.iter().zip(x).map(|(&ki, xi)| ki as f64 * xi).sum::<f64>();
            match &m.trig {
                Trig::One => {}
                Trig::Cos(k) => v *= phase(k).cos(),
                Trig::Sin(k) => v *= phase(k).sin(),
            }
            acc += v;
        }
        acc
    }

    /// Exact evaluation at a rational point; `None` when a trigonometric term is present.
    pub fn eval_exact(&self, x: &[BigRational]) -> Option<BigRational> {
        let mut acc = BigRational::zero();
        for (m, c) in &self.terms {
            if m.trig != Trig::One {
                return None;
            }
            let mut v = c.clone();
            for (xi, &p) in x.iter().zip(&m.powers) {
                v *= num_traits::pow(xi.clone(), p as usize);
            }
            acc += v;
        }
        Some(acc)
    }

    /// Largest total polynomial degree and largest frequency magnitude present.
    pub fn degree(&self) -> (u32, i64) {
        let mut deg = 0;
        let mut freq = 0;
        for m in self.terms.keys() {
            deg = deg.max(m.powers.iter().sum());
            if let Trig::Cos(k) | Trig::Sin(k) = &m.trig {
                freq = freq.max(k.iter().map(|c| c.abs()).max().unwrap_or(0));
            }
        }
        (deg, freq)
    }

    pub fn parse(src: &str, nvars: usize) -> Result<Expr> {
        crate::expr_parse::parse_exact(src, nvars)
    }
}

fn var_name(i: usize, n: usize) -> String {
    if n <= 3 {
        ["x", "y", "z"][i].to_string()
    } else {
        format!("x{i}")
    }
}

fn fmt_linear(k: &[i64]) -> String {
    let n = k.len();
    let mut s = String::new();
    for (i, &c) in k.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let name = var_name(i, n);
        let mag = c.abs();
        if s.is_empty() {
            if c < 0 {
                s.push('-');
            }
        } else {
            s.push_str(if c < 0 { " - " } else { " + " });
        }
        if mag != 1 {
            s.push_str(&format!("{mag}*"));
        }
        s.push_str(&name);
    }
    s
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (idx, (m, c)) in self.terms.iter().enumerate() {
            let mut factors = Vec::new();
            for (i, &p) in m.powers.iter().enumerate() {
                match p {
                    0 => {}
                    1 => factors.push(var_name(i, self.nvars)),
                    _ => factors.push(format!("{}^{}", var_name(i, self.nvars), p)),
                }
            }
            match &m.trig {
                Trig::One => {}
                Trig::Cos(k) => factors.push(format!("cos({})", fmt_linear(k))),
                Trig::Sin(k) => factors.push(format!("sin({})", fmt_linear(k))),
            }
            let neg = c.is_negative();
            let mag = c.abs();
            if idx == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, "{}", if neg { " - " } else { " + " })?;
            }
            if factors.is_empty() {
                write!(f, "{}", format_rational(&mag))?;
            } else if mag.is_one() {
                write!(f, "{}", factors.join("*"))?;
            } else {
                write!(f, "{}*{}", format_rational(&mag), factors.join("*"))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trig_identities_are_exact() {
        let c = Expr::cos(1, vec![1]);
        let s = Expr::sin(1, vec![1]);
        let id = c.mul(&c).add(&s.mul(&s));
        assert_eq!(id, Expr::one(1));
        assert_eq!(Expr::sin(1, vec![-2]), Expr::sin(1, vec![2]).neg());
        assert_eq!(Expr::cos(1, vec![-2]), Expr::cos(1, vec![2]));
        assert!(Expr::sin(1, vec![0]).is_zero());
    }

    #[test]
    fn derivative_of_product() {
        let x = Expr::var(2, 0);
        let f = x.mul(&Expr::cos(2, vec![1, 1]));
        let df = f.diff(0);
        let expected = Expr::cos(2, vec![1, 1]).sub(&x.mul(&Expr::sin(2, vec![1, 1])));
        assert_eq!(df, expected);
        let p = [0.3, -0.7];
        let h = 1e-6;
        let fd = (f.eval(&[p[0] + h, p[1]]) - f.eval(&[p[0] - h, p[1]])) / (2.0 * h);
        assert!((fd - df.eval(&p)).abs() < 1e-8);
    }

    #[test]
    fn rationals_parse_and_print() {
        assert_eq!(parse_rational("-3/6").unwrap(), rat(-1, 2));
        assert_eq!(parse_rational("0.25").unwrap(), rat(1, 4));
        assert_eq!(parse_rational("-1.5").unwrap(), rat(-3, 2));
        assert!(parse_rational("1/0").is_err());
        assert_eq!(format_rational(&rat(4, 2)), "2");
        assert_eq!(format_rational(&rat(-1, 3)), "-1/3");
    }

    #[test]
    fn display_is_deterministic() {
        let e = Expr::parse("x - y/2 + 3*cos(x - 2*y)", 2).unwrap();
        assert_eq!(e.to_string(), Expr::parse(&e.to_string(), 2).unwrap().to_string());
    }
}
