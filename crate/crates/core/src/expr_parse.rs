//! Small infix expression language shared by the exact coefficient class
//! ([`Expr`]) and the numeric symbol formulas ([`NumExpr`]).
//!
//! Grammar: `+ - * / ^`, parentheses, decimal or integer literals, names and
//! function calls `f(a)`. `^` binds tighter than unary minus.

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::expr::{parse_rational, rational_to_f64, Expr, Trig};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(String),
    Name(String),
    Op(char),
}

#[derive(Clone, Debug)]
pub(crate) enum Ast {
    Num(BigRational),
    Name(String, usize),
    Neg(Box<Ast>),
    Bin(char, Box<Ast>, Box<Ast>),
    Call(String, Box<Ast>, usize),
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            out.push((Tok::Num(chars[start..i].iter().collect()), start));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Name(chars[start..i].iter().collect()), start));
        } else if "+-*/^()".contains(c) {
            out.push((Tok::Op(c), i));
            i += 1;
        } else {
            return Err(Error::Parse { offset: i, message: format!("unexpected character `{c}`") });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.1).unwrap_or(self.len)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse { offset: self.offset(), message: message.into() })
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek() == Some(&Tok::Op(c)) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn expr(&mut self) -> Result<Ast> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Ast::Bin(c, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Ast> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Ast::Bin(c, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Ast> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Ast::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Ast> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Op('^')) {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Ast::Bin('^', Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Ast> {
        let at = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(s)) => {
                self.pos += 1;
                let v = parse_rational(&s)
                    .map_err(|_| Error::Parse { offset: at, message: format!("bad number `{s}`") })?;
                Ok(Ast::Num(v))
            }
            Some(Tok::Name(name)) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::Op('(')) {
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    Ok(Ast::Call(name, Box::new(arg), at))
                } else {
                    Ok(Ast::Name(name, at))
                }
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            _ => self.err("expected a number, name or `(`"),
        }
    }
}

pub(crate) fn parse_ast(src: &str) -> Result<Ast> {
    let toks = tokenize(src)?;
    let mut p = Parser { toks, pos: 0, len: src.len() };
    let ast = p.expr()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(ast)
}

/// Resolves `x`, `y`, `z`, `w` or `x0`, `x1`, ... to a coordinate index.
pub(crate) fn coordinate_index(name: &str, nvars: usize) -> Option<usize> {
    let idx = match name {
        "x" => Some(0),
        "y" => Some(1),
        "z" => Some(2),
        "w" => Some(3),
        _ => name.strip_prefix('x').and_then(|d| d.parse().ok()),
    }?;
    (idx < nvars).then_some(idx)
}

pub(crate) fn parse_exact(src: &str, nvars: usize) -> Result<Expr> {
    lower_exact(&parse_ast(src)?, nvars)
}

fn lower_exact(ast: &Ast, n: usize) -> Result<Expr> {
    Ok(match ast {
        Ast::Num(v) => Expr::constant(n, v.clone()),
        Ast::Name(name, at) => match coordinate_index(name, n) {
            Some(i) => Expr::var(n, i),
            None => {
                return Err(Error::Parse { offset: *at, message: format!("unknown variable `{name}`") })
            }
        },
        Ast::Neg(a) => lower_exact(a, n)?.neg(),
        Ast::Bin(op, a, b) => {
            let lhs = lower_exact(a, n)?;
            match op {
                '+' => lhs.add(&lower_exact(b, n)?),
                '-' => lhs.sub(&lower_exact(b, n)?),
                '*' => lhs.mul(&lower_exact(b, n)?),
                '/' => {
                    let d = lower_exact(b, n)?.as_constant().filter(|c| !c.is_zero()).ok_or_else(|| {
                        Error::Malformed("division only by nonzero constants".into())
                    })?;
                    lhs.scale(&(BigRational::one() / d))
                }
                '^' => {
                    let e = lower_exact(b, n)?
                        .as_constant()
                        .filter(|c| c.is_integer() && !c.is_negative())
                        .and_then(|c| c.to_integer().to_u32())
                        .ok_or_else(|| Error::Malformed("exponent must be a nonnegative integer".into()))?;
                    lhs.pow(e)
                }
                _ => unreachable!(),
            }
        }
        Ast::Call(f, arg, at) => {
            let a = lower_exact(arg, n)?;
            let k = integer_frequency(&a).ok_or_else(|| Error::Parse {
                offset: *at,
                message: "trigonometric argument must be an integer linear form without constant".into(),
            })?;
            match f.as_str() {
                "cos" => Expr::cos(n, k),
                "sin" => Expr::sin(n, k),
                _ => {
                    return Err(Error::Parse { offset: *at, message: format!("unknown function `{f}`") })
                }
            }
        }
    })
}

fn integer_frequency(e: &Expr) -> Option<Vec<i64>> {
    let mut k = vec![0i64; e.nvars()];
    for (m, c) in e.terms() {
        if m.trig != Trig::One || m.powers.iter().sum::<u32>() != 1 || !c.is_integer() {
            return None;
        }
        let i = m.powers.iter().position(|&p| p == 1)?;
        k[i] = c.to_integer().to_i64()?;
    }
    Some(k)
}

/// Compiled numeric formula in the variables `x0..`, `eta0..` and `t`.
#[derive(Clone, Debug)]
pub struct NumExpr {
    src: String,
    ast: Ast,
    dim: usize,
}

/// Variable assignment for [`NumExpr::eval`].
pub struct NumVars<'a> {
    pub x: &'a [f64],
    pub eta: &'a [f64],
    pub t: f64,
}

impl NumExpr {
    pub fn parse(src: &str, dim: usize) -> Result<NumExpr> {
        let ast = parse_ast(src)?;
        check_names(&ast, dim)?;
        Ok(NumExpr { src: src.to_string(), ast, dim })
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, v: &NumVars<'_>) -> f64 {
        eval_num(&self.ast, v)
    }
}

fn resolve_name(name: &str, dim: usize) -> Option<(char, usize)> {
    if name == "t" {
        return Some(('t', 0));
    }
    if name == "pi" {
        return Some(('p', 0));
    }
    if name == "eta" && dim >= 1 {
        return Some(('e', 0));
    }
    if let Some(d) = name.strip_prefix("eta") {
        return d.parse().ok().filter(|&i: &usize| i < dim).map(|i| ('e', i));
    }
    coordinate_index(name, dim).map(|i| ('x', i))
}

fn check_names(ast: &Ast, dim: usize) -> Result<()> {
    match ast {
        Ast::Num(_) => Ok(()),
        Ast::Name(n, at) => resolve_name(n, dim)
            .map(|_| ())
            .ok_or_else(|| Error::Parse { offset: *at, message: format!("unknown variable `{n}`") }),
        Ast::Neg(a) => check_names(a, dim),
        Ast::Bin(_, a, b) => {
            check_names(a, dim)?;
            check_names(b, dim)
        }
        Ast::Call(f, a, at) => {
            if !["sqrt", "exp", "log", "abs", "cos", "sin"].contains(&f.as_str()) {
                return Err(Error::Parse { offset: *at, message: format!("unknown function `{f}`") });
            }
            check_names(a, dim)
        }
    }
}

fn eval_num(ast: &Ast, v: &NumVars<'_>) -> f64 {
    match ast {
        Ast::Num(r) => rational_to_f64(r),
        Ast::Name(n, _) => match resolve_name(n, v.x.len().max(v.eta.len())) {
            Some(('t', _)) => v.t,
            Some(('p', _)) => std::f64::consts::PI,
            Some(('e', i)) => v.eta[i],
            Some((_, i)) => v.x[i],
            None => f64::NAN,
        },
        Ast::Neg(a) => -eval_num(a, v),
        Ast::Bin(op, a, b) => {
            let (l, r) = (eval_num(a, v), eval_num(b, v));
            match op {
                '+' => l + r,
                '-' => l - r,
                '*' => l * r,
                '/' => l / r,
                _ => {
                    if r.fract() == 0.0 && r.abs() < 64.0 {
                        l.powi(r as i32)
                    } else {
                        l.powf(r)
                    }
                }
            }
        }
        Ast::Call(f, a, _) => {
            let x = eval_num(a, v);
            match f.as_str() {
                "sqrt" => x.sqrt(),
                "exp" => x.exp(),
                "log" => x.ln(),
                "abs" => x.abs(),
                "cos" => x.cos(),
                _ => x.sin(),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::rat;

    #[test]
    fn parses_heisenberg_coefficients() {
        let e = Expr::parse("-y/2", 3).unwrap();
        assert_eq!(e, Expr::var(3, 1).scale(&rat(-1, 2)));
        let e = Expr::parse("x1^2/2 + 3", 4).unwrap();
        assert_eq!(e.eval(&[0.0, 2.0, 0.0, 0.0]), 5.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(Expr::parse("x + ", 1), Err(Error::Parse { .. })));
        assert!(matches!(Expr::parse("q", 1), Err(Error::Parse { offset: 0, .. })));
        assert!(Expr::parse("cos(x/2)", 1).is_err());
        assert!(Expr::parse("cos(x + 1)", 1).is_err());
        assert!(Expr::parse("x/y", 2).is_err());
        assert!(Expr::parse("x^-1", 1).is_err());
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        let e = Expr::parse("-x^2", 1).unwrap();
        assert_eq!(e.eval(&[3.0]), -9.0);
    }

    #[test]
    fn numeric_formula() {
        let f = NumExpr::parse("sqrt(t^2 + eta^2) + exp(-eta0^2) * cos(x)", 1).unwrap();
        let v = f.eval(&NumVars { x: &[0.0], eta: &[0.0], t: 3.0 });
        assert!((v - 4.0).abs() < 1e-15);
        assert!(NumExpr::parse("zeta", 1).is_err());
    }
}
