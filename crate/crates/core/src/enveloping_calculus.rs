//! Filtered differential operators in PBW normal form over a patch frame,
//! their composition, principal cosymbols in the graded enveloping algebra
//! and the symbolic tangent-groupoid kernel family.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::filtered_patch::FilteredPatch;

type Terms = BTreeMap<Vec<u32>, Expr>;

/// `Σ_a c_a(x) X^a` with `X^a` the ordered product of frame powers, lower
/// filtration degree first and frame index order within a degree.
#[derive(Clone, Debug, PartialEq)]
pub struct FilteredDiffOp {
    patch: Arc<FilteredPatch>,
    terms: Terms,
}

/// Element `Σ_{|a|_H = m} c_a(x) X̄^a` of the graded enveloping algebra.
#[derive(Clone, Debug, PartialEq)]
pub struct Cosymbol {
    patch: Arc<FilteredPatch>,
    weight: u32,
    terms: Terms,
}

/// One term `t^p c(x) δ^{(a)}(-ξ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelTerm {
    pub coeff: Expr,
    pub multi_index: Vec<u32>,
    pub t_power: i64,
}

/// The family `Σ_a t^{m-|a|_H} c_a(x) δ^{(a)}(-ξ)`, plus optional smooth
/// t-independent remainder terms that break nose homogeneity.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicKernelFamily {
    pub orders: Vec<u32>,
    pub terms: Vec<KernelTerm>,
    pub smooth_terms: Vec<Expr>,
}

/// Normal-ordering engine. When `frame` is set the coefficients are
/// functions acted on by the frame; otherwise they are frozen parameters.
struct Engine<'a> {
    n: usize,
    pos: Vec<usize>,
    constants: Vec<Vec<Vec<Expr>>>,
    frame: Option<&'a FilteredPatch>,
    memo: RefCell<HashMap<(usize, Vec<u32>), Terms>>,
}

fn pbw_positions(orders: &[u32]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..orders.len()).collect();
    idx.sort_by_key(|&i| (orders[i], i));
    let mut pos = vec![0; orders.len()];
    for (r, &i) in idx.iter().enumerate() {
        pos[i] = r;
    }
    pos
}

fn add_term(acc: &mut Terms, b: Vec<u32>, c: Expr) {
    if c.is_zero() {
        return;
    }
    match acc.get_mut(&b) {
        Some(e) => {
            *e = e.add(&c);
            if e.is_zero() {
                acc.remove(&b);
            }
        }
        None => {
            acc.insert(b, c);
        }
    }
}

impl<'a> Engine<'a> {
    fn full(patch: &'a FilteredPatch) -> Result<Self> {
        let n = patch.dim();
        let mut constants = vec![vec![vec![Expr::zero(n); n]; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let c = patch.bracket_coefficients(i, j)?;
                for k in 0..n {
                    constants[j][i][k] = c[k].neg();
                    constants[i][j][k] = c[k].clone();
                }
            }
        }
        Ok(Engine { n, pos: pbw_positions(patch.orders()), constants, frame: Some(patch), memo: RefCell::default() })
    }

    fn graded(patch: &'a FilteredPatch) -> Result<Self> {
        Ok(Engine {
            n: patch.dim(),
            pos: pbw_positions(patch.orders()),
            constants: patch.osculating_constant_exprs()?,
            frame: None,
            memo: RefCell::default(),
        })
    }

    fn first_letter(&self, b: &[u32]) -> Option<usize> {
        (0..self.n).filter(|&j| b[j] > 0).min_by_key(|&j| self.pos[j])
    }

    /// Normal form of `X_i X^b`.
    fn letter_times_monomial(&self, i: usize, b: &[u32]) -> Terms {
        if let Some(t) = self.memo.borrow().get(&(i, b.to_vec())) {
            return t.clone();
        }
        let nv = self.n;
        let mut out = Terms::new();
        match self.first_letter(b) {
            Some(p) if self.pos[i] > self.pos[p] => {
                // X_i X_p w = X_p (X_i w) + [X_i, X_p] w
                let mut rest = b.to_vec();
                rest[p] -= 1;
                let inner = self.letter_times_monomial(i, &rest);
                out = self.left_mul_letter(p, &inner);
                for k in 0..self.n {
                    let c = &self.constants[i][p][k];
                    if c.is_zero() {
                        continue;
                    }
                    for (b2, h) in self.letter_times_monomial(k, &rest) {
                        add_term(&mut out, b2, c.mul(&h));
                    }
                }
            }
            _ => {
                let mut b2 = b.to_vec();
                b2[i] += 1;
                out.insert(b2, Expr::one(nv));
            }
        }
        self.memo.borrow_mut().insert((i, b.to_vec()), out.clone());
        out
    }

    /// `X_i ∘ A`.
    fn left_mul_letter(&self, i: usize, a: &Terms) -> Terms {
        let mut out = Terms::new();
        for (b, g) in a {
            if let Some(p) = self.frame {
                add_term(&mut out, b.clone(), p.frame()[i].apply(g));
            }
            for (b2, h) in self.letter_times_monomial(i, b) {
                add_term(&mut out, b2, g.mul(&h));
            }
        }
        out
    }

    fn word(&self, a: &[u32]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.n).collect();
        idx.sort_by_key(|&j| self.pos[j]);
        idx.iter().flat_map(|&j| std::iter::repeat_n(j, a[j] as usize)).collect()
    }

    fn compose(&self, a: &Terms, b: &Terms) -> Terms {
        let mut out = Terms::new();
        for (ma, ca) in a {
            let mut acc = b.clone();
            for &l in self.word(ma).iter().rev() {
                acc = self.left_mul_letter(l, &acc);
            }
            for (mb, cb) in acc {
                add_term(&mut out, mb, ca.mul(&cb));
            }
        }
        out
    }

    /// Normal form of `c · X_{w_1} ⋯ X_{w_r}` for an arbitrary word.
    fn normalize_word(&self, word: &[usize], c: &Expr) -> Terms {
        let mut acc = Terms::new();
        acc.insert(vec![0; self.n], c.clone());
        // Build from the right so that the coefficient stays on the left.
        let mut right = Terms::new();
        right.insert(vec![0; self.n], Expr::one(self.n));
        for &l in word.iter().rev() {
            right = self.left_mul_letter(l, &right);
        }
        self.compose(&acc, &right)
    }
}

fn h_weight(orders: &[u32], a: &[u32]) -> u32 {
    a.iter().zip(orders).map(|(x, d)| x * d).sum()
}

fn check_same(p: &Arc<FilteredPatch>, q: &Arc<FilteredPatch>) -> Result<()> {
    if Arc::ptr_eq(p, q) || p == q {
        Ok(())
    } else {
        Err(Error::PatchMismatch(format!("operators live on patches `{}` and `{}`", p.name, q.name)))
    }
}

fn display_terms(f: &mut fmt::Formatter<'_>, terms: &Terms, letter: &str, order: &[usize]) -> fmt::Result {
    if terms.is_empty() {
        return write!(f, "0");
    }
    let mut first = true;
    for (a, c) in terms {
        if !first {
            write!(f, " + ")?;
        }
        first = false;
        let mut factors = Vec::new();
        for &j in order {
            match a[j] {
                0 => {}
                1 => factors.push(format!("{letter}{j}")),
                p => factors.push(format!("{letter}{j}^{p}")),
            }
        }
        let cs = c.to_string();
        if factors.is_empty() {
            write!(f, "({cs})")?;
        } else if cs == "1" {
            write!(f, "{}", factors.join("·"))?;
        } else {
            write!(f, "({cs})·{}", factors.join("·"))?;
        }
    }
    Ok(())
}

fn pbw_order(orders: &[u32]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..orders.len()).collect();
    idx.sort_by_key(|&i| (orders[i], i));
    idx
}

impl FilteredDiffOp {
    /// Builds `Σ c_a X^a` from terms already given in normal form.
    pub fn from_terms(patch: Arc<FilteredPatch>, terms: Vec<(Vec<u32>, Expr)>) -> Result<Self> {
        let n = patch.dim();
        let mut map = Terms::new();
        for (a, c) in terms {
            if a.len() != n || c.nvars() != n {
                return Err(Error::Malformed(format!("term {a:?} does not match the {n}-dimensional patch")));
            }
            add_term(&mut map, a, c);
        }
        Ok(FilteredDiffOp { patch, terms: map })
    }

    /// Normal form of `c · X_{w_1} ⋯ X_{w_r}` for an arbitrary word.
    pub fn from_word(patch: Arc<FilteredPatch>, word: &[usize], c: Expr) -> Result<Self> {
        if word.iter().any(|&l| l >= patch.dim()) || c.nvars() != patch.dim() {
            return Err(Error::Malformed(format!("word {word:?} does not match the patch")));
        }
        let terms = Engine::full(&patch)?.normalize_word(word, &c);
        Ok(FilteredDiffOp { patch, terms })
    }

    pub fn zero(patch: Arc<FilteredPatch>) -> Self {
        FilteredDiffOp { patch, terms: Terms::new() }
    }

    pub fn identity(patch: Arc<FilteredPatch>) -> Self {
        FilteredDiffOp::multiplication(patch.clone(), Expr::one(patch.dim()))
    }

    pub fn multiplication(patch: Arc<FilteredPatch>, f: Expr) -> Self {
        let mut terms = Terms::new();
        add_term(&mut terms, vec![0; patch.dim()], f);
        FilteredDiffOp { patch, terms }
    }

    pub fn letter(patch: Arc<FilteredPatch>, i: usize) -> Self {
        let n = patch.dim();
        let mut a = vec![0; n];
        a[i] = 1;
        let mut terms = Terms::new();
        terms.insert(a, Expr::one(n));
        FilteredDiffOp { patch, terms }
    }

    pub fn patch(&self) -> &Arc<FilteredPatch> {
        &self.patch
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &Expr)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// `max_a |a|_H`; `None` for the zero operator.
    pub fn h_order(&self) -> Option<u32> {
        self.terms.keys().map(|a| h_weight(self.patch.orders(), a)).max()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_same(&self.patch, &other.patch)?;
        let mut terms = self.terms.clone();
        for (a, c) in &other.terms {
            add_term(&mut terms, a.clone(), c.clone());
        }
        Ok(FilteredDiffOp { patch: self.patch.clone(), terms })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale_expr(&Expr::int(self.patch.dim(), -1)))
    }

    /// Left multiplication by a function.
    pub fn scale_expr(&self, f: &Expr) -> Self {
        let mut terms = Terms::new();
        for (a, c) in &self.terms {
            add_term(&mut terms, a.clone(), f.mul(c));
        }
        FilteredDiffOp { patch: self.patch.clone(), terms }
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        check_same(&self.patch, &other.patch)?;
        let e = Engine::full(&self.patch)?;
        Ok(FilteredDiffOp { patch: self.patch.clone(), terms: e.compose(&self.terms, &other.terms) })
    }

    /// Re-runs normal ordering on every monomial; a no-op on valid input.
    pub fn renormalize(&self) -> Result<Self> {
        let e = Engine::full(&self.patch)?;
        let mut out = Terms::new();
        for (a, c) in &self.terms {
            for (b, g) in e.normalize_word(&e.word(a), c) {
                add_term(&mut out, b, g);
            }
        }
        Ok(FilteredDiffOp { patch: self.patch.clone(), terms: out })
    }

    /// Applies the operator to a function, letters acting right to left.
    pub fn apply(&self, f: &Expr) -> Expr {
        let frame = self.patch.frame();
        let order = pbw_order(self.patch.orders());
        let mut out = Expr::zero(f.nvars());
        for (a, c) in &self.terms {
            let mut g = f.clone();
            for &j in order.iter().rev() {
                for _ in 0..a[j] {
                    g = frame[j].apply(&g);
                }
            }
            out = out.add(&c.mul(&g));
        }
        out
    }

    pub fn principal_cosymbol(&self) -> Result<Cosymbol> {
        let m = self
            .h_order()
            .ok_or_else(|| Error::WeightUndefined("the zero operator has no principal order; supply one".into()))?;
        Ok(self.cosymbol_at_weight(m))
    }

    /// Weight-`m` part of the operator, which is the principal cosymbol when
    /// `m` is the H-order and zero when `m` exceeds it.
    pub fn cosymbol_at_weight(&self, m: u32) -> Cosymbol {
        let terms = self
            .terms
            .iter()
            .filter(|(a, _)| h_weight(self.patch.orders(), a) == m)
            .map(|(a, c)| (a.clone(), c.clone()))
            .collect();
        Cosymbol { patch: self.patch.clone(), weight: m, terms }
    }

    pub fn kernel_family(&self) -> SymbolicKernelFamily {
        self.kernel_family_at_weight(self.h_order().unwrap_or(0)).expect("order bounds itself")
    }

    /// The same family read as an operator of order `m ≥ h_order`.
    pub fn kernel_family_at_weight(&self, m: u32) -> Result<SymbolicKernelFamily> {
        if let Some(h) = self.h_order() {
            if m < h {
                return Err(Error::Domain(format!("operator has H-order {h} > {m}")));
            }
        }
        let orders = self.patch.orders();
        let terms = self
            .terms
            .iter()
            .map(|(a, c)| KernelTerm {
                coeff: c.clone(),
                multi_index: a.clone(),
                t_power: m as i64 - h_weight(orders, a) as i64,
            })
            .collect();
        Ok(SymbolicKernelFamily { orders: orders.to_vec(), terms, smooth_terms: Vec::new() })
    }

    pub fn from_spec(spec: &OperatorSpec, patch: Arc<FilteredPatch>) -> Result<Self> {
        let n = patch.dim();
        let mut terms = Vec::new();
        for t in &spec.terms {
            if t.multi_index.len() != n {
                return Err(Error::Malformed(format!(
                    "multi-index {:?} has length {}, patch dimension is {n}",
                    t.multi_index,
                    t.multi_index.len()
                )));
            }
            terms.push((t.multi_index.clone(), Expr::parse(&t.coeff_expr, n)?));
        }
        FilteredDiffOp::from_terms(patch, terms)
    }

    pub fn to_spec(&self, patch_ref: &str) -> OperatorSpec {
        OperatorSpec {
            patch_ref: patch_ref.to_string(),
            terms: self
                .terms
                .iter()
                .map(|(a, c)| TermSpec { multi_index: a.clone(), coeff_expr: c.to_string() })
                .collect(),
        }
    }
}

impl fmt::Display for FilteredDiffOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        display_terms(f, &self.terms, "X", &pbw_order(self.patch.orders()))
    }
}

impl Cosymbol {
    pub fn weight(&self) -> u32 {
        self.weight
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &Expr)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Product in the graded enveloping algebra of the osculating bundle.
    pub fn compose(&self, other: &Cosymbol) -> Result<Cosymbol> {
        check_same(&self.patch, &other.patch)?;
        let e = Engine::graded(&self.patch)?;
        Ok(Cosymbol {
            patch: self.patch.clone(),
            weight: self.weight + other.weight,
            terms: e.compose(&self.terms, &other.terms),
        })
    }
}

impl fmt::Display for Cosymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        display_terms(f, &self.terms, "X̄", &pbw_order(self.patch.orders()))
    }
}

pub fn cosymbol_compose(u: &Cosymbol, v: &Cosymbol) -> Result<Cosymbol> {
    u.compose(v)
}

impl SymbolicKernelFamily {
    /// Every term has `t`-power `m - |a|_H` and no smooth remainder is present.
    pub fn is_homogeneous_on_nose(&self, m: i64) -> bool {
        self.smooth_terms.is_empty()
            && self
                .terms
                .iter()
                .all(|t| t.t_power >= 0 && t.t_power + h_weight(&self.orders, &t.multi_index) as i64 == m)
    }

    /// The restriction at `t = 1` as an operator on `patch`.
    pub fn at_one(&self, patch: Arc<FilteredPatch>) -> Result<FilteredDiffOp> {
        if !self.smooth_terms.is_empty() {
            return Err(Error::Domain("family carries smooth terms that are not differential".into()));
        }
        FilteredDiffOp::from_terms(patch, self.terms.iter().map(|t| (t.multi_index.clone(), t.coeff.clone())).collect())
    }
}

impl fmt::Display for SymbolicKernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for t in &self.terms {
            let tp = match t.t_power {
                0 => String::new(),
                1 => "t·".into(),
                p => format!("t^{p}·"),
            };
            let idx: Vec<String> = t.multi_index.iter().map(|v| v.to_string()).collect();
            parts.push(format!("{tp}({})·δ^({})(-ξ)", t.coeff, idx.join(",")));
        }
        for s in &self.smooth_terms {
            parts.push(format!("({s})"));
        }
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join(" + "))
        }
    }
}

/// JSON exchange form: `{patch_ref, terms: [{multi_index, coeff_expr}]}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct OperatorSpec {
    pub patch_ref: String,
    pub terms: Vec<TermSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TermSpec {
    pub multi_index: Vec<u32>,
    pub coeff_expr: String,
}
