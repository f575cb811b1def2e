//! A filtered manifold on one coordinate patch: a frame of vector fields with
//! exact coefficients, filtration orders, osculating algebras and the
//! tangent-groupoid exponential chart.

use num_rational::BigRational;
use num_traits::{FromPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{rational_to_f64, Expr};
use crate::graded_nilpotent::GradedLieAlgebra;

/// A vector field `Σ_k coeffs[k] ∂_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub coeffs: Vec<Expr>,
}

impl VectorField {
    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    /// `X(f) = Σ_k X^k ∂_k f`.
    pub fn apply(&self, f: &Expr) -> Expr {
        let mut out = Expr::zero(f.nvars());
        for (k, c) in self.coeffs.iter().enumerate() {
            if !c.is_zero() {
                out = out.add(&c.mul(&f.diff(k)));
            }
        }
        out
    }

    /// `[X, Y]^k = X(Y^k) - Y(X^k)`.
    pub fn bracket(&self, other: &VectorField) -> VectorField {
        let coeffs = (0..self.dim())
            .map(|k| self.apply(&other.coeffs[k]).sub(&other.apply(&self.coeffs[k])))
            .collect();
        VectorField { coeffs }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.eval(x)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilteredPatch {
    pub name: String,
    dim: usize,
    depth: u32,
    periodic: bool,
    frame: Vec<VectorField>,
    orders: Vec<u32>,
    injectivity_radius: f64,
    bounds: Option<Vec<(f64, f64)>>,
}

/// JSON exchange form of a patch.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PatchSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub dim: usize,
    pub depth: u32,
    #[serde(default)]
    pub periodic: bool,
    pub frame: Vec<FieldSpec>,
    pub orders: Vec<u32>,
    pub injectivity_radius: f64,
    #[serde(default)]
    pub bounds: Option<Vec<(f64, f64)>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FieldSpec {
    pub coeffs: Vec<String>,
}

/// First bracket found to leave the declared filtration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiltrationViolation {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub coefficient: String,
}

impl std::fmt::Display for FiltrationViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[X{}, X{}] has component {} along X{}, whose order exceeds d{} + d{}",
            self.i, self.j, self.coefficient, self.k, self.i, self.j
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OsculatingFibre {
    pub base_point: Vec<f64>,
    pub algebra: GradedLieAlgebra,
}

/// Result of the tangent-groupoid chart.
#[derive(Clone, Debug, PartialEq)]
pub enum ChartPoint {
    Pair { x: Vec<f64>, y: Vec<f64> },
    Fibre { x: Vec<f64>, xi: Vec<f64> },
}

impl FilteredPatch {
    pub fn new(
        name: &str,
        frame: Vec<VectorField>,
        orders: Vec<u32>,
        depth: u32,
        periodic: bool,
        injectivity_radius: f64,
    ) -> Result<Self> {
        let dim = frame.len();
        if dim == 0 {
            return Err(Error::Malformed("empty frame".into()));
        }
        if frame.iter().any(|f| f.dim() != dim || f.coeffs.iter().any(|c| c.nvars() != dim)) {
            return Err(Error::Malformed(format!("frame must consist of {dim} fields on a {dim}-dimensional patch")));
        }
        if orders.len() != dim {
            return Err(Error::Malformed(format!("{} orders given for {dim} frame fields", orders.len())));
        }
        if orders.iter().any(|&d| d == 0 || d > depth) {
            return Err(Error::Malformed(format!("orders {orders:?} must lie in 1..={depth}")));
        }
        if !(injectivity_radius > 0.0) {
            return Err(Error::Malformed("injectivity radius must be positive".into()));
        }
        Ok(FilteredPatch {
            name: name.to_string(),
            dim,
            depth,
            periodic,
            frame,
            orders,
            injectivity_radius,
            bounds: None,
        })
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.len() != self.dim || bounds.iter().any(|(a, b)| !(a < b)) {
            return Err(Error::Malformed("bounds must be one nonempty interval per coordinate".into()));
        }
        self.bounds = Some(bounds);
        Ok(self)
    }

    pub fn from_spec(spec: &PatchSpec) -> Result<Self> {
        if spec.frame.len() != spec.dim {
            return Err(Error::Malformed(format!("dim is {} but frame has {} fields", spec.dim, spec.frame.len())));
        }
        let mut frame = Vec::with_capacity(spec.dim);
        for f in &spec.frame {
            if f.coeffs.len() != spec.dim {
                return Err(Error::Malformed(format!("frame field has {} coefficients, expected {}", f.coeffs.len(), spec.dim)));
            }
            let coeffs = f.coeffs.iter().map(|s| Expr::parse(s, spec.dim)).collect::<Result<Vec<_>>>()?;
            frame.push(VectorField { coeffs });
        }
        let name = spec.name.clone().unwrap_or_else(|| "patch".into());
        let p = FilteredPatch::new(&name, frame, spec.orders.clone(), spec.depth, spec.periodic, spec.injectivity_radius)?;
        match &spec.bounds {
            Some(b) => p.with_bounds(b.clone()),
            None => Ok(p),
        }
    }

    pub fn from_json(src: &str) -> Result<Self> {
        let spec: PatchSpec = serde_json::from_str(src)?;
        FilteredPatch::from_spec(&spec)
    }

    pub fn to_spec(&self) -> PatchSpec {
        PatchSpec {
            name: Some(self.name.clone()),
            dim: self.dim,
            depth: self.depth,
            periodic: self.periodic,
            frame: self
                .frame
                .iter()
                .map(|f| FieldSpec { coeffs: f.coeffs.iter().map(|c| c.to_string()).collect() })
                .collect(),
            orders: self.orders.clone(),
            injectivity_radius: self.injectivity_radius,
            bounds: self.bounds.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn periodic(&self) -> bool {
        self.periodic
    }

    pub fn frame(&self) -> &[VectorField] {
        &self.frame
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    pub fn injectivity_radius(&self) -> f64 {
        self.injectivity_radius
    }

    /// Size of a dilated fibre vector against the injectivity radius: the
    /// sup norm on periodic patches (the chart is injective on the open
    /// cube), the Euclidean norm otherwise.
    pub fn chart_norm(&self, v: &[f64]) -> f64 {
        if self.periodic {
            v.iter().map(|a| a.abs()).fold(0.0, f64::max)
        } else {
            v.iter().map(|a| a * a).sum::<f64>().sqrt()
        }
    }

    pub fn homogeneous_dimension(&self) -> u32 {
        self.orders.iter().sum()
    }

    /// Row `i` holds the coefficients of `X_i`.
    pub fn frame_matrix(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.frame.iter().map(|f| f.eval(x)).collect()
    }

    /// Symbolic determinant of the frame matrix.
    pub fn determinant(&self) -> Expr {
        let m: Vec<Vec<Expr>> = self.frame.iter().map(|f| f.coeffs.clone()).collect();
        det(&m, self.dim)
    }

    /// Frame coordinates of `v` scaled by the determinant: `adj(Fᵀ) v`.
    fn scaled_frame_coords(&self, v: &VectorField) -> Vec<Expr> {
        let n = self.dim;
        // Column l of Fᵀ is X_l; cofactor expansion solves Fᵀ a = v by Cramer.
        let ft: Vec<Vec<Expr>> = (0..n).map(|r| (0..n).map(|c| self.frame[c].coeffs[r].clone()).collect()).collect();
        (0..n)
            .map(|k| {
                let mut m = ft.clone();
                for (r, row) in m.iter_mut().enumerate() {
                    row[k] = v.coeffs[r].clone();
                }
                det(&m, n)
            })
            .collect()
    }

    /// Checks the frame on a sample grid and the closure
    /// `[Γ(H^i), Γ(H^j)] ⊂ Γ(H^{i+j})` symbolically.
    pub fn check_filtration(&self) -> Result<std::result::Result<(), FiltrationViolation>> {
        self.check_frame()?;
        for i in 0..self.dim {
            for j in i + 1..self.dim {
                let b = self.frame[i].bracket(&self.frame[j]);
                let coords = self.scaled_frame_coords(&b);
                for (k, c) in coords.iter().enumerate() {
                    if self.orders[k] > self.orders[i] + self.orders[j] && !c.is_zero() {
                        let d = self.determinant();
                        let shown = match d.as_constant() {
                            Some(dc) => c.scale(&(BigRational::from_integer(1.into()) / dc)).to_string(),
                            None => format!("({c})/({d})"),
                        };
                        return Ok(Err(FiltrationViolation { i, j, k, coefficient: shown }));
                    }
                }
            }
        }
        Ok(Ok(()))
    }

    /// Sample points used for frame and injectivity checks.
    pub fn sample_points(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let per_axis = per_axis.max(2);
        let range = |k: usize| match (&self.bounds, self.periodic) {
            (Some(b), _) => b[k],
            (None, true) => (0.0, 2.0 * std::f64::consts::PI),
            (None, false) => (-1.0, 1.0),
        };
        let mut pts = vec![Vec::new()];
        for k in 0..self.dim {
            let (a, b) = range(k);
            let mut next = Vec::new();
            for p in &pts {
                for s in 0..per_axis {
                    let mut q: Vec<f64> = p.clone();
                    q.push(a + (b - a) * s as f64 / (per_axis - 1) as f64);
                    next.push(q);
                }
            }
            pts = next;
        }
        pts
    }

    pub fn check_frame(&self) -> Result<()> {
        let per_axis = match self.dim {
            1 | 2 => 9,
            3 => 6,
            _ => 4,
        };
        let d = self.determinant();
        for p in self.sample_points(per_axis) {
            let v = d.eval(&p);
            if v.abs() < 1e-9 {
                return Err(Error::DegenerateFrame { point: p, det: v });
            }
        }
        Ok(())
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Malformed(format!("point has {} coordinates, patch has {}", x.len(), self.dim)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("point {x:?} is not finite")));
        }
        if let Some(b) = &self.bounds {
            if x.iter().zip(b).any(|(v, (lo, hi))| v < lo || v > hi) {
                return Err(Error::Domain(format!("point {x:?} lies outside the patch")));
            }
        }
        Ok(())
    }

    /// Frame coordinates of `[X_i, X_j]`, available when the frame
    /// determinant is a nonzero constant.
    pub fn bracket_coefficients(&self, i: usize, j: usize) -> Result<Vec<Expr>> {
        let d = self
            .determinant()
            .as_constant()
            .filter(|c| !c.is_zero())
            .ok_or_else(|| Error::Malformed(format!("patch `{}` needs a constant frame determinant", self.name)))?;
        let inv = BigRational::from_integer(1.into()) / d;
        let b = self.frame[i].bracket(&self.frame[j]);
        Ok(self.scaled_frame_coords(&b).iter().map(|c| c.scale(&inv)).collect())
    }

    /// Structure constants of the osculating algebra as functions of `x`
    /// (entries with `d_k != d_i + d_j` are dropped).
    pub fn osculating_constant_exprs(&self) -> Result<Vec<Vec<Vec<Expr>>>> {
        let n = self.dim;
        let mut out = vec![vec![vec![Expr::zero(n); n]; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let c = self.bracket_coefficients(i, j)?;
                for k in 0..n {
                    if self.orders[k] == self.orders[i] + self.orders[j] {
                        out[i][j][k] = c[k].clone();
                        out[j][i][k] = c[k].neg();
                    }
                }
            }
        }
        Ok(out)
    }

    /// The graded nilpotent Lie algebra `𝔱_H M` at `x`.
    pub fn osculating_at(&self, x: &[f64]) -> Result<OsculatingFibre> {
        self.check_point(x)?;
        let n = self.dim;
        let xq: Vec<BigRational> =
            x.iter().map(|v| BigRational::from_f64(*v).expect("finite")).collect();
        let d = self.determinant();
        let det_exact = d.eval_exact(&xq);
        let detv = d.eval(x);
        if detv.abs() < 1e-12 {
            return Err(Error::DegenerateFrame { point: x.to_vec(), det: detv });
        }
        let mut c = vec![vec![vec![BigRational::zero(); n]; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let b = self.frame[i].bracket(&self.frame[j]);
                let coords = self.scaled_frame_coords(&b);
                for k in 0..n {
                    if self.orders[k] != self.orders[i] + self.orders[j] || coords[k].is_zero() {
                        continue;
                    }
                    let v = match (coords[k].eval_exact(&xq), &det_exact) {
                        (Some(num), Some(den)) => num / den.clone(),
                        _ => approximate_rational(coords[k].eval(x) / detv),
                    };
                    c[i][j][k] = v.clone();
                    c[j][i][k] = -v;
                }
            }
        }
        let algebra = GradedLieAlgebra::from_dense(self.orders.clone(), c)?;
        if let Err(v) = algebra.validate() {
            return Err(Error::Domain(format!(
                "osculating algebra at {x:?} is not exactly representable: {v}"
            )));
        }
        Ok(OsculatingFibre { base_point: x.to_vec(), algebra })
    }

    /// `ψ(ξ) = Σ_j ξ_j X_j(x)`.
    pub fn splitting(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for (f, s) in self.frame.iter().zip(xi) {
            if *s == 0.0 {
                continue;
            }
            for (vk, fk) in v.iter_mut().zip(f.eval(x)) {
                *vk += s * fk;
            }
        }
        v
    }

    pub fn dilate(&self, lambda: f64, xi: &[f64]) -> Vec<f64> {
        xi.iter().zip(&self.orders).map(|(x, &d)| x * lambda.powi(d as i32)).collect()
    }

    /// The chart `(x, ξ, t) ↦ (x, exp_x(-ψ(δ_t ξ)), t)` for `t != 0` and
    /// `(x, ξ)` in the osculating fibre for `t = 0`. The exponential is the
    /// time-one flow of the frame combination `-Σ_j (δ_t ξ)_j X_j`.
    pub fn exp_chart(&self, x: &[f64], xi: &[f64], t: f64) -> Result<ChartPoint> {
        self.check_point(x)?;
        if xi.len() != self.dim {
            return Err(Error::Malformed(format!("graded coordinates have length {}, expected {}", xi.len(), self.dim)));
        }
        if t == 0.0 {
            return Ok(ChartPoint::Fibre { x: x.to_vec(), xi: xi.to_vec() });
        }
        let v = self.dilate(t, xi);
        let r = self.chart_norm(&v);
        if r >= self.injectivity_radius {
            return Err(Error::Domain(format!(
                "|δ_t ξ| = {r} is outside the injectivity radius {}",
                self.injectivity_radius
            )));
        }
        let coeffs: Vec<f64> = v.iter().map(|a| -a).collect();
        let y = self.flow(x, &coeffs, 1.0)?;
        Ok(ChartPoint::Pair { x: x.to_vec(), y })
    }

    /// Integrates `dy/ds = Σ_j a_j X_j(y)` from `y(0) = x` up to `s = time`
    /// with step-doubling RK4.
    pub fn flow(&self, x: &[f64], a: &[f64], time: f64) -> Result<Vec<f64>> {
        let field = |y: &[f64]| self.splitting(y, a);
        let step = |y: &[f64], h: f64| -> Vec<f64> {
            let k1 = field(y);
            let y2: Vec<f64> = y.iter().zip(&k1).map(|(p, k)| p + 0.5 * h * k).collect();
            let k2 = field(&y2);
            let y3: Vec<f64> = y.iter().zip(&k2).map(|(p, k)| p + 0.5 * h * k).collect();
            let k3 = field(&y3);
            let y4: Vec<f64> = y.iter().zip(&k3).map(|(p, k)| p + h * k).collect();
            let k4 = field(&y4);
            (0..y.len()).map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
        };
        let tol = 1e-14;
        let mut y = x.to_vec();
        let mut s = 0.0;
        let mut h = time / 8.0;
        let mut iterations = 0usize;
        while s < time {
            iterations += 1;
            if iterations > 1_000_000 {
                return Err(Error::NonConvergent("frame flow did not reach time 1".into()));
            }
            if s + h > time {
                h = time - s;
            }
            let full = step(&y, h);
            let half = step(&step(&y, 0.5 * h), 0.5 * h);
            let scale = 1.0 + half.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let err = half.iter().zip(&full).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / 15.0;
            if err <= tol * scale || h < 1e-12 {
                y = half.iter().zip(&full).map(|(a, b)| a + (a - b) / 15.0).collect();
                s += h;
                if err < 0.01 * tol * scale {
                    h *= 2.0;
                }
            } else {
                h *= 0.5;
            }
        }
        Ok(y)
    }

    /// Samples `ξ` on a grid inside the injectivity ball and reports the
    /// smallest distance between distinct chart images.
    pub fn injectivity_check(&self, x: &[f64], t: f64, per_axis: usize) -> Result<f64> {
        let r = self.injectivity_radius * 0.999;
        let mut xis = vec![Vec::new()];
        for _ in 0..self.dim {
            let mut next = Vec::new();
            for p in &xis {
                for s in 0..per_axis {
                    let mut q: Vec<f64> = p.clone();
                    q.push(-r + 2.0 * r * (s as f64 + 0.5) / per_axis as f64);
                    next.push(q);
                }
            }
            xis = next;
        }
        let mut images = Vec::new();
        for xi in xis {
            let v = self.dilate(t, &xi);
            if self.chart_norm(&v) >= self.injectivity_radius {
                continue;
            }
            if let ChartPoint::Pair { y, .. } = self.exp_chart(x, &xi, t)? {
                images.push(y);
            }
        }
        let two_pi = 2.0 * std::f64::consts::PI;
        let dist = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .map(|(p, q)| {
                    let mut d = (p - q).abs();
                    if self.periodic {
                        d %= two_pi;
                        d = d.min(two_pi - d);
                    }
                    d
                })
                .fold(0.0, f64::max)
        };
        let mut min = f64::INFINITY;
        for i in 0..images.len() {
            for j in i + 1..images.len() {
                min = min.min(dist(&images[i], &images[j]));
            }
        }
        Ok(min)
    }
}

fn det(m: &[Vec<Expr>], n: usize) -> Expr {
    if n == 1 {
        return m[0][0].clone();
    }
    let nv = m[0][0].nvars();
    let mut out = Expr::zero(nv);
    for c in 0..n {
        if m[0][c].is_zero() {
            continue;
        }
        let minor: Vec<Vec<Expr>> = m[1..]
            .iter()
            .map(|row| row.iter().enumerate().filter(|(k, _)| *k != c).map(|(_, e)| e.clone()).collect())
            .collect();
        let term = m[0][c].mul(&det(&minor, n - 1));
        out = if c % 2 == 0 { out.add(&term) } else { out.sub(&term) };
    }
    out
}

/// Continued-fraction approximation within `1e-12`, falling back to the
/// exact binary value.
fn approximate_rational(v: f64) -> BigRational {
    let exact = BigRational::from_f64(v).unwrap_or_else(BigRational::zero);
    let (mut h0, mut h1) = (num_bigint::BigInt::from(0), num_bigint::BigInt::from(1));
    let (mut k0, mut k1) = (num_bigint::BigInt::from(1), num_bigint::BigInt::from(0));
    let mut r = exact.clone();
    for _ in 0..40 {
        let a = r.floor();
        let ai = a.to_integer();
        let h2 = &ai * &h1 + &h0;
        let k2 = &ai * &k1 + &k0;
        h0 = std::mem::replace(&mut h1, h2);
        k0 = std::mem::replace(&mut k1, k2);
        let approx = BigRational::new(h1.clone(), k1.clone());
        if (rational_to_f64(&approx) - v).abs() <= 1e-12 * (1.0 + v.abs()) {
            return approx;
        }
        let frac = r - a;
        if frac.is_zero() {
            break;
        }
        r = BigRational::from_integer(1.into()) / frac;
    }
    exact
}

/// Shipped patches.
pub mod catalog {
    use super::*;

    fn field(src: &[&str]) -> VectorField {
        let n = src.len();
        VectorField { coeffs: src.iter().map(|s| Expr::parse(s, n).expect("catalog expression")).collect() }
    }

    /// Coordinate frame on `ℝⁿ` (or `𝕋ⁿ`), all orders 1.
    pub fn trivial(n: usize, periodic: bool) -> FilteredPatch {
        let frame = (0..n)
            .map(|i| VectorField {
                coeffs: (0..n).map(|k| if k == i { Expr::one(n) } else { Expr::zero(n) }).collect(),
            })
            .collect();
        let radius = if periodic { std::f64::consts::PI } else { 1e6 };
        let name = if periodic { format!("torus{n}") } else { format!("trivial{n}") };
        FilteredPatch::new(&name, frame, vec![1; n], 1, periodic, radius).expect("trivial patch")
    }

    /// `X = ∂x - (y/2)∂z`, `Y = ∂y + (x/2)∂z`, `Z = ∂z` with orders (1, 1, 2).
    pub fn heisenberg() -> FilteredPatch {
        let frame = vec![field(&["1", "0", "-y/2"]), field(&["0", "1", "x/2"]), field(&["0", "0", "1"])];
        FilteredPatch::new("heis", frame, vec![1, 1, 2], 2, false, 1e6).expect("heisenberg patch")
    }

    /// The Heisenberg frame with `Z` declared of order 3, so that
    /// `[X, Y] = Z` leaves `H²`.
    pub fn heisenberg_misfiltered() -> FilteredPatch {
        let mut p = heisenberg();
        p.orders = vec![1, 1, 3];
        p.depth = 3;
        p.name = "heis_bad".into();
        p
    }

    /// `X1 = ∂1`, `X2 = ∂2 + x1 ∂3 + (x1²/2) ∂4`, `X3 = ∂3 + x1 ∂4`, `X4 = ∂4`.
    pub fn engel() -> FilteredPatch {
        let frame = vec![
            field(&["1", "0", "0", "0"]),
            field(&["0", "1", "x0", "x0^2/2"]),
            field(&["0", "0", "1", "x0"]),
            field(&["0", "0", "0", "1"]),
        ];
        FilteredPatch::new("engel", frame, vec![1, 1, 2, 3], 3, false, 1e6).expect("engel patch")
    }

    pub fn by_name(name: &str) -> Option<FilteredPatch> {
        match name {
            "heis" | "heisenberg" => Some(heisenberg()),
            "heis_bad" => Some(heisenberg_misfiltered()),
            "engel" => Some(engel()),
            _ => {
                if let Some(d) = name.strip_prefix("trivial") {
                    d.parse().ok().map(|n| trivial(n, false))
                } else if let Some(d) = name.strip_prefix("torus") {
                    d.parse().ok().map(|n| trivial(n, true))
                } else {
                    None
                }
            }
        }
    }
}
