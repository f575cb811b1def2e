//! Fundamental solution of the sublaplacian `L = -(X² + Y²)` on the
//! Heisenberg group in exponential coordinates, with `X = ∂x - (y/2)∂z`,
//! `Y = ∂y + (x/2)∂z`.
//!
//! The ansatz `Γ = c (r⁴ + κ z²)^{-1/2}` is homogeneous of weight
//! `2 - d_H = -2`. The shape parameter `κ` is fitted so that `LΓ` vanishes
//! away from the identity, and `c` so that `⟨Γ, Lφ⟩ = φ(0)` for the Gaussian
//! `φ = e^{-(r² + z²)}`, for which `Lφ = (4 - r²(7/2 + z²)) φ`.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use serde::Serialize;

use crate::graded_nilpotent::homogeneous_norm;

pub type Point = [f64; 3];

pub const ORDERS: [u32; 3] = [1, 1, 2];

/// `a · b` by the Baker–Campbell–Hausdorff formula of the algebra `[X, Y] = Z`.
pub fn group_mul(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2] + 0.5 * (a[0] * b[1] - a[1] * b[0])]
}

pub fn group_inv(a: Point) -> Point {
    [-a[0], -a[1], -a[2]]
}

pub fn gauge(g: Point) -> f64 {
    homogeneous_norm(&ORDERS, &g)
}

pub fn gaussian(p: Point) -> f64 {
    (-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])).exp()
}

/// `Lφ` for the Gaussian test function, in closed form.
pub fn gaussian_sublaplacian(p: Point) -> f64 {
    let r2 = p[0] * p[0] + p[1] * p[1];
    (4.0 - r2 * (3.5 + p[2] * p[2])) * gaussian(p)
}

const STENCIL: [f64; 7] = [1.0 / 90.0, -3.0 / 20.0, 1.5, -49.0 / 18.0, 1.5, -3.0 / 20.0, 1.0 / 90.0];

/// `(-(X² + Y²) f, |X² f| + |Y² f|)` at `g` by sixth-order differences along
/// the left-invariant lines `s ↦ g · exp(sX)`, which are straight in these
/// coordinates.
pub fn sublaplacian(f: impl Fn(Point) -> f64, g: Point, h: f64) -> (f64, f64) {
    let dirs = [[1.0, 0.0, -g[1] / 2.0], [0.0, 1.0, g[0] / 2.0]];
    let mut total = 0.0;
    let mut scale = 0.0;
    for d in dirs {
        let second: f64 = STENCIL
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let s = (i as f64 - 3.0) * h;
                c * f([g[0] + s * d[0], g[1] + s * d[1], g[2] + s * d[2]])
            })
            .sum::<f64>()
            / (h * h);
        total -= second;
        scale += second.abs();
    }
    (total, scale)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FundamentalSolution {
    pub kappa: f64,
    pub constant: f64,
}

/// `(r⁴ + κ z²)^{-1/2}`.
pub fn profile(kappa: f64, g: Point) -> f64 {
    let r2 = g[0] * g[0] + g[1] * g[1];
    (r2 * r2 + kappa * g[2] * g[2]).sqrt().recip()
}

impl FundamentalSolution {
    pub fn eval(&self, g: Point) -> f64 {
        self.constant * profile(self.kappa, g)
    }
}

/// Points `(i/n, j/n, k/n²)` with `|i|, |j| ≤ n` and `|k| ≤ n²`, so that
/// `δ_2` maps grid points to grid points.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulationGrid {
    pub n: i64,
}

impl TabulationGrid {
    pub fn shape(&self) -> [usize; 3] {
        let a = (2 * self.n + 1) as usize;
        [a, a, (2 * self.n * self.n + 1) as usize]
    }

    pub fn point(&self, i: i64, j: i64, k: i64) -> Point {
        let n = self.n as f64;
        [i as f64 / n, j as f64 / n, k as f64 / (n * n)]
    }

    pub fn indices(&self) -> impl Iterator<Item = (i64, i64, i64)> + '_ {
        let n = self.n;
        (-n..=n).flat_map(move |i| (-n..=n).flat_map(move |j| (-n * n..=n * n).map(move |k| (i, j, k))))
    }

    pub fn contains(&self, i: i64, j: i64, k: i64) -> bool {
        i.abs() <= self.n && j.abs() <= self.n && k.abs() <= self.n * self.n
    }

    /// Grid points with `‖g‖_H ≥ r`.
    pub fn points_beyond(&self, r: f64) -> Vec<Point> {
        self.indices().map(|(i, j, k)| self.point(i, j, k)).filter(|&g| gauge(g) >= r).collect()
    }
}

/// FD step relative to the local scale `‖g‖_H`.
const STEP_FRACTION: f64 = 1.0 / 128.0;

/// Largest `|LΓ̃_κ| ‖g‖²_H / Γ̃_κ` over `points`, i.e. the residual against
/// the natural size of second derivatives of a weight `-2` function.
pub fn relative_residual(kappa: f64, points: &[Point]) -> f64 {
    points
        .iter()
        .map(|&g| {
            let r = gauge(g);
            let (v, _) = sublaplacian(|p| profile(kappa, p), g, STEP_FRACTION * r);
            v.abs() * r * r / profile(kappa, g)
        })
        .fold(0.0, f64::max)
}

/// Golden-section minimization of [`relative_residual`] over `[lo, hi]`.
pub fn fit_kappa(points: &[Point], lo: f64, hi: f64, tol: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (relative_residual(c, points), relative_residual(d, points));
    while b - a > tol * (1.0 + a.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = relative_residual(c, points);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = relative_residual(d, points);
        }
    }
    (a + b) / 2.0
}

fn composite(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(order).expect("positive order"));
    let w = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let (lo, hi) = (a + p as f64 * w, a + (p + 1) as f64 * w);
        for &(x, wt) in rule.as_node_weight_pairs() {
            out.push((0.5 * ((hi - lo) * x + hi + lo), 0.5 * (hi - lo) * wt));
        }
    }
    out
}

/// `∫ (r⁴ + κz²)^{-1/2} Lφ` in the coordinates `r² = s cos ψ`,
/// `√κ z = s sin ψ`, where the singular factor cancels the Jacobian.
pub fn mass_integral(kappa: f64) -> f64 {
    let sk = kappa.sqrt();
    let s_nodes = composite(0.0, 10.0 * sk + 10.0, 48, 16);
    let psi_nodes = composite(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2, 16, 16);
    let mut total = 0.0;
    for &(psi, wp) in &psi_nodes {
        let (c, s_) = (psi.cos(), psi.sin());
        let mut inner = 0.0;
        for &(s, ws) in &s_nodes {
            let u = s * c;
            let z = s * s_ / sk;
            inner += ws * (4.0 - u * (3.5 + z * z)) * (-u - z * z).exp();
        }
        total += wp * inner;
    }
    std::f64::consts::PI / sk * total
}

/// `(Γ * Lφ)(g₀) = ∫ Γ(h) Lφ(h^{-1} g₀) dh` in homogeneous polar
/// coordinates `h = (s√cos ψ cos θ, s√cos ψ sin θ, s² sin ψ / √κ)`, with
/// `ψ = (π/2) sin(πv/2)` to smooth the square root at the poles.
pub fn convolve_with_gaussian_sublaplacian(gamma: &FundamentalSolution, g0: Point) -> f64 {
    let sk = gamma.kappa.sqrt();
    let s_nodes = composite(0.0, 9.0, 12, 20);
    let v_nodes = composite(-1.0, 1.0, 8, 20);
    let n_theta = 96;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut total = 0.0;
    for &(v, wv) in &v_nodes {
        let psi = half_pi * (half_pi * v).sin();
        let dpsi = half_pi * half_pi * (half_pi * v).cos();
        let (rc, sz) = (psi.cos().max(0.0).sqrt(), psi.sin());
        for it in 0..n_theta {
            let theta = 2.0 * std::f64::consts::PI * it as f64 / n_theta as f64;
            let (ct, st) = (theta.cos(), theta.sin());
            let mut inner = 0.0;
            for &(s, ws) in &s_nodes {
                let h = [s * rc * ct, s * rc * st, s * s * sz / sk];
                inner += ws * s * gaussian_sublaplacian(group_mul(group_inv(h), g0));
            }
            total += wv * dpsi * inner;
        }
    }
    total * 2.0 * std::f64::consts::PI / n_theta as f64 * gamma.constant / sk
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeisenbergReport {
    pub kappa: f64,
    pub constant: f64,
    pub weight: f64,
    pub grid_n: i64,
    pub residual_radius: f64,
    pub points_checked: usize,
    /// `max |LΓ|` over grid points with `‖g‖_H ≥ residual_radius`.
    pub residual_max: f64,
    pub residual_relative: f64,
    pub homogeneity_defect: f64,
    /// `(g₀, (Γ * Lφ)(g₀), φ(g₀))`.
    pub convolution: Vec<(Point, f64, f64)>,
    pub convolution_error: f64,
    pub pass: bool,
}

/// Largest relative defect of `Γ(δ_λ g) = λ^{-2} Γ(g)` on the grid for
/// `λ ∈ {2, 4}`.
pub fn homogeneity_defect(grid: &TabulationGrid, gamma: &FundamentalSolution) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, j, k) in grid.indices() {
        if (i, j, k) == (0, 0, 0) {
            continue;
        }
        for l in [2i64, 4] {
            let (a, b, c) = (l * i, l * j, l * l * k);
            if !grid.contains(a, b, c) {
                continue;
            }
            let lhs = gamma.eval(grid.point(a, b, c));
            let rhs = gamma.eval(grid.point(i, j, k)) / (l * l) as f64;
            worst = worst.max((lhs - rhs).abs() / rhs.abs());
        }
    }
    worst
}

/// Fits `κ` on a sub-sample, fixes `c` by the mass oracle and checks the
/// residual on every grid point beyond `radius`.
pub fn heisenberg_demo(n: i64, radius: f64) -> HeisenbergReport {
    let grid = TabulationGrid { n };
    let points = grid.points_beyond(radius);
    let sample: Vec<Point> = points.iter().step_by(7).copied().collect();
    let kappa = fit_kappa(&sample, 1.0, 64.0, 1e-9);
    let gamma = FundamentalSolution { kappa, constant: 1.0 / mass_integral(kappa) };
    let (mut residual_max, mut residual_relative) = (0.0f64, 0.0f64);
    for &g in &points {
        let r = gauge(g);
        let (v, _) = sublaplacian(|p| gamma.eval(p), g, STEP_FRACTION * r);
        residual_max = residual_max.max(v.abs());
        residual_relative = residual_relative.max(v.abs() * r * r / gamma.eval(g));
    }
    let probes: [Point; 4] = [[0.0, 0.0, 0.0], [0.3, -0.2, 0.1], [0.5, 0.5, -0.4], [-0.7, 0.1, 0.6]];
    let convolution: Vec<(Point, f64, f64)> =
        probes.iter().map(|&g| (g, convolve_with_gaussian_sublaplacian(&gamma, g), gaussian(g))).collect();
    let convolution_error = convolution.iter().map(|(_, a, b)| (a - b).abs()).fold(0.0, f64::max);
    let homogeneity = homogeneity_defect(&grid, &gamma);
    let pass = residual_max < 1e-4 && homogeneity < 1e-12 && convolution_error < 1e-6;
    HeisenbergReport {
        kappa,
        constant: gamma.constant,
        weight: 2.0 - 4.0,
        grid_n: n,
        residual_radius: radius,
        points_checked: points.len(),
        residual_max,
        residual_relative,
        homogeneity_defect: homogeneity,
        convolution,
        convolution_error,
        pass,
    }
}

/// `Γ` on the tabulation grid in `[i][j][k]` order; `+inf` at the identity.
pub fn tabulate(grid: &TabulationGrid, gamma: &FundamentalSolution) -> Vec<f64> {
    grid.indices().map(|(i, j, k)| gamma.eval(grid.point(i, j, k))).collect()
}
