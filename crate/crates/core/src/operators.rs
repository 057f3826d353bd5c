//! Discrete differential operators on cut-cell grids: gradients, Hessians,
//! the monotone wide-stencil Monge-Ampere operator, and 2x2 linear algebra.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Grid, GridFunction, Point};

/// Default threshold below which a Hessian is treated as singular.
pub const EPS_SINGULAR: f64 = 1e-12;

/// Symmetric 2x2 matrix; the off-diagonal entry is stored once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 { a11: 1.0, a12: 0.0, a22: 1.0 };

    pub fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Sym2 { a11, a12, a22 }
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Sym2::new(a, 0.0, b)
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    /// `v^T A v`.
    pub fn quad(&self, v: Point) -> f64 {
        self.a11 * v[0] * v[0] + 2.0 * self.a12 * v[0] * v[1] + self.a22 * v[1] * v[1]
    }

    /// `v^T A w`.
    pub fn bilinear(&self, v: Point, w: Point) -> f64 {
        self.a11 * v[0] * w[0] + self.a12 * (v[0] * w[1] + v[1] * w[0]) + self.a22 * v[1] * w[1]
    }

    pub fn apply(&self, v: Point) -> Point {
        [self.a11 * v[0] + self.a12 * v[1], self.a12 * v[0] + self.a22 * v[1]]
    }

    /// Spectral norm, i.e. the largest eigenvalue magnitude.
    pub fn norm(&self) -> f64 {
        let (lo, hi) = eig_2x2(self);
        lo.abs().max(hi.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a22.is_finite()
    }
}

/// Eigenvalues `(λ_min, λ_max)` of a symmetric 2x2 matrix.
pub fn eig_2x2(m: &Sym2) -> (f64, f64) {
    let mean = 0.5 * (m.a11 + m.a22);
    let disc = (0.5 * (m.a11 - m.a22)).hypot(m.a12).max(0.0);
    (mean - disc, mean + disc)
}

/// Inverse through the adjugate. Fails when `det ≤ eps`.
pub fn cofactor_inverse(m: &Sym2, eps: f64) -> Result<Sym2> {
    let det = m.det();
    if !(det > eps) {
        return Err(Error::SingularHessian { det, eps });
    }
    Ok(Sym2::new(m.a22 / det, -m.a12 / det, m.a11 / det))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StencilWidth {
    /// Axis directions only.
    #[serde(rename = "1")]
    Axes,
    /// Axes and diagonals.
    #[serde(rename = "2")]
    AxesAndDiagonals,
}

impl StencilWidth {
    pub fn from_width(w: u32) -> Option<Self> {
        match w {
            1 => Some(StencilWidth::Axes),
            2 => Some(StencilWidth::AxesAndDiagonals),
            _ => None,
        }
    }

    pub fn width(self) -> u32 {
        match self {
            StencilWidth::Axes => 1,
            StencilWidth::AxesAndDiagonals => 2,
        }
    }

    /// Orthogonal direction pairs, as indices into [`crate::geometry::DIRECTIONS`].
    pub fn pairs(self) -> &'static [(usize, usize)] {
        match self {
            StencilWidth::Axes => &[(0, 1)],
            StencilWidth::AxesAndDiagonals => &[(0, 1), (2, 3)],
        }
    }
}

/// Discretisation of `det D²u` used by the time steppers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaScheme {
    /// Wide-stencil monotone operator.
    Monotone(StencilWidth),
    /// Determinant of the central Hessian. Not monotone; kept as a negative control.
    Central,
}

impl Default for MaScheme {
    fn default() -> Self {
        MaScheme::Monotone(StencilWidth::AxesAndDiagonals)
    }
}

/// Second difference of `u` at interior node `k` along stencil direction `dir`,
/// with the non-uniform three-point weights on shortened arms.
#[inline]
pub fn second_difference(grid: &Grid, u: &[f64], k: usize, dir: usize) -> f64 {
    let arms = grid.arms(k);
    let (p, m) = (arms[2 * dir], arms[2 * dir + 1]);
    let u0 = u[k];
    2.0 / (p.length + m.length) * ((u[p.target] - u0) / p.length + (u[m.target] - u0) / m.length)
}

/// Coefficient of `-u(k)` in [`second_difference`], i.e. `2 / (l+ l-)`.
#[inline]
fn center_weight(grid: &Grid, k: usize, dir: usize) -> f64 {
    let arms = grid.arms(k);
    2.0 / (arms[2 * dir].length * arms[2 * dir + 1].length)
}

/// Three-point first difference along direction `dir`; exact for quadratics.
#[inline]
pub fn first_difference(grid: &Grid, u: &[f64], k: usize, dir: usize) -> f64 {
    let arms = grid.arms(k);
    let (p, m) = (arms[2 * dir], arms[2 * dir + 1]);
    let u0 = u[k];
    let (lp, lm) = (p.length, m.length);
    (lm * lm * (u[p.target] - u0) - lp * lp * (u[m.target] - u0)) / (lp * lm * (lp + lm))
}

#[inline]
fn pair_value(a: f64, b: f64) -> f64 {
    a.max(0.0) * b.max(0.0) + a.min(0.0) + b.min(0.0)
}

/// Monotone Monge-Ampere value at interior node `k`:
/// the minimum over direction pairs of `a⁺ b⁺ + a⁻ + b⁻`.
#[inline]
pub fn monotone_ma_at(grid: &Grid, u: &[f64], k: usize, width: StencilWidth) -> f64 {
    width
        .pairs()
        .iter()
        .map(|&(d1, d2)| pair_value(second_difference(grid, u, k, d1), second_difference(grid, u, k, d2)))
        .fold(f64::INFINITY, f64::min)
}

#[inline]
pub fn hessian_at(grid: &Grid, u: &[f64], k: usize) -> Sym2 {
    let d11 = second_difference(grid, u, k, 0);
    let d22 = second_difference(grid, u, k, 1);
    let dd = second_difference(grid, u, k, 2);
    let da = second_difference(grid, u, k, 3);
    Sym2::new(d11, 0.5 * (dd - da), d22)
}

#[inline]
pub fn gradient_at(grid: &Grid, u: &[f64], k: usize) -> Point {
    [first_difference(grid, u, k, 0), first_difference(grid, u, k, 1)]
}

#[inline]
pub fn ma_at(grid: &Grid, u: &[f64], k: usize, scheme: MaScheme) -> f64 {
    match scheme {
        MaScheme::Monotone(w) => monotone_ma_at(grid, u, k, w),
        MaScheme::Central => hessian_at(grid, u, k).det(),
    }
}

/// Upper bound on `-∂ MA_h / ∂u(k)`, the Lipschitz constant of the monotone
/// operator with respect to the centre value. For a pair with second
/// differences `a`, `b` and centre weights `c_a`, `c_b` this is
/// `c_a max(b⁺, 1) + c_b max(a⁺, 1)`; the operator's bound is the maximum over pairs.
pub fn center_sensitivity(grid: &Grid, u: &[f64], k: usize, scheme: MaScheme) -> f64 {
    match scheme {
        MaScheme::Monotone(width) => width
            .pairs()
            .iter()
            .map(|&(d1, d2)| {
                let a = second_difference(grid, u, k, d1);
                let b = second_difference(grid, u, k, d2);
                center_weight(grid, k, d1) * b.max(1.0) + center_weight(grid, k, d2) * a.max(1.0)
            })
            .fold(0.0, f64::max),
        MaScheme::Central => {
            // Same bound applied to the axis pair, which carries the centre weight.
            let a = second_difference(grid, u, k, 0);
            let b = second_difference(grid, u, k, 1);
            center_weight(grid, k, 0) * b.abs().max(1.0) + center_weight(grid, k, 1) * a.abs().max(1.0)
        }
    }
}

/// Hessians and gradients at every interior node.
#[derive(Debug, Clone)]
pub struct HessianField {
    pub hessian: Vec<Sym2>,
    pub gradient: Vec<Point>,
}

impl HessianField {
    /// Per-node `(λ_min, λ_max)`.
    pub fn eigenvalues(&self) -> Vec<(f64, f64)> {
        self.hessian.iter().map(eig_2x2).collect()
    }
}

pub fn gradient_central(u: &GridFunction) -> Vec<Point> {
    let grid = u.grid();
    let vals = u.values();
    (0..grid.n_interior()).into_par_iter().map(|k| gradient_at(grid, vals, k)).collect()
}

pub fn hessian_central(u: &GridFunction) -> HessianField {
    let grid = u.grid();
    let vals = u.values();
    let (hessian, gradient) = (0..grid.n_interior())
        .into_par_iter()
        .map(|k| (hessian_at(grid, vals, k), gradient_at(grid, vals, k)))
        .unzip();
    HessianField { hessian, gradient }
}

/// Monotone `MA_h[u]` at every interior node.
pub fn det_d2_monotone(u: &GridFunction, width: StencilWidth) -> Vec<f64> {
    let grid = u.grid();
    let vals = u.values();
    (0..grid.n_interior()).into_par_iter().map(|k| monotone_ma_at(grid, vals, k, width)).collect()
}
