//! Discrete Legendre-Fenchel transform `U(y) = max_x (y·x - u(x))` over all grid nodes,
//! its biconjugate, and the residual of the dual equation `-U_t - 1/det D²U + ψ(DU, t)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{GridFunction, Point};
use crate::operators::{det_d2_monotone, eig_2x2, gradient_central, StencilWidth, Sym2, EPS_SINGULAR};
use crate::problem::ProblemSpec;
use crate::stepper::SolutionTrace;

/// Relative padding of the gradient bounding box.
pub const DUAL_PADDING: f64 = 0.1;

/// Uniform lattice `y_ij = origin + (i, j) · spacing`, stored column-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualGrid {
    pub origin: Point,
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
}

/// Sublattice factor for primal spacing `h`: `ceil(h^{-1/2})`.
pub fn default_factor(h: f64) -> usize {
    (1.0 / h.sqrt()).ceil().max(1.0) as usize
}

fn gradient_box(u: &GridFunction) -> (Point, Point) {
    let g = gradient_central(u);
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for d in &g {
        for a in 0..2 {
            lo[a] = lo[a].min(d[a]);
            hi[a] = hi[a].max(d[a]);
        }
    }
    (lo, hi)
}

impl DualGrid {
    /// Smallest lattice of the given spacing (aligned to multiples of it) covering `[lo, hi]`.
    pub fn new(lo: Point, hi: Point, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::Range { key: "dual_spacing".into(), msg: format!("must be positive, got {spacing}") });
        }
        if !(lo[0] <= hi[0] && lo[1] <= hi[1]) || !lo.iter().chain(&hi).all(|v| v.is_finite()) {
            return Err(Error::DualGridTooSmall(format!("invalid box [{lo:?}, {hi:?}]")));
        }
        let i0 = (lo[0] / spacing).floor();
        let j0 = (lo[1] / spacing).floor();
        let nx = ((hi[0] / spacing).ceil() - i0) as usize + 1;
        let ny = ((hi[1] / spacing).ceil() - j0) as usize + 1;
        Ok(DualGrid { origin: [i0 * spacing, j0 * spacing], spacing, nx, ny })
    }

    /// Padded gradient box of every field, sampled at `factor · h`.
    pub fn covering(fields: &[&GridFunction], factor: usize) -> Result<Self> {
        let h = fields.first().ok_or_else(|| Error::DualGridTooSmall("no field given".into()))?.grid().h();
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for u in fields {
            let (l, r) = gradient_box(u);
            for a in 0..2 {
                lo[a] = lo[a].min(l[a]);
                hi[a] = hi[a].max(r[a]);
            }
        }
        for a in 0..2 {
            let pad = DUAL_PADDING * (hi[a] - lo[a]).max(h);
            lo[a] -= pad;
            hi[a] += pad;
        }
        DualGrid::new(lo, hi, factor as f64 * h)
    }

    /// Default dual grid for `u`: padded gradient box, spacing `ceil(h^{-1/2}) · h`.
    pub fn auto(u: &GridFunction) -> Result<Self> {
        DualGrid::covering(&[u], default_factor(u.grid().h()))
    }

    /// `DualGridTooSmall` unless the gradient range of `u` lies inside the box.
    pub fn check_covers(&self, u: &GridFunction) -> Result<()> {
        let (lo, hi) = gradient_box(u);
        let top = self.point(self.len() - 1);
        for (v, name) in [([lo[0], lo[1]], "lower-left"), ([hi[0], hi[1]], "upper-right")] {
            if v[0] < self.origin[0] || v[1] < self.origin[1] || v[0] > top[0] || v[1] > top[1] {
                return Err(Error::DualGridTooSmall(format!(
                    "{name} gradient vertex ({}, {}) outside [{}, {}] x [{}, {}]",
                    v[0], v[1], self.origin[0], top[0], self.origin[1], top[1]
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx / self.ny, idx % self.ny)
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Point {
        let (i, j) = self.ij(idx);
        [self.origin[0] + i as f64 * self.spacing, self.origin[1] + j as f64 * self.spacing]
    }

    pub fn points(&self) -> Vec<Point> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct DualField {
    pub grid: DualGrid,
    pub values: Vec<f64>,
    /// Primal node attaining the maximum (smallest index on ties).
    pub argmax: Vec<usize>,
    /// Number of primal interior nodes; larger argmax indices are boundary nodes.
    pub n_interior: usize,
    pub t: f64,
}

impl DualField {
    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn boundary_attained(&self, idx: usize) -> bool {
        self.argmax[idx] >= self.n_interior
    }

    /// Dual nodes whose 3x3 neighbourhood lies in the box and only has interior maximisers.
    pub fn valid_mask(&self) -> Vec<bool> {
        let g = &self.grid;
        (0..g.len())
            .map(|k| {
                let (i, j) = g.ij(k);
                if i == 0 || j == 0 || i + 1 >= g.nx || j + 1 >= g.ny {
                    return false;
                }
                (i - 1..=i + 1).all(|a| (j - 1..=j + 1).all(|b| !self.boundary_attained(g.index(a, b))))
            })
            .collect()
    }

    /// Central-difference Hessian at a node with a full stencil.
    pub fn hessian(&self, idx: usize) -> Option<Sym2> {
        let g = &self.grid;
        let (i, j) = g.ij(idx);
        if i == 0 || j == 0 || i + 1 >= g.nx || j + 1 >= g.ny {
            return None;
        }
        let v = |a: usize, b: usize| self.values[g.index(a, b)];
        let s2 = g.spacing * g.spacing;
        let u0 = v(i, j);
        Some(Sym2::new(
            (v(i + 1, j) - 2.0 * u0 + v(i - 1, j)) / s2,
            (v(i + 1, j + 1) - v(i + 1, j - 1) - v(i - 1, j + 1) + v(i - 1, j - 1)) / (4.0 * s2),
            (v(i, j + 1) - 2.0 * u0 + v(i, j - 1)) / s2,
        ))
    }

    /// Central-difference gradient at a node with a full stencil.
    pub fn gradient(&self, idx: usize) -> Option<Point> {
        let g = &self.grid;
        let (i, j) = g.ij(idx);
        if i == 0 || j == 0 || i + 1 >= g.nx || j + 1 >= g.ny {
            return None;
        }
        let v = |a: usize, b: usize| self.values[g.index(a, b)];
        let s = 2.0 * g.spacing;
        Some([(v(i + 1, j) - v(i - 1, j)) / s, (v(i, j + 1) - v(i, j - 1)) / s])
    }
}

/// `y1·x1 + (y2·x2 - u)`: the fixed evaluation order shared by every transform path.
#[inline]
fn pairing(y: Point, x: Point, u: f64) -> f64 {
    y[0] * x[0] + (y[1] * x[1] - u)
}

/// Reference transform: scan every primal node for every dual node.
pub fn legendre_transform_bruteforce(u: &GridFunction, dual: &DualGrid) -> DualField {
    let grid = u.grid();
    let vals = u.values();
    let n = grid.n_nodes();
    let mut values = Vec::with_capacity(dual.len());
    let mut argmax = Vec::with_capacity(dual.len());
    for d in 0..dual.len() {
        let y = dual.point(d);
        let mut best = (f64::NEG_INFINITY, 0);
        for k in 0..n {
            let v = pairing(y, grid.point(k), vals[k]);
            if v > best.0 {
                best = (v, k);
            }
        }
        values.push(best.0);
        argmax.push(best.1);
    }
    DualField { grid: dual.clone(), values, argmax, n_interior: grid.n_interior(), t: 0.0 }
}

/// Interior nodes grouped by lattice column (contiguous because of column-major ordering).
struct Columns {
    starts: Vec<usize>,
    x1: Vec<f64>,
}

fn columns(u: &GridFunction) -> Columns {
    let grid = u.grid();
    let mut starts = Vec::new();
    let mut x1 = Vec::new();
    let mut last = None;
    for k in 0..grid.n_interior() {
        let (i, _) = grid.lattice_index(k);
        if last != Some(i) {
            starts.push(k);
            x1.push(grid.point(k)[0]);
            last = Some(i);
        }
    }
    starts.push(grid.n_interior());
    Columns { starts, x1 }
}

/// Production transform: per column, `max_x2 (y2·x2 - u)` first, then the column term.
/// Rounded addition is monotone, so the values equal [`legendre_transform_bruteforce`]
/// bit for bit; ties are resolved to the same smallest index.
pub fn legendre_transform(u: &GridFunction, dual: &DualGrid) -> DualField {
    let grid = u.grid();
    let vals = u.values();
    let cols = columns(u);
    let n_int = grid.n_interior();
    let pts = grid.interior_points();
    let (values, argmax): (Vec<f64>, Vec<usize>) = (0..dual.len())
        .into_par_iter()
        .map(|d| {
            let y = dual.point(d);
            let mut best = f64::NEG_INFINITY;
            let mut best_col = 0;
            for c in 0..cols.x1.len() {
                let mut inner = f64::NEG_INFINITY;
                for k in cols.starts[c]..cols.starts[c + 1] {
                    inner = inner.max(y[1] * pts[k][1] - vals[k]);
                }
                let v = y[0] * cols.x1[c] + inner;
                if v > best {
                    best = v;
                    best_col = c;
                }
            }
            let mut arg = n_int;
            if best > f64::NEG_INFINITY {
                let x1 = cols.x1[best_col];
                arg = (cols.starts[best_col]..cols.starts[best_col + 1])
                    .find(|&k| y[0] * x1 + (y[1] * pts[k][1] - vals[k]) == best)
                    .expect("winning column attains the maximum");
            }
            for (b, &p) in grid.boundary_points().iter().enumerate() {
                let v = pairing(y, p, vals[n_int + b]);
                if v > best {
                    best = v;
                    arg = n_int + b;
                }
            }
            (best, arg)
        })
        .unzip();
    DualField { grid: dual.clone(), values, argmax, n_interior: n_int, t: 0.0 }
}

/// `u**(x) = max_y (x·y - U(y))` over the dual nodes.
pub fn biconjugate(u: &GridFunction, dual: &DualGrid) -> GridFunction {
    let field = legendre_transform(u, dual);
    let grid = u.grid().clone();
    let ys = dual.points();
    let values: Vec<f64> = (0..grid.n_nodes())
        .into_par_iter()
        .map(|k| {
            let x = grid.point(k);
            ys.iter().zip(&field.values).map(|(&y, &uy)| pairing(x, y, uy)).fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    GridFunction::new(grid, values).expect("biconjugate of a finite field is finite")
}

/// `(interior sup ‖D²U‖, ring sup ‖D²U‖)`: the ring holds full-stencil nodes with a
/// boundary maximiser somewhere in their stencil. Spectral norms; `-∞` when a set is empty.
pub fn dual_hessian_sup(field: &DualField) -> (f64, f64) {
    let valid = field.valid_mask();
    let mut interior = f64::NEG_INFINITY;
    let mut ring = f64::NEG_INFINITY;
    for k in 0..field.grid.len() {
        if let Some(h) = field.hessian(k) {
            let (lo, hi) = eig_2x2(&h);
            let norm = lo.abs().max(hi.abs());
            if valid[k] {
                interior = interior.max(norm);
            } else {
                ring = ring.max(norm);
            }
        }
    }
    (interior, ring)
}

/// Largest spectral norm of the dual Hessian over all full-stencil nodes.
pub fn dual_hessian_sup_all(field: &DualField) -> f64 {
    let (a, b) = dual_hessian_sup(field);
    a.max(b)
}

#[derive(Debug, Clone, Serialize)]
pub struct DualResidual {
    pub grid: DualGrid,
    pub t: f64,
    pub dt_snapshot: f64,
    pub values: Vec<f64>,
    pub residual: Vec<f64>,
    pub valid: Vec<bool>,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub n_valid: usize,
    pub n_singular: usize,
}

fn require_convex(u: &GridFunction, t: f64) -> Result<()> {
    let min = det_d2_monotone(u, StencilWidth::AxesAndDiagonals).into_iter().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        Ok(())
    } else {
        Err(Error::DegenerateDual(format!("snapshot at t = {t} is not discretely convex (min MA_h = {min:e})")))
    }
}

/// Dual residual between snapshots `index - 1` and `index` of a trace.
/// `U_t` is the backward difference; `factor` sets the dual spacing `factor · h`.
pub fn dual_residual(trace: &SolutionTrace, spec: &ProblemSpec, index: usize, factor: Option<usize>) -> Result<DualResidual> {
    if index == 0 || index >= trace.snapshots.len() {
        return Err(Error::DegenerateDual(format!("snapshot index {index} has no predecessor")));
    }
    let (t0, t1) = (trace.times[index - 1], trace.times[index]);
    let (u0, u1) = (&trace.snapshots[index - 1], &trace.snapshots[index]);
    require_convex(u0, t0)?;
    require_convex(u1, t1)?;
    let factor = factor.unwrap_or_else(|| default_factor(u1.grid().h()));
    let dual = DualGrid::covering(&[u0, u1], factor)?;
    let (f0, f1) = rayon::join(|| legendre_transform(u0, &dual), || legendre_transform(u1, &dual));
    let dt = t1 - t0;
    let mask0 = f0.valid_mask();
    let mut valid = f1.valid_mask();
    let mut residual = vec![0.0; dual.len()];
    let mut n_singular = 0;
    for k in 0..dual.len() {
        if !valid[k] || !mask0[k] {
            valid[k] = false;
            continue;
        }
        let hess = f1.hessian(k).expect("valid nodes have full stencils");
        let det = hess.det();
        if !(det > EPS_SINGULAR) {
            valid[k] = false;
            n_singular += 1;
            continue;
        }
        let du = f1.gradient(k).expect("valid nodes have full stencils");
        let ut = (f1.values[k] - f0.values[k]) / dt;
        residual[k] = -ut - 1.0 / det + spec.psi.eval(du, t1);
    }
    let n_valid = valid.iter().filter(|&&v| v).count();
    let (max_abs, sum) = residual
        .iter()
        .zip(&valid)
        .filter(|(_, &v)| v)
        .fold((0.0f64, 0.0), |(m, s), (r, _)| (m.max(r.abs()), s + r.abs()));
    Ok(DualResidual {
        grid: dual,
        t: t1,
        dt_snapshot: dt,
        values: f1.values,
        residual,
        valid,
        max_abs,
        mean_abs: if n_valid > 0 { sum / n_valid as f64 } else { 0.0 },
        n_valid,
        n_singular,
    })
}
