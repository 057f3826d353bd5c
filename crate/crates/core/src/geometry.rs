//! Uniformly convex planar domains and cut-cell Cartesian grids.
//!
//! A [`Domain`] is a disk or an ellipse `{x : (x-c)^T Q (x-c) < 1}`. A [`Grid`]
//! holds every lattice point `(i h, j h)` strictly inside the domain plus the
//! points where lattice lines (axes and diagonals) leave it. Each interior node
//! owns eight arms; an arm that would leave the domain is shortened so that it
//! ends exactly on the boundary (Shortley-Weller treatment).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{eig_2x2, Sym2};

pub type Point = [f64; 2];

/// Lattice offsets of the eight stencil arms. Arms `2k` and `2k+1` point in
/// opposite directions along stencil direction `k`.
pub const ARM_OFFSETS: [(i64, i64); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (-1, -1),
    (1, -1),
    (-1, 1),
];

/// Unit vectors of the four stencil directions: x1, x2, and the two diagonals.
pub const DIRECTIONS: [Point; 4] = [
    [1.0, 0.0],
    [0.0, 1.0],
    [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
    [std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainShape {
    Disk {
        #[serde(default)]
        center: Point,
        radius: f64,
    },
    Ellipse {
        #[serde(default)]
        center: Point,
        q: [[f64; 2]; 2],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Disk,
    Ellipse,
}

#[derive(Debug, Clone)]
pub struct Domain {
    kind: DomainKind,
    center: Point,
    q: Sym2,
    /// Semi-axis lengths, largest first.
    semi_axes: [f64; 2],
    /// Unit vectors of the semi-axes, matching `semi_axes`.
    axes: [Point; 2],
    shape: DomainShape,
}

impl Domain {
    pub fn new(shape: DomainShape) -> Result<Self> {
        match shape {
            DomainShape::Disk { center, radius } => {
                if !(radius > 0.0) || !radius.is_finite() {
                    let lam = if radius.is_finite() { radius } else { f64::NAN };
                    return Err(Error::NonConvexDomain(lam, lam));
                }
                let inv = 1.0 / (radius * radius);
                Ok(Domain {
                    kind: DomainKind::Disk,
                    center,
                    q: Sym2::new(inv, 0.0, inv),
                    semi_axes: [radius, radius],
                    axes: [[1.0, 0.0], [0.0, 1.0]],
                    shape,
                })
            }
            DomainShape::Ellipse { center, q } => {
                if (q[0][1] - q[1][0]).abs() > 1e-14 * (q[0][1].abs() + q[1][0].abs() + 1.0) {
                    return Err(Error::InvalidProblem(
                        "ellipse quadratic form must be symmetric".into(),
                    ));
                }
                let form = Sym2::new(q[0][0], q[0][1], q[1][1]);
                let (lmin, lmax) = eig_2x2(&form);
                if !(lmin > 0.0) || !lmax.is_finite() {
                    return Err(Error::NonConvexDomain(lmin, lmax));
                }
                // The smallest eigenvalue gives the longest semi-axis.
                let v_major = eigenvector(&form, lmin);
                let v_minor = [-v_major[1], v_major[0]];
                Ok(Domain {
                    kind: DomainKind::Ellipse,
                    center,
                    q: form,
                    semi_axes: [1.0 / lmin.sqrt(), 1.0 / lmax.sqrt()],
                    axes: [v_major, v_minor],
                    shape,
                })
            }
        }
    }

    pub fn unit_disk() -> Self {
        Domain::new(DomainShape::Disk { center: [0.0, 0.0], radius: 1.0 })
            .expect("unit disk is convex")
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn shape(&self) -> &DomainShape {
        &self.shape
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn semi_axes(&self) -> [f64; 2] {
        self.semi_axes
    }

    /// Eccentricity `sqrt(1 - b²/a²)`; zero for disks.
    pub fn eccentricity(&self) -> f64 {
        let [a, b] = self.semi_axes;
        (1.0 - (b * b) / (a * a)).max(0.0).sqrt()
    }

    /// `(x-c)^T Q (x-c)`.
    pub fn quadratic(&self, x: Point) -> f64 {
        let d = [x[0] - self.center[0], x[1] - self.center[1]];
        self.q.quad(d)
    }

    pub fn contains(&self, x: Point) -> bool {
        self.quadratic(x) < 1.0
    }

    /// Axis-aligned bounding box `(lo, hi)` of the closed domain.
    pub fn bounding_box(&self) -> (Point, Point) {
        // Support function of the ellipse: sqrt(e^T Q^{-1} e).
        let det = self.q.det();
        let ext = [(self.q.a22 / det).sqrt(), (self.q.a11 / det).sqrt()];
        (
            [self.center[0] - ext[0], self.center[1] - ext[1]],
            [self.center[0] + ext[0], self.center[1] + ext[1]],
        )
    }

    /// Nearest boundary point.
    pub fn project(&self, x: Point) -> Point {
        let d = [x[0] - self.center[0], x[1] - self.center[1]];
        match self.kind {
            DomainKind::Disk => {
                let r = self.semi_axes[0];
                let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
                if n == 0.0 {
                    [self.center[0] + r, self.center[1]]
                } else {
                    [self.center[0] + r * d[0] / n, self.center[1] + r * d[1] / n]
                }
            }
            DomainKind::Ellipse => {
                let z = [dot(d, self.axes[0]), dot(d, self.axes[1])];
                let local = closest_on_ellipse(self.semi_axes, [z[0].abs(), z[1].abs()]);
                let local = [local[0].copysign(z[0]), local[1].copysign(z[1])];
                [
                    self.center[0] + local[0] * self.axes[0][0] + local[1] * self.axes[1][0],
                    self.center[1] + local[0] * self.axes[0][1] + local[1] * self.axes[1][1],
                ]
            }
        }
    }

    /// Signed distance to the boundary, positive inside.
    pub fn signed_distance(&self, x: Point) -> f64 {
        match self.kind {
            DomainKind::Disk => {
                let d = [x[0] - self.center[0], x[1] - self.center[1]];
                self.semi_axes[0] - (d[0] * d[0] + d[1] * d[1]).sqrt()
            }
            DomainKind::Ellipse => {
                let p = self.project(x);
                let dist = ((p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)).sqrt();
                if self.quadratic(x) <= 1.0 {
                    dist
                } else {
                    -dist
                }
            }
        }
    }

    /// Distance from a point of the closed domain to the boundary.
    pub fn boundary_distance(&self, x: Point) -> Result<f64> {
        if !(self.quadratic(x) <= 1.0 + 1e-12) {
            return Err(Error::OutsideDomain(x[0], x[1]));
        }
        Ok(self.signed_distance(x).max(0.0))
    }

    /// Distance travelled from the interior point `p` along the unit vector
    /// `dir` before hitting the boundary.
    pub fn ray_exit(&self, p: Point, dir: Point) -> f64 {
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        let a = self.q.quad(dir);
        let b = self.q.bilinear(dir, d);
        let slack = 1.0 - self.q.quad(d);
        let disc = (b * b + a * slack).max(0.0).sqrt();
        // Stable root of a s² + 2 b s - slack = 0.
        if b > 0.0 {
            slack / (b + disc)
        } else {
            (disc - b) / a
        }
    }
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn eigenvector(m: &Sym2, lambda: f64) -> Point {
    let (a, b, c) = (m.a11, m.a12, m.a22);
    if b.abs() <= 1e-300 {
        return if (a - lambda).abs() <= (c - lambda).abs() { [1.0, 0.0] } else { [0.0, 1.0] };
    }
    // Pick the better conditioned of the two row equations.
    let v = if (a - lambda).abs() >= (c - lambda).abs() {
        [-b, a - lambda]
    } else {
        [c - lambda, -b]
    };
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    let v = [v[0] / n, v[1] / n];
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        [-v[0], -v[1]]
    } else {
        v
    }
}

/// Closest point on the axis-aligned ellipse with semi-axes `e[0] >= e[1]` to
/// a query `y` in the closed first quadrant.
///
/// The minimiser satisfies `x_i = e_i² y_i / (s + e_i²)` where `s` is the
/// unique root of `F(s) = Σ (e_i y_i / (s + e_i²))² - 1` right of `-e_1²`.
/// `F` is convex and decreasing there, so Newton started left of the root
/// converges monotonically; the bracket guards against round-off stalls.
fn closest_on_ellipse(e: [f64; 2], y: Point) -> Point {
    let [e0, e1] = e;
    if y[1] > 0.0 {
        let f = |s: f64| {
            let r0 = e0 * y[0] / (s + e0 * e0);
            let r1 = e1 * y[1] / (s + e1 * e1);
            r0 * r0 + r1 * r1 - 1.0
        };
        let df = |s: f64| {
            let r0 = e0 * y[0] / (s + e0 * e0);
            let r1 = e1 * y[1] / (s + e1 * e1);
            -2.0 * (r0 * r0 / (s + e0 * e0) + r1 * r1 / (s + e1 * e1))
        };
        let mut lo = -e1 * e1 + e1 * y[1];
        let mut hi = -e1 * e1 + (e0 * e0 * y[0] * y[0] + e1 * e1 * y[1] * y[1]).sqrt();
        let mut s = lo;
        for _ in 0..200 {
            let fs = f(s);
            if fs == 0.0 {
                break;
            }
            if fs > 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let mut next = s - fs / df(s);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if next == s || hi - lo <= 1e-16 * (1.0 + s.abs()) {
                s = next;
                break;
            }
            s = next;
        }
        [e0 * e0 * y[0] / (s + e0 * e0), e1 * e1 * y[1] / (s + e1 * e1)]
    } else {
        // On the major axis: either the evolute-interior case or the vertex.
        let num = e0 * y[0];
        let den = e0 * e0 - e1 * e1;
        if num < den {
            let x0 = e0 * e0 * y[0] / den;
            let ratio = x0 / e0;
            [x0, e1 * (1.0 - ratio * ratio).max(0.0).sqrt()]
        } else {
            [e0, 0.0]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arm {
    /// Index of the node the arm ends at (interior indices first).
    pub target: usize,
    /// Physical length of the arm.
    pub length: f64,
}

#[derive(Debug)]
pub struct Grid {
    h: f64,
    domain: Domain,
    interior: Vec<Point>,
    lattice: Vec<(i64, i64)>,
    boundary: Vec<Point>,
    arms: Vec<[Arm; 8]>,
    boundary_adjacent: Vec<bool>,
    origin: (i64, i64),
    extent: (usize, usize),
    lookup: Vec<u32>,
}

impl Grid {
    pub fn new(domain: Domain, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Range { key: "h".into(), msg: format!("must be positive, got {h}") });
        }
        let (lo, hi) = domain.bounding_box();
        let i0 = (lo[0] / h).floor() as i64 - 1;
        let i1 = (hi[0] / h).ceil() as i64 + 1;
        let j0 = (lo[1] / h).floor() as i64 - 1;
        let j1 = (hi[1] / h).ceil() as i64 + 1;
        let ni = (i1 - i0 + 1) as usize;
        let nj = (j1 - j0 + 1) as usize;
        let mut lookup = vec![u32::MAX; ni * nj];
        let mut interior = Vec::new();
        let mut lattice = Vec::new();
        // Column-major: all j for a given i are contiguous.
        for i in i0..=i1 {
            for j in j0..=j1 {
                let p = [i as f64 * h, j as f64 * h];
                if domain.contains(p) {
                    lookup[(i - i0) as usize * nj + (j - j0) as usize] = interior.len() as u32;
                    interior.push(p);
                    lattice.push((i, j));
                }
            }
        }
        if interior.is_empty() {
            return Err(Error::EmptyGrid { h });
        }
        let n = interior.len();
        let mut boundary = Vec::new();
        let mut arms = Vec::with_capacity(n);
        let mut boundary_adjacent = vec![false; n];
        for (k, (&(i, j), &p)) in lattice.iter().zip(&interior).enumerate() {
            let mut node_arms = [Arm { target: 0, length: 0.0 }; 8];
            for (a, &(di, dj)) in ARM_OFFSETS.iter().enumerate() {
                let (ti, tj) = (i + di, j + dj);
                let full = ((di * di + dj * dj) as f64).sqrt() * h;
                let idx = lookup[(ti - i0) as usize * nj + (tj - j0) as usize];
                if idx != u32::MAX {
                    node_arms[a] = Arm { target: idx as usize, length: full };
                } else {
                    let norm = full / h;
                    let dir = [di as f64 / norm, dj as f64 / norm];
                    let s = domain.ray_exit(p, dir).min(full);
                    let q = [p[0] + s * dir[0], p[1] + s * dir[1]];
                    node_arms[a] = Arm { target: n + boundary.len(), length: s };
                    boundary.push(q);
                    boundary_adjacent[k] = true;
                }
            }
            arms.push(node_arms);
        }
        Ok(Grid {
            h,
            domain,
            interior,
            lattice,
            boundary,
            arms,
            boundary_adjacent,
            origin: (i0, j0),
            extent: (ni, nj),
            lookup,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.interior.len() + self.boundary.len()
    }

    pub fn interior_points(&self) -> &[Point] {
        &self.interior
    }

    pub fn boundary_points(&self) -> &[Point] {
        &self.boundary
    }

    pub fn lattice_index(&self, k: usize) -> (i64, i64) {
        self.lattice[k]
    }

    /// Interior node at lattice position `(i, j)`, if any.
    pub fn node_at(&self, i: i64, j: i64) -> Option<usize> {
        let (i0, j0) = self.origin;
        let (ni, nj) = self.extent;
        if i < i0 || j < j0 || (i - i0) as usize >= ni || (j - j0) as usize >= nj {
            return None;
        }
        match self.lookup[(i - i0) as usize * nj + (j - j0) as usize] {
            u32::MAX => None,
            v => Some(v as usize),
        }
    }

    pub fn point(&self, k: usize) -> Point {
        if k < self.interior.len() {
            self.interior[k]
        } else {
            self.boundary[k - self.interior.len()]
        }
    }

    pub fn arms(&self, k: usize) -> &[Arm; 8] {
        &self.arms[k]
    }

    /// True when at least one arm of interior node `k` was cut by the boundary.
    pub fn is_boundary_adjacent(&self, k: usize) -> bool {
        self.boundary_adjacent[k]
    }

    pub fn has_uniform_arms(&self, k: usize) -> bool {
        !self.boundary_adjacent[k]
    }

    /// Shortest arm over the grid, as a fraction of its uncut length.
    pub fn min_arm_fraction(&self) -> f64 {
        self.arms
            .iter()
            .flat_map(|a| {
                a.iter().zip(ARM_OFFSETS.iter()).map(|(arm, &(di, dj))| {
                    arm.length / (((di * di + dj * dj) as f64).sqrt() * self.h)
                })
            })
            .fold(1.0, f64::min)
    }
}

/// Values of a scalar field at the interior nodes followed by the boundary nodes.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::InvalidProblem(format!(
                "grid function has {} values for {} nodes",
                values.len(),
                grid.n_nodes()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            let p = grid.point(k);
            return Err(Error::EvaluationError(format!("non-finite value at ({}, {})", p[0], p[1])));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(Point) -> f64) -> Result<Self> {
        let values = (0..grid.n_nodes()).map(|k| f(grid.point(k))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn interior(&self) -> &[f64] {
        &self.values[..self.grid.n_interior()]
    }

    pub fn boundary(&self) -> &[f64] {
        &self.values[self.grid.n_interior()..]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl std::ops::Index<usize> for GridFunction {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        &self.values[k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk() -> Domain {
        Domain::unit_disk()
    }

    #[test]
    fn disk_membership_excludes_boundary() {
        let d = disk();
        assert!(d.contains([0.0, 0.0]));
        assert!(!d.contains([1.0, 0.0]));
    }

    #[test]
    fn ellipse_boundary_on_minor_axis() {
        let d = Domain::new(DomainShape::Ellipse { center: [0.0, 0.0], q: [[1.0, 0.0], [0.0, 4.0]] })
            .unwrap();
        assert_eq!(d.quadratic([0.0, 0.5]), 1.0);
        let p = d.project([0.0, 0.1]);
        assert!((p[0]).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn indefinite_form_is_rejected() {
        let err = Domain::new(DomainShape::Ellipse { center: [0.0, 0.0], q: [[1.0, 0.0], [0.0, -1.0]] })
            .unwrap_err();
        assert!(matches!(err, Error::NonConvexDomain(..)));
    }

    #[test]
    fn lattice_enumeration_matches_oracle() {
        let g = Grid::new(disk(), 0.5).unwrap();
        let mut oracle = Vec::new();
        for i in -2i64..=2 {
            for j in -2i64..=2 {
                if i * i + j * j < 4 {
                    oracle.push((i, j));
                }
            }
        }
        let mut got: Vec<_> = (0..g.n_interior()).map(|k| g.lattice_index(k)).collect();
        got.sort();
        oracle.sort();
        assert_eq!(got, oracle);
        assert_eq!(g.n_interior(), 9);
    }

    #[test]
    fn oversized_spacing_gives_empty_grid() {
        let off = Domain::new(DomainShape::Disk { center: [1.5, 1.5], radius: 1.0 }).unwrap();
        assert!(matches!(Grid::new(off, 3.0), Err(Error::EmptyGrid { .. })));
    }

    #[test]
    fn cut_arm_length_matches_circle_intersection() {
        let g = Grid::new(disk(), 0.5).unwrap();
        let k = g.node_at(1, 0).unwrap();
        // (1, 0) is on the circle, so the +x arm keeps its full length there.
        assert!((g.arms(k)[0].length - 0.5).abs() < 1e-15);
        // From (0.5, 0.5) upward the circle is hit at y = sqrt(1 - 0.25).
        let k = g.node_at(1, 1).unwrap();
        let expected = (1.0f64 - 0.25).sqrt() - 0.5;
        assert!((g.arms(k)[2].length - expected).abs() < 1e-15);
        assert!((expected - 0.3660254037844386).abs() < 1e-12);
        let b = g.point(g.arms(k)[2].target);
        assert!((b[0] * b[0] + b[1] * b[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn arm_lengths_are_euclidean_and_bounded() {
        for dom in [
            disk(),
            Domain::new(DomainShape::Ellipse { center: [0.1, -0.05], q: [[1.3, 0.4], [0.4, 2.2]] }).unwrap(),
        ] {
            let g = Grid::new(dom, 0.07).unwrap();
            for k in 0..g.n_interior() {
                let p = g.point(k);
                for arm in g.arms(k) {
                    let q = g.point(arm.target);
                    let d = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
                    assert!((d - arm.length).abs() < 1e-13);
                    assert!(arm.length > 0.0 && arm.length <= 2f64.sqrt() * g.h() * (1.0 + 1e-15));
                    assert!(g.domain().quadratic(q) <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn refinement_keeps_coarse_nodes() {
        let coarse = Grid::new(disk(), 0.25).unwrap();
        let fine = Grid::new(disk(), 0.125).unwrap();
        for k in 0..coarse.n_interior() {
            let (i, j) = coarse.lattice_index(k);
            assert!(fine.node_at(2 * i, 2 * j).is_some());
        }
    }

    #[test]
    fn boundary_distance_values() {
        let d = disk();
        assert_eq!(d.boundary_distance([0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(d.boundary_distance([0.5, 0.0]).unwrap(), 0.5);
        assert!(matches!(d.boundary_distance([2.0, 0.0]), Err(Error::OutsideDomain(..))));

        let e = Domain::new(DomainShape::Ellipse { center: [0.0, 0.0], q: [[1.0, 0.0], [0.0, 4.0]] })
            .unwrap();
        let dist = e.boundary_distance([0.0, 0.0]).unwrap();
        assert!((dist - 0.5).abs() < 1e-12);
        // Dense boundary sampling oracle.
        let sampled = (0..100_000)
            .map(|k| {
                let th = k as f64 * std::f64::consts::TAU / 100_000.0;
                (th.cos().powi(2) + 0.25 * th.sin().powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((sampled - dist).abs() < 1e-9);
    }
}
