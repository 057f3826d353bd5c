//! Pass/fail checks of the a priori estimates over solution traces, and a sampled
//! parabolic Hölder seminorm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::GridFunction;
use crate::legendre::{default_factor, dual_hessian_sup, dual_hessian_sup_all, legendre_transform, DualGrid};
use crate::operators::{det_d2_monotone, eig_2x2, gradient_central, hessian_at, ma_at, StencilWidth};
use crate::problem::{EquationKind, ProblemSpec};
use crate::stepper::SolutionTrace;

/// Default slack multiplier: checks allow `KAPPA · h`.
pub const KAPPA: f64 = 10.0;
pub const COMPARISON_TOL: f64 = 1e-12;
pub const HOLDER_PAIRS: usize = 100_000;

/// Step-size range of a trace, carried by every check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunScale {
    pub h: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub steps: usize,
}

impl RunScale {
    pub fn of(trace: &SolutionTrace) -> Self {
        let d = &trace.diagnostics;
        RunScale {
            h: trace.grid().h(),
            dt_min: d.iter().map(|s| s.dt).fold(f64::INFINITY, f64::min),
            dt_max: d.iter().map(|s| s.dt).fold(0.0, f64::max),
            steps: d.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonResult {
    pub violations: usize,
    /// `max (w - v)` over nodes and snapshots.
    pub worst_gap: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub scale: RunScale,
}

/// Count nodes and snapshots with `w > v + tolerance`. Traces must share the grid and times.
pub fn check_comparison(w: &SolutionTrace, v: &SolutionTrace, tolerance: f64) -> Result<ComparisonResult> {
    if w.times != v.times {
        return Err(Error::IncompatibleTraces("snapshot times differ; run the pair in lockstep".into()));
    }
    let (gw, gv) = (w.grid(), v.grid());
    if !std::sync::Arc::ptr_eq(gw, gv) && (gw.h() != gv.h() || gw.n_nodes() != gv.n_nodes()) {
        return Err(Error::IncompatibleTraces("traces live on different grids".into()));
    }
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for (a, b) in w.snapshots.iter().zip(&v.snapshots) {
        for (x, y) in a.values().iter().zip(b.values()) {
            let gap = x - y;
            worst = worst.max(gap);
            if gap > tolerance {
                violations += 1;
            }
        }
    }
    Ok(ComparisonResult { violations, worst_gap: worst, tolerance, pass: violations == 0, scale: RunScale::of(w) })
}

/// Whether the data of `w` and `v` are ordered as the comparison principle needs:
/// `ψ_w ≥ ψ_v` at interior nodes and `φ_w ≤ φ_v` on the parabolic boundary, at the given times.
pub fn ordered_data(w: &ProblemSpec, v: &ProblemSpec, grid: &crate::geometry::Grid, times: &[f64]) -> bool {
    let interior_ok = grid.interior_points().iter().all(|&p| {
        w.phi.eval(p, 0.0) <= v.phi.eval(p, 0.0) && times.iter().all(|&t| w.source(p, t) >= v.source(p, t))
    });
    let boundary_ok =
        grid.boundary_points().iter().all(|&p| times.iter().all(|&t| w.phi.eval(p, t) <= v.phi.eval(p, t)));
    interior_ok && boundary_ok
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtBoundsResult {
    pub applicable: bool,
    pub measured_min: f64,
    pub measured_max: f64,
    /// `min{c0, min MA_h[φ(·,0)]}`.
    pub theoretical_lower: f64,
    pub kappa: f64,
    /// `measured_min - (theoretical_lower - κh)`.
    pub margin: f64,
    pub pass: bool,
    pub scale: RunScale,
}

/// Lower bound on the discrete `u_t + ψ` over the run. Not applicable unless the problem is
/// PMA and `conditions_hold` (the lemma's hypotheses); a skipped check passes.
pub fn check_ut_bounds(trace: &SolutionTrace, spec: &ProblemSpec, conditions_hold: bool, kappa: f64) -> UtBoundsResult {
    let scale = RunScale::of(trace);
    let measured_min = trace.diagnostics.iter().map(|d| d.min_ut_psi).fold(f64::INFINITY, f64::min);
    let measured_max = trace.diagnostics.iter().map(|d| d.max_ut_psi).fold(f64::NEG_INFINITY, f64::max);
    let u0 = &trace.snapshots[0];
    let grid = u0.grid();
    let min_ma0 =
        (0..grid.n_interior()).map(|k| ma_at(grid, u0.values(), k, trace.scheme)).fold(f64::INFINITY, f64::min);
    let theoretical_lower = spec.c0.min(min_ma0);
    let applicable = conditions_hold && spec.kind == EquationKind::Pma;
    let margin = measured_min - (theoretical_lower - kappa * scale.h);
    UtBoundsResult {
        applicable,
        measured_min,
        measured_max,
        theoretical_lower,
        kappa,
        margin,
        pass: !applicable || margin >= 0.0,
        scale,
    }
}

fn require_convex(u: &GridFunction, t: f64) -> Result<()> {
    let m = det_d2_monotone(u, StencilWidth::AxesAndDiagonals).into_iter().fold(f64::INFINITY, f64::min);
    if m > 0.0 {
        Ok(())
    } else {
        Err(Error::DegenerateDual(format!("snapshot at t = {t} is not discretely convex (min MA_h = {m:e})")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenBoundsResult {
    pub interior_min_lambda: f64,
    pub interior_max_lambda: f64,
    pub boundary_min_lambda: f64,
    pub boundary_max_lambda: f64,
    /// Largest dual Hessian norm on the ring and on the initial layer.
    pub dual_ring_sup: f64,
    /// `1 / dual_ring_sup`.
    pub dual_implied_lower: f64,
    pub kappa: f64,
    pub margin: f64,
    pub pass: bool,
    pub scale: RunScale,
}

/// Interior `min λ(D²u)` against the bound implied by the dual ring: `λ_min ≥ 1/sup_ring ‖D²U‖ - κh`.
pub fn check_eigen_bounds(trace: &SolutionTrace, kappa: f64) -> Result<EigenBoundsResult> {
    let grid = trace.grid().clone();
    let factor = default_factor(grid.h());
    let mut res = EigenBoundsResult {
        interior_min_lambda: f64::INFINITY,
        interior_max_lambda: f64::NEG_INFINITY,
        boundary_min_lambda: f64::INFINITY,
        boundary_max_lambda: f64::NEG_INFINITY,
        dual_ring_sup: f64::NEG_INFINITY,
        dual_implied_lower: 0.0,
        kappa,
        margin: 0.0,
        pass: false,
        scale: RunScale::of(trace),
    };
    for (i, (&t, u)) in trace.times.iter().zip(&trace.snapshots).enumerate() {
        require_convex(u, t)?;
        for k in 0..grid.n_interior() {
            let (lo, hi) = eig_2x2(&hessian_at(&grid, u.values(), k));
            if grid.is_boundary_adjacent(k) {
                res.boundary_min_lambda = res.boundary_min_lambda.min(lo);
                res.boundary_max_lambda = res.boundary_max_lambda.max(hi);
            } else {
                res.interior_min_lambda = res.interior_min_lambda.min(lo);
                res.interior_max_lambda = res.interior_max_lambda.max(hi);
            }
        }
        let field = legendre_transform(u, &DualGrid::covering(&[u], factor)?);
        let ring = if i == 0 { dual_hessian_sup_all(&field) } else { dual_hessian_sup(&field).1 };
        res.dual_ring_sup = res.dual_ring_sup.max(ring);
    }
    res.dual_implied_lower = 1.0 / res.dual_ring_sup;
    res.margin = res.interior_min_lambda - (res.dual_implied_lower - kappa * res.scale.h);
    res.pass = res.margin >= 0.0;
    Ok(res)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualMaxPrincipleResult {
    pub times: Vec<f64>,
    pub interior_sup: f64,
    /// Ring nodes at the checked times together with the whole `t = 0` layer.
    pub ring_sup: f64,
    pub tolerance: f64,
    pub margin: f64,
    pub pass: bool,
    pub scale: RunScale,
}

/// Interior `sup ‖D²U‖ ≤ ring sup + κh` at the given snapshot indices.
pub fn check_dual_max_principle(trace: &SolutionTrace, indices: &[usize], kappa: f64) -> Result<DualMaxPrincipleResult> {
    let h = trace.grid().h();
    let factor = default_factor(h);
    let u0 = &trace.snapshots[0];
    require_convex(u0, 0.0)?;
    let mut ring = dual_hessian_sup_all(&legendre_transform(u0, &DualGrid::covering(&[u0], factor)?));
    let mut interior = f64::NEG_INFINITY;
    let mut times = Vec::new();
    for &i in indices {
        let u = trace
            .snapshots
            .get(i)
            .ok_or_else(|| Error::IncompatibleTraces(format!("snapshot {i} does not exist")))?;
        require_convex(u, trace.times[i])?;
        let (a, b) = dual_hessian_sup(&legendre_transform(u, &DualGrid::covering(&[u], factor)?));
        interior = interior.max(a);
        ring = ring.max(b);
        times.push(trace.times[i]);
    }
    let tolerance = kappa * h;
    let margin = ring + tolerance - interior;
    Ok(DualMaxPrincipleResult {
        times,
        interior_sup: interior,
        ring_sup: ring,
        tolerance,
        margin,
        pass: margin >= 0.0,
        scale: RunScale::of(trace),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderResult {
    pub field: String,
    pub alpha: f64,
    pub seminorm: f64,
    pub pairs: usize,
}

/// Radical inverse of `i` in base `b`.
fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    r
}

const HALTON_BASES: [u64; 5] = [2, 3, 5, 7, 11];

/// Seeded, rotated Halton points in `[0,1)^5`; the first `n` points are a prefix of the first `n+1`.
fn halton_point(i: usize, shift: &[f64; 5]) -> [f64; 5] {
    let mut p = [0.0; 5];
    for d in 0..5 {
        p[d] = (radical_inverse(i as u64 + 1, HALTON_BASES[d]) + shift[d]).fract();
    }
    p
}

fn pick(u: f64, n: usize) -> usize {
    ((u * n as f64) as usize).min(n - 1)
}

/// `max |f(x,t) - f(y,τ)| / (|x-y|² + |t-τ|)^{α/2}` over `pairs` deterministic sample pairs.
///
/// Half of the pairs are local (a node and one of its stencil neighbours, at equal or
/// adjacent times); the rest are spread over the whole space-time set.
pub fn holder_seminorm(times: &[f64], fields: &[GridFunction], alpha: f64, pairs: usize, seed: u64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Range { key: "alpha".into(), msg: format!("must lie in (0, 1], got {alpha}") });
    }
    if fields.is_empty() || times.len() != fields.len() {
        return Err(Error::IncompatibleTraces("need one time per field".into()));
    }
    let grid = fields[0].grid();
    if fields.iter().any(|f| f.grid().n_nodes() != grid.n_nodes()) {
        return Err(Error::IncompatibleTraces("fields live on different grids".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: [f64; 5] = std::array::from_fn(|_| rng.gen::<f64>());
    let (n, nt, ni) = (grid.n_nodes(), times.len(), grid.n_interior());
    let mut best: f64 = 0.0;
    for i in 0..pairs {
        let p = halton_point(i, &shift);
        let (a, ta, b, tb) = if p[4] < 0.5 {
            let a = pick(p[0], ni);
            let b = grid.arms(a)[pick(p[1], 8)].target;
            let ta = pick(p[2], nt);
            let tb = match pick(p[3], 3) {
                0 if ta > 0 => ta - 1,
                2 if ta + 1 < nt => ta + 1,
                _ => ta,
            };
            (a, ta, b, tb)
        } else {
            (pick(p[0], n), pick(p[2], nt), pick(p[1], n), pick(p[3], nt))
        };
        let (x, y) = (grid.point(a), grid.point(b));
        let d2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (times[ta] - times[tb]).abs();
        if d2 == 0.0 {
            continue;
        }
        let q = (fields[ta][a] - fields[tb][b]).abs() / d2.powf(alpha / 2.0);
        best = best.max(q);
    }
    Ok(best)
}

/// Backward difference quotients `(u_{i} - u_{i-1}) / (t_i - t_{i-1})`, stamped at `t_i`.
pub fn time_derivative_fields(trace: &SolutionTrace) -> (Vec<f64>, Vec<GridFunction>) {
    let mut times = Vec::new();
    let mut fields = Vec::new();
    for i in 1..trace.snapshots.len() {
        let dt = trace.times[i] - trace.times[i - 1];
        if dt <= 0.0 {
            continue;
        }
        let v = trace.snapshots[i]
            .values()
            .iter()
            .zip(trace.snapshots[i - 1].values())
            .map(|(a, b)| (a - b) / dt)
            .collect();
        times.push(trace.times[i]);
        fields.push(GridFunction::new(trace.grid().clone(), v).expect("difference of finite fields"));
    }
    (times, fields)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GcfGradientResult {
    pub sup_coarse: f64,
    pub sup_fine: f64,
    /// Larger over smaller of the two sups.
    pub ratio: f64,
    pub bound: f64,
    pub pass: bool,
    pub h_coarse: f64,
    pub h_fine: f64,
}

/// `sup |Du|` over all snapshots (central gradients at interior nodes).
pub fn sup_gradient(trace: &SolutionTrace) -> f64 {
    trace
        .snapshots
        .iter()
        .flat_map(|u| gradient_central(u).into_iter().map(|g| g[0].hypot(g[1])))
        .fold(0.0, f64::max)
}

/// Gradient bound stable under refinement: `max/min` of the sups `≤ 1 + κ h_coarse`.
pub fn check_gcf_gradient_bound(coarse: &SolutionTrace, fine: &SolutionTrace, kappa: f64) -> GcfGradientResult {
    let (a, b) = (sup_gradient(coarse), sup_gradient(fine));
    let ratio = a.max(b) / a.min(b);
    let h = coarse.grid().h();
    let bound = 1.0 + kappa * h;
    GcfGradientResult {
        sup_coarse: a,
        sup_fine: b,
        ratio,
        bound,
        pass: ratio <= bound,
        h_coarse: h,
        h_fine: fine.grid().h(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub problem: String,
    pub scale: RunScale,
    pub comparison: Option<ComparisonResult>,
    pub ut_bounds: Option<UtBoundsResult>,
    pub eigen_bounds: Option<EigenBoundsResult>,
    pub dual_max_principle: Option<DualMaxPrincipleResult>,
    pub holder: Vec<HolderResult>,
    pub gcf_gradient: Option<GcfGradientResult>,
    /// Checks that could not be evaluated, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl EstimateReport {
    pub fn new(problem: &str, trace: &SolutionTrace) -> Self {
        EstimateReport {
            problem: problem.to_string(),
            scale: RunScale::of(trace),
            comparison: None,
            ut_bounds: None,
            eigen_bounds: None,
            dual_max_principle: None,
            holder: Vec::new(),
            gcf_gradient: None,
            skipped: Vec::new(),
        }
    }

    /// True when every asserted check passed.
    pub fn all_pass(&self) -> bool {
        self.comparison.as_ref().map_or(true, |c| c.pass)
            && self.ut_bounds.as_ref().map_or(true, |c| c.pass)
            && self.eigen_bounds.as_ref().map_or(true, |c| c.pass)
            && self.dual_max_principle.as_ref().map_or(true, |c| c.pass)
            && self.gcf_gradient.as_ref().map_or(true, |c| c.pass)
    }
}
