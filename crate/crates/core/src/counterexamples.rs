//! Convexity-loss constructions: the smooth bump `w = A t exp(-B / (x²(1-x)²))`,
//! its forcing `ρ = -w_t + w_xx`, a one-dimensional heat solver, and a radial solver.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::ScalarFn;

/// Exponents below this underflow `exp` to zero.
const EXP_UNDERFLOW: f64 = -745.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BumpParams {
    pub a: f64,
    pub b: f64,
}

/// Truncated Taylor coefficients `c_k` of `f(x + δ) = Σ c_k δ^k`, `k ≤ 4`.
type Jet = [f64; 5];

fn jet_mul(p: &Jet, q: &Jet) -> Jet {
    let mut r = [0.0; 5];
    for i in 0..5 {
        for j in 0..5 - i {
            r[i + j] += p[i] * q[j];
        }
    }
    r
}

fn jet_recip(s: &Jet) -> Jet {
    let mut r = [0.0; 5];
    r[0] = 1.0 / s[0];
    for k in 1..5 {
        let acc: f64 = (1..=k).map(|j| s[j] * r[k - j]).sum();
        r[k] = -acc / s[0];
    }
    r
}

fn jet_exp(g: &Jet) -> Jet {
    let mut e = [0.0; 5];
    e[0] = g[0].exp();
    for k in 1..5 {
        let acc: f64 = (1..=k).map(|j| j as f64 * g[j] * e[k - j]).sum();
        e[k] = acc / k as f64;
    }
    e
}

/// `P₆(x) = 2B - 8Bx + (8B-3)x² + 16x³ - 33x⁴ + 30x⁵ - 10x⁶` by Horner's rule.
pub fn p6(x: f64, b: f64) -> f64 {
    let c = [2.0 * b, -8.0 * b, 8.0 * b - 3.0, 16.0, -33.0, 30.0, -10.0];
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

impl BumpParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::Range { key: "A".into(), msg: format!("must be positive, got {a}") });
        }
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::Range { key: "B".into(), msg: format!("must be positive, got {b}") });
        }
        Ok(BumpParams { a, b })
    }

    /// Exponent `-B / (x²(1-x)²)`; `-∞` outside `(0, 1)`.
    fn exponent(&self, x: f64) -> f64 {
        if !(x > 0.0 && x < 1.0) {
            return f64::NEG_INFINITY;
        }
        let p = x * (1.0 - x);
        -self.b / (p * p)
    }

    /// `exp(-B / (x²(1-x)²))`.
    pub fn envelope(&self, x: f64) -> f64 {
        self.exponent(x).exp()
    }

    pub fn w(&self, x: f64, t: f64) -> f64 {
        self.a * t * self.envelope(x)
    }

    pub fn w_t(&self, x: f64, _t: f64) -> f64 {
        self.a * self.envelope(x)
    }

    /// `∂^k w / ∂x^k` for `k ≤ 4`, through a Taylor jet of the exponent.
    pub fn w_dx(&self, k: usize, x: f64, t: f64) -> f64 {
        assert!(k <= 4, "derivative order {k} not supported");
        if self.exponent(x) < EXP_UNDERFLOW {
            return 0.0;
        }
        let p: Jet = [x - x * x, 1.0 - 2.0 * x, -1.0, 0.0, 0.0];
        let q = jet_mul(&p, &p);
        let g = jet_recip(&q).map(|c| -self.b * c);
        let e = jet_exp(&g);
        let fact = [1.0, 1.0, 2.0, 6.0, 24.0][k];
        self.a * t * fact * e[k]
    }

    pub fn w_x(&self, x: f64, t: f64) -> f64 {
        self.w_dx(1, x, t)
    }

    /// Factored form `2ABt exp(g) P₆(x) / (x⁶ (x-1)⁶)`.
    pub fn w_xx(&self, x: f64, t: f64) -> f64 {
        let g = self.exponent(x);
        if g < EXP_UNDERFLOW {
            return 0.0;
        }
        let d = x * (x - 1.0);
        let d6 = d * d * d * d * d * d;
        2.0 * self.a * self.b * t * g.exp() * p6(x, self.b) / d6
    }

    /// `ρ = -w_t + w_xx`.
    pub fn rho(&self, x: f64, t: f64) -> f64 {
        -self.w_t(x, t) + self.w_xx(x, t)
    }
}

/// Uniform nodes `x_i = i h` on `[0, 1]`; `1/h` must be an integer.
fn unit_nodes(h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) || h > 0.5 {
        return Err(Error::Range { key: "h".into(), msg: format!("must lie in (0, 1/2], got {h}") });
    }
    let n = (1.0 / h).round() as usize;
    if ((n as f64) * h - 1.0).abs() > 1e-9 {
        return Err(Error::Range { key: "h".into(), msg: format!("1/h must be an integer, got h = {h}") });
    }
    Ok((0..=n).map(|i| i as f64 / n as f64).collect())
}

/// Per-step extremes of the second derivative (or of the smaller radial eigenvalue).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStat {
    pub t: f64,
    pub dt: f64,
    pub min_second: f64,
    pub max_second: f64,
    /// Node attaining `min_second`.
    pub argmin: f64,
}

#[derive(Debug, Clone)]
pub struct Trace1d {
    pub h: f64,
    pub dt: f64,
    pub nodes: Vec<f64>,
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
    pub steps: Vec<StepStat>,
}

impl Trace1d {
    pub fn min_second(&self) -> StepStat {
        *self
            .steps
            .iter()
            .min_by(|a, b| a.min_second.total_cmp(&b.min_second))
            .expect("trace has at least one step")
    }
}

fn interp_into(out: &mut Vec<Vec<f64>>, prev: &[f64], next: &[f64], theta: f64) {
    out.push(prev.iter().zip(next).map(|(a, b)| a + theta * (b - a)).collect());
}

/// Explicit stepping of `u_t = u_xx - ψ` on `(0, 1)` with `u = φ` at `x ∈ {0, 1}` and `t = 0`.
///
/// Snapshots are taken at `output_times` (linear interpolation between steps).
pub fn solve_1d(psi: &ScalarFn, phi: &ScalarFn, h: f64, horizon: f64, output_times: &[f64]) -> Result<Trace1d> {
    let nodes = unit_nodes(h)?;
    let n = nodes.len() - 1;
    let dt_nominal = 0.4 * h * h;
    let mut u: Vec<f64> = nodes.iter().map(|&x| phi.eval([x, 0.0], 0.0)).collect();
    let mut next = u.clone();
    let mut steps = Vec::new();
    let mut snapshots = Vec::new();
    let mut times = Vec::new();
    let mut pending = output_times.iter().copied().filter(|&t| (0.0..=horizon).contains(&t)).peekable();
    while let Some(&t0) = pending.peek() {
        if t0 > 0.0 {
            break;
        }
        times.push(t0);
        snapshots.push(u.clone());
        pending.next();
    }
    let inv_h2 = 1.0 / (h * h);
    let second = |u: &[f64]| {
        let mut lo = (f64::INFINITY, 0.0);
        let mut hi = f64::NEG_INFINITY;
        for i in 1..n {
            let d = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * inv_h2;
            if d < lo.0 {
                lo = (d, nodes[i]);
            }
            hi = hi.max(d);
        }
        (lo, hi)
    };
    let mut t = 0.0;
    while t < horizon {
        let dt = dt_nominal.min(horizon - t);
        let ((lo, at), hi) = second(&u);
        steps.push(StepStat { t, dt, min_second: lo, max_second: hi, argmin: at });
        for i in 1..n {
            next[i] = u[i] + dt * ((u[i + 1] - 2.0 * u[i] + u[i - 1]) * inv_h2 - psi.eval([nodes[i], 0.0], t));
        }
        let t_new = if horizon - t <= dt_nominal { horizon } else { t + dt };
        next[0] = phi.eval([0.0, 0.0], t_new);
        next[n] = phi.eval([1.0, 0.0], t_new);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteField { t: t_new });
        }
        while let Some(&to) = pending.peek() {
            if to > t_new {
                break;
            }
            times.push(to);
            interp_into(&mut snapshots, &u, &next, (to - t) / (t_new - t));
            pending.next();
        }
        std::mem::swap(&mut u, &mut next);
        t = t_new;
    }
    let ((lo, at), hi) = second(&u);
    steps.push(StepStat { t, dt: 0.0, min_second: lo, max_second: hi, argmin: at });
    Ok(Trace1d { h, dt: dt_nominal, nodes, times, snapshots, steps })
}

/// Base data for the one-dimensional construction: `ψ`, `φ` on `(0, 1) × (0, T]`.
#[derive(Debug, Clone)]
pub struct Problem1d {
    pub psi: ScalarFn,
    pub phi: ScalarFn,
    pub horizon: f64,
}

impl Problem1d {
    /// `ψ ≡ 1`, `φ = x²/2`, `T = 1.25`: the stationary convex base.
    pub fn standard() -> Self {
        Problem1d {
            psi: ScalarFn::constant(1.0),
            phi: ScalarFn::new("x^2/2", |x, _| 0.5 * x[0] * x[0]),
            horizon: 1.25,
        }
    }

    fn forced(&self, bump: BumpParams) -> ScalarFn {
        let psi = self.psi.clone();
        ScalarFn::new(format!("{} + rho(A={}, B={})", psi.label(), bump.a, bump.b), move |x, t| {
            psi.eval(x, t) + bump.rho(x[0], t)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityLossReport {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub h: f64,
    pub dt: f64,
    pub min_second_derivative: f64,
    /// `(x or r, t)` where the minimum was attained.
    pub location: (f64, f64),
    pub convexity_lost: bool,
    /// Bisection threshold on `A`, when a search was run.
    pub threshold: Option<f64>,
    /// Max gap between the direct solve and the superposition `v + w`.
    pub superposition_gap: Option<f64>,
    /// `superposition_gap / (h² + dt)`.
    pub superposition_constant: Option<f64>,
    /// Largest `|ρ|` at the endpoints over the sampled times.
    pub rho_endpoint_max: Option<f64>,
}

const SUPERPOSITION_SAMPLES: usize = 50;

/// Direct solve with forcing `ψ + ρ`, checked against `v + w` where `v` solves the base problem.
pub fn run_counterexample_1d(base: &Problem1d, params: BumpParams, h: f64) -> Result<ConvexityLossReport> {
    let times: Vec<f64> =
        (0..=SUPERPOSITION_SAMPLES).map(|k| base.horizon * k as f64 / SUPERPOSITION_SAMPLES as f64).collect();
    let forced = base.forced(params);
    let (direct, v) = rayon::join(
        || solve_1d(&forced, &base.phi, h, base.horizon, &times),
        || solve_1d(&base.psi, &base.phi, h, base.horizon, &times),
    );
    let (direct, v) = (direct?, v?);
    let mut gap: f64 = 0.0;
    for ((t, ud), uv) in direct.times.iter().zip(&direct.snapshots).zip(&v.snapshots) {
        for (i, &x) in direct.nodes.iter().enumerate() {
            gap = gap.max((ud[i] - uv[i] - params.w(x, *t)).abs());
        }
    }
    let rho_end = times
        .iter()
        .flat_map(|&t| [params.rho(0.0, t).abs(), params.rho(1.0, t).abs()])
        .fold(0.0, f64::max);
    let m = direct.min_second();
    Ok(ConvexityLossReport {
        a: params.a,
        b: params.b,
        h,
        dt: direct.dt,
        min_second_derivative: m.min_second,
        location: (m.argmin, m.t),
        convexity_lost: m.min_second < 0.0,
        threshold: None,
        superposition_gap: Some(gap),
        superposition_constant: Some(gap / (h * h + direct.dt)),
        rho_endpoint_max: Some(rho_end),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSearch {
    /// First amplitude of the doubling sequence that lost convexity.
    pub a_found: f64,
    pub doublings: usize,
    /// Bisected threshold (grid dependent).
    pub a_star: f64,
    pub report: ConvexityLossReport,
}

pub const MAX_DOUBLINGS: usize = 20;
pub const BISECTION_STEPS: usize = 30;

fn min_uxx_1d(base: &Problem1d, bump: BumpParams, h: f64) -> Result<f64> {
    Ok(solve_1d(&base.forced(bump), &base.phi, h, base.horizon, &[])?.min_second().min_second)
}

/// Doubling from `a_start`, then bisection on the sign of `min u_xx`.
pub fn find_threshold_1d(base: &Problem1d, b: f64, h: f64, a_start: f64) -> Result<Option<ThresholdSearch>> {
    let mut a = a_start;
    let mut doublings = 0;
    loop {
        if min_uxx_1d(base, BumpParams::new(a, b)?, h)? < 0.0 {
            break;
        }
        if doublings == MAX_DOUBLINGS {
            return Ok(None);
        }
        a *= 2.0;
        doublings += 1;
    }
    let a_found = a;
    let (mut lo, mut hi) = (if doublings == 0 { 0.0 } else { a / 2.0 }, a);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if min_uxx_1d(base, BumpParams::new(mid, b)?, h)? < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut report = run_counterexample_1d(base, BumpParams::new(a_found, b)?, h)?;
    report.threshold = Some(hi);
    Ok(Some(ThresholdSearch { a_found, doublings, a_star: hi, report }))
}

/// Radial data for `-v_t + (v_r/r)^{n-1} v_rr = ψ(r, t)` on the unit ball in `n` dimensions.
/// Data functions take `[r, 0]` as their point argument.
#[derive(Debug, Clone)]
pub struct RadialProblem {
    pub n: u32,
    pub psi: ScalarFn,
    pub phi: ScalarFn,
    pub horizon: f64,
    pub bump: BumpParams,
}

impl RadialProblem {
    pub fn new(n: u32, psi: ScalarFn, phi: ScalarFn, horizon: f64, bump: BumpParams) -> Result<Self> {
        if n < 2 {
            return Err(Error::Range { key: "n".into(), msg: format!("dimension must be at least 2, got {n}") });
        }
        if !(horizon > 0.0) {
            return Err(Error::Range { key: "T".into(), msg: format!("must be positive, got {horizon}") });
        }
        Ok(RadialProblem { n, psi, phi, horizon, bump })
    }

    /// `v = r²/2`, `ψ ≡ 1`: stationary in every dimension.
    pub fn standard(n: u32, bump: BumpParams) -> Result<Self> {
        RadialProblem::new(
            n,
            ScalarFn::constant(1.0),
            ScalarFn::new("r^2/2", |x, _| 0.5 * x[0] * x[0]),
            1.25,
            bump,
        )
    }
}

#[derive(Debug, Clone)]
pub struct RadialTrace {
    pub h: f64,
    pub nodes: Vec<f64>,
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
    /// `min_second` is `min(v_rr, v_r/r)` over nodes.
    pub steps: Vec<StepStat>,
    /// Set when `v_r < 0` appeared at some node and step.
    pub negative_slope: bool,
}

/// Radial derivatives `(v_r, v_rr)` at node `i`, using the even extension at `r = 0`.
fn radial_derivs(v: &[f64], i: usize, h: f64) -> (f64, f64) {
    if i == 0 {
        (0.0, 2.0 * (v[1] - v[0]) / (h * h))
    } else {
        ((v[i + 1] - v[i - 1]) / (2.0 * h), (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h))
    }
}

/// `(v_r/r)^{n-1} v_rr`, with `v_rr(0)^n` at the origin.
fn radial_operator(n: u32, v: &[f64], i: usize, r: f64, h: f64) -> f64 {
    let (vr, vrr) = radial_derivs(v, i, h);
    if i == 0 {
        vrr.powi(n as i32)
    } else {
        (vr / r).powi(n as i32 - 1) * vrr
    }
}

pub fn solve_radial(problem: &RadialProblem, h: f64, output_times: &[f64]) -> Result<RadialTrace> {
    let nodes = unit_nodes(h)?;
    let m = nodes.len() - 1;
    let n = problem.n;
    let horizon = problem.horizon;
    let mut v: Vec<f64> = nodes.iter().map(|&r| problem.phi.eval([r, 0.0], 0.0)).collect();
    let mut next = v.clone();
    let mut steps = Vec::new();
    let mut snapshots = Vec::new();
    let mut times = Vec::new();
    let mut negative_slope = false;
    let mut pending = output_times.iter().copied().filter(|&t| (0.0..=horizon).contains(&t)).peekable();
    while let Some(&t0) = pending.peek() {
        if t0 > 0.0 {
            break;
        }
        times.push(t0);
        snapshots.push(v.clone());
        pending.next();
    }
    let stats = |v: &[f64], negative: &mut bool| {
        let mut lo = (f64::INFINITY, 0.0);
        let mut hi = f64::NEG_INFINITY;
        let mut coef: f64 = 1e-12;
        for i in 0..m {
            let (vr, vrr) = radial_derivs(v, i, h);
            let slope = if i == 0 { vrr } else { vr / nodes[i] };
            if vr < 0.0 {
                *negative = true;
            }
            let e = vrr.min(slope);
            if e < lo.0 {
                lo = (e, nodes[i]);
            }
            hi = hi.max(vrr.max(slope));
            let c = if i == 0 {
                n as f64 * vrr.abs().powi(n as i32 - 1)
            } else {
                let s = slope.abs();
                s.powi(n as i32 - 1) + (n - 1) as f64 * s.powi(n as i32 - 2) * vrr.abs() * h / (2.0 * nodes[i])
            };
            coef = coef.max(c);
        }
        (lo, hi, coef)
    };
    let dt_min = 1e-10 * horizon;
    let mut t = 0.0;
    while t < horizon {
        let ((lo, at), hi, coef) = stats(&v, &mut negative_slope);
        let mut dt = 0.4 * h * h / (2.0 * coef);
        if dt < dt_min {
            return Err(Error::StiffnessOverflow { t, dt, dt_min });
        }
        dt = dt.min(horizon - t);
        steps.push(StepStat { t, dt, min_second: lo, max_second: hi, argmin: at });
        for i in 0..m {
            next[i] = v[i] + dt * (radial_operator(n, &v, i, nodes[i], h) - problem.psi.eval([nodes[i], 0.0], t));
        }
        let t_new = if dt == horizon - t { horizon } else { t + dt };
        next[m] = problem.phi.eval([1.0, 0.0], t_new);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteField { t: t_new });
        }
        while let Some(&to) = pending.peek() {
            if to > t_new {
                break;
            }
            times.push(to);
            interp_into(&mut snapshots, &v, &next, (to - t) / (t_new - t));
            pending.next();
        }
        std::mem::swap(&mut v, &mut next);
        t = t_new;
    }
    let ((lo, at), hi, _) = stats(&v, &mut negative_slope);
    steps.push(StepStat { t, dt: 0.0, min_second: lo, max_second: hi, argmin: at });
    Ok(RadialTrace { h, nodes, times, snapshots, steps, negative_slope })
}

/// One row of the amplitude sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "A")]
    pub a: f64,
    pub min_second_derivative: f64,
    pub psi_at_r0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialCounterexampleReport {
    pub n: u32,
    #[serde(rename = "B")]
    pub b: f64,
    pub h: f64,
    /// Scan node minimising `w_rr(·, 1)`.
    pub r0: f64,
    pub rows: Vec<SweepRow>,
    pub fit_slope: f64,
    pub fit_r2: f64,
    pub strictly_decreasing: bool,
    /// Largest `|Ψ - ψ|` at `r = 1` over sampled times and amplitudes.
    pub boundary_gap: f64,
    /// Amplitude where `min(u_rr, u_r/r)` of `u = v + w` crosses zero, if found.
    pub crossing: Option<f64>,
    pub report: ConvexityLossReport,
}

/// `Ψ = -v_t - w_t + ((v_r + w_r)/r)^{n-1} (v_rr + w_rr)`, with `-v_t` taken from the base equation.
fn radial_psi(problem: &RadialProblem, bump: BumpParams, base: (f64, f64), r: f64, t: f64) -> f64 {
    let (vr, vrr) = base;
    let n = problem.n as i32;
    let minus_vt = problem.psi.eval([r, 0.0], t) - (vr / r).powi(n - 1) * vrr;
    minus_vt - bump.w_t(r, t) + ((vr + bump.w_x(r, t)) / r).powi(n - 1) * (vrr + bump.w_xx(r, t))
}

/// Least-squares line through `(x_i, y_i)`; returns `(slope, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

/// Smallest radial eigenvalue `min(u_rr, u_r/r)` of `u = v + w` over the snapshot set.
fn radial_min_eig(trace: &RadialTrace, bump: BumpParams) -> (f64, f64, f64) {
    let h = trace.h;
    let m = trace.nodes.len() - 1;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for (t, v) in trace.times.iter().zip(&trace.snapshots) {
        for i in 0..m {
            let r = trace.nodes[i];
            let (vr, vrr) = radial_derivs(v, i, h);
            let (ur, urr) = (vr + bump.w_x(r, *t), vrr + bump.w_xx(r, *t));
            let e = if i == 0 { urr } else { urr.min(ur / r) };
            if e < best.0 {
                best = (e, r, *t);
            }
        }
    }
    best
}

pub fn run_counterexample_radial(problem: &RadialProblem, h: f64, amplitudes: &[f64]) -> Result<RadialCounterexampleReport> {
    let samples = 50;
    let mut times: Vec<f64> = (0..=samples).map(|k| problem.horizon * k as f64 / samples as f64).collect();
    times.push(1.0);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let trace = solve_radial(problem, h, &times)?;
    let m = trace.nodes.len() - 1;
    let unit = BumpParams::new(1.0, problem.bump.b)?;
    let i0 = (1..m)
        .min_by(|&i, &j| unit.w_xx(trace.nodes[i], 1.0).total_cmp(&unit.w_xx(trace.nodes[j], 1.0)))
        .ok_or_else(|| Error::InvalidProblem("radial grid has no interior node".into()))?;
    let r0 = trace.nodes[i0];
    let k1 = trace.times.iter().position(|&t| t == 1.0).expect("t = 1 is always sampled");
    let base_at_r0 = radial_derivs(&trace.snapshots[k1], i0, h);

    let rows: Vec<SweepRow> = amplitudes
        .par_iter()
        .map(|&a| {
            let bump = BumpParams::new(a, problem.bump.b)?;
            Ok(SweepRow {
                a,
                min_second_derivative: radial_min_eig(&trace, bump).0,
                psi_at_r0: radial_psi(problem, bump, base_at_r0, r0, 1.0),
            })
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.a).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.psi_at_r0).collect();
    let (fit_slope, fit_r2) = linear_fit(&xs, &ys);
    let strictly_decreasing = ys.windows(2).all(|w| w[1] < w[0]);

    let mut boundary_gap: f64 = 0.0;
    for (t, v) in trace.times.iter().zip(&trace.snapshots) {
        // One-sided base derivatives at r = 1; the bump terms vanish there.
        let vr = (3.0 * v[m] - 4.0 * v[m - 1] + v[m - 2]) / (2.0 * h);
        let vrr = (2.0 * v[m] - 5.0 * v[m - 1] + 4.0 * v[m - 2] - v[m - 3]) / (h * h);
        for &a in amplitudes {
            let bump = BumpParams::new(a, problem.bump.b)?;
            let psi_bar = radial_psi(problem, bump, (vr, vrr), 1.0, *t);
            let psi_base = radial_psi(problem, BumpParams { a: 0.0, b: 1.0 }, (vr, vrr), 1.0, *t);
            boundary_gap = boundary_gap.max((psi_bar - psi_base).abs());
        }
    }

    let loses = |a: f64| radial_min_eig(&trace, BumpParams { a, b: problem.bump.b }).0 < 0.0;
    let mut crossing = None;
    if !loses(0.0) {
        let mut hi = 1.0;
        let mut doublings = 0;
        while !loses(hi) && doublings < 60 {
            hi *= 2.0;
            doublings += 1;
        }
        if loses(hi) {
            let mut lo = 0.0;
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                if loses(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            crossing = Some(hi);
        }
    }

    let (min_eig, r_at, t_at) = radial_min_eig(&trace, problem.bump);
    Ok(RadialCounterexampleReport {
        n: problem.n,
        b: problem.bump.b,
        h,
        r0,
        rows,
        fit_slope,
        fit_r2,
        strictly_decreasing,
        boundary_gap,
        crossing,
        report: ConvexityLossReport {
            a: problem.bump.a,
            b: problem.bump.b,
            h,
            dt: trace.steps.first().map_or(0.0, |s| s.dt),
            min_second_derivative: min_eig,
            location: (r_at, t_at),
            convexity_lost: min_eig < 0.0,
            threshold: crossing,
            superposition_gap: None,
            superposition_constant: None,
            rho_endpoint_max: None,
        },
    })
}
