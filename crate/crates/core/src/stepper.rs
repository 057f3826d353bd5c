//! Explicit time marching for `u_t = det D²u - ψ` and for the γ-Gauss curvature flow,
//! with Dirichlet data re-imposed after every step and CFL-limited step sizes.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Grid, GridFunction, Point};
use crate::operators::{center_sensitivity, eig_2x2, gradient_at, hessian_at, ma_at, MaScheme};
use crate::problem::{EquationKind, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub safety: f64,
    /// `dt_min = dt_min_factor · T`.
    pub dt_min_factor: f64,
    pub scheme: MaScheme,
    /// Store a snapshot after every accepted step in addition to the output times.
    pub every_step: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { safety: 0.5, dt_min_factor: 1e-10, scheme: MaScheme::default(), every_step: false }
    }
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub t: f64,
    pub u: GridFunction,
    pub step: usize,
    pub last_dt: f64,
}

impl SolverState {
    /// `u(·, 0) = φ(·, 0)` on every node.
    pub fn initial(spec: &ProblemSpec, grid: Arc<Grid>) -> Result<Self> {
        let u = GridFunction::from_fn(grid, |p| spec.phi.eval(p, 0.0))
            .map_err(|_| Error::EvaluationError("φ(·, 0) is not finite on the grid".into()))?;
        Ok(SolverState { t: 0.0, u, step: 0, last_dt: 0.0 })
    }
}

/// Statistics of one accepted step, measured on the state the step started from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub min_ut_psi: f64,
    pub max_ut_psi: f64,
    pub min_lambda_interior: f64,
    pub max_lambda_interior: f64,
    pub min_lambda_boundary: f64,
    pub max_lambda_boundary: f64,
    pub min_mah: f64,
    /// `dt` over the unclamped CFL step.
    pub cfl_ratio: f64,
}

impl StepDiagnostics {
    pub fn min_lambda(&self) -> f64 {
        self.min_lambda_interior.min(self.min_lambda_boundary)
    }

    pub fn max_lambda(&self) -> f64 {
        self.max_lambda_interior.max(self.max_lambda_boundary)
    }
}

#[derive(Debug, Clone)]
pub struct SolutionTrace {
    pub times: Vec<f64>,
    pub snapshots: Vec<GridFunction>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub scheme: MaScheme,
}

impl SolutionTrace {
    pub fn grid(&self) -> &Arc<Grid> {
        self.snapshots[0].grid()
    }

    pub fn last(&self) -> (f64, &GridFunction) {
        (*self.times.last().expect("non-empty"), self.snapshots.last().expect("non-empty"))
    }

    /// Index of the snapshot closest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        (0..self.times.len())
            .min_by(|&a, &b| (self.times[a] - t).abs().total_cmp(&(self.times[b] - t).abs()))
            .expect("non-empty")
    }
}

/// `(MA⁺)^γ (1 + |Du|²)^{(1 - 4γ)/2}`: vertical speed of the γ-flow of a graph in ℝ³.
#[inline]
pub fn gcf_speed(ma: f64, grad: Point, gamma: f64) -> f64 {
    let q = 1.0 + grad[0] * grad[0] + grad[1] * grad[1];
    ma.max(0.0).powf(gamma) * q.powf((1.0 - 4.0 * gamma) / 2.0)
}

/// `MA / (1 + |Du|²)^{3/2}`.
#[inline]
pub fn gcf_speed_classic(ma: f64, grad: Point) -> f64 {
    let q = 1.0 + grad[0] * grad[0] + grad[1] * grad[1];
    ma * q.powf(-1.5)
}

/// Per-node rate and sensitivity of the update.
struct NodeEval {
    rate: f64,
    ut_psi: f64,
    sensitivity: f64,
    ma: f64,
    lambda: (f64, f64),
}

fn evaluate(state: &SolverState, spec: &ProblemSpec, scheme: MaScheme) -> Vec<NodeEval> {
    let grid = state.u.grid();
    let u = state.u.values();
    let t = state.t;
    (0..grid.n_interior())
        .into_par_iter()
        .map(|k| {
            let ma = ma_at(grid, u, k, scheme);
            let s = center_sensitivity(grid, u, k, scheme);
            let lambda = eig_2x2(&hessian_at(grid, u, k));
            match spec.kind {
                EquationKind::Pma => {
                    let psi = spec.psi.eval(grid.point(k), t);
                    NodeEval { rate: ma - psi, ut_psi: ma, sensitivity: s, ma, lambda }
                }
                EquationKind::Gcf { gamma } => {
                    let g = gradient_at(grid, u, k);
                    let speed = gcf_speed(ma, g, gamma);
                    let q = 1.0 + g[0] * g[0] + g[1] * g[1];
                    // d speed / d MA, floored away from the degenerate MA = 0.
                    let dma = gamma * ma.max(1e-8).powf(gamma - 1.0) * q.powf((1.0 - 4.0 * gamma) / 2.0);
                    NodeEval { rate: speed, ut_psi: speed, sensitivity: s * dma, ma, lambda }
                }
            }
        })
        .collect()
}

fn unclamped_dt(evals: &[NodeEval], safety: f64) -> f64 {
    let s = evals.iter().map(|e| e.sensitivity).fold(0.0, f64::max);
    if s > 0.0 {
        safety / s
    } else {
        f64::INFINITY
    }
}

/// CFL step for the current state, clamped to `T - t`.
///
/// `dt = safety / max_p S(p)` where `S(p)` bounds `-∂(rate)/∂u(p)`; on uniform arms with
/// unit Hessian this is `safety · h² / 4`.
pub fn cfl_dt(state: &SolverState, spec: &ProblemSpec, opts: &SolveOptions) -> Result<f64> {
    let evals = evaluate(state, spec, opts.scheme);
    clamp_dt(unclamped_dt(&evals, opts.safety), state.t, spec, opts)
}

fn clamp_dt(dt: f64, t: f64, spec: &ProblemSpec, opts: &SolveOptions) -> Result<f64> {
    let dt_min = opts.dt_min_factor * spec.horizon;
    if !(dt >= dt_min) {
        return Err(Error::StiffnessOverflow { t, dt, dt_min });
    }
    Ok(dt.min(spec.horizon - t))
}

fn advance(state: &SolverState, spec: &ProblemSpec, evals: &[NodeEval], dt: f64) -> Result<SolverState> {
    let grid = state.u.grid().clone();
    let t_new = if dt == spec.horizon - state.t { spec.horizon } else { state.t + dt };
    let old = state.u.values();
    let mut values = Vec::with_capacity(grid.n_nodes());
    values.extend(evals.iter().zip(old).map(|(e, u)| u + dt * e.rate));
    values.extend(grid.boundary_points().iter().map(|&p| spec.phi.eval(p, t_new)));
    let u = GridFunction::new(grid, values).map_err(|_| Error::NonFiniteField { t: t_new })?;
    Ok(SolverState { t: t_new, u, step: state.step + 1, last_dt: dt })
}

fn step_with(state: &SolverState, spec: &ProblemSpec, dt: f64, scheme: MaScheme) -> Result<SolverState> {
    let evals = evaluate(state, spec, scheme);
    advance(state, spec, &evals, dt)
}

/// `uⁿ⁺¹ = uⁿ + dt (MA_h[uⁿ] - ψ(·, tⁿ))` at interior nodes; boundary set to `φ(·, tⁿ⁺¹)`.
pub fn step_pma(state: &SolverState, spec: &ProblemSpec, dt: f64, scheme: MaScheme) -> Result<SolverState> {
    if spec.kind != EquationKind::Pma {
        return Err(Error::InvalidProblem("step_pma needs a PMA problem".into()));
    }
    step_with(state, spec, dt, scheme)
}

/// `uⁿ⁺¹ = uⁿ + dt · gcf_speed(MA_h[uⁿ], Du, γ)` at interior nodes.
pub fn step_gcf(state: &SolverState, spec: &ProblemSpec, dt: f64, scheme: MaScheme) -> Result<SolverState> {
    if !matches!(spec.kind, EquationKind::Gcf { .. }) {
        return Err(Error::InvalidProblem("step_gcf needs a GCF problem".into()));
    }
    step_with(state, spec, dt, scheme)
}

fn diagnostics(state: &SolverState, evals: &[NodeEval], dt: f64, dt_cfl: f64) -> StepDiagnostics {
    let grid = state.u.grid();
    let mut d = StepDiagnostics {
        step: state.step,
        t: state.t,
        dt,
        min_ut_psi: f64::INFINITY,
        max_ut_psi: f64::NEG_INFINITY,
        min_lambda_interior: f64::INFINITY,
        max_lambda_interior: f64::NEG_INFINITY,
        min_lambda_boundary: f64::INFINITY,
        max_lambda_boundary: f64::NEG_INFINITY,
        min_mah: f64::INFINITY,
        cfl_ratio: if dt_cfl.is_finite() { dt / dt_cfl } else { 0.0 },
    };
    for (k, e) in evals.iter().enumerate() {
        d.min_ut_psi = d.min_ut_psi.min(e.ut_psi);
        d.max_ut_psi = d.max_ut_psi.max(e.ut_psi);
        d.min_mah = d.min_mah.min(e.ma);
        if grid.is_boundary_adjacent(k) {
            d.min_lambda_boundary = d.min_lambda_boundary.min(e.lambda.0);
            d.max_lambda_boundary = d.max_lambda_boundary.max(e.lambda.1);
        } else {
            d.min_lambda_interior = d.min_lambda_interior.min(e.lambda.0);
            d.max_lambda_interior = d.max_lambda_interior.max(e.lambda.1);
        }
    }
    // A grid may have no node of one class; mirror the other so every pair stays finite.
    if !d.min_lambda_interior.is_finite() {
        d.min_lambda_interior = d.min_lambda_boundary;
        d.max_lambda_interior = d.max_lambda_boundary;
    }
    if !d.min_lambda_boundary.is_finite() {
        d.min_lambda_boundary = d.min_lambda_interior;
        d.max_lambda_boundary = d.max_lambda_interior;
    }
    d
}

/// Snapshot bookkeeping shared by the single and lockstep drivers.
struct Recorder {
    pending: Vec<f64>,
    next: usize,
    every_step: bool,
    trace: SolutionTrace,
}

impl Recorder {
    fn new(output_times: &[f64], horizon: f64, every_step: bool, initial: &SolverState, scheme: MaScheme) -> Self {
        let mut pending: Vec<f64> = output_times.iter().copied().filter(|t| (0.0..=horizon).contains(t)).collect();
        pending.sort_by(f64::total_cmp);
        pending.dedup();
        let mut r = Recorder {
            pending,
            next: 0,
            every_step,
            trace: SolutionTrace { times: vec![0.0], snapshots: vec![initial.u.clone()], diagnostics: Vec::new(), scheme },
        };
        while r.next < r.pending.len() && r.pending[r.next] <= 0.0 {
            r.next += 1;
        }
        r
    }

    fn record(&mut self, prev: &SolverState, cur: &SolverState, diag: StepDiagnostics) {
        self.trace.diagnostics.push(diag);
        while self.next < self.pending.len() && self.pending[self.next] <= cur.t {
            let to = self.pending[self.next];
            self.next += 1;
            if self.every_step && to == cur.t {
                continue;
            }
            let theta = (to - prev.t) / (cur.t - prev.t);
            let snap = if theta >= 1.0 {
                cur.u.clone()
            } else {
                let v = prev.u.values().iter().zip(cur.u.values()).map(|(a, b)| a + theta * (b - a)).collect();
                GridFunction::new(cur.u.grid().clone(), v).expect("interpolant of finite fields is finite")
            };
            self.trace.times.push(to);
            self.trace.snapshots.push(snap);
        }
        if self.every_step {
            self.trace.times.push(cur.t);
            self.trace.snapshots.push(cur.u.clone());
        }
    }
}

/// March from `φ(·, 0)` to `T`. Snapshot 0 is always `t = 0`.
pub fn solve(spec: &ProblemSpec, grid: Arc<Grid>, output_times: &[f64], opts: &SolveOptions) -> Result<SolutionTrace> {
    solve_observed(spec, grid, output_times, opts, |_| {})
}

/// [`solve`], calling `observe` on the initial state and after every accepted step.
pub fn solve_observed(
    spec: &ProblemSpec,
    grid: Arc<Grid>,
    output_times: &[f64],
    opts: &SolveOptions,
    mut observe: impl FnMut(&SolverState),
) -> Result<SolutionTrace> {
    let mut state = SolverState::initial(spec, grid)?;
    let mut rec = Recorder::new(output_times, spec.horizon, opts.every_step, &state, opts.scheme);
    observe(&state);
    while state.t < spec.horizon {
        let evals = evaluate(&state, spec, opts.scheme);
        let dt_cfl = unclamped_dt(&evals, opts.safety);
        let dt = clamp_dt(dt_cfl, state.t, spec, opts)?;
        let next = advance(&state, spec, &evals, dt)?;
        rec.record(&state, &next, diagnostics(&state, &evals, dt, dt_cfl));
        state = next;
        observe(&state);
    }
    Ok(rec.trace)
}

/// Solve two problems on the same grid with a shared step sequence
/// (`dt` is the smaller of the two CFL steps). Both horizons must agree.
pub fn solve_lockstep(
    specs: [&ProblemSpec; 2],
    grid: Arc<Grid>,
    output_times: &[f64],
    opts: &SolveOptions,
) -> Result<[SolutionTrace; 2]> {
    if specs[0].horizon != specs[1].horizon {
        return Err(Error::IncompatibleTraces("lockstep runs need equal horizons".into()));
    }
    let mut states = [SolverState::initial(specs[0], grid.clone())?, SolverState::initial(specs[1], grid)?];
    let mut recs = [
        Recorder::new(output_times, specs[0].horizon, opts.every_step, &states[0], opts.scheme),
        Recorder::new(output_times, specs[1].horizon, opts.every_step, &states[1], opts.scheme),
    ];
    while states[0].t < specs[0].horizon {
        let evals = [evaluate(&states[0], specs[0], opts.scheme), evaluate(&states[1], specs[1], opts.scheme)];
        let dt_cfl = unclamped_dt(&evals[0], opts.safety).min(unclamped_dt(&evals[1], opts.safety));
        let dt = clamp_dt(dt_cfl, states[0].t, specs[0], opts)?;
        for i in 0..2 {
            let next = advance(&states[i], specs[i], &evals[i], dt)?;
            recs[i].record(&states[i], &next, diagnostics(&states[i], &evals[i], dt, dt_cfl));
            states[i] = next;
        }
    }
    let [a, b] = recs;
    Ok([a.trace, b.trace])
}
