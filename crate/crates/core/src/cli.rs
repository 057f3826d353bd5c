//! Run configuration, experiment orchestration, and deterministic output files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::counterexamples::{
    find_threshold_1d, run_counterexample_1d, run_counterexample_radial, BumpParams, Problem1d, RadialProblem,
};
use crate::error::{Error, Result};
use crate::geometry::Grid;
use crate::harness::{
    check_comparison, check_dual_max_principle, check_eigen_bounds, check_gcf_gradient_bound, check_ut_bounds,
    holder_seminorm, ordered_data, time_derivative_fields, EstimateReport, HolderResult,
};
use crate::legendre::dual_residual;
use crate::operators::{MaScheme, StencilWidth};
use crate::problem::{
    builtin_problem_with, check_compatibility_order1, validate_conditions, BuiltinParams, EquationKind, InlineProblem,
    ProblemSpec, ScalarFn, SpatialDomain,
};
use crate::stepper::{solve, solve_lockstep, solve_observed, SolutionTrace, SolveOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    Verify,
    Legendre,
    Counterexample,
    Convergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeChoice {
    Monotone,
    Central,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Slack multiplier for `O(h)` checks.
    pub kappa: f64,
    pub comparison: f64,
    pub condition: f64,
    pub compatibility: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            kappa: crate::harness::KAPPA,
            comparison: crate::harness::COMPARISON_TOL,
            condition: crate::problem::CONDITION_TOL,
            compatibility: crate::problem::COMPATIBILITY_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    /// Built-in problem name; ignored when `inline` is given.
    #[serde(default)]
    pub problem: Option<String>,
    #[serde(default)]
    pub inline: Option<InlineProblem>,
    #[serde(default)]
    pub params: BuiltinParams,
    #[serde(default = "default_h")]
    pub h: f64,
    /// Grid levels for `convergence`.
    #[serde(default = "default_levels")]
    pub h_levels: Vec<f64>,
    /// Overrides the problem's horizon.
    #[serde(rename = "T", default)]
    pub horizon: Option<f64>,
    /// Snapshot times; defaults to ten evenly spaced times.
    #[serde(default)]
    pub output_times: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_scheme")]
    pub scheme: SchemeChoice,
    #[serde(default = "default_width")]
    pub stencil_width: u32,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_pairs")]
    pub holder_pairs: usize,
    #[serde(default = "default_alpha")]
    pub holder_alpha: f64,
    /// Amplitude sweep for `counterexample`.
    #[serde(default = "default_amplitudes")]
    pub amplitudes: Vec<f64>,
    /// Dual spacing as a multiple of `h`; defaults to `ceil(h^{-1/2})`.
    #[serde(default)]
    pub dual_factor: Option<usize>,
    /// Radial dimension for `ce_radial`.
    #[serde(default = "default_dimension")]
    pub dimension: u32,
    /// Output directory. Not serialised, so it does not enter the config hash.
    #[serde(default = "default_out", skip_serializing)]
    pub out: PathBuf,
}

fn default_h() -> f64 {
    0.125
}
fn default_levels() -> Vec<f64> {
    vec![0.125, 0.0625, 0.03125]
}
fn default_scheme() -> SchemeChoice {
    SchemeChoice::Monotone
}
fn default_width() -> u32 {
    2
}
fn default_safety() -> f64 {
    0.5
}
fn default_pairs() -> usize {
    crate::harness::HOLDER_PAIRS
}
fn default_alpha() -> f64 {
    0.5
}
fn default_amplitudes() -> Vec<f64> {
    vec![1.0, 10.0, 100.0]
}
fn default_dimension() -> u32 {
    2
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn unknown_field(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

/// Parse and validate a JSON run configuration. Unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        match unknown_field(&msg) {
            Some(key) => Error::UnknownKey(key),
            None => Error::Parse { line: e.line(), col: e.column(), msg },
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn range(key: &str, msg: String) -> Error {
    Error::Range { key: key.to_string(), msg }
}

impl RunConfig {
    pub fn minimal(command: Command, problem: &str) -> Self {
        RunConfig {
            command,
            problem: Some(problem.to_string()),
            inline: None,
            params: BuiltinParams::default(),
            h: default_h(),
            h_levels: default_levels(),
            horizon: None,
            output_times: None,
            tolerances: Tolerances::default(),
            scheme: default_scheme(),
            stencil_width: default_width(),
            safety: default_safety(),
            seed: 0,
            holder_pairs: default_pairs(),
            holder_alpha: default_alpha(),
            amplitudes: default_amplitudes(),
            dual_factor: None,
            dimension: default_dimension(),
            out: default_out(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(range("h", format!("must be positive, got {}", self.h)));
        }
        if let Some(t) = self.horizon {
            if !(t > 0.0) || !t.is_finite() {
                return Err(range("T", format!("must be positive, got {t}")));
            }
        }
        if self.h_levels.is_empty() || self.h_levels.iter().any(|h| !(*h > 0.0)) {
            return Err(range("h_levels", "must be a non-empty list of positive spacings".into()));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(range("safety", format!("must lie in (0, 1], got {}", self.safety)));
        }
        if StencilWidth::from_width(self.stencil_width).is_none() {
            return Err(range("stencil_width", format!("must be 1 or 2, got {}", self.stencil_width)));
        }
        if let Some(ts) = &self.output_times {
            if ts.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
                return Err(range("output_times", "times must be finite and non-negative".into()));
            }
        }
        if !(self.holder_alpha > 0.0 && self.holder_alpha <= 1.0) {
            return Err(range("holder_alpha", format!("must lie in (0, 1], got {}", self.holder_alpha)));
        }
        if self.amplitudes.iter().any(|a| !(*a > 0.0)) {
            return Err(range("amplitudes", "must be positive".into()));
        }
        if self.dual_factor == Some(0) {
            return Err(range("dual_factor", "must be at least 1".into()));
        }
        if self.problem.is_none() && self.inline.is_none() {
            return Err(range("problem", "either `problem` or `inline` is required".into()));
        }
        Ok(())
    }

    pub fn scheme(&self) -> MaScheme {
        match self.scheme {
            SchemeChoice::Monotone => {
                MaScheme::Monotone(StencilWidth::from_width(self.stencil_width).expect("validated"))
            }
            SchemeChoice::Central => MaScheme::Central,
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions { safety: self.safety, scheme: self.scheme(), ..SolveOptions::default() }
    }

    pub fn problem_name(&self) -> String {
        match (&self.inline, &self.problem) {
            (Some(i), _) => i.name.clone(),
            (None, Some(p)) => p.clone(),
            (None, None) => String::new(),
        }
    }

    pub fn spec(&self) -> Result<ProblemSpec> {
        let spec = match (&self.inline, &self.problem) {
            (Some(i), _) => i.build()?,
            (None, Some(name)) => builtin_problem_with(name, &self.params)?,
            (None, None) => return Err(range("problem", "missing".into())),
        };
        match self.horizon {
            Some(t) => spec.with_horizon(t),
            None => Ok(spec),
        }
    }

    pub fn times(&self, horizon: f64) -> Vec<f64> {
        match &self.output_times {
            Some(ts) => ts.iter().copied().filter(|&t| t <= horizon).collect(),
            None => (1..=10).map(|k| horizon * k as f64 / 10.0).collect(),
        }
    }

    /// Canonical JSON of the resolved configuration.
    pub fn resolved_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_string(self).expect("config serialises").as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

#[inline]
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV writer stamping the config hash on its first line.
struct Csv {
    text: String,
}

impl Csv {
    fn new(hash: &str, header: &[&str]) -> Self {
        Csv { text: format!("# config_hash={hash}\n{}\n", header.join(",")) }
    }

    fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    fn write(self, path: &Path) -> Result<()> {
        fs::write(path, self.text)?;
        Ok(())
    }
}

fn write_json(path: &Path, hash: &str, body: serde_json::Value) -> Result<()> {
    let doc = json!({ "config_hash": hash, "report": body });
    fs::write(path, serde_json::to_string_pretty(&doc).expect("report serialises") + "\n")?;
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("report serialises")
}

/// Result of [`run`]: whether every asserted check passed, and the files written.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub success: bool,
    pub files: Vec<PathBuf>,
}

struct Outputs<'a> {
    dir: &'a Path,
    hash: String,
    files: Vec<PathBuf>,
}

impl Outputs<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn csv(&mut self, name: &str, csv: Csv) -> Result<()> {
        let p = self.path(name);
        csv.write(&p)
    }

    fn json(&mut self, name: &str, body: serde_json::Value) -> Result<()> {
        let p = self.path(name);
        write_json(&p, &self.hash, body)
    }
}

fn write_diagnostics(out: &mut Outputs, trace: &SolutionTrace) -> Result<()> {
    let mut csv =
        Csv::new(&out.hash, &["step", "t", "dt", "min_ut_psi", "max_ut_psi", "min_lambda", "max_lambda", "min_MAh"]);
    for d in &trace.diagnostics {
        csv.row(&[
            d.step.to_string(),
            num(d.t),
            num(d.dt),
            num(d.min_ut_psi),
            num(d.max_ut_psi),
            num(d.min_lambda()),
            num(d.max_lambda()),
            num(d.min_mah),
        ]);
    }
    out.csv("diagnostics.csv", csv)
}

fn write_snapshots(out: &mut Outputs, trace: &SolutionTrace) -> Result<()> {
    let grid = trace.grid().clone();
    for (i, u) in trace.snapshots.iter().enumerate() {
        let mut csv = Csv { text: format!("# config_hash={}\n# t={}\nx1,x2,u\n", out.hash, num(trace.times[i])) };
        for k in 0..grid.n_nodes() {
            let p = grid.point(k);
            csv.row(&[num(p[0]), num(p[1]), num(u[k])]);
        }
        out.csv(&format!("snapshot_{i:03}.csv"), csv)?;
    }
    Ok(())
}

fn planar_grid(spec: &ProblemSpec, h: f64) -> Result<Arc<Grid>> {
    Ok(Arc::new(Grid::new(spec.planar_domain()?.clone(), h)?))
}

/// Execute a validated configuration, writing every artifact under `config.out`.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    fs::create_dir_all(&config.out)?;
    let mut out = Outputs { dir: &config.out, hash: config.hash(), files: Vec::new() };
    let p = out.path("resolved_config.json");
    fs::write(&p, config.resolved_json() + "\n")?;
    let success = match config.command {
        Command::Solve => run_solve(config, &mut out)?,
        Command::Verify => run_verify(config, &mut out)?,
        Command::Legendre => run_legendre(config, &mut out)?,
        Command::Counterexample => run_counterexample(config, &mut out)?,
        Command::Convergence => run_convergence(config, &mut out)?,
    };
    Ok(RunOutcome { success, files: out.files })
}

/// Write a machine-readable failure report next to the other outputs.
pub fn write_failure(config: &RunConfig, err: &Error) -> Result<PathBuf> {
    fs::create_dir_all(&config.out)?;
    let path = config.out.join("failure.json");
    write_json(&path, &config.hash(), json!({ "error": err.kind(), "message": err.to_string() }))?;
    Ok(path)
}

fn run_solve(config: &RunConfig, out: &mut Outputs) -> Result<bool> {
    let spec = config.spec()?;
    let grid = planar_grid(&spec, config.h)?;
    let trace = solve(&spec, grid, &config.times(spec.horizon), &config.solve_options())?;
    write_diagnostics(out, &trace)?;
    write_snapshots(out, &trace)?;
    let conditions = validate_conditions(&spec, 4.0 / config.h, config.tolerances.condition)?;
    let report = EstimateReport::new(&config.problem_name(), &trace);
    out.json("report.json", json!({ "conditions": to_value(&conditions), "estimates": to_value(&report) }))?;
    Ok(true)
}

fn holder_results(config: &RunConfig, trace: &SolutionTrace) -> Result<Vec<HolderResult>> {
    let mut res = Vec::new();
    let a = config.holder_alpha;
    let s = holder_seminorm(&trace.times, &trace.snapshots, a, config.holder_pairs, config.seed)?;
    res.push(HolderResult { field: "u".into(), alpha: a, seminorm: s, pairs: config.holder_pairs });
    let (ts, fs) = time_derivative_fields(trace);
    if !fs.is_empty() {
        let s = holder_seminorm(&ts, &fs, a, config.holder_pairs, config.seed)?;
        res.push(HolderResult { field: "u_t".into(), alpha: a, seminorm: s, pairs: config.holder_pairs });
    }
    Ok(res)
}

/// Snapshot count for the lockstep comparison run.
const COMPARISON_SNAPSHOTS: usize = 100;

fn run_verify(config: &RunConfig, out: &mut Outputs) -> Result<bool> {
    let spec = config.spec()?;
    let grid = planar_grid(&spec, config.h)?;
    let opts = config.solve_options();
    let times = config.times(spec.horizon);
    let trace = solve(&spec, grid.clone(), &times, &opts)?;
    write_diagnostics(out, &trace)?;
    write_snapshots(out, &trace)?;
    let density = 4.0 / config.h;
    let conditions = validate_conditions(&spec, density, config.tolerances.condition)?;
    let compatibility = match spec.kind {
        EquationKind::Pma => Some(check_compatibility_order1(&spec, density, config.tolerances.compatibility)?),
        EquationKind::Gcf { .. } => None,
    };
    let kappa = config.tolerances.kappa;
    let mut report = EstimateReport::new(&config.problem_name(), &trace);
    report.holder = holder_results(config, &trace)?;

    match spec.kind {
        EquationKind::Pma => {
            report.ut_bounds = Some(check_ut_bounds(&trace, &spec, conditions.all_pass(), kappa));
            match check_eigen_bounds(&trace, kappa) {
                Ok(r) => report.eigen_bounds = Some(r),
                Err(e) => report.skipped.push(("eigen_bounds".into(), e.to_string())),
            }
            let n = trace.snapshots.len();
            let picks: Vec<usize> = if n > 2 { vec![n / 2, n - 1] } else { vec![n - 1] };
            match check_dual_max_principle(&trace, &picks, kappa) {
                Ok(r) => report.dual_max_principle = Some(r),
                Err(e) => report.skipped.push(("dual_max_principle".into(), e.to_string())),
            }
            // Comparison against the same problem with a smaller source: ψ_w ≥ ψ_v, equal data.
            let psi = spec.psi.clone();
            let mut lower = spec.clone();
            lower.psi = ScalarFn::new(format!("{} - 0.1", psi.label()), move |x, t| psi.eval(x, t) - 0.1);
            lower.exact = None;
            if ordered_data(&spec, &lower, &grid, &times) {
                let dense: Vec<f64> = (1..=COMPARISON_SNAPSHOTS)
                    .map(|k| spec.horizon * k as f64 / COMPARISON_SNAPSHOTS as f64)
                    .collect();
                let [w, v] = solve_lockstep([&spec, &lower], grid.clone(), &dense, &opts)?;
                report.comparison = Some(check_comparison(&w, &v, config.tolerances.comparison)?);
            }
        }
        EquationKind::Gcf { .. } => {
            report.skipped.push(("ut_bounds".into(), "the u_t + ψ bound is stated for the PMA equation".into()));
            let fine = solve(&spec, planar_grid(&spec, config.h / 2.0)?, &times, &opts)?;
            report.gcf_gradient = Some(check_gcf_gradient_bound(&trace, &fine, kappa));
        }
    }
    let success = report.all_pass();
    out.json(
        "report.json",
        json!({
            "conditions": to_value(&conditions),
            "compatibility": to_value(&compatibility),
            "estimates": to_value(&report),
            "success": success,
        }),
    )?;
    Ok(success)
}

fn run_legendre(config: &RunConfig, out: &mut Outputs) -> Result<bool> {
    let spec = config.spec()?;
    let grid = planar_grid(&spec, config.h)?;
    let trace = solve(&spec, grid, &config.times(spec.horizon), &config.solve_options())?;
    let last = trace.snapshots.len() - 1;
    let res = dual_residual(&trace, &spec, last, config.dual_factor)?;
    let mut csv = Csv::new(&out.hash, &["y1", "y2", "U", "r", "valid"]);
    for k in 0..res.grid.len() {
        let y = res.grid.point(k);
        csv.row(&[num(y[0]), num(y[1]), num(res.values[k]), num(res.residual[k]), (res.valid[k] as u8).to_string()]);
    }
    out.csv("legendre.csv", csv)?;
    out.json(
        "report.json",
        json!({
            "t": res.t,
            "dt_snapshot": res.dt_snapshot,
            "dual_spacing": res.grid.spacing,
            "max_abs_residual": res.max_abs,
            "mean_abs_residual": res.mean_abs,
            "valid_nodes": res.n_valid,
            "singular_nodes": res.n_singular,
        }),
    )?;
    Ok(true)
}

fn run_counterexample(config: &RunConfig, out: &mut Outputs) -> Result<bool> {
    let name = config.problem_name();
    let b = config.params.b;
    let mut csv = Csv::new(&out.hash, &["A", "min_second_derivative", "psi_at_r0"]);
    let success;
    let body = match name.as_str() {
        "ce_1d" => {
            let mut base = Problem1d::standard();
            if let Some(t) = config.horizon {
                base.horizon = t;
            }
            let unit = BumpParams::new(1.0, b)?;
            let n = (1.0 / config.h).round() as usize;
            let x0 = (1..n)
                .map(|i| i as f64 / n as f64)
                .min_by(|x, y| unit.w_xx(*x, 1.0).total_cmp(&unit.w_xx(*y, 1.0)))
                .unwrap_or(0.5);
            let mut rows = Vec::new();
            for &a in &config.amplitudes {
                let bump = BumpParams::new(a, b)?;
                let r = run_counterexample_1d(&base, bump, config.h)?;
                let psi = base.psi.eval([x0, 0.0], 1.0) + bump.rho(x0, 1.0);
                csv.row(&[num(a), num(r.min_second_derivative), num(psi)]);
                rows.push(r);
            }
            let search = find_threshold_1d(&base, b, config.h, 1.0)?;
            success = search.is_some();
            json!({ "sweep": to_value(&rows), "x0": x0, "threshold_search": to_value(&search) })
        }
        "ce_radial" => {
            let mut problem = RadialProblem::standard(config.dimension, BumpParams::new(config.params.a, b)?)?;
            if let Some(t) = config.horizon {
                problem.horizon = t;
            }
            let rep = run_counterexample_radial(&problem, config.h, &config.amplitudes)?;
            for r in &rep.rows {
                csv.row(&[num(r.a), num(r.min_second_derivative), num(r.psi_at_r0)]);
            }
            success = rep.crossing.is_some() && rep.strictly_decreasing;
            to_value(&rep)
        }
        other => {
            return Err(Error::InvalidProblem(format!(
                "counterexample runs need `ce_1d` or `ce_radial`, got `{other}`"
            )))
        }
    };
    out.csv("counterexample.csv", csv)?;
    out.json("report.json", json!({ "problem": name, "result": body, "success": success }))?;
    Ok(success)
}

/// L∞ error over every time level of a run against the exact solution.
pub fn linf_error(spec: &ProblemSpec, h: f64, opts: &SolveOptions) -> Result<f64> {
    let exact = spec
        .exact
        .clone()
        .ok_or_else(|| Error::InvalidProblem(format!("problem `{}` has no exact solution", spec.name)))?;
    let grid = planar_grid(spec, h)?;
    let pts: Vec<_> = (0..grid.n_nodes()).map(|k| grid.point(k)).collect();
    let mut err: f64 = 0.0;
    solve_observed(spec, grid, &[], opts, |s| {
        for (k, p) in pts.iter().enumerate() {
            err = err.max((s.u[k] - exact.eval(*p, s.t)).abs());
        }
    })?;
    Ok(err)
}

/// `log(e_coarse / e_fine) / log(h_coarse / h_fine)`.
pub fn observed_order(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    (e_coarse / e_fine).ln() / (h_coarse / h_fine).ln()
}

fn run_convergence(config: &RunConfig, out: &mut Outputs) -> Result<bool> {
    let spec = config.spec()?;
    if matches!(spec.domain, SpatialDomain::UnitInterval) {
        return Err(Error::InvalidProblem("convergence studies run on planar problems".into()));
    }
    let opts = config.solve_options();
    let mut csv = Csv::new(&out.hash, &["h", "linf_error", "observed_order"]);
    let mut errors = Vec::new();
    for (i, &h) in config.h_levels.iter().enumerate() {
        let e = linf_error(&spec, h, &opts)?;
        let order = if i == 0 { f64::NAN } else { observed_order(errors[i - 1], e, config.h_levels[i - 1], h) };
        csv.row(&[num(h), num(e), num(order)]);
        errors.push(e);
    }
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    out.csv("convergence.csv", csv)?;
    out.json("report.json", json!({ "h": config.h_levels, "linf_error": errors, "monotone": monotone }))?;
    Ok(monotone)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(r#"{"command":"solve","problem":"mms_quadratic","h":0.125,"T":1}"#).unwrap();
        assert_eq!(cfg.safety, 0.5);
        assert_eq!(cfg.stencil_width, 2);
        assert_eq!(cfg.horizon, Some(1.0));
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn negative_h_is_a_range_error() {
        let e = parse_config(r#"{"command":"solve","problem":"mms_quadratic","h":-1}"#).unwrap_err();
        assert_eq!(e.kind(), "RangeError");
        let e = parse_config(r#"{"command":"solve","problem":"mms_quadratic","T":0}"#).unwrap_err();
        assert_eq!(e.kind(), "RangeError");
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse_config(r#"{"command":"solve","problem":"mms_quadratic","solverr":1}"#).unwrap_err();
        assert_eq!(e, Error::UnknownKey("solverr".into()));
        let e = parse_config(r#"{"command":"solve","problem":"x","tolerances":{"kapa":1}}"#).unwrap_err();
        assert_eq!(e, Error::UnknownKey("kapa".into()));
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_config("{\n  \"command\": \"solve\",\n  \"h\": ,\n}") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hash_depends_on_content() {
        let a = RunConfig::minimal(Command::Solve, "mms_quadratic");
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.out = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn observed_order_of_halving() {
        assert!((observed_order(4.0, 1.0, 0.2, 0.1) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn verify_stationary_passes() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::minimal(Command::Verify, "stationary_quadratic");
        cfg.holder_pairs = 2000;
        cfg.out = dir.path().to_path_buf();
        let outcome = run(&cfg).unwrap();
        assert!(outcome.success);
        let diag = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
        assert!(diag.starts_with(&format!("# config_hash={}\nstep,t,dt,", cfg.hash())));
    }
}
