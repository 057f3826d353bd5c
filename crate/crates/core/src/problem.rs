//! Problem data for `-u_t + det D²u = ψ` and the γ-Gauss curvature flow,
//! sampled checks of the structural conditions on the data, and the
//! built-in problem library.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::counterexamples::BumpParams;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::{Domain, DomainShape, Point};
use crate::operators::{eig_2x2, Sym2};

/// Step for first derivatives of closed-form data.
pub const FD_STEP: f64 = 1e-5;
/// Step for the fourth-order second-derivative stencil.
pub const FD_STEP_SECOND: f64 = 1e-3;
/// Default tolerance on condition margins.
pub const CONDITION_TOL: f64 = 1e-8;
/// Default tolerance for the order-1 compatibility residual.
pub const COMPATIBILITY_TOL: f64 = 1e-6;

type DataFn = dyn Fn(Point, f64) -> f64 + Send + Sync;

/// A closed-form scalar function of `(x, t)`.
#[derive(Clone)]
pub struct ScalarFn {
    label: String,
    f: Arc<DataFn>,
}

impl ScalarFn {
    pub fn new(label: impl Into<String>, f: impl Fn(Point, f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarFn { label: label.into(), f: Arc::new(f) }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let e = Expr::parse(text)?;
        Ok(ScalarFn::new(text.to_string(), move |x, t| e.eval(x, t)))
    }

    pub fn constant(c: f64) -> Self {
        ScalarFn::new(format!("{c}"), move |_, _| c)
    }

    #[inline]
    pub fn eval(&self, x: Point, t: f64) -> f64 {
        (self.f)(x, t)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `∂_t f` by central differences, one-sided near `t = 0`.
    pub fn dt(&self, x: Point, t: f64) -> f64 {
        let h = FD_STEP;
        if t - h < 0.0 {
            (-3.0 * self.eval(x, t) + 4.0 * self.eval(x, t + h) - self.eval(x, t + 2.0 * h)) / (2.0 * h)
        } else {
            (self.eval(x, t + h) - self.eval(x, t - h)) / (2.0 * h)
        }
    }

    /// `D_x² f` with fourth-order stencils.
    pub fn hessian(&self, x: Point, t: f64) -> Sym2 {
        let h = FD_STEP_SECOND;
        let f = |dx: f64, dy: f64| self.eval([x[0] + dx, x[1] + dy], t);
        let f0 = f(0.0, 0.0);
        let second = |e: Point| {
            (-f(2.0 * h * e[0], 2.0 * h * e[1]) + 16.0 * f(h * e[0], h * e[1]) - 30.0 * f0
                + 16.0 * f(-h * e[0], -h * e[1])
                - f(-2.0 * h * e[0], -2.0 * h * e[1]))
                / (12.0 * h * h)
        };
        let mixed = |s: f64| {
            (f(s, s) - f(s, -s) - f(-s, s) + f(-s, -s)) / (4.0 * s * s)
        };
        Sym2::new(second([1.0, 0.0]), (4.0 * mixed(h) - mixed(2.0 * h)) / 3.0, second([0.0, 1.0]))
    }

    /// `∂_x² f` along `x1` only (for one-dimensional data).
    pub fn dxx(&self, x: f64, t: f64) -> f64 {
        let h = FD_STEP_SECOND;
        let f = |d: f64| self.eval([x + d, 0.0], t);
        (-f(2.0 * h) + 16.0 * f(h) - 30.0 * f(0.0) + 16.0 * f(-h) - f(-2.0 * h)) / (12.0 * h * h)
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarFn({})", self.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EquationKind {
    /// `-u_t + det D²u = ψ`.
    Pma,
    /// `u_t = K^γ sqrt(1 + |Du|²)` with `K` the Gauss curvature of the graph.
    Gcf { gamma: f64 },
}

/// Spatial domain of a problem: a planar convex region, or the interval `(0, 1)`
/// used by the one-dimensional reduction.
#[derive(Debug, Clone)]
pub enum SpatialDomain {
    Planar(Domain),
    UnitInterval,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub kind: EquationKind,
    pub domain: SpatialDomain,
    pub horizon: f64,
    pub psi: ScalarFn,
    pub phi: ScalarFn,
    pub c0: f64,
    /// Exact solution, when one is known.
    pub exact: Option<ScalarFn>,
}

impl ProblemSpec {
    pub fn new(
        name: impl Into<String>,
        kind: EquationKind,
        domain: SpatialDomain,
        horizon: f64,
        psi: ScalarFn,
        phi: ScalarFn,
        c0: f64,
    ) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Range { key: "T".into(), msg: format!("must be positive, got {horizon}") });
        }
        if !(c0 > 0.0) || !c0.is_finite() {
            return Err(Error::Range { key: "c0".into(), msg: format!("must be positive, got {c0}") });
        }
        if let EquationKind::Gcf { gamma } = kind {
            if !(gamma > 0.0 && gamma <= 1.0) {
                return Err(Error::Range { key: "gamma".into(), msg: format!("must lie in (0, 1], got {gamma}") });
            }
        }
        Ok(ProblemSpec { name: name.into(), kind, domain, horizon, psi, phi, c0, exact: None })
    }

    pub fn with_exact(mut self, exact: ScalarFn) -> Self {
        self.exact = Some(exact);
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Range { key: "T".into(), msg: format!("must be positive, got {horizon}") });
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn planar_domain(&self) -> Result<&Domain> {
        match &self.domain {
            SpatialDomain::Planar(d) => Ok(d),
            SpatialDomain::UnitInterval => Err(Error::InvalidProblem(format!(
                "problem `{}` lives on an interval; use the one-dimensional solver",
                self.name
            ))),
        }
    }

    /// Source term as seen by the equation: ψ for PMA, zero for GCF.
    pub fn source(&self, x: Point, t: f64) -> f64 {
        match self.kind {
            EquationKind::Pma => self.psi.eval(x, t),
            EquationKind::Gcf { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    /// `min (φ_t + ψ) - c0` over sampled lateral boundary points.
    pub p1_margin: f64,
    /// Smallest eigenvalue of `D²φ(·, 0)` over interior samples.
    pub p2_min_eig: f64,
    /// Largest eigenvalue of `D_x²ψ` over interior samples; `≤ 0` means concave.
    pub p3_max_concavity_violation: f64,
    pub p1_pass: bool,
    pub p2_pass: bool,
    pub p3_pass: bool,
    pub boundary_samples: usize,
    pub interior_samples: usize,
    pub time_samples: usize,
    pub tolerance: f64,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.p1_pass && self.p2_pass && self.p3_pass
    }
}

/// Deterministic sample set for condition checks.
struct Samples {
    boundary: Vec<Point>,
    interior: Vec<Point>,
    times: Vec<f64>,
}

fn samples(spec: &ProblemSpec, density: f64) -> Samples {
    let nt = ((density * spec.horizon).ceil() as usize).max(1) + 1;
    let times: Vec<f64> = (0..nt).map(|j| spec.horizon * j as f64 / (nt - 1) as f64).collect();
    let step = 1.0 / density;
    match &spec.domain {
        SpatialDomain::UnitInterval => {
            let n = (density.ceil() as usize).max(2);
            Samples {
                boundary: vec![[0.0, 0.0], [1.0, 0.0]],
                interior: (1..n).map(|i| [i as f64 / n as f64, 0.0]).collect(),
                times,
            }
        }
        SpatialDomain::Planar(d) => {
            let [a, b] = d.semi_axes();
            // Ramanujan's perimeter approximation is plenty for a sample count.
            let perim = std::f64::consts::PI * (3.0 * (a + b) - ((3.0 * a + b) * (a + 3.0 * b)).sqrt());
            let nb = ((density * perim).ceil() as usize).max(8);
            let boundary = (0..nb)
                .map(|k| {
                    let th = std::f64::consts::TAU * k as f64 / nb as f64;
                    // Walk out along the ray to the boundary.
                    let dir = [th.cos(), th.sin()];
                    let s = d.ray_exit(d.center(), dir);
                    [d.center()[0] + s * dir[0], d.center()[1] + s * dir[1]]
                })
                .collect();
            let (lo, hi) = d.bounding_box();
            let mut interior = Vec::new();
            let i0 = (lo[0] / step).floor() as i64;
            let i1 = (hi[0] / step).ceil() as i64;
            let j0 = (lo[1] / step).floor() as i64;
            let j1 = (hi[1] / step).ceil() as i64;
            for i in i0..=i1 {
                for j in j0..=j1 {
                    let p = [i as f64 * step, j as f64 * step];
                    // Keep the fourth-order stencil inside the closed domain.
                    if d.contains(p) && d.signed_distance(p) > 2.0 * FD_STEP_SECOND {
                        interior.push(p);
                    }
                }
            }
            if interior.is_empty() {
                interior.push(d.center());
            }
            Samples { boundary, interior, times }
        }
    }
}

fn finite(v: f64, what: &str, x: Point, t: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::EvaluationError(format!("{what} at x = ({}, {}), t = {t}", x[0], x[1])))
    }
}

/// Round-off allowance for second differences at step [`FD_STEP_SECOND`] of
/// data of magnitude `scale`.
fn fd_noise(scale: f64) -> f64 {
    64.0 * f64::EPSILON * scale.max(1.0) / (FD_STEP_SECOND * FD_STEP_SECOND)
}

/// Sampled check of boundary positivity, initial convexity, and concavity of the source.
///
/// `density` is the number of samples per unit length (and per unit time).
pub fn validate_conditions(spec: &ProblemSpec, density: f64, tolerance: f64) -> Result<ConditionReport> {
    let s = samples(spec, density);
    let one_d = matches!(spec.domain, SpatialDomain::UnitInterval);

    let mut p1 = f64::INFINITY;
    for &x in &s.boundary {
        for &t in &s.times {
            let v = spec.phi.dt(x, t) + spec.source(x, t);
            p1 = p1.min(finite(v, "φ_t + ψ", x, t)? - spec.c0);
        }
    }

    let mut p2 = f64::INFINITY;
    let mut phi_scale: f64 = 0.0;
    for &x in &s.interior {
        let lam = if one_d {
            spec.phi.dxx(x[0], 0.0)
        } else {
            eig_2x2(&spec.phi.hessian(x, 0.0)).0
        };
        p2 = p2.min(finite(lam, "D²φ", x, 0.0)?);
        phi_scale = phi_scale.max(spec.phi.eval(x, 0.0).abs());
    }

    let mut p3 = f64::NEG_INFINITY;
    let mut psi_scale: f64 = 0.0;
    if let EquationKind::Pma = spec.kind {
        for &x in &s.interior {
            for &t in &s.times {
                let lam = if one_d { spec.psi.dxx(x[0], t) } else { eig_2x2(&spec.psi.hessian(x, t)).1 };
                p3 = p3.max(finite(lam, "D²ψ", x, t)?);
                psi_scale = psi_scale.max(spec.psi.eval(x, t).abs());
            }
        }
    } else {
        p3 = 0.0;
    }

    Ok(ConditionReport {
        p1_margin: p1,
        p2_min_eig: p2,
        p3_max_concavity_violation: p3,
        p1_pass: p1 >= -tolerance,
        p2_pass: p2 > tolerance + fd_noise(phi_scale),
        p3_pass: p3 <= tolerance + fd_noise(psi_scale),
        boundary_samples: s.boundary.len(),
        interior_samples: s.interior.len(),
        time_samples: s.times.len(),
        tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatibilityReport {
    pub max_residual: f64,
    pub pass: bool,
    pub tolerance: f64,
    pub samples: usize,
}

/// Order-1 compatibility `-φ_t + det D²φ = ψ` on `∂Ω × {0}`.
pub fn check_compatibility_order1(spec: &ProblemSpec, density: f64, tolerance: f64) -> Result<CompatibilityReport> {
    if spec.kind != EquationKind::Pma {
        return Err(Error::InvalidProblem("order-1 compatibility is defined for the PMA equation".into()));
    }
    let s = samples(spec, density);
    let one_d = matches!(spec.domain, SpatialDomain::UnitInterval);
    let mut worst: f64 = 0.0;
    for &x in &s.boundary {
        let det = if one_d { spec.phi.dxx(x[0], 0.0) } else { spec.phi.hessian(x, 0.0).det() };
        let r = -spec.phi.dt(x, 0.0) + det - spec.psi.eval(x, 0.0);
        worst = worst.max(finite(r, "compatibility residual", x, 0.0)?.abs());
    }
    Ok(CompatibilityReport { max_residual: worst, pass: worst <= tolerance, tolerance, samples: s.boundary.len() })
}

/// Parameters consumed by the parametrised built-ins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuiltinParams {
    /// Bump amplitude for `ce_1d` / `ce_radial`.
    #[serde(rename = "A")]
    pub a: f64,
    /// Bump sharpness for `ce_1d` / `ce_radial`.
    #[serde(rename = "B")]
    pub b: f64,
    /// Exponent for `gcf_quadratic_start`.
    pub gamma: f64,
}

impl Default for BuiltinParams {
    fn default() -> Self {
        BuiltinParams { a: 32768.0, b: 1.0, gamma: 1.0 }
    }
}

pub const BUILTIN_NAMES: [&str; 6] =
    ["mms_quadratic", "stationary_quadratic", "gcf_quadratic_start", "ce_1d", "ce_radial", "mms_quartic"];

fn half_sq(x: Point) -> f64 {
    0.5 * (x[0] * x[0] + x[1] * x[1])
}

pub fn builtin_problem(name: &str) -> Result<ProblemSpec> {
    builtin_problem_with(name, &BuiltinParams::default())
}

pub fn builtin_problem_with(name: &str, params: &BuiltinParams) -> Result<ProblemSpec> {
    let disk = || SpatialDomain::Planar(Domain::unit_disk());
    match name {
        "mms_quadratic" => {
            let exact = ScalarFn::new("(1+t)|x|^2/2", |x, t| (1.0 + t) * half_sq(x));
            Ok(ProblemSpec::new(
                name,
                EquationKind::Pma,
                disk(),
                1.0,
                ScalarFn::new("(1+t)^2 - |x|^2/2", |x, t| (1.0 + t) * (1.0 + t) - half_sq(x)),
                exact.clone(),
                1.0,
            )?
            .with_exact(exact))
        }
        "stationary_quadratic" => {
            let exact = ScalarFn::new("|x|^2/2", |x, _| half_sq(x));
            Ok(ProblemSpec::new(name, EquationKind::Pma, disk(), 1.0, ScalarFn::constant(1.0), exact.clone(), 1.0)?
                .with_exact(exact))
        }
        "mms_quartic" => {
            let exact = ScalarFn::new("(1+t)|x|^2/2 + (x1^4+x2^4)/12", |x, t| {
                (1.0 + t) * half_sq(x) + (x[0].powi(4) + x[1].powi(4)) / 12.0
            });
            let psi = ScalarFn::new("(1+t+x1^2)(1+t+x2^2) - |x|^2/2", |x, t| {
                (1.0 + t + x[0] * x[0]) * (1.0 + t + x[1] * x[1]) - half_sq(x)
            });
            Ok(ProblemSpec::new(name, EquationKind::Pma, disk(), 1.0, psi, exact.clone(), 1.0)?.with_exact(exact))
        }
        "gcf_quadratic_start" => {
            let gamma = params.gamma;
            // Boundary speed of the quadratic start: 1^γ (1 + 1)^{(1 - 4γ)/2}.
            let speed = 2f64.powf((1.0 - 4.0 * gamma) / 2.0);
            ProblemSpec::new(
                name,
                EquationKind::Gcf { gamma },
                disk(),
                0.5,
                ScalarFn::constant(0.0),
                ScalarFn::new(format!("|x|^2/2 + {speed}*t"), move |x, t| half_sq(x) + speed * t),
                speed,
            )
        }
        "ce_1d" => {
            let bump = BumpParams::new(params.a, params.b)?;
            ProblemSpec::new(
                name,
                EquationKind::Pma,
                SpatialDomain::UnitInterval,
                1.25,
                ScalarFn::new(format!("1 + rho(x; A={}, B={})", bump.a, bump.b), move |x, t| 1.0 + bump.rho(x[0], t)),
                ScalarFn::new("x^2/2", |x, _| 0.5 * x[0] * x[0]),
                1.0,
            )
        }
        "ce_radial" => {
            let bump = BumpParams::new(params.a, params.b)?;
            // Base radial solution v = r²/2 with ψ = 1 in two dimensions, so
            // Ψ(r,t) = -w_t + ((r + w_r)/r)(1 + w_rr).
            let psi = ScalarFn::new(format!("Psi(|x|; A={}, B={})", bump.a, bump.b), move |x, t| {
                let r = x[0].hypot(x[1]);
                let slope = if r > 0.0 { (r + bump.w_x(r, t)) / r } else { 1.0 };
                -bump.w_t(r, t) + slope * (1.0 + bump.w_xx(r, t))
            });
            let exact = ScalarFn::new("|x|^2/2 + w(|x|,t)", move |x, t| half_sq(x) + bump.w(x[0].hypot(x[1]), t));
            Ok(ProblemSpec::new(
                name,
                EquationKind::Pma,
                disk(),
                1.25,
                psi,
                ScalarFn::new("|x|^2/2", |x, _| half_sq(x)),
                1.0,
            )?
            .with_exact(exact))
        }
        _ => Err(Error::UnknownProblem(name.to_string())),
    }
}

/// Inline problem description accepted by the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineProblem {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_kind")]
    pub equation: EquationKind,
    pub domain: DomainShape,
    pub psi: String,
    pub phi: String,
    pub c0: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default)]
    pub exact: Option<String>,
}

fn default_name() -> String {
    "inline".into()
}

fn default_kind() -> EquationKind {
    EquationKind::Pma
}

impl InlineProblem {
    pub fn build(&self) -> Result<ProblemSpec> {
        let domain = Domain::new(self.domain.clone())?;
        let spec = ProblemSpec::new(
            self.name.clone(),
            self.equation,
            SpatialDomain::Planar(domain),
            self.horizon,
            ScalarFn::parse(&self.psi)?,
            ScalarFn::parse(&self.phi)?,
            self.c0,
        )?;
        Ok(match &self.exact {
            Some(e) => spec.with_exact(ScalarFn::parse(e)?),
            None => spec,
        })
    }
}
