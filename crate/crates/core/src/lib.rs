//! Monotone finite-difference solver and estimate checks for the parabolic
//! Monge-Ampere equation `-u_t + det D²u = ψ` and the γ-Gauss curvature flow.

pub mod cli;
pub mod counterexamples;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod harness;
pub mod legendre;
pub mod operators;
pub mod problem;
pub mod stepper;

pub use error::{Error, Result};
pub use geometry::{Domain, DomainShape, Grid, GridFunction, Point};
pub use operators::{MaScheme, StencilWidth};
pub use problem::{builtin_problem, builtin_problem_with, BuiltinParams, EquationKind, ProblemSpec, ScalarFn};
pub use stepper::{solve, solve_lockstep, SolutionTrace, SolveOptions};
