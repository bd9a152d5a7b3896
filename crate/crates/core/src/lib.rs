//! Numerical tools for nonlocal elliptic operators with drift: kernel classes,
//! singular quadrature of extremal operators, convex envelopes and ABP covers,
//! a monotone Dirichlet solver and regularity measurements.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod dirichlet;
pub mod envelope;
pub mod fit;
pub mod grid;
pub mod harness;
pub mod nonlocal;
pub mod params;
pub mod quad;
pub mod regularity;
pub mod scheme;

pub use error::{Error, Result};
pub use grid::{FarField, GridField, Point, Tail};
pub use params::{check_hypotheses, verify_kernel_class, EllipticityParams, KernelSpec, UniversalConstants};
pub use config::ExperimentConfig;
pub use dirichlet::{solve, solve_with, DirichletProblem, SolveReport, SolverMethod};
pub use harness::{run_recipe, RunSummary};
pub use nonlocal::{QuadratureConfig, Sign};
pub use scheme::{Domain, SchemeOperator};
