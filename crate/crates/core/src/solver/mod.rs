//! Interior-point solver for conic programs in standard form
//!
//! ```text
//! minimise cᵀx  subject to  Ax = b,  x ∈ K
//! ```
//!
//! where `K` is a product of free, nonnegative, quadratic and rotated
//! quadratic cones. The dual is `maximise bᵀy  s.t.  Aᵀy + s = c, s ∈ K*`.
//! Iterates follow the homogeneous self-dual embedding, so every solve ends
//! with either an optimal pair or a certificate of primal or dual
//! infeasibility.

mod cones;
pub mod dump;
mod ipm;
mod kkt;
mod ldl;
mod sparse;

use std::fmt;

use thiserror::Error;

pub use cones::{cone_contains, rotate_heads, ConeBlock, ConeKind, ConeProduct};
pub use sparse::CscMatrix;

use sparse::{dot, norm2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid cone: {0}")]
    InvalidCone(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// `min cᵀx  s.t.  Ax = b, x ∈ cone`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardFormProblem {
    c: Vec<f64>,
    a: CscMatrix,
    b: Vec<f64>,
    cone: ConeProduct,
}

impl StandardFormProblem {
    /// Validates dimensions and finiteness.
    pub fn new(
        c: Vec<f64>,
        a: CscMatrix,
        b: Vec<f64>,
        cone: ConeProduct,
    ) -> Result<Self, SolverError> {
        let n = cone.total_dim();
        if c.len() != n {
            return Err(SolverError::Dimension(format!(
                "c has length {} but the cone has dimension {n}",
                c.len()
            )));
        }
        if a.ncols() != n {
            return Err(SolverError::Dimension(format!(
                "A has {} columns but the cone has dimension {n}",
                a.ncols()
            )));
        }
        if a.nrows() != b.len() {
            return Err(SolverError::Dimension(format!(
                "A has {} rows but b has length {}",
                a.nrows(),
                b.len()
            )));
        }
        if let Some(i) = c.iter().position(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite(format!("c[{i}]")));
        }
        if let Some(i) = b.iter().position(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite(format!("b[{i}]")));
        }
        if let Some((i, j, _)) = a.triplets().find(|t| !t.2.is_finite()) {
            return Err(SolverError::NonFinite(format!("A[{i}, {j}]")));
        }
        Ok(Self { c, a, b, cone })
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn a(&self) -> &CscMatrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn cone(&self) -> &ConeProduct {
        &self.cone
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    IterationLimit,
    NumericalStall,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Optimal => "Optimal",
            Status::PrimalInfeasible => "PrimalInfeasible",
            Status::DualInfeasible => "DualInfeasible",
            Status::IterationLimit => "IterationLimit",
            Status::NumericalStall => "NumericalStall",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iters: usize,
    pub static_regularization: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            max_iters: 100,
            static_regularization: 1e-9,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.feas_tol)
            || !positive(self.gap_tol)
            || !positive(self.static_regularization)
        {
            return Err(SolverError::Config(
                "tolerances must be positive and finite".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(SolverError::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of a solve. For `PrimalInfeasible`, `(y, s)` is a Farkas ray
/// normalised to `bᵀy = 1`; for `DualInfeasible`, `x` is a ray normalised to
/// `cᵀx = -1`. Otherwise `(x, y, s)` is the (best) primal-dual iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutcome {
    pub status: Status,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
}

impl SolverOutcome {
    pub fn primal_objective(&self, problem: &StandardFormProblem) -> f64 {
        dot(&problem.c, &self.x)
    }

    pub fn dual_objective(&self, problem: &StandardFormProblem) -> f64 {
        dot(&problem.b, &self.y)
    }
}

/// Relative residuals of a primal-dual triple:
/// `‖Ax−b‖/(1+‖b‖)`, `‖Aᵀy+s−c‖/(1+‖c‖)`, `|cᵀx−bᵀy|/(1+|cᵀx|+|bᵀy|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

pub fn residual_report(problem: &StandardFormProblem, outcome: &SolverOutcome) -> ResidualReport {
    residuals_of(problem, &outcome.x, &outcome.y, &outcome.s)
}

pub(crate) fn residuals_of(
    problem: &StandardFormProblem,
    x: &[f64],
    y: &[f64],
    s: &[f64],
) -> ResidualReport {
    let a = &problem.a;
    let mut ax = vec![0.0; a.nrows()];
    a.mul_vec(x, &mut ax);
    for (r, bi) in ax.iter_mut().zip(&problem.b) {
        *r -= bi;
    }
    let mut aty = vec![0.0; a.ncols()];
    a.tmul_vec(y, &mut aty);
    for j in 0..aty.len() {
        aty[j] += s[j] - problem.c[j];
    }
    let pobj = dot(&problem.c, x);
    let dobj = dot(&problem.b, y);
    ResidualReport {
        primal_residual: norm2(&ax) / (1.0 + norm2(&problem.b)),
        dual_residual: norm2(&aty) / (1.0 + norm2(&problem.c)),
        gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
    }
}

/// Solves `problem`. Structural and input errors are returned as `Err`;
/// infeasibility, iteration limits and stalls are reported through
/// [`SolverOutcome::status`].
pub fn solve(
    problem: &StandardFormProblem,
    config: &SolverConfig,
) -> Result<SolverOutcome, SolverError> {
    config.validate()?;
    if let Ok(dir) = std::env::var(dump::DUMP_ENV) {
        if !dir.is_empty() {
            // a failed dump must not change solver behaviour
            let _ = dump::dump_to_dir(problem, std::path::Path::new(&dir));
        }
    }
    ipm::solve_with_presolve(problem, config)
}
