//! Constrained and regularised least squares on top of [`crate::model`].
//!
//! Every estimator minimises `‖Xw − y‖₂² + penalty(Γ(w − w₀))` through an
//! epigraph `(1/2, v, Xw − y) ∈ Q_r` plus penalty-specific cones.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{AffineExpr, Domain, Model, ModelError, Sense, VariableHandle};
use crate::solver::{SolverConfig, Status};

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(
        "underdetermined system ({rows} rows, {cols} columns) needs a penalty with lambda > 0"
    )]
    Underdetermined { rows: usize, cols: usize },
    #[error("solver finished with status {status} after {iterations} iterations")]
    NotOptimal { status: Status, iterations: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Linear restrictions on the coefficient vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    /// `Σ wᵢ = 1`
    pub full_investment: bool,
    /// `w ≥ 0`
    pub long_only: bool,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

impl ConstraintSet {
    pub fn none() -> Self {
        Self::default()
    }

    /// Budget one, long only: the simplex.
    pub fn simplex() -> Self {
        Self {
            full_investment: true,
            long_only: true,
            ..Self::default()
        }
    }

    fn validate(&self, m: usize) -> Result<(), RegressionError> {
        for (label, bound) in [("lower", &self.lower), ("upper", &self.upper)] {
            if let Some(b) = bound {
                if b.len() != m {
                    return Err(RegressionError::Invalid(format!(
                        "{label} bounds have length {}, expected {m}",
                        b.len()
                    )));
                }
                if b.iter().any(|v| v.is_nan()) {
                    return Err(RegressionError::Invalid(format!(
                        "{label} bounds contain NaN"
                    )));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (&self.lower, &self.upper) {
            if let Some(i) = (0..m).find(|&i| lo[i] > hi[i]) {
                return Err(RegressionError::Invalid(format!(
                    "lower bound exceeds upper bound at {i}"
                )));
            }
        }
        Ok(())
    }

    /// Adds the restrictions on `w` to `model`.
    pub(crate) fn apply(&self, model: &mut Model, w: &VariableHandle) -> Result<(), ModelError> {
        if self.full_investment {
            model.add_equality(&AffineExpr::sum(w), &[1.0])?;
        }
        // infinite entries leave a side unbounded
        if let Some(lo) = &self.lower {
            for (i, &l) in lo.iter().enumerate().filter(|(_, l)| l.is_finite()) {
                model.add_nonnegative(&AffineExpr::component(w, i)?.offset(&[-l])?)?;
            }
        }
        if let Some(hi) = &self.upper {
            for (i, &h) in hi.iter().enumerate().filter(|(_, h)| h.is_finite()) {
                model.add_nonnegative(&AffineExpr::component(w, i)?.scale(-1.0).offset(&[h])?)?;
            }
        }
        Ok(())
    }
}

/// Design matrix, target and constraints of a least-squares fit.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    constraints: ConstraintSet,
}

impl RegressionProblem {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self, RegressionError> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(RegressionError::Invalid(format!(
                "empty design {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if x.nrows() != y.len() {
            return Err(RegressionError::Invalid(format!(
                "design has {} rows but target has length {}",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(RegressionError::Invalid(
                "non-finite entry in design or target".into(),
            ));
        }
        Ok(Self {
            x,
            y,
            constraints: ConstraintSet::none(),
        })
    }

    pub fn with_constraints(mut self, constraints: ConstraintSet) -> Result<Self, RegressionError> {
        constraints.validate(self.x.ncols())?;
        self.constraints = constraints;
        Ok(self)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn num_coefficients(&self) -> usize {
        self.x.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    None,
    Ridge { lambda: f64 },
    Lasso { lambda: f64 },
    ElasticNet { l1: f64, l2: f64 },
    PowerThreeHalves { lambda: f64 },
}

impl Penalty {
    fn lambdas(&self) -> Vec<f64> {
        match *self {
            Penalty::None => vec![],
            Penalty::Ridge { lambda }
            | Penalty::Lasso { lambda }
            | Penalty::PowerThreeHalves { lambda } => vec![lambda],
            Penalty::ElasticNet { l1, l2 } => vec![l1, l2],
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Penalty::None => "none",
            Penalty::Ridge { .. } => "ridge",
            Penalty::Lasso { .. } => "lasso",
            Penalty::ElasticNet { .. } => "elastic net",
            Penalty::PowerThreeHalves { .. } => "3/2-power",
        }
    }
}

/// A penalty on `Γ(w − w₀)`; `Γ` defaults to the identity and `w₀` to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Regulariser {
    pub penalty: Penalty,
    pub gamma: Option<DMatrix<f64>>,
    pub w0: Option<DVector<f64>>,
}

impl Regulariser {
    pub fn new(penalty: Penalty) -> Self {
        Self {
            penalty,
            gamma: None,
            w0: None,
        }
    }

    pub fn none() -> Self {
        Self::new(Penalty::None)
    }

    pub fn ridge(lambda: f64) -> Self {
        Self::new(Penalty::Ridge { lambda })
    }

    pub fn lasso(lambda: f64) -> Self {
        Self::new(Penalty::Lasso { lambda })
    }

    pub fn elastic_net(l1: f64, l2: f64) -> Self {
        Self::new(Penalty::ElasticNet { l1, l2 })
    }

    pub fn power_three_halves(lambda: f64) -> Self {
        Self::new(Penalty::PowerThreeHalves { lambda })
    }

    pub fn with_gamma(mut self, gamma: DMatrix<f64>) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn with_anchor(mut self, w0: DVector<f64>) -> Self {
        self.w0 = Some(w0);
        self
    }

    fn validate(&self, m: usize) -> Result<(), RegressionError> {
        if self
            .penalty
            .lambdas()
            .iter()
            .any(|l| !(l.is_finite() && *l >= 0.0))
        {
            return Err(RegressionError::Invalid(format!(
                "{} penalty weights must be finite and nonnegative",
                self.penalty.name()
            )));
        }
        if let Some(g) = &self.gamma {
            if g.nrows() != m || g.ncols() != m {
                return Err(RegressionError::Invalid(format!(
                    "Gamma is {}x{}, expected {m}x{m}",
                    g.nrows(),
                    g.ncols()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(RegressionError::Invalid("non-finite entry in Gamma".into()));
            }
        }
        if let Some(w0) = &self.w0 {
            if w0.len() != m {
                return Err(RegressionError::Invalid(format!(
                    "anchor has length {}, expected {m}",
                    w0.len()
                )));
            }
            if w0.iter().any(|v| !v.is_finite()) {
                return Err(RegressionError::Invalid(
                    "non-finite entry in anchor".into(),
                ));
            }
        }
        Ok(())
    }

    fn active(&self) -> bool {
        self.penalty.lambdas().iter().any(|&l| l > 0.0)
    }

    /// `Γ(w − w₀)` evaluated at a point.
    pub fn deviation(&self, w: &DVector<f64>) -> DVector<f64> {
        let d = match &self.w0 {
            Some(w0) => w - w0,
            None => w.clone(),
        };
        match &self.gamma {
            Some(g) => g * d,
            None => d,
        }
    }

    /// Penalty value at a point, computed directly from its definition.
    pub fn value(&self, w: &DVector<f64>) -> f64 {
        let d = self.deviation(w);
        let l1 = d.iter().map(|v| v.abs()).sum::<f64>();
        let l2 = d.norm_squared();
        match self.penalty {
            Penalty::None => 0.0,
            Penalty::Ridge { lambda } => lambda * l2,
            Penalty::Lasso { lambda } => lambda * l1,
            Penalty::ElasticNet { l1: a, l2: b } => a * l1 + b * l2,
            Penalty::PowerThreeHalves { lambda } => {
                lambda * d.iter().map(|v| v.abs().powf(1.5)).sum::<f64>()
            }
        }
    }

    fn deviation_expr(&self, w: &VariableHandle) -> Result<AffineExpr, ModelError> {
        let mut e = AffineExpr::var(w);
        if let Some(w0) = &self.w0 {
            let neg: Vec<f64> = w0.iter().map(|v| -v).collect();
            e = e.offset(&neg)?;
        }
        match &self.gamma {
            Some(g) => e.left_mul(g),
            None => Ok(e),
        }
    }
}

/// Auxiliary variables of the 3/2-power penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerCones {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub weights: DVector<f64>,
    /// `‖Xw − y‖² + penalty`, evaluated at the returned weights.
    pub objective: f64,
    pub residual_term: f64,
    pub penalty_term: f64,
    pub iterations: usize,
    pub gap: f64,
    /// Present for the 3/2-power penalty with `λ > 0`.
    pub power_cones: Option<PowerCones>,
}

/// Plain (possibly constrained) least squares.
pub fn lsq(problem: &RegressionProblem, config: &SolverConfig) -> Result<Fit, RegressionError> {
    fit(problem, &Regulariser::none(), config)
}

pub fn ridge(
    problem: &RegressionProblem,
    reg: &Regulariser,
    config: &SolverConfig,
) -> Result<Fit, RegressionError> {
    expect_kind(reg, matches!(reg.penalty, Penalty::Ridge { .. }), "ridge")?;
    fit(problem, reg, config)
}

pub fn lasso(
    problem: &RegressionProblem,
    reg: &Regulariser,
    config: &SolverConfig,
) -> Result<Fit, RegressionError> {
    expect_kind(reg, matches!(reg.penalty, Penalty::Lasso { .. }), "lasso")?;
    fit(problem, reg, config)
}

pub fn elastic_net(
    problem: &RegressionProblem,
    reg: &Regulariser,
    config: &SolverConfig,
) -> Result<Fit, RegressionError> {
    expect_kind(
        reg,
        matches!(reg.penalty, Penalty::ElasticNet { .. }),
        "elastic net",
    )?;
    fit(problem, reg, config)
}

pub fn power_three_halves(
    problem: &RegressionProblem,
    reg: &Regulariser,
    config: &SolverConfig,
) -> Result<Fit, RegressionError> {
    expect_kind(
        reg,
        matches!(reg.penalty, Penalty::PowerThreeHalves { .. }),
        "3/2-power",
    )?;
    fit(problem, reg, config)
}

fn expect_kind(reg: &Regulariser, ok: bool, wanted: &str) -> Result<(), RegressionError> {
    if ok {
        Ok(())
    } else {
        Err(RegressionError::Invalid(format!(
            "expected a {wanted} regulariser, got {}",
            reg.penalty.name()
        )))
    }
}

/// Fits any penalty; the dedicated entry points only add a kind check.
pub fn fit(
    problem: &RegressionProblem,
    reg: &Regulariser,
    config: &SolverConfig,
) -> Result<Fit, RegressionError> {
    let (n, m) = problem.x.shape();
    reg.validate(m)?;
    if n < m && !reg.active() {
        return Err(RegressionError::Underdetermined { rows: n, cols: m });
    }

    let mut model = Model::new();
    let domain = if problem.constraints.long_only {
        Domain::NonNegative
    } else {
        Domain::Unbounded
    };
    let w = model.add_variable("w", m, domain)?;
    problem.constraints.apply(&mut model, &w)?;
    let v = model.add_lsq_epigraph(&problem.x, &w, problem.y.as_slice())?;
    let mut objective = AffineExpr::var(&v);
    let mut power = None;

    if reg.active() {
        let dev = reg.deviation_expr(&w)?;
        let (l1, l2) = match reg.penalty {
            Penalty::None => (0.0, 0.0),
            Penalty::Ridge { lambda } => (0.0, lambda),
            Penalty::Lasso { lambda } => (lambda, 0.0),
            Penalty::ElasticNet { l1, l2 } => (l1, l2),
            Penalty::PowerThreeHalves { .. } => (0.0, 0.0),
        };
        if l2 > 0.0 {
            // (1/2, u, √λ Γ(w − w₀)) ∈ Q_r, so u ≥ λ‖Γ(w − w₀)‖²
            let u = model.add_variable("u", 1, Domain::Unbounded)?;
            let stack = AffineExpr::stack(&[
                AffineExpr::scalar(0.5),
                AffineExpr::var(&u),
                dev.scale(l2.sqrt()),
            ])?;
            model.add_rotated_cone(&stack)?;
            objective = objective.add(&AffineExpr::var(&u))?;
        }
        if l1 > 0.0 {
            let t = model.add_abs_bound(&dev)?;
            objective = objective.add(&AffineExpr::sum(&t).scale(l1))?;
        }
        if let Penalty::PowerThreeHalves { lambda } = reg.penalty {
            // tᵢ ≥ |devᵢ|, 2 sᵢ zᵢ ≥ tᵢ², sᵢ² ≤ tᵢ / 4  ⇒  zᵢ ≥ tᵢ^{3/2}
            let t = model.add_abs_bound(&dev)?;
            let s = model.add_variable("s", m, Domain::Unbounded)?;
            let z = model.add_variable("z", m, Domain::Unbounded)?;
            for i in 0..m {
                let ti = AffineExpr::component(&t, i)?;
                let si = AffineExpr::component(&s, i)?;
                let zi = AffineExpr::component(&z, i)?;
                model.add_rotated_cone(&AffineExpr::stack(&[si.clone(), zi, ti.clone()])?)?;
                model.add_rotated_cone(&AffineExpr::stack(&[
                    AffineExpr::scalar(0.125),
                    ti,
                    si,
                ])?)?;
            }
            objective = objective.add(&AffineExpr::sum(&z).scale(lambda))?;
            power = Some((t, s, z));
        }
    }

    model.set_objective(Sense::Minimize, &objective)?;
    let outcome = model.solve(config)?;
    if outcome.status != Status::Optimal {
        return Err(RegressionError::NotOptimal {
            status: outcome.status,
            iterations: outcome.iterations,
        });
    }
    let weights = DVector::from_vec(model.level(&w)?);
    let power_cones = match power {
        Some((t, s, z)) => Some(PowerCones {
            t: model.level(&t)?,
            s: model.level(&s)?,
            z: model.level(&z)?,
        }),
        None => None,
    };
    let residual_term = (&problem.x * &weights - &problem.y).norm_squared();
    let penalty_term = reg.value(&weights);
    Ok(Fit {
        weights,
        objective: residual_term + penalty_term,
        residual_term,
        penalty_term,
        iterations: outcome.iterations,
        gap: outcome.gap,
        power_cones,
    })
}
