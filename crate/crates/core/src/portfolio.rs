//! Portfolio formulations (tracking, minimum variance, risk-capped return
//! maximisation, market neutral, robust) and return diagnostics.
//!
//! Risk is measured as the raw sum of squares `‖Xw‖²` of the realised
//! return series; diagnostics use the sample standard deviation.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{AffineExpr, Domain, Model, ModelError, Sense, VariableHandle};
use crate::solver::{SolverConfig, SolverOutcome, Status};

#[derive(Debug, Error)]
pub enum PortfolioError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("solver finished with status {status} after {iterations} iterations: {reason}")]
    NotOptimal {
        status: Status,
        iterations: usize,
        reason: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per-period simple returns of `m` assets over `n` dated periods.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsMatrix {
    values: DMatrix<f64>,
    dates: Vec<NaiveDate>,
    symbols: Vec<String>,
}

impl ReturnsMatrix {
    pub fn new(
        values: DMatrix<f64>,
        dates: Vec<NaiveDate>,
        symbols: Vec<String>,
    ) -> Result<Self, PortfolioError> {
        if values.nrows() != dates.len() || values.ncols() != symbols.len() {
            return Err(PortfolioError::Invalid(format!(
                "{}x{} values for {} dates and {} symbols",
                values.nrows(),
                values.ncols(),
                dates.len(),
                symbols.len()
            )));
        }
        if let Some((i, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (r, c) = (i % values.nrows(), i / values.nrows());
            return Err(PortfolioError::Invalid(format!(
                "non-finite return at {} for {}",
                dates[r], symbols[c]
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(PortfolioError::Invalid(format!(
                "dates not strictly increasing at {}",
                w[1]
            )));
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(PortfolioError::Invalid(format!("duplicate symbol {s}")));
            }
        }
        Ok(Self {
            values,
            dates,
            symbols,
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn column(&self, symbol: &str) -> Option<DVector<f64>> {
        let j = self.symbols.iter().position(|s| s == symbol)?;
        Some(self.values.column(j).into_owned())
    }

    /// The sub-matrix of the named columns, in the given order.
    pub fn select(&self, symbols: &[String]) -> Result<Self, PortfolioError> {
        let mut cols = Vec::with_capacity(symbols.len());
        for s in symbols {
            let j = self
                .symbols
                .iter()
                .position(|x| x == s)
                .ok_or_else(|| PortfolioError::Invalid(format!("unknown symbol {s}")))?;
            cols.push(j);
        }
        let values = DMatrix::from_fn(self.values.nrows(), cols.len(), |i, k| {
            self.values[(i, cols[k])]
        });
        Self::new(values, self.dates.clone(), symbols.to_vec())
    }
}

/// Linear restrictions on the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioConstraints {
    /// Required `Σ wᵢ`.
    pub budget: Option<f64>,
    pub long_only: bool,
    /// `Σ |wᵢ| ≤ G`, or `= G` with `gross_equality`.
    pub gross_limit: Option<f64>,
    pub gross_equality: bool,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

impl Default for PortfolioConstraints {
    /// Fully invested and long only.
    fn default() -> Self {
        Self {
            budget: Some(1.0),
            long_only: true,
            gross_limit: None,
            gross_equality: false,
            lower: None,
            upper: None,
        }
    }
}

impl PortfolioConstraints {
    pub fn unconstrained() -> Self {
        Self {
            budget: None,
            long_only: false,
            ..Self::default()
        }
    }

    /// Budget one with gross exposure at most `gross` (1.6 for 130/30).
    pub fn leveraged(gross: f64) -> Self {
        Self {
            budget: Some(1.0),
            long_only: false,
            gross_limit: Some(gross),
            ..Self::default()
        }
    }

    /// Budget zero with gross exposure pinned to 2.
    pub fn market_neutral() -> Self {
        Self {
            budget: Some(0.0),
            long_only: false,
            gross_limit: Some(2.0),
            gross_equality: true,
            ..Self::default()
        }
    }

    fn validate(&self, m: usize) -> Result<(), PortfolioError> {
        if let Some(b) = self.budget {
            if !b.is_finite() {
                return Err(PortfolioError::Invalid("budget must be finite".into()));
            }
        }
        if let Some(g) = self.gross_limit {
            if !(g.is_finite() && g > 0.0) {
                return Err(PortfolioError::Invalid(format!(
                    "gross limit must be positive, got {g}"
                )));
            }
        }
        for (label, bound) in [("lower", &self.lower), ("upper", &self.upper)] {
            if let Some(b) = bound {
                if b.len() != m || b.iter().any(|v| v.is_nan()) {
                    return Err(PortfolioError::Invalid(format!(
                        "{label} bounds must be {m} numbers"
                    )));
                }
            }
        }
        Ok(())
    }

    fn apply(&self, model: &mut Model, w: &VariableHandle) -> Result<(), ModelError> {
        if let Some(b) = self.budget {
            model.add_equality(&AffineExpr::sum(w), &[b])?;
        }
        if let Some(g) = self.gross_limit {
            let t = model.add_abs_bound(&AffineExpr::var(w))?;
            let total = AffineExpr::sum(&t);
            if self.gross_equality {
                model.add_equality(&total, &[g])?;
            } else {
                model.add_nonnegative(&total.scale(-1.0).offset(&[g])?)?;
            }
        }
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

/// Uncertainty set `{A u + μ⁰ : ‖u‖₂ ≤ 1}` for the expected returns.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidalUncertainty {
    mu0: DVector<f64>,
    a: DMatrix<f64>,
}

impl EllipsoidalUncertainty {
    pub fn new(mu0: DVector<f64>, a: DMatrix<f64>) -> Result<Self, PortfolioError> {
        let m = mu0.len();
        if a.nrows() != m || a.ncols() != m {
            return Err(PortfolioError::Invalid(format!(
                "A is {}x{}, expected {m}x{m}",
                a.nrows(),
                a.ncols()
            )));
        }
        if mu0.iter().chain(a.iter()).any(|v| !v.is_finite()) {
            return Err(PortfolioError::Invalid(
                "non-finite entry in uncertainty set".into(),
            ));
        }
        let scale = a.amax().max(1.0);
        for i in 0..m {
            for j in 0..i {
                if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                    return Err(PortfolioError::Invalid(format!(
                        "A is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        // a factorisation of A + εI exists iff A has no eigenvalue below −ε
        let jitter = 1e-10 * scale;
        if (&a + DMatrix::identity(m, m) * jitter).cholesky().is_none() {
            return Err(PortfolioError::Invalid(
                "A has a negative eigenvalue".into(),
            ));
        }
        Ok(Self { mu0, a })
    }

    pub fn mu0(&self) -> &DVector<f64> {
        &self.mu0
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// `min over ‖u‖ ≤ 1 of wᵀ(Au + μ⁰) = wᵀμ⁰ − ‖Aw‖₂`.
    pub fn worst_case(&self, w: &DVector<f64>) -> f64 {
        w.dot(&self.mu0) - (&self.a * w).norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioSolution {
    pub weights: DVector<f64>,
    /// Objective in the formulation's own sense, evaluated at the weights.
    pub objective: f64,
    pub status: Status,
    pub iterations: usize,
    pub gap: f64,
}

fn check_returns(x: &DMatrix<f64>) -> Result<(), PortfolioError> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(PortfolioError::Invalid(format!(
            "empty returns matrix {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(PortfolioError::Invalid("non-finite return".into()));
    }
    Ok(())
}

fn new_model(
    x: &DMatrix<f64>,
    c: &PortfolioConstraints,
) -> Result<(Model, VariableHandle), PortfolioError> {
    check_returns(x)?;
    c.validate(x.ncols())?;
    let mut model = Model::new();
    let domain = if c.long_only {
        Domain::NonNegative
    } else {
        Domain::Unbounded
    };
    let w = model.add_variable("w", x.ncols(), domain)?;
    c.apply(&mut model, &w)?;
    Ok((model, w))
}

fn finish(
    model: &mut Model,
    w: &VariableHandle,
    config: &SolverConfig,
    infeasible_reason: &str,
    objective: impl Fn(&DVector<f64>) -> f64,
) -> Result<PortfolioSolution, PortfolioError> {
    let out: SolverOutcome = model.solve(config)?;
    if out.status != Status::Optimal {
        let reason = match out.status {
            Status::PrimalInfeasible => infeasible_reason.to_string(),
            Status::DualInfeasible => "objective is unbounded under the constraints".to_string(),
            _ => "no solution to the requested accuracy".to_string(),
        };
        return Err(PortfolioError::NotOptimal {
            status: out.status,
            iterations: out.iterations,
            reason,
        });
    }
    let weights = DVector::from_vec(model.level(w)?);
    Ok(PortfolioSolution {
        objective: objective(&weights),
        weights,
        status: out.status,
        iterations: out.iterations,
        gap: out.gap,
    })
}

/// Minimises the tracking error `‖Xw − r_M‖₂²`; the reported objective is
/// the squared error.
pub fn track_index(
    x: &DMatrix<f64>,
    r_m: &DVector<f64>,
    constraints: &PortfolioConstraints,
    config: &SolverConfig,
) -> Result<PortfolioSolution, PortfolioError> {
    if r_m.len() != x.nrows() {
        return Err(PortfolioError::Invalid(format!(
            "target series has length {}, returns have {} periods",
            r_m.len(),
            x.nrows()
        )));
    }
    if r_m.iter().any(|v| !v.is_finite()) {
        return Err(PortfolioError::Invalid("non-finite target return".into()));
    }
    let (mut model, w) = new_model(x, constraints)?;
    // ‖Xw − r‖ has the argmin of its square but resolves w linearly in the
    // gap when the optimal residual is zero
    let t = model.add_variable("t", 1, Domain::Unbounded)?;
    let neg_r: Vec<f64> = r_m.iter().map(|v| -v).collect();
    let residual = AffineExpr::mul(x, &w)?.offset(&neg_r)?;
    model.add_quadratic_cone(&AffineExpr::stack(&[AffineExpr::var(&t), residual])?)?;
    model.set_objective(Sense::Minimize, &AffineExpr::var(&t))?;
    finish(
        &mut model,
        &w,
        config,
        "constraints admit no portfolio",
        |w| (x * w - r_m).norm_squared(),
    )
}

/// Tracks the zero series: minimises `‖Xw‖₂²`.
pub fn min_variance(
    x: &DMatrix<f64>,
    constraints: &PortfolioConstraints,
    config: &SolverConfig,
) -> Result<PortfolioSolution, PortfolioError> {
    track_index(x, &DVector::zeros(x.nrows()), constraints, config)
}

fn check_mu_sigma(x: &DMatrix<f64>, mu: &DVector<f64>, sigma2: f64) -> Result<(), PortfolioError> {
    if mu.len() != x.ncols() {
        return Err(PortfolioError::Invalid(format!(
            "expected returns have length {}, expected {}",
            mu.len(),
            x.ncols()
        )));
    }
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(PortfolioError::Invalid("non-finite expected return".into()));
    }
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(PortfolioError::Invalid(format!(
            "risk cap sigma2 must be positive, got {sigma2}"
        )));
    }
    Ok(())
}

/// `(1/2, σ², Xw) ∈ Q_r`, i.e. `‖Xw‖² ≤ σ²`.
fn add_risk_cap(
    model: &mut Model,
    x: &DMatrix<f64>,
    w: &VariableHandle,
    sigma2: f64,
) -> Result<(), ModelError> {
    let stack = AffineExpr::stack(&[
        AffineExpr::scalar(0.5),
        AffineExpr::scalar(sigma2),
        AffineExpr::mul(x, w)?,
    ])?;
    model.add_rotated_cone(&stack)?;
    Ok(())
}

/// Maximises `wᵀμ` subject to `‖Xw‖² ≤ σ²` and the constraints.
pub fn max_return(
    x: &DMatrix<f64>,
    mu: &DVector<f64>,
    sigma2: f64,
    constraints: &PortfolioConstraints,
    config: &SolverConfig,
) -> Result<PortfolioSolution, PortfolioError> {
    check_mu_sigma(x, mu, sigma2)?;
    let (mut model, w) = new_model(x, constraints)?;
    add_risk_cap(&mut model, x, &w, sigma2)?;
    model.set_objective(Sense::Maximize, &AffineExpr::dot(mu.as_slice(), &w)?)?;
    let reason = format!("risk cap sigma2 = {sigma2} is too small for the constraints");
    finish(&mut model, &w, config, &reason, |w| w.dot(mu))
}

/// [`max_return`] with budget 0 and gross exposure `Σ tᵢ = 2`.
pub fn market_neutral(
    x: &DMatrix<f64>,
    mu: &DVector<f64>,
    sigma2: f64,
    config: &SolverConfig,
) -> Result<PortfolioSolution, PortfolioError> {
    max_return(
        x,
        mu,
        sigma2,
        &PortfolioConstraints::market_neutral(),
        config,
    )
}

/// Maximises the worst case `wᵀμ⁰ − ‖Aw‖₂` via `(t, Aw) ∈ Q`.
pub fn robust_max_return(
    x: &DMatrix<f64>,
    unc: &EllipsoidalUncertainty,
    sigma2: f64,
    constraints: &PortfolioConstraints,
    config: &SolverConfig,
) -> Result<PortfolioSolution, PortfolioError> {
    check_mu_sigma(x, unc.mu0(), sigma2)?;
    let (mut model, w) = new_model(x, constraints)?;
    add_risk_cap(&mut model, x, &w, sigma2)?;
    let t = model.add_variable("t", 1, Domain::Unbounded)?;
    model.add_quadratic_cone(&AffineExpr::stack(&[
        AffineExpr::var(&t),
        AffineExpr::mul(unc.a(), &w)?,
    ])?)?;
    let obj = AffineExpr::dot(unc.mu0().as_slice(), &w)?.sub(&AffineExpr::var(&t))?;
    model.set_objective(Sense::Maximize, &obj)?;
    let reason = format!("risk cap sigma2 = {sigma2} is too small for the constraints");
    finish(&mut model, &w, config, &reason, |w| unc.worst_case(w))
}

/// Equal weights `1/m`.
pub fn one_over_n(m: usize) -> DVector<f64> {
    DVector::from_element(m, 1.0 / m as f64)
}

/// Realised portfolio returns `Xw`.
pub fn realized_series(x: &DMatrix<f64>, w: &DVector<f64>) -> DVector<f64> {
    x * w
}

/// Sample standard deviation (divisor `n − 1`); `None` below two points.
pub fn stdev(series: &[f64]) -> Option<f64> {
    let n = series.len();
    if n < 2 {
        return None;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let ss: f64 = series.iter().map(|v| (v - mean).powi(2)).sum();
    Some((ss / (n - 1) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Annualization {
    /// The factor 16 used by the reference diagnostics.
    #[default]
    Sixteen,
    Sqrt252,
}

impl Annualization {
    pub fn factor(self) -> f64 {
        match self {
            Annualization::Sixteen => 16.0,
            Annualization::Sqrt252 => 252f64.sqrt(),
        }
    }
}

/// `factor · mean / std`; `None` when the series is constant or shorter
/// than two points.
pub fn sharpe(series: &[f64], annualization: Annualization) -> Option<f64> {
    let sd = stdev(series)?;
    // a constant series leaves only rounding noise in the spread
    let scale = series.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if sd.is_nan() || sd <= 16.0 * f64::EPSILON * scale {
        return None;
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    Some(annualization.factor() * mean / sd)
}

/// Sharpe ratio with the factor 16.
pub fn sharpe_annualized(series: &[f64]) -> Option<f64> {
    sharpe(series, Annualization::Sixteen)
}

/// Weights, realised series and its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioReport {
    pub weights: Vec<(String, f64)>,
    pub realized: DVector<f64>,
    pub sharpe: Option<f64>,
    pub stdev: Option<f64>,
}

impl PortfolioReport {
    pub fn new(
        returns: &ReturnsMatrix,
        w: &DVector<f64>,
        annualization: Annualization,
    ) -> Result<Self, PortfolioError> {
        if w.len() != returns.symbols().len() {
            return Err(PortfolioError::Invalid(format!(
                "{} weights for {} symbols",
                w.len(),
                returns.symbols().len()
            )));
        }
        let realized = realized_series(returns.values(), w);
        Ok(Self {
            weights: returns
                .symbols()
                .iter()
                .cloned()
                .zip(w.iter().copied())
                .collect(),
            sharpe: sharpe(realized.as_slice(), annualization),
            stdev: stdev(realized.as_slice()),
            realized,
        })
    }
}
