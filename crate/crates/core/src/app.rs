//! Command execution and reporting behind the `conereg` binary.

use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::data::{compute_returns, load_prices, DataError};
use crate::portfolio::{
    self, one_over_n, realized_series, sharpe, stdev, Annualization, EllipsoidalUncertainty,
    PortfolioConstraints, PortfolioError, ReturnsMatrix,
};
use crate::prediction::{self, PredictionError};
use crate::regression::{self, RegressionError, RegressionProblem, Regulariser};
use crate::solver::{SolverConfig, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Minvar,
    Track,
    Markowitz,
    Robust,
    Equal,
    LassoReg,
    RidgeReg,
    Predict,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Minvar => "minvar",
            Command::Track => "track",
            Command::Markowitz => "markowitz",
            Command::Robust => "robust",
            Command::Equal => "equal",
            Command::LassoReg => "lasso-reg",
            Command::RidgeReg => "ridge-reg",
            Command::Predict => "predict",
        }
    }

    /// Row label of the command's portfolio in the diagnostics.
    fn label(self) -> &'static str {
        match self {
            Command::Minvar => "Min Variance",
            Command::Track => "Tracking",
            Command::Markowitz => "Markowitz",
            Command::Robust => "Robust",
            Command::Equal => "1/N",
            Command::LassoReg => "LASSO",
            Command::RidgeReg => "Ridge",
            Command::Predict => "Prediction",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: PathBuf,
    pub command: Command,
    /// Defaults to every column except the index.
    pub symbols: Option<Vec<String>>,
    pub index: String,
    pub lambda: Option<f64>,
    pub sigma2: Option<f64>,
    /// Multiply `sigma2` by the number of periods.
    pub annualized: bool,
    pub gross: Option<f64>,
    pub lags: Option<usize>,
    pub windows: Option<Vec<usize>>,
    pub sqrt252: bool,
}

impl RunConfig {
    pub fn new(command: Command, data: impl Into<PathBuf>) -> Self {
        Self {
            data: data.into(),
            command,
            symbols: None,
            index: "^GSPC".into(),
            lambda: None,
            sigma2: None,
            annualized: false,
            gross: None,
            lags: None,
            windows: None,
            sqrt252: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{status}: {reason}")]
    Solver { status: Status, reason: String },
    #[error("{0}")]
    Input(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) | AppError::Input(_) => 2,
            AppError::Data(_) => 3,
            AppError::Solver { status, .. } => match status {
                Status::PrimalInfeasible => 4,
                Status::DualInfeasible => 5,
                _ => 6,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AppError::Usage(_) => "usage",
            AppError::Input(_) => "input",
            AppError::Data(DataError::Io { .. }) => "io",
            AppError::Data(_) => "data",
            AppError::Solver { status, .. } => match status {
                Status::PrimalInfeasible => "infeasible",
                Status::DualInfeasible => "unbounded",
                _ => "solver",
            },
        }
    }

    /// Single-line `error: kind=… code=… reason=…`.
    pub fn line(&self) -> String {
        let reason = self.to_string().replace('\n', " ");
        format!(
            "error: kind={} code={} reason={}",
            self.kind(),
            self.exit_code(),
            reason
        )
    }
}

impl From<PortfolioError> for AppError {
    fn from(e: PortfolioError) -> Self {
        match e {
            PortfolioError::NotOptimal { status, reason, .. } => {
                AppError::Solver { status, reason }
            }
            other => AppError::Input(other.to_string()),
        }
    }
}

impl From<RegressionError> for AppError {
    fn from(e: RegressionError) -> Self {
        match e {
            RegressionError::NotOptimal { status, iterations } => AppError::Solver {
                status,
                reason: format!("regression stopped after {iterations} iterations"),
            },
            other => AppError::Input(other.to_string()),
        }
    }
}

impl From<PredictionError> for AppError {
    fn from(e: PredictionError) -> Self {
        AppError::Input(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostic {
    pub sharpe: Option<f64>,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSummary {
    pub status: Status,
    pub iterations: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: Command,
    /// Holdings per symbol; forecasts for `predict`.
    pub weights: Vec<(String, f64)>,
    /// Fitted feature coefficients (`predict` only).
    pub coefficients: Vec<(String, f64)>,
    pub diagnostics: Vec<(String, Diagnostic)>,
    pub solver: Option<SolverSummary>,
    pub rows: usize,
    pub missing_cells: usize,
}

fn number(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

fn pairs(items: &[(String, f64)]) -> Value {
    Value::Object(
        items
            .iter()
            .map(|(k, v)| (k.clone(), number(*v)))
            .collect::<Map<_, _>>(),
    )
}

fn opt_fmt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

impl Report {
    pub fn to_json(&self) -> Value {
        let diagnostics: Map<String, Value> = self
            .diagnostics
            .iter()
            .map(|(name, d)| {
                let entry = json!({
                    "sharpe": d.sharpe.map_or(Value::Null, number),
                    "std": d.std.map_or(Value::Null, number),
                });
                (name.clone(), entry)
            })
            .collect();
        let mut out = Map::new();
        out.insert("command".into(), json!(self.command.name()));
        out.insert("weights".into(), pairs(&self.weights));
        if self.command == Command::Predict {
            out.insert("coefficients".into(), pairs(&self.coefficients));
        }
        out.insert("diagnostics".into(), Value::Object(diagnostics));
        out.insert(
            "solver".into(),
            self.solver.as_ref().map_or(Value::Null, |s| {
                json!({
                    "status": s.status.to_string(),
                    "iterations": s.iterations,
                    "gap": number(s.gap),
                })
            }),
        );
        Value::Object(out)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let width = self
            .weights
            .iter()
            .chain(&self.coefficients)
            .map(|(k, _)| k.len())
            .chain(self.diagnostics.iter().map(|(k, _)| k.len()))
            .max()
            .unwrap_or(0)
            .max(8);
        let _ = writeln!(s, "{}", self.command.name());
        let heading = if self.command == Command::Predict {
            "forecast"
        } else {
            "weight"
        };
        let _ = writeln!(s, "{:<width$}  {heading:>9}", "symbol");
        for (k, v) in &self.weights {
            let _ = writeln!(s, "{k:<width$}  {v:>9.4}");
        }
        if !self.coefficients.is_empty() {
            let _ = writeln!(s, "\n{:<width$}  {:>9}", "feature", "coef");
            for (k, v) in &self.coefficients {
                let _ = writeln!(s, "{k:<width$}  {v:>9.4}");
            }
        }
        let _ = writeln!(s, "\n{:<width$}  {:>9}  {:>9}", "series", "sharpe", "std");
        for (k, d) in &self.diagnostics {
            let _ = writeln!(
                s,
                "{k:<width$}  {:>9}  {:>9}",
                opt_fmt(d.sharpe, 2),
                opt_fmt(d.std, 3)
            );
        }
        match &self.solver {
            Some(sv) => {
                let _ = writeln!(
                    s,
                    "\nsolver: {} after {} iterations, gap {:.2e}",
                    sv.status, sv.iterations, sv.gap
                );
            }
            None => {
                let _ = writeln!(s, "\nsolver: not used");
            }
        }
        s
    }
}

type FeatureFn<'a> = dyn Fn(&[f64]) -> Result<DVector<f64>, PredictionError> + 'a;

fn require<T>(v: Option<T>, flag: &str, command: Command) -> Result<T, AppError> {
    v.ok_or_else(|| AppError::Usage(format!("{} requires {flag}", command.name())))
}

fn diagnostic(series: &DVector<f64>, ann: Annualization) -> Diagnostic {
    Diagnostic {
        sharpe: sharpe(series.as_slice(), ann),
        std: stdev(series.as_slice()),
    }
}

fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()))
}

/// Symmetric square root of the sample covariance of the mean estimate,
/// `(S/n)^{1/2}`.
fn mean_uncertainty(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mu = column_means(x);
    let centred = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - mu[j]);
    let cov = centred.transpose() * &centred / ((n - 1.0).max(1.0) * n);
    let eig = SymmetricEigen::new((&cov + cov.transpose()) * 0.5);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let a = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    (&a + a.transpose()) * 0.5
}

fn summary(status: Status, iterations: usize, gap: f64) -> Option<SolverSummary> {
    Some(SolverSummary {
        status,
        iterations,
        gap,
    })
}

fn select_symbols(returns: &ReturnsMatrix, cfg: &RunConfig) -> Result<Vec<String>, AppError> {
    let symbols = match &cfg.symbols {
        Some(list) => list.clone(),
        None => returns
            .symbols()
            .iter()
            .filter(|s| **s != cfg.index)
            .cloned()
            .collect(),
    };
    if symbols.is_empty() {
        return Err(AppError::Usage("no symbols selected".into()));
    }
    for s in &symbols {
        if !returns.symbols().contains(s) {
            return Err(AppError::Usage(format!("unknown symbol {s}")));
        }
    }
    Ok(symbols)
}

pub fn run(cfg: &RunConfig) -> Result<Report, AppError> {
    let frame = load_prices(&cfg.data)?;
    let returns = compute_returns(&frame)?;
    let symbols = select_symbols(&returns, cfg)?;
    let assets = returns.select(&symbols)?;
    let x = assets.values();
    let index = returns.column(&cfg.index);
    let ann = if cfg.sqrt252 {
        Annualization::Sqrt252
    } else {
        Annualization::Sixteen
    };
    let solver_cfg = SolverConfig::default();
    let sigma2 = || -> Result<f64, AppError> {
        let s = require(cfg.sigma2, "--sigma2", cfg.command)?;
        Ok(if cfg.annualized {
            s * x.nrows() as f64
        } else {
            s
        })
    };
    let constraints = || match cfg.gross {
        Some(g) => PortfolioConstraints::leveraged(g),
        None => PortfolioConstraints::default(),
    };
    let index_series = || {
        index.clone().ok_or_else(|| {
            AppError::Usage(format!("index column {} not found in the data", cfg.index))
        })
    };

    let mut coefficients = Vec::new();
    let (weights, solver) = match cfg.command {
        Command::Minvar => {
            let s = portfolio::min_variance(x, &PortfolioConstraints::default(), &solver_cfg)?;
            (s.weights, summary(s.status, s.iterations, s.gap))
        }
        Command::Track => {
            let s = portfolio::track_index(
                x,
                &index_series()?,
                &PortfolioConstraints::default(),
                &solver_cfg,
            )?;
            (s.weights, summary(s.status, s.iterations, s.gap))
        }
        Command::Markowitz => {
            let s =
                portfolio::max_return(x, &column_means(x), sigma2()?, &constraints(), &solver_cfg)?;
            (s.weights, summary(s.status, s.iterations, s.gap))
        }
        Command::Robust => {
            let unc = EllipsoidalUncertainty::new(column_means(x), mean_uncertainty(x))?;
            let s = portfolio::robust_max_return(x, &unc, sigma2()?, &constraints(), &solver_cfg)?;
            (s.weights, summary(s.status, s.iterations, s.gap))
        }
        Command::Equal => (one_over_n(symbols.len()), None),
        Command::LassoReg | Command::RidgeReg => {
            let lambda = require(cfg.lambda, "--lambda", cfg.command)?;
            let problem = RegressionProblem::new(x.clone(), index_series()?)?;
            let fit = if cfg.command == Command::LassoReg {
                regression::lasso(&problem, &Regulariser::lasso(lambda), &solver_cfg)?
            } else {
                regression::ridge(&problem, &Regulariser::ridge(lambda), &solver_cfg)?
            };
            (
                fit.weights,
                summary(Status::Optimal, fit.iterations, fit.gap),
            )
        }
        Command::Predict => {
            let series: Vec<Vec<f64>> = (0..x.ncols())
                .map(|j| x.column(j).iter().copied().collect())
                .collect();
            let (design, names, latest): (_, Vec<String>, Box<FeatureFn>) =
                match (&cfg.windows, cfg.lags) {
                    (Some(_), Some(_)) => {
                        return Err(AppError::Usage("give either --lags or --windows".into()))
                    }
                    (Some(w), None) => (
                        prediction::pooled_ma(&series, w, None)?,
                        w.iter().map(|k| format!("ma{k}")).collect(),
                        Box::new(move |r| prediction::latest_moving_averages(r, w)),
                    ),
                    (None, lags) => {
                        let p = lags.unwrap_or(1);
                        (
                            prediction::pooled_lagged(&series, p, None)?,
                            (1..=p).rev().map(|k| format!("lag{k}")).collect(),
                            Box::new(move |r| prediction::latest_lags(r, p)),
                        )
                    }
                };
            let problem = RegressionProblem::new(design.x, design.y)?;
            let fit = match cfg.lambda {
                Some(l) => regression::ridge(&problem, &Regulariser::ridge(l), &solver_cfg)?,
                None => regression::lsq(&problem, &solver_cfg)?,
            };
            let forecasts = series
                .iter()
                .map(|s| Ok(latest(s)?.dot(&fit.weights)))
                .collect::<Result<Vec<f64>, PredictionError>>()?;
            coefficients = names.into_iter().zip(fit.weights.iter().copied()).collect();
            (
                DVector::from_vec(forecasts),
                summary(Status::Optimal, fit.iterations, fit.gap),
            )
        }
    };

    let mut diagnostics = Vec::new();
    if cfg.command != Command::Predict && cfg.command != Command::Equal {
        diagnostics.push((
            cfg.command.label().to_string(),
            diagnostic(&realized_series(x, &weights), ann),
        ));
    }
    diagnostics.push((
        "1/N".to_string(),
        diagnostic(&realized_series(x, &one_over_n(symbols.len())), ann),
    ));
    if let Some(r) = &index {
        diagnostics.push(("Index".to_string(), diagnostic(r, ann)));
    }

    Ok(Report {
        command: cfg.command,
        weights: symbols.into_iter().zip(weights.iter().copied()).collect(),
        coefficients,
        diagnostics,
        solver,
        rows: frame.num_rows(),
        missing_cells: frame.missing_cells(),
    })
}
