//! Design matrices for next-period return prediction from lagged returns
//! and moving averages, plus causal volatility adjustment.
//!
//! Time indices refer to positions in the input series. Every design row
//! records the index of its target so no-look-ahead can be checked.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictionError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("series of length {len} is too short, need more than {need}")]
    TooShort { len: usize, need: usize },
}

fn check_series(returns: &[f64]) -> Result<(), PredictionError> {
    match returns.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(PredictionError::Invalid(format!(
            "non-finite return at index {i}"
        ))),
        None => Ok(()),
    }
}

/// Row `k` holds `(r_k, …, r_{k+p−1})` and targets `y_k = r_{k+p}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedDesign {
    x: DMatrix<f64>,
    y: DVector<f64>,
    p: usize,
    targets: Vec<usize>,
}

impl LaggedDesign {
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn lags(&self) -> usize {
        self.p
    }

    /// Series index of each row's target.
    pub fn target_indices(&self) -> &[usize] {
        &self.targets
    }

    /// Series indices feeding row `k`.
    pub fn feature_indices(&self, k: usize) -> std::ops::Range<usize> {
        let t = self.targets[k];
        t - self.p..t
    }

    /// Keeps the most recent `rows` rows (the training window).
    pub fn training_window(&self, rows: usize) -> Result<Self, PredictionError> {
        let (x, y, targets) = tail(&self.x, &self.y, &self.targets, rows)?;
        Ok(Self {
            x,
            y,
            p: self.p,
            targets,
        })
    }
}

pub fn lagged_design(returns: &[f64], p: usize) -> Result<LaggedDesign, PredictionError> {
    if p == 0 {
        return Err(PredictionError::Invalid(
            "lag depth must be at least 1".into(),
        ));
    }
    if returns.len() <= p {
        return Err(PredictionError::TooShort {
            len: returns.len(),
            need: p,
        });
    }
    check_series(returns)?;
    let rows = returns.len() - p;
    Ok(LaggedDesign {
        x: DMatrix::from_fn(rows, p, |k, j| returns[k + j]),
        y: DVector::from_fn(rows, |k, _| returns[k + p]),
        p,
        targets: (p..returns.len()).collect(),
    })
}

/// Column `j` of row `k` is the mean of the `W_j` returns ending just
/// before the target `y_k = r_{W+k}`, with `W` the largest window.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingAverageDesign {
    x: DMatrix<f64>,
    y: DVector<f64>,
    windows: Vec<usize>,
    targets: Vec<usize>,
}

impl MovingAverageDesign {
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn windows(&self) -> &[usize] {
        &self.windows
    }

    pub fn target_indices(&self) -> &[usize] {
        &self.targets
    }

    /// Series indices feeding column `j` of row `k`.
    pub fn feature_indices(&self, k: usize, j: usize) -> std::ops::Range<usize> {
        let t = self.targets[k];
        t - self.windows[j]..t
    }

    pub fn training_window(&self, rows: usize) -> Result<Self, PredictionError> {
        let (x, y, targets) = tail(&self.x, &self.y, &self.targets, rows)?;
        Ok(Self {
            x,
            y,
            windows: self.windows.clone(),
            targets,
        })
    }
}

fn check_windows(windows: &[usize]) -> Result<usize, PredictionError> {
    if windows.is_empty() {
        return Err(PredictionError::Invalid(
            "no moving-average windows given".into(),
        ));
    }
    if windows.contains(&0) {
        return Err(PredictionError::Invalid(
            "windows must be at least 1".into(),
        ));
    }
    for (i, w) in windows.iter().enumerate() {
        if windows[..i].contains(w) {
            return Err(PredictionError::Invalid(format!("window {w} repeated")));
        }
    }
    Ok(*windows.iter().max().expect("non-empty"))
}

fn trailing_mean(returns: &[f64], t: usize, w: usize) -> f64 {
    returns[t - w..t].iter().sum::<f64>() / w as f64
}

pub fn ma_design(
    returns: &[f64],
    windows: &[usize],
) -> Result<MovingAverageDesign, PredictionError> {
    let big = check_windows(windows)?;
    if returns.len() <= big {
        return Err(PredictionError::TooShort {
            len: returns.len(),
            need: big,
        });
    }
    check_series(returns)?;
    let rows = returns.len() - big;
    Ok(MovingAverageDesign {
        x: DMatrix::from_fn(rows, windows.len(), |k, j| {
            trailing_mean(returns, big + k, windows[j])
        }),
        y: DVector::from_fn(rows, |k, _| returns[big + k]),
        windows: windows.to_vec(),
        targets: (big..returns.len()).collect(),
    })
}

/// Lagged features for predicting the period after the last observation.
pub fn latest_lags(returns: &[f64], p: usize) -> Result<DVector<f64>, PredictionError> {
    if p == 0 {
        return Err(PredictionError::Invalid(
            "lag depth must be at least 1".into(),
        ));
    }
    if returns.len() < p {
        return Err(PredictionError::TooShort {
            len: returns.len(),
            need: p - 1,
        });
    }
    Ok(DVector::from_column_slice(&returns[returns.len() - p..]))
}

/// Moving-average features for predicting the period after the last
/// observation.
pub fn latest_moving_averages(
    returns: &[f64],
    windows: &[usize],
) -> Result<DVector<f64>, PredictionError> {
    let big = check_windows(windows)?;
    if returns.len() < big {
        return Err(PredictionError::TooShort {
            len: returns.len(),
            need: big - 1,
        });
    }
    let t = returns.len();
    Ok(DVector::from_iterator(
        windows.len(),
        windows.iter().map(|&w| trailing_mean(returns, t, w)),
    ))
}

type Tail = (DMatrix<f64>, DVector<f64>, Vec<usize>);

fn tail(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    targets: &[usize],
    rows: usize,
) -> Result<Tail, PredictionError> {
    if rows == 0 || rows > x.nrows() {
        return Err(PredictionError::Invalid(format!(
            "training window of {rows} rows, design has {}",
            x.nrows()
        )));
    }
    let start = x.nrows() - rows;
    Ok((
        x.rows(start, rows).into_owned(),
        y.rows(start, rows).into_owned(),
        targets[start..].to_vec(),
    ))
}

/// Volatility-adjusted returns `r_t / σ_{t−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolAdjusted {
    pub values: Vec<f64>,
    /// Series index of each kept value.
    pub indices: Vec<usize>,
    /// Entries dropped because the trailing std was zero.
    pub dropped: usize,
}

fn sample_std(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Divides each `r_t` by the sample std of the `window` returns before it.
/// The first `window` entries have no full history and are dropped.
pub fn vol_adjust(returns: &[f64], window: usize) -> Result<VolAdjusted, PredictionError> {
    if window < 2 {
        return Err(PredictionError::Invalid(
            "volatility window must be at least 2".into(),
        ));
    }
    if returns.len() <= window {
        return Err(PredictionError::TooShort {
            len: returns.len(),
            need: window,
        });
    }
    check_series(returns)?;
    let mut out = VolAdjusted {
        values: Vec::with_capacity(returns.len() - window),
        indices: Vec::with_capacity(returns.len() - window),
        dropped: 0,
    };
    for t in window..returns.len() {
        let past = &returns[t - window..t];
        let sd = sample_std(past);
        let scale = past.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if sd > 16.0 * f64::EPSILON * scale {
            out.values.push(returns[t] / sd);
            out.indices.push(t);
        } else {
            out.dropped += 1;
        }
    }
    Ok(out)
}

/// Row-stacked designs of several assets.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledDesign {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Asset of each row.
    pub assets: Vec<usize>,
}

fn stack(parts: Vec<(DMatrix<f64>, DVector<f64>)>) -> PooledDesign {
    let cols = parts.first().map_or(0, |(x, _)| x.ncols());
    let rows: usize = parts.iter().map(|(x, _)| x.nrows()).sum();
    let mut x = DMatrix::zeros(rows, cols);
    let mut y = DVector::zeros(rows);
    let mut assets = Vec::with_capacity(rows);
    let mut at = 0;
    for (a, (px, py)) in parts.into_iter().enumerate() {
        let n = px.nrows();
        x.rows_mut(at, n).copy_from(&px);
        y.rows_mut(at, n).copy_from(&py);
        assets.extend(std::iter::repeat_n(a, n));
        at += n;
    }
    PooledDesign { x, y, assets }
}

fn adjusted(series: &[f64], vol_window: Option<usize>) -> Result<Vec<f64>, PredictionError> {
    match vol_window {
        Some(w) => Ok(vol_adjust(series, w)?.values),
        None => Ok(series.to_vec()),
    }
}

/// Lagged designs of each asset, optionally volatility adjusted first, so
/// that one model can be fitted across assets on a common scale.
pub fn pooled_lagged(
    series: &[Vec<f64>],
    p: usize,
    vol_window: Option<usize>,
) -> Result<PooledDesign, PredictionError> {
    if series.is_empty() {
        return Err(PredictionError::Invalid("no series to pool".into()));
    }
    let parts = series
        .iter()
        .map(|s| {
            let d = lagged_design(&adjusted(s, vol_window)?, p)?;
            Ok((d.x, d.y))
        })
        .collect::<Result<Vec<_>, PredictionError>>()?;
    Ok(stack(parts))
}

/// Moving-average counterpart of [`pooled_lagged`].
pub fn pooled_ma(
    series: &[Vec<f64>],
    windows: &[usize],
    vol_window: Option<usize>,
) -> Result<PooledDesign, PredictionError> {
    if series.is_empty() {
        return Err(PredictionError::Invalid("no series to pool".into()));
    }
    let parts = series
        .iter()
        .map(|s| {
            let d = ma_design(&adjusted(s, vol_window)?, windows)?;
            Ok((d.x, d.y))
        })
        .collect::<Result<Vec<_>, PredictionError>>()?;
    Ok(stack(parts))
}
