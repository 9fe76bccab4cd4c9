//! Environmental forecasting: hourly aggregation of multi-sensor streams
//! and iterative short-horizon prediction by ordinary least squares.
//!
//! Hourly values are the cross-sensor median of per-sensor hourly means.
//! Forecast features are the L most recent hourly values plus, optionally,
//! the historical profile: trailing same-hour-of-day means over the past
//! 3, 7, and 14 days.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HOUR_SECS: i64 = 3600;
pub const PROFILE_WINDOWS: [i64; 3] = [3, 7, 14];

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("insufficient history before {target_hour}: earliest usable hour is {earliest_usable}")]
    InsufficientHistory { target_hour: i64, earliest_usable: i64 },
    #[error("feature matrix is empty or has fewer rows ({rows}) than columns ({cols})")]
    UnderdeterminedSystem { rows: usize, cols: usize },
    #[error("non-finite value in regression inputs")]
    NonFiniteInput,
    #[error("length mismatch: predicted {predicted} vs actual {actual}")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("horizon must be >= 1")]
    EmptyHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    /// UTC seconds.
    pub timestamp: i64,
    #[serde(skip)]
    pub sensor_slot: usize,
    pub temperature: f64,
    pub humidity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourValue {
    pub temperature: f64,
    pub humidity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Temperature,
    Humidity,
}

impl Target {
    pub fn pick(&self, v: &HourValue) -> f64 {
        match self {
            Target::Temperature => v.temperature,
            Target::Humidity => v.humidity,
        }
    }
}

/// Hour-start timestamp -> aggregated value. Missing hours are gaps.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct HourlySeries {
    pub hours: BTreeMap<i64, HourValue>,
}

impl HourlySeries {
    pub fn get(&self, hour: i64, target: Target) -> Option<f64> {
        self.hours.get(&hour).map(|v| target.pick(v))
    }

    pub fn first_hour(&self) -> Option<i64> {
        self.hours.keys().next().copied()
    }

    pub fn last_hour(&self) -> Option<i64> {
        self.hours.keys().next_back().copied()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastModel {
    pub target: Target,
    pub lookback_hours: usize,
    pub use_profile: bool,
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Set when the training matrix was rank-deficient and the minimum-norm
    /// solution was taken.
    #[serde(default)]
    pub rank_deficient: bool,
}

impl ForecastModel {
    pub fn feature_count(&self) -> usize {
        self.lookback_hours + if self.use_profile { PROFILE_WINDOWS.len() } else { 0 }
    }

    pub fn predict(&self, features: &[f64]) -> f64 {
        self.intercept
            + self
                .weights
                .iter()
                .zip(features)
                .map(|(w, f)| w * f)
                .sum::<f64>()
    }
}

fn median_sorted(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Per sensor per hour: arithmetic mean of its readings. Per hour: median
/// across the sensors that reported. Hours with no data are gaps.
pub fn aggregate_hourly(readings: &[SensorReading]) -> HourlySeries {
    // (hour, sensor) -> (sum_t, sum_h, n)
    let mut acc: BTreeMap<(i64, usize), (f64, f64, usize)> = BTreeMap::new();
    for r in readings {
        let hour = r.timestamp.div_euclid(HOUR_SECS) * HOUR_SECS;
        let e = acc.entry((hour, r.sensor_slot)).or_insert((0.0, 0.0, 0));
        e.0 += r.temperature;
        e.1 += r.humidity;
        e.2 += 1;
    }
    let mut per_hour: BTreeMap<i64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((hour, _sensor), (st, sh, n)) in acc {
        let e = per_hour.entry(hour).or_default();
        e.0.push(st / n as f64);
        e.1.push(sh / n as f64);
    }
    let mut hours = BTreeMap::new();
    for (hour, (mut temps, mut hums)) in per_hour {
        hours.insert(
            hour,
            HourValue {
                temperature: median_sorted(&mut temps),
                humidity: median_sorted(&mut hums),
            },
        );
    }
    HourlySeries { hours }
}

/// Trailing same-hour-of-day means over the past 3, 7, and 14 days. Gaps
/// shrink the mean; with no day available the value falls back to the
/// hour-before value `fallback`.
fn profile_features(series: &HourlySeries, t: i64, target: Target, fallback: f64) -> Vec<f64> {
    PROFILE_WINDOWS
        .iter()
        .map(|&days| {
            let mut sum = 0.0;
            let mut n = 0;
            for d in 1..=days {
                if let Some(v) = series.get(t - d * 24 * HOUR_SECS, target) {
                    sum += v;
                    n += 1;
                }
            }
            if n > 0 {
                sum / n as f64
            } else {
                fallback
            }
        })
        .collect()
}

/// Feature row for predicting hour `t`: lags `value(t-1) .. value(t-L)`,
/// then the 3/7/14-day profile means when enabled. A gap inside the lag
/// window is an error.
pub fn build_features(
    series: &HourlySeries,
    t: i64,
    lookback_hours: usize,
    use_profile: bool,
    target: Target,
) -> Result<Vec<f64>, ForecastError> {
    let mut row = Vec::with_capacity(lookback_hours + 3);
    for lag in 1..=lookback_hours as i64 {
        match series.get(t - lag * HOUR_SECS, target) {
            Some(v) => row.push(v),
            None => {
                let earliest_usable = series
                    .first_hour()
                    .map(|h| h + lookback_hours as i64 * HOUR_SECS)
                    .unwrap_or(t);
                return Err(ForecastError::InsufficientHistory { target_hour: t, earliest_usable });
            }
        }
    }
    if use_profile {
        let fallback = row[0];
        row.extend(profile_features(series, t, target, fallback));
    }
    Ok(row)
}

/// Least-squares fit with intercept. Rank-deficient systems take the
/// minimum-norm (pseudo-inverse) solution and set the flag.
pub fn fit_ols(rows: &[Vec<f64>], targets: &[f64]) -> Result<(Vec<f64>, f64, bool), ForecastError> {
    let n = rows.len();
    if n == 0 {
        return Err(ForecastError::UnderdeterminedSystem { rows: 0, cols: 1 });
    }
    let cols = rows[0].len() + 1; // + intercept
    if n < cols {
        return Err(ForecastError::UnderdeterminedSystem { rows: n, cols });
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) || targets.iter().any(|v| !v.is_finite()) {
        return Err(ForecastError::NonFiniteInput);
    }
    let design = DMatrix::from_fn(n, cols, |r, c| if c == 0 { 1.0 } else { rows[r][c - 1] });
    let y = DVector::from_column_slice(targets);
    let svd = design.clone().svd(true, true);
    let tol = 1e-10 * svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let solution = svd.solve(&y, tol).map_err(|_| ForecastError::NonFiniteInput)?;
    let intercept = solution[0];
    let weights = solution.rows(1, cols - 1).iter().copied().collect();
    Ok((weights, intercept, rank < cols))
}

pub fn fit_model(
    series: &HourlySeries,
    target: Target,
    lookback_hours: usize,
    use_profile: bool,
    hour_range: impl Iterator<Item = i64>,
) -> Result<ForecastModel, ForecastError> {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for t in hour_range {
        let Some(actual) = series.get(t, target) else { continue };
        if let Ok(row) = build_features(series, t, lookback_hours, use_profile, target) {
            rows.push(row);
            targets.push(actual);
        }
    }
    let (weights, intercept, rank_deficient) = fit_ols(&rows, &targets)?;
    Ok(ForecastModel {
        target,
        lookback_hours,
        use_profile,
        weights,
        intercept,
        rank_deficient,
    })
}

/// Iterative rollout: each one-hour-ahead prediction feeds the lag features
/// of the next step. Profile features always come from observed history.
pub fn forecast_iterative(
    model: &ForecastModel,
    series: &HourlySeries,
    t0: i64,
    horizon: usize,
) -> Result<Vec<f64>, ForecastError> {
    if horizon == 0 {
        return Err(ForecastError::EmptyHorizon);
    }
    let mut predicted: BTreeMap<i64, f64> = BTreeMap::new();
    let mut out = Vec::with_capacity(horizon);
    for step in 0..horizon as i64 {
        let t = t0 + step * HOUR_SECS;
        let mut row = Vec::with_capacity(model.feature_count());
        for lag in 1..=model.lookback_hours as i64 {
            let th = t - lag * HOUR_SECS;
            let v = predicted
                .get(&th)
                .copied()
                .or_else(|| series.get(th, model.target));
            match v {
                Some(v) => row.push(v),
                None => {
                    let earliest_usable = series
                        .first_hour()
                        .map(|h| h + model.lookback_hours as i64 * HOUR_SECS)
                        .unwrap_or(t);
                    return Err(ForecastError::InsufficientHistory {
                        target_hour: t,
                        earliest_usable,
                    });
                }
            }
        }
        if model.use_profile {
            let fallback = row[0];
            row.extend(profile_features(series, t, model.target, fallback));
        }
        let value = model.predict(&row);
        predicted.insert(t, value);
        out.push(value);
    }
    Ok(out)
}

pub fn evaluate_rmse(predicted: &[f64], actual: &[f64]) -> Result<f64, ForecastError> {
    if predicted.len() != actual.len() || predicted.is_empty() {
        return Err(ForecastError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    let mse = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).powi(2))
        .sum::<f64>()
        / predicted.len() as f64;
    Ok(mse.sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    pub target: Target,
    pub use_profile: bool,
    pub lookback_hours: usize,
    pub horizon: usize,
    pub rmse: f64,
}

/// Grid-search harness over {profile on/off} x {L = 1..5} x horizons
/// {2..5}: chronological 80/20 split, one-step models, rollout evaluation.
pub fn grid_search(series: &HourlySeries, target: Target) -> Result<Vec<GridCell>, ForecastError> {
    let hours: Vec<i64> = series.hours.keys().copied().collect();
    if hours.is_empty() {
        return Err(ForecastError::UnderdeterminedSystem { rows: 0, cols: 1 });
    }
    let split = hours.len() * 4 / 5;
    let train_hours = &hours[..split];
    let test_hours = &hours[split..];
    let mut cells = Vec::new();
    for use_profile in [false, true] {
        for lookback in 1..=5usize {
            let model = fit_model(
                series,
                target,
                lookback,
                use_profile,
                train_hours.iter().copied(),
            )?;
            for horizon in 2..=5usize {
                let mut preds = Vec::new();
                let mut actuals = Vec::new();
                for &t0 in test_hours {
                    let t_end = t0 + (horizon as i64 - 1) * HOUR_SECS;
                    let Some(actual) = series.get(t_end, target) else { continue };
                    if let Ok(forecast) = forecast_iterative(&model, series, t0, horizon) {
                        preds.push(forecast[horizon - 1]);
                        actuals.push(actual);
                    }
                }
                if preds.is_empty() {
                    continue;
                }
                cells.push(GridCell {
                    target,
                    use_profile,
                    lookback_hours: lookback,
                    horizon,
                    rmse: evaluate_rmse(&preds, &actuals)?,
                });
            }
        }
    }
    Ok(cells)
}
