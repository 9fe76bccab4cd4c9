//! Production forecasting: a 40-feature daily vector built from farm
//! records, environment aggregates, and audio/video activity indicators,
//! fed to an ordinary-least-squares model that predicts per-bird egg
//! productivity averaged over the next 10 days, plus feed-cost derivation.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envforecast::{fit_ols, ForecastError};

pub const FEATURE_COUNT: usize = 40;
pub const TARGET_HORIZON_DAYS: i64 = 10;

#[derive(Debug, Error)]
pub enum ProductionError {
    #[error("insufficient production history before {date}: cannot compute {}", missing.join(", "))]
    InsufficientHistory { date: NaiveDate, missing: Vec<String> },
    #[error("feature f{index} ({}) is absent: {reason}", feature_name(*index))]
    MissingFeature { index: usize, reason: String },
    #[error("predicted and actual lengths differ: {predicted} vs {actual}")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("flock size must be positive")]
    NonPositiveFlockSize,
    #[error("predicted daily egg count must be positive to derive cost per egg")]
    ZeroPredictedEggs,
    #[error("no usable (feature, target) samples in the dataset")]
    EmptyDataset,
    #[error(transparent)]
    Regression(#[from] ForecastError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    pub eggs: u32,
    pub deaths: u32,
    pub flock_size: u32,
    pub age_weeks: f64,
}

/// Daily min/mean/max aggregates of the environment sensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvDay {
    pub date: NaiveDate,
    pub temp_avg: f64,
    pub temp_max: f64,
    pub temp_min: f64,
    pub hum_avg: f64,
    pub hum_max: f64,
    pub hum_min: f64,
}

/// Raw indicator values of one channel for one day, split by period.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PeriodValues {
    pub feeding: Vec<f64>,
    pub night: Vec<f64>,
    pub rest: Vec<f64>,
}

impl PeriodValues {
    /// The whole day is the union of the three periods.
    pub fn whole_day(&self) -> impl Iterator<Item = f64> + '_ {
        self.feeding.iter().chain(&self.night).chain(&self.rest).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IndicatorDay {
    pub date: NaiveDate,
    pub audio: PeriodValues,
    pub video: PeriodValues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureValue {
    Present(f64),
    Absent { reason: String },
}

impl FeatureValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            FeatureValue::Present(v) => Some(*v),
            FeatureValue::Absent { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub date: NaiveDate,
    /// `values[i]` is feature `f{i+1}`.
    pub values: Vec<FeatureValue>,
}

impl FeatureVector {
    /// Feature `fi` by its 1-based index.
    pub fn get(&self, index: usize) -> &FeatureValue {
        &self.values[index - 1]
    }

    /// Dense row over the masked features; absent features are an error.
    pub fn row(&self, mask: &[bool; FEATURE_COUNT]) -> Result<Vec<f64>, ProductionError> {
        let mut out = Vec::new();
        for (i, (v, &m)) in self.values.iter().zip(mask).enumerate() {
            if !m {
                continue;
            }
            match v {
                FeatureValue::Present(x) => out.push(*x),
                FeatureValue::Absent { reason } => {
                    return Err(ProductionError::MissingFeature {
                        index: i + 1,
                        reason: reason.clone(),
                    })
                }
            }
        }
        Ok(out)
    }
}

/// The 15-feature selection the final model uses (1-based indices).
pub const USED_FEATURES: [usize; 15] =
    [1, 4, 7, 8, 10, 14, 15, 17, 19, 20, 28, 30, 31, 32, 33];

pub fn used_mask() -> [bool; FEATURE_COUNT] {
    let mut mask = [false; FEATURE_COUNT];
    for i in USED_FEATURES {
        mask[i - 1] = true;
    }
    mask
}

/// Which data sources feed the model; mirrors the evaluation ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    ProductionOnly,
    ProductionEnv,
    Full,
}

impl FeatureSet {
    pub fn mask(&self) -> [bool; FEATURE_COUNT] {
        let mut mask = [false; FEATURE_COUNT];
        let production = [7, 14, 15, 17];
        let env = [1, 4];
        match self {
            FeatureSet::ProductionOnly => {
                for i in production {
                    mask[i - 1] = true;
                }
            }
            FeatureSet::ProductionEnv => {
                for i in production.into_iter().chain(env) {
                    mask[i - 1] = true;
                }
            }
            FeatureSet::Full => return used_mask(),
        }
        mask
    }
}

pub fn feature_name(index: usize) -> &'static str {
    const NAMES: [&str; FEATURE_COUNT] = [
        "mean temperature, previous day",
        "max temperature, previous day",
        "min temperature, previous day",
        "mean humidity, previous day",
        "max humidity, previous day",
        "min humidity, previous day",
        "flock age in weeks",
        "mean audio activity, past 15 days",
        "mean video activity, past 15 days",
        "mean audio activity, past 7 days",
        "mean video activity, past 7 days",
        "mean audio activity, past 3 days",
        "mean video activity, past 3 days",
        "mean egg production, past 7 days",
        "mean egg production, past 3 days",
        "mean deaths, past 7 days",
        "mean deaths, past 3 days",
        "audio during feeding, past 7 days",
        "video during feeding, past 7 days",
        "audio during feeding, past 3 days",
        "video during feeding, past 3 days",
        "audio at night, past 7 days",
        "video at night, past 7 days",
        "audio at night, past 3 days",
        "video at night, past 3 days",
        "audio at rest, past 7 days",
        "video at rest, past 7 days",
        "audio at rest, past 3 days",
        "video at rest, past 3 days",
        "top-5 audio during feeding, past 3 days",
        "top-5 video during feeding, past 3 days",
        "low-5 audio during feeding, past 3 days",
        "low-5 video during feeding, past 3 days",
        "top-5 audio at night, past 3 days",
        "top-5 video at night, past 3 days",
        "top-5 audio at rest, past 3 days",
        "top-5 video at rest, past 3 days",
        "low-5 audio at rest, past 3 days",
        "low-5 video at rest, past 3 days",
        "flock size",
    ];
    NAMES[index - 1]
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Mean of the 5 largest (`top = true`) or smallest pooled values; if fewer
/// than 5 exist, all of them are used.
fn extreme5(mut values: Vec<f64>, top: bool) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if top {
        values.reverse();
    }
    values.truncate(5);
    mean(values.into_iter())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Period {
    Feeding,
    Night,
    Rest,
    WholeDay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ChannelKind {
    Audio,
    Video,
}

/// Builds the daily feature vector for `as_of`. Trailing windows end the day
/// before: "past N days" covers `as_of - N .. as_of - 1`. Features whose
/// source data is missing are recorded as absent with a reason, except the
/// farm-record features, which are mandatory.
pub fn build_features(
    records: &[DailyRecord],
    env: &[EnvDay],
    indicators: &[IndicatorDay],
    as_of: NaiveDate,
) -> Result<FeatureVector, ProductionError> {
    let by_date: BTreeMap<NaiveDate, &DailyRecord> =
        records.iter().map(|r| (r.date, r)).collect();
    let env_by_date: BTreeMap<NaiveDate, &EnvDay> = env.iter().map(|e| (e.date, e)).collect();
    let ind_by_date: BTreeMap<NaiveDate, &IndicatorDay> =
        indicators.iter().map(|i| (i.date, i)).collect();

    let window = |days: i64| -> Vec<NaiveDate> {
        (1..=days).rev().map(|d| as_of - chrono::Duration::days(d)).collect()
    };

    let record_window = |days: i64| -> Option<Vec<&DailyRecord>> {
        window(days).iter().map(|d| by_date.get(d).copied()).collect()
    };

    // The farm-record features are the backbone of the model; a gap in the
    // 15-day history is an error naming what could not be computed.
    let mut missing = Vec::new();
    let prev = by_date.get(&(as_of - chrono::Duration::days(1))).copied();
    if prev.is_none() {
        missing.push("f7 (flock age)".to_string());
        missing.push("f40 (flock size)".to_string());
    }
    let eggs7 = record_window(7);
    let eggs3 = record_window(3);
    if eggs7.is_none() {
        missing.push("f14 (mean egg production, past 7 days)".to_string());
        missing.push("f16 (mean deaths, past 7 days)".to_string());
    }
    if eggs3.is_none() {
        missing.push("f15 (mean egg production, past 3 days)".to_string());
        missing.push("f17 (mean deaths, past 3 days)".to_string());
    }
    if record_window(15).is_none() {
        missing.push("15-day production history".to_string());
    }
    if !missing.is_empty() {
        return Err(ProductionError::InsufficientHistory { date: as_of, missing });
    }
    let prev = prev.unwrap();
    let eggs7 = eggs7.unwrap();
    let eggs3 = eggs3.unwrap();

    let pooled = |days: i64, channel: ChannelKind, period: Period| -> Option<Vec<f64>> {
        let mut out = Vec::new();
        for d in window(days) {
            let day = ind_by_date.get(&d)?;
            let values = match channel {
                ChannelKind::Audio => &day.audio,
                ChannelKind::Video => &day.video,
            };
            match period {
                Period::Feeding => out.extend(&values.feeding),
                Period::Night => out.extend(&values.night),
                Period::Rest => out.extend(&values.rest),
                Period::WholeDay => out.extend(values.whole_day()),
            }
        }
        Some(out)
    };

    let indicator_mean = |days: i64, c: ChannelKind, p: Period| -> FeatureValue {
        match pooled(days, c, p).and_then(|v| mean(v.into_iter())) {
            Some(v) => FeatureValue::Present(v),
            None => FeatureValue::Absent {
                reason: format!("indicator data incomplete over the {days} days before {as_of}"),
            },
        }
    };
    let indicator_extreme = |days: i64, c: ChannelKind, p: Period, top: bool| -> FeatureValue {
        match pooled(days, c, p).and_then(|v| extreme5(v, top)) {
            Some(v) => FeatureValue::Present(v),
            None => FeatureValue::Absent {
                reason: format!("indicator data incomplete over the {days} days before {as_of}"),
            },
        }
    };
    let env_feature = |pick: fn(&EnvDay) -> f64| -> FeatureValue {
        match env_by_date.get(&(as_of - chrono::Duration::days(1))) {
            Some(e) => FeatureValue::Present(pick(e)),
            None => FeatureValue::Absent {
                reason: format!("no environment aggregates for the day before {as_of}"),
            },
        }
    };

    use ChannelKind::{Audio, Video};
    use Period::{Feeding, Night, Rest, WholeDay};
    let values = vec![
        env_feature(|e| e.temp_avg),                         // f1
        env_feature(|e| e.temp_max),                         // f2
        env_feature(|e| e.temp_min),                         // f3
        env_feature(|e| e.hum_avg),                          // f4
        env_feature(|e| e.hum_max),                          // f5
        env_feature(|e| e.hum_min),                          // f6
        FeatureValue::Present(prev.age_weeks),               // f7
        indicator_mean(15, Audio, WholeDay),                 // f8
        indicator_mean(15, Video, WholeDay),                 // f9
        indicator_mean(7, Audio, WholeDay),                  // f10
        indicator_mean(7, Video, WholeDay),                  // f11
        indicator_mean(3, Audio, WholeDay),                  // f12
        indicator_mean(3, Video, WholeDay),                  // f13
        FeatureValue::Present(
            mean(eggs7.iter().map(|r| r.eggs as f64)).unwrap(),
        ),                                                   // f14
        FeatureValue::Present(
            mean(eggs3.iter().map(|r| r.eggs as f64)).unwrap(),
        ),                                                   // f15
        FeatureValue::Present(
            mean(eggs7.iter().map(|r| r.deaths as f64)).unwrap(),
        ),                                                   // f16
        FeatureValue::Present(
            mean(eggs3.iter().map(|r| r.deaths as f64)).unwrap(),
        ),                                                   // f17
        indicator_mean(7, Audio, Feeding),                   // f18
        indicator_mean(7, Video, Feeding),                   // f19
        indicator_mean(3, Audio, Feeding),                   // f20
        indicator_mean(3, Video, Feeding),                   // f21
        indicator_mean(7, Audio, Night),                     // f22
        indicator_mean(7, Video, Night),                     // f23
        indicator_mean(3, Audio, Night),                     // f24
        indicator_mean(3, Video, Night),                     // f25
        indicator_mean(7, Audio, Rest),                      // f26
        indicator_mean(7, Video, Rest),                      // f27
        indicator_mean(3, Audio, Rest),                      // f28
        indicator_mean(3, Video, Rest),                      // f29
        indicator_extreme(3, Audio, Feeding, true),          // f30
        indicator_extreme(3, Video, Feeding, true),          // f31
        indicator_extreme(3, Audio, Feeding, false),         // f32
        indicator_extreme(3, Video, Feeding, false),         // f33
        indicator_extreme(3, Audio, Night, true),            // f34
        indicator_extreme(3, Video, Night, true),            // f35
        indicator_extreme(3, Audio, Rest, true),             // f36
        indicator_extreme(3, Video, Rest, true),             // f37
        indicator_extreme(3, Audio, Rest, false),            // f38
        indicator_extreme(3, Video, Rest, false),            // f39
        FeatureValue::Present(prev.flock_size as f64),       // f40
    ];
    debug_assert_eq!(values.len(), FEATURE_COUNT);
    Ok(FeatureVector { date: as_of, values })
}

/// Per-bird productivity averaged over the 10 days after `as_of`. Days with
/// no record shrink the mean's support; the count of days used is returned.
pub fn target_10day(
    records: &[DailyRecord],
    as_of: NaiveDate,
) -> Option<(f64, usize)> {
    let by_date: BTreeMap<NaiveDate, &DailyRecord> =
        records.iter().map(|r| (r.date, r)).collect();
    let mut values = Vec::new();
    for d in 1..=TARGET_HORIZON_DAYS {
        if let Some(r) = by_date.get(&(as_of + chrono::Duration::days(d))) {
            if r.flock_size > 0 {
                values.push(r.eggs as f64 / r.flock_size as f64);
            }
        }
    }
    let n = values.len();
    mean(values.into_iter()).map(|m| (m, n))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProductionModel {
    pub mask: Vec<bool>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub rank_deficient: bool,
}

/// Fits per-bird productivity on the masked features by least squares.
pub fn fit_production_model(
    samples: &[(FeatureVector, f64)],
    mask: &[bool; FEATURE_COUNT],
) -> Result<ProductionModel, ProductionError> {
    if samples.is_empty() {
        return Err(ProductionError::EmptyDataset);
    }
    let mut rows = Vec::with_capacity(samples.len());
    let mut targets = Vec::with_capacity(samples.len());
    for (fv, y) in samples {
        rows.push(fv.row(mask)?);
        targets.push(*y);
    }
    let (weights, intercept, rank_deficient) = fit_ols(&rows, &targets)?;
    Ok(ProductionModel { mask: mask.to_vec(), weights, intercept, rank_deficient })
}

impl ProductionModel {
    pub fn predict_per_bird(&self, features: &FeatureVector) -> Result<f64, ProductionError> {
        let mask: [bool; FEATURE_COUNT] = self.mask.clone().try_into().unwrap();
        let row = features.row(&mask)?;
        Ok(self.intercept + row.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Productivity {
    /// Predicted average daily egg count over the next 10 days.
    pub eggs_10day_avg: f64,
    /// Predicted eggs per bird per day.
    pub per_bird: f64,
    /// Set when per_bird leaves [0, 1]; the value is reported unclamped.
    pub anomalous: bool,
}

pub fn predict_productivity(
    model: &ProductionModel,
    features: &FeatureVector,
    flock_size: u32,
) -> Result<Productivity, ProductionError> {
    if flock_size == 0 {
        return Err(ProductionError::NonPositiveFlockSize);
    }
    let per_bird = model.predict_per_bird(features)?;
    Ok(Productivity {
        eggs_10day_avg: per_bird * flock_size as f64,
        per_bird,
        anomalous: !(0.0..=1.0).contains(&per_bird),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedPurchase {
    pub month: String,
    pub kilograms: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedLedger {
    pub purchases: Vec<FeedPurchase>,
    pub cycle_start: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedCost {
    pub daily_feed_kg: f64,
    pub daily_feed_cost: f64,
    pub cost_per_egg: f64,
    /// Set when the ledger is empty and all figures degenerate to zero.
    pub no_data: bool,
}

/// Daily feed figures: total cycle feed spread uniformly over the days
/// elapsed since the cycle started (the start day counts as day 1).
pub fn cost_per_egg(
    ledger: &FeedLedger,
    today: NaiveDate,
    predicted_daily_eggs: f64,
) -> Result<FeedCost, ProductionError> {
    let days = (today - ledger.cycle_start).num_days() + 1;
    if days < 1 {
        return Err(ProductionError::InsufficientHistory {
            date: today,
            missing: vec!["production cycle has not started".to_string()],
        });
    }
    if ledger.purchases.is_empty() {
        return Ok(FeedCost { daily_feed_kg: 0.0, daily_feed_cost: 0.0, cost_per_egg: 0.0, no_data: true });
    }
    if predicted_daily_eggs <= 0.0 {
        return Err(ProductionError::ZeroPredictedEggs);
    }
    let total_kg: f64 = ledger.purchases.iter().map(|p| p.kilograms).sum();
    let total_cost: f64 = ledger.purchases.iter().map(|p| p.cost).sum();
    let daily_feed_kg = total_kg / days as f64;
    let daily_feed_cost = total_cost / days as f64;
    Ok(FeedCost {
        daily_feed_kg,
        daily_feed_cost,
        cost_per_egg: daily_feed_cost / predicted_daily_eggs,
        no_data: false,
    })
}

pub fn evaluate_mae(predicted: &[f64], actual: &[f64]) -> Result<f64, ProductionError> {
    if predicted.len() != actual.len() || predicted.is_empty() {
        return Err(ProductionError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    Ok(predicted.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum::<f64>()
        / predicted.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub feature_set: FeatureSet,
    pub mae: f64,
    pub train_samples: usize,
    pub test_samples: usize,
}

/// Builds every (features, target) sample the data supports, in date order.
pub fn build_dataset(
    records: &[DailyRecord],
    env: &[EnvDay],
    indicators: &[IndicatorDay],
) -> Vec<(FeatureVector, f64)> {
    let mut samples = Vec::new();
    let mut dates: Vec<NaiveDate> = records.iter().map(|r| r.date).collect();
    dates.sort();
    for &d in &dates {
        let Ok(fv) = build_features(records, env, indicators, d) else { continue };
        let Some((target, days)) = target_10day(records, d) else { continue };
        if days < TARGET_HORIZON_DAYS as usize {
            continue;
        }
        samples.push((fv, target));
    }
    samples
}

/// Chronological 80/20 evaluation of each data-source configuration.
pub fn ablation(
    samples: &[(FeatureVector, f64)],
    feature_sets: &[FeatureSet],
) -> Result<Vec<AblationRow>, ProductionError> {
    let split = samples.len() * 4 / 5;
    if split == 0 || split == samples.len() {
        return Err(ProductionError::EmptyDataset);
    }
    let (train, test) = samples.split_at(split);
    let mut rows = Vec::new();
    for &fs in feature_sets {
        let mask = fs.mask();
        let model = fit_production_model(train, &mask)?;
        let mut predicted = Vec::new();
        let mut actual = Vec::new();
        for (fv, y) in test {
            predicted.push(model.predict_per_bird(fv)?);
            actual.push(*y);
        }
        rows.push(AblationRow {
            feature_set: fs,
            mae: evaluate_mae(&predicted, &actual)?,
            train_samples: train.len(),
            test_samples: test.len(),
        });
    }
    Ok(rows)
}
