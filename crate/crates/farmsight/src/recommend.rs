//! Rule-based recommendations: fuses 3-day weather outlooks, farm
//! environment forecasts, activity indicators, and the productivity forecast
//! into an ordered list of actionable messages. Evaluation is pure; the only
//! I/O is the optional weather fetch.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alerting::ThresholdConfig;

pub const STALE_AFTER_SECS: i64 = 24 * 3600;

#[derive(Debug, Error)]
pub enum RecommendError {
    #[error("weather payload malformed: {0}")]
    MalformedWeather(String),
    #[error("weather fetch failed for {url}: {reason}")]
    WeatherUnavailable { url: String, reason: String },
    #[error("weather forecast invalid: {0}")]
    InvalidWeather(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherDay {
    pub temp_min: f64,
    pub temp_max: f64,
    pub wind_max_kmh: f64,
    pub cloud_max_pct: f64,
    pub rain_max_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherForecast {
    pub days: Vec<WeatherDay>,
}

impl WeatherForecast {
    pub fn validate(&self) -> Result<(), RecommendError> {
        for (i, d) in self.days.iter().enumerate() {
            if d.temp_min > d.temp_max {
                return Err(RecommendError::InvalidWeather(format!(
                    "day {}: temp_min {} exceeds temp_max {}",
                    i + 1,
                    d.temp_min,
                    d.temp_max
                )));
            }
            for (name, v) in [("cloud_max_pct", d.cloud_max_pct), ("rain_max_pct", d.rain_max_pct)]
            {
                if !(0.0..=100.0).contains(&v) {
                    return Err(RecommendError::InvalidWeather(format!(
                        "day {}: {name} {v} outside [0, 100]",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Forecasted in-house conditions for the next hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvOutlook {
    pub temperature: f64,
    pub humidity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndicatorLevel {
    Low,
    Normal,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorStatus {
    pub audio: Option<IndicatorLevel>,
    pub video: Option<IndicatorLevel>,
}

/// A context section together with when its data was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sourced<T> {
    /// UTC seconds.
    pub timestamp: i64,
    pub value: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationContext {
    /// UTC seconds; staleness is judged against this.
    pub as_of: i64,
    #[serde(default)]
    pub weather: Option<Sourced<WeatherForecast>>,
    #[serde(default)]
    pub env_outlook: Option<Sourced<EnvOutlook>>,
    /// Predicted per-bird productivity in [0, 1].
    #[serde(default)]
    pub productivity: Option<Sourced<f64>>,
    #[serde(default)]
    pub indicators: Option<Sourced<IndicatorStatus>>,
    #[serde(default)]
    pub thresholds: Option<ThresholdConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Severity {
    High,
    Medium,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleCode {
    ProductivityWarning,
    FarmTempHigh,
    FarmTempLow,
    FarmHumidityHigh,
    FarmHumidityLow,
    IndicatorHigh,
    IndicatorLow,
    WeatherHeat,
    WeatherCold,
    WeatherWind,
    WeatherCloud,
    WeatherRain,
}

impl RuleCode {
    pub fn severity(&self) -> Severity {
        use RuleCode::*;
        match self {
            ProductivityWarning | FarmTempHigh | FarmTempLow | FarmHumidityHigh
            | FarmHumidityLow => Severity::High,
            IndicatorHigh | IndicatorLow => Severity::Medium,
            WeatherHeat | WeatherCold | WeatherWind | WeatherCloud | WeatherRain => Severity::Low,
        }
    }

    /// The operator-facing message template for this rule.
    pub fn message(&self) -> &'static str {
        use RuleCode::*;
        match self {
            ProductivityWarning => {
                "Warning! The egg productivity is predicted to fall under 70% in the next few days."
            }
            FarmTempHigh => {
                "The temperature in the farm is expected to be very high in the next hour. Turn on the fans."
            }
            FarmTempLow => {
                "The temperature in the farm is expected to be very low in the next hour. Turn on the heaters."
            }
            FarmHumidityHigh => {
                "The humidity in the farm is expected to be very high in the next hour. You need to add bedding in the poultry house."
            }
            FarmHumidityLow => "Humidity is expected to be very low. Turn on the water sprayers.",
            IndicatorHigh => {
                "There is too much noise or movement in the barn. This could affect the egg production."
            }
            IndicatorLow => "The flock is less active than expected. Check food and water intake.",
            WeatherHeat => {
                "Extreme heat is expected in the next few days. You may want to check your fans and water sprayers."
            }
            WeatherCold => {
                "Extreme cold is expected in the next few days. You may want to check your heaters."
            }
            WeatherWind => {
                "Wind is expected in the next few days. You may want to close the barn's windows."
            }
            WeatherCloud => {
                "Cloudy weather is expected in the next few days. You may want to open the poultry house's lights."
            }
            WeatherRain => {
                "Rain is expected in the next few days. You may want to secure outdoor equipment and check the roof."
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub code: RuleCode,
    pub severity: Severity,
    pub message: String,
    /// Human-readable statements of the facts that triggered the rule.
    pub facts: Vec<String>,
    /// Set when the triggering data is older than 24 hours.
    pub stale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationReport {
    pub recommendations: Vec<Recommendation>,
    /// Context sections that were absent; their rules were skipped.
    pub skipped_sources: Vec<String>,
}

/// Weather thresholds: heat > 35 C, cold < 10 C, wind > 29 km/h,
/// cloud > 70 %, rain > 50 %. All comparisons are strict.
pub fn weather_rules(w: &WeatherForecast) -> Vec<(RuleCode, Vec<String>)> {
    let mut heat = Vec::new();
    let mut cold = Vec::new();
    let mut wind = Vec::new();
    let mut cloud = Vec::new();
    let mut rain = Vec::new();
    for (i, d) in w.days.iter().enumerate() {
        let day = i + 1;
        if d.temp_max > 35.0 {
            heat.push(format!("day {day}: max temperature {} C above 35 C", d.temp_max));
        }
        if d.temp_min < 10.0 {
            cold.push(format!("day {day}: min temperature {} C below 10 C", d.temp_min));
        }
        if d.wind_max_kmh > 29.0 {
            wind.push(format!("day {day}: wind {} km/h above 29 km/h", d.wind_max_kmh));
        }
        if d.cloud_max_pct > 70.0 {
            cloud.push(format!("day {day}: cloud cover {}% above 70%", d.cloud_max_pct));
        }
        if d.rain_max_pct > 50.0 {
            rain.push(format!("day {day}: rain chance {}% above 50%", d.rain_max_pct));
        }
    }
    let mut out = Vec::new();
    for (code, facts) in [
        (RuleCode::WeatherHeat, heat),
        (RuleCode::WeatherCold, cold),
        (RuleCode::WeatherWind, wind),
        (RuleCode::WeatherCloud, cloud),
        (RuleCode::WeatherRain, rain),
    ] {
        if !facts.is_empty() {
            out.push((code, facts));
        }
    }
    out
}

/// Warns when predicted per-bird productivity drops strictly under 70%.
pub fn productivity_rule(per_bird: f64) -> Option<(RuleCode, Vec<String>)> {
    (per_bird < 0.70).then(|| {
        (
            RuleCode::ProductivityWarning,
            vec![format!("predicted productivity {:.0}% under 70%", per_bird * 100.0)],
        )
    })
}

fn env_rules(outlook: &EnvOutlook, t: &ThresholdConfig) -> Vec<(RuleCode, Vec<String>)> {
    let mut out = Vec::new();
    if outlook.temperature > t.temp_high {
        out.push((
            RuleCode::FarmTempHigh,
            vec![format!("forecast farm temperature {} C above {} C", outlook.temperature, t.temp_high)],
        ));
    }
    if outlook.temperature < t.temp_low {
        out.push((
            RuleCode::FarmTempLow,
            vec![format!("forecast farm temperature {} C below {} C", outlook.temperature, t.temp_low)],
        ));
    }
    if outlook.humidity > t.humidity_high {
        out.push((
            RuleCode::FarmHumidityHigh,
            vec![format!("forecast farm humidity {}% above {}%", outlook.humidity, t.humidity_high)],
        ));
    }
    if outlook.humidity < t.humidity_low {
        out.push((
            RuleCode::FarmHumidityLow,
            vec![format!("forecast farm humidity {}% below {}%", outlook.humidity, t.humidity_low)],
        ));
    }
    out
}

fn indicator_rules(status: &IndicatorStatus) -> Vec<(RuleCode, Vec<String>)> {
    let mut high = Vec::new();
    let mut low = Vec::new();
    for (name, level) in [("audio", status.audio), ("video", status.video)] {
        match level {
            Some(IndicatorLevel::High) => high.push(format!("{name} indicator above its band")),
            Some(IndicatorLevel::Low) => low.push(format!("{name} indicator below its band")),
            _ => {}
        }
    }
    let mut out = Vec::new();
    if !high.is_empty() {
        out.push((RuleCode::IndicatorHigh, high));
    }
    if !low.is_empty() {
        out.push((RuleCode::IndicatorLow, low));
    }
    out
}

/// Evaluates every rule over the context. Missing sections are skipped and
/// named in the report; output order is (severity, rule code), so identical
/// contexts always serialize identically.
pub fn recommend(ctx: &RecommendationContext) -> RecommendationReport {
    let thresholds = ctx.thresholds.unwrap_or_default();
    let stale = |ts: i64| ctx.as_of - ts > STALE_AFTER_SECS;
    let mut recs: Vec<Recommendation> = Vec::new();
    let mut skipped = Vec::new();

    let mut push = |items: Vec<(RuleCode, Vec<String>)>, is_stale: bool| {
        for (code, facts) in items {
            recs.push(Recommendation {
                code,
                severity: code.severity(),
                message: code.message().to_string(),
                facts,
                stale: is_stale,
            });
        }
    };

    match &ctx.weather {
        Some(s) => push(weather_rules(&s.value), stale(s.timestamp)),
        None => skipped.push("weather".to_string()),
    }
    match &ctx.productivity {
        Some(s) => push(productivity_rule(s.value).into_iter().collect(), stale(s.timestamp)),
        None => skipped.push("productivity".to_string()),
    }
    match &ctx.env_outlook {
        Some(s) => push(env_rules(&s.value, &thresholds), stale(s.timestamp)),
        None => skipped.push("env_outlook".to_string()),
    }
    match &ctx.indicators {
        Some(s) => push(indicator_rules(&s.value), stale(s.timestamp)),
        None => skipped.push("indicators".to_string()),
    }

    recs.sort_by_key(|r| (r.severity, r.code));
    RecommendationReport { recommendations: recs, skipped_sources: skipped }
}

/// Where a weather forecast comes from.
pub enum WeatherProvider {
    /// A JSON file containing a `WeatherForecast`.
    Fixture(std::path::PathBuf),
    /// An HTTP endpoint returning `{"daily": [{"temp_min": .., "temp_max": ..,
    /// "wind_max_kmh": .., "cloud_max_pct": .., "rain_max_pct": ..}, ..]}`.
    Url(String),
}

#[derive(Debug, Deserialize)]
struct DailyPayload {
    daily: Vec<WeatherDay>,
}

fn normalize(mut days: Vec<WeatherDay>) -> Result<WeatherForecast, RecommendError> {
    days.truncate(3);
    let forecast = WeatherForecast { days };
    forecast.validate()?;
    Ok(forecast)
}

pub fn fetch_weather(provider: &WeatherProvider) -> Result<WeatherForecast, RecommendError> {
    match provider {
        WeatherProvider::Fixture(path) => {
            let text = std::fs::read_to_string(path)?;
            let parsed: WeatherForecast = serde_json::from_str(&text)
                .map_err(|e| RecommendError::MalformedWeather(e.to_string()))?;
            normalize(parsed.days)
        }
        WeatherProvider::Url(url) => {
            let resp = ureq::get(url)
                .timeout(std::time::Duration::from_secs(10))
                .call()
                .map_err(|e| RecommendError::WeatherUnavailable {
                    url: url.clone(),
                    reason: e.to_string(),
                })?;
            let text = resp.into_string()?;
            let parsed: DailyPayload = serde_json::from_str(&text)
                .map_err(|e| RecommendError::MalformedWeather(e.to_string()))?;
            normalize(parsed.daily)
        }
    }
}
