//! Alerting: static environmental thresholds, dynamic per-minute indicator
//! bands, feeder-event smoothing, and alert delivery.
//!
//! Dynamic bands give each minute of the day a weighted center and a
//! 25th/95th weighted-percentile envelope built from all samples within a
//! circular +/-60 minute window, weighted by `1 - |dt|/60`.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MINUTES_PER_DAY: usize = 1440;
const BAND_WINDOW_MIN: i64 = 60;

#[derive(Debug, Error)]
pub enum AlertError {
    #[error("no indicator history for channel {0:?}")]
    EmptyHistory(Channel),
    #[error("threshold config invalid: {0}")]
    InvalidThresholds(String),
    #[error("alert sink io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub temp_high: f64,
    pub temp_low: f64,
    pub humidity_low: f64,
    pub humidity_high: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self { temp_high: 35.0, temp_low: 18.0, humidity_low: 40.0, humidity_high: 60.0 }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<(), AlertError> {
        if self.temp_low >= self.temp_high {
            return Err(AlertError::InvalidThresholds(format!(
                "temp_low {} must be below temp_high {}",
                self.temp_low, self.temp_high
            )));
        }
        if self.humidity_low >= self.humidity_high {
            return Err(AlertError::InvalidThresholds(format!(
                "humidity_low {} must be below humidity_high {}",
                self.humidity_low, self.humidity_high
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Audio,
    Video,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSample {
    /// UTC seconds.
    pub timestamp: i64,
    pub channel: Channel,
    pub value: f64,
}

impl IndicatorSample {
    pub fn minute_of_day(&self) -> usize {
        (self.timestamp.div_euclid(60).rem_euclid(MINUTES_PER_DAY as i64)) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandEntry {
    pub lower: f64,
    pub center: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicBand {
    pub channel: Channel,
    pub minutes: Vec<BandEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlertKind {
    Heat,
    Cold,
    HumidityLow,
    HumidityHigh,
    IndicatorHigh,
    IndicatorLow,
    FeederAnomaly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlertSource {
    Observed,
    Forecast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub ts: String,
    pub kind: AlertKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channel: Option<Channel>,
    pub value: f64,
    pub threshold: f64,
    pub source: AlertSource,
}

pub fn iso_ts(epoch_secs: i64) -> String {
    chrono::DateTime::from_timestamp(epoch_secs, 0)
        .map(|dt| dt.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
        .unwrap_or_else(|| epoch_secs.to_string())
}

#[derive(Debug, Clone, Copy)]
pub struct EnvReading {
    pub timestamp: i64,
    pub temperature: Option<f64>,
    pub humidity: Option<f64>,
}

/// One alert per violated static bound. Values inside `[low, high]`
/// (boundaries included) are fine.
pub fn check_static(reading: &EnvReading, cfg: &ThresholdConfig, source: AlertSource) -> Vec<Alert> {
    let ts = iso_ts(reading.timestamp);
    let mut alerts = Vec::new();
    if let Some(t) = reading.temperature {
        if t > cfg.temp_high {
            alerts.push(Alert {
                ts: ts.clone(),
                kind: AlertKind::Heat,
                channel: None,
                value: t,
                threshold: cfg.temp_high,
                source,
            });
        }
        if t < cfg.temp_low {
            alerts.push(Alert {
                ts: ts.clone(),
                kind: AlertKind::Cold,
                channel: None,
                value: t,
                threshold: cfg.temp_low,
                source,
            });
        }
    }
    if let Some(h) = reading.humidity {
        if h > cfg.humidity_high {
            alerts.push(Alert {
                ts: ts.clone(),
                kind: AlertKind::HumidityHigh,
                channel: None,
                value: h,
                threshold: cfg.humidity_high,
                source,
            });
        }
        if h < cfg.humidity_low {
            alerts.push(Alert {
                ts,
                kind: AlertKind::HumidityLow,
                channel: None,
                value: h,
                threshold: cfg.humidity_low,
                source,
            });
        }
    }
    alerts
}

/// Weighted percentile over `(value, weight)` pairs: sort by value, take the
/// first sample whose cumulative weight reaches `q` of the total.
fn weighted_percentile(samples: &mut [(f64, f64)], q: f64) -> f64 {
    samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let total: f64 = samples.iter().map(|s| s.1).sum();
    let cutoff = q * total;
    let mut cum = 0.0;
    for &(v, w) in samples.iter() {
        cum += w;
        if cum >= cutoff {
            return v;
        }
    }
    samples.last().map(|s| s.0).unwrap_or(0.0)
}

/// Builds the per-minute band for one channel from at least one day of
/// history. Windows wrap circularly across midnight.
pub fn build_dynamic_band(
    history: &[IndicatorSample],
    channel: Channel,
) -> Result<DynamicBand, AlertError> {
    let mut per_minute: Vec<Vec<f64>> = vec![Vec::new(); MINUTES_PER_DAY];
    for s in history.iter().filter(|s| s.channel == channel) {
        per_minute[s.minute_of_day()].push(s.value);
    }
    if per_minute.iter().all(|v| v.is_empty()) {
        return Err(AlertError::EmptyHistory(channel));
    }
    let mut minutes = Vec::with_capacity(MINUTES_PER_DAY);
    for m in 0..MINUTES_PER_DAY as i64 {
        let mut weighted: Vec<(f64, f64)> = Vec::new();
        for dm in -BAND_WINDOW_MIN..=BAND_WINDOW_MIN {
            let w = 1.0 - (dm.abs() as f64) / BAND_WINDOW_MIN as f64;
            if w <= 0.0 {
                continue;
            }
            let src = (m + dm).rem_euclid(MINUTES_PER_DAY as i64) as usize;
            for &v in &per_minute[src] {
                weighted.push((v, w));
            }
        }
        if weighted.is_empty() {
            // No data near this minute: carry the previous entry forward, or
            // fill once data appears (resolved by a second pass below).
            minutes.push(None);
            continue;
        }
        let total: f64 = weighted.iter().map(|s| s.1).sum();
        let center = weighted.iter().map(|(v, w)| v * w).sum::<f64>() / total;
        let upper = weighted_percentile(&mut weighted, 0.95).max(center);
        let lower = weighted_percentile(&mut weighted, 0.25).min(center);
        minutes.push(Some(BandEntry { lower, center, upper }));
    }
    // Fill empty minutes from the nearest populated neighbor (circular).
    let filled: Vec<BandEntry> = (0..MINUTES_PER_DAY)
        .map(|m| {
            if let Some(e) = minutes[m] {
                return e;
            }
            for d in 1..MINUTES_PER_DAY {
                for cand in [
                    (m + d) % MINUTES_PER_DAY,
                    (m + MINUTES_PER_DAY - d) % MINUTES_PER_DAY,
                ] {
                    if let Some(e) = minutes[cand] {
                        return e;
                    }
                }
            }
            unreachable!("at least one minute is populated");
        })
        .collect();
    Ok(DynamicBand { channel, minutes: filled })
}

/// Indicator alert when a sample leaves its minute's band.
pub fn check_dynamic(sample: &IndicatorSample, band: &DynamicBand) -> Option<Alert> {
    let entry = band.minutes[sample.minute_of_day()];
    let (kind, threshold) = if sample.value > entry.upper {
        (AlertKind::IndicatorHigh, entry.upper)
    } else if sample.value < entry.lower {
        (AlertKind::IndicatorLow, entry.lower)
    } else {
        return None;
    };
    Some(Alert {
        ts: iso_ts(sample.timestamp),
        kind,
        channel: Some(sample.channel),
        value: sample.value,
        threshold,
        source: AlertSource::Observed,
    })
}

pub const FEEDER_WINDOW: usize = 27;
pub const CLIP_SECS: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeederInterval {
    /// Seconds from stream start.
    pub open_start_s: u64,
    pub open_end_s: u64,
}

/// Majority-vote smoothing over tumbling windows of 27 two-second clip
/// labels; adjacent open windows merge. A short trailing window uses the
/// majority of its actual length.
pub fn smooth_feeder(clip_labels: &[bool]) -> Vec<FeederInterval> {
    let mut intervals: Vec<FeederInterval> = Vec::new();
    for (w, chunk) in clip_labels.chunks(FEEDER_WINDOW).enumerate() {
        let open_count = chunk.iter().filter(|&&b| b).count();
        let open = open_count * 2 > chunk.len();
        if !open {
            continue;
        }
        let start = (w * FEEDER_WINDOW) as u64 * CLIP_SECS;
        let end = start + chunk.len() as u64 * CLIP_SECS;
        match intervals.last_mut() {
            Some(last) if last.open_end_s == start => last.open_end_s = end,
            _ => intervals.push(FeederInterval { open_start_s: start, open_end_s: end }),
        }
    }
    intervals
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WebhookConfig {
    pub url: String,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_retries() -> u32 {
    3
}

fn default_backoff() -> u64 {
    200
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WebhookOutcome {
    NotConfigured,
    Delivered,
    DeadLettered,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub suppressed: bool,
    pub logged: bool,
    pub webhook: WebhookOutcome,
}

/// Single-writer alert sink: JSONL log always, optional webhook POST with
/// capped-backoff retries and a dead-letter file, plus per-(kind, channel)
/// duplicate suppression.
pub struct AlertSink {
    pub jsonl_path: PathBuf,
    pub dead_letter_path: PathBuf,
    pub webhook: Option<WebhookConfig>,
    /// Suppression window in minutes per (kind, channel); 0 disables.
    pub dedup_window_min: i64,
    last_emitted: HashMap<(AlertKind, Option<Channel>), i64>,
}

impl AlertSink {
    pub fn new(jsonl_path: PathBuf, webhook: Option<WebhookConfig>) -> Self {
        let dead_letter_path = jsonl_path.with_extension("deadletter.jsonl");
        Self {
            jsonl_path,
            dead_letter_path,
            webhook,
            dedup_window_min: 30,
            last_emitted: HashMap::new(),
        }
    }

    pub fn emit(&mut self, alert: &Alert, epoch_secs: i64) -> Result<DeliveryRecord, AlertError> {
        let key = (alert.kind, alert.channel);
        if self.dedup_window_min > 0 {
            if let Some(&last) = self.last_emitted.get(&key) {
                if epoch_secs - last < self.dedup_window_min * 60 {
                    return Ok(DeliveryRecord {
                        suppressed: true,
                        logged: false,
                        webhook: WebhookOutcome::NotConfigured,
                    });
                }
            }
        }
        self.last_emitted.insert(key, epoch_secs);

        let line = serde_json::to_string(alert).expect("alert serializes");
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.jsonl_path)?;
        writeln!(file, "{line}")?;

        let webhook = match &self.webhook {
            None => WebhookOutcome::NotConfigured,
            Some(cfg) => {
                if self.post_with_retries(cfg, &line) {
                    WebhookOutcome::Delivered
                } else {
                    let mut dead = std::fs::OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(&self.dead_letter_path)?;
                    writeln!(dead, "{line}")?;
                    WebhookOutcome::DeadLettered
                }
            }
        };
        Ok(DeliveryRecord { suppressed: false, logged: true, webhook })
    }

    fn post_with_retries(&self, cfg: &WebhookConfig, body: &str) -> bool {
        let mut backoff = cfg.backoff_ms;
        for attempt in 0..=cfg.max_retries {
            let result = ureq::post(&cfg.url)
                .timeout(std::time::Duration::from_secs(5))
                .set("Content-Type", "application/json")
                .send_string(body);
            match result {
                Ok(resp) if resp.status() < 300 => return true,
                _ => {}
            }
            if attempt < cfg.max_retries {
                std::thread::sleep(std::time::Duration::from_millis(backoff));
                backoff = (backoff * 2).min(5000);
            }
        }
        false
    }
}
