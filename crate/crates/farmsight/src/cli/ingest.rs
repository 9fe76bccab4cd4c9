//! File ingestion with validation. Every rejection cites the offending line
//! and column so a bad row can be found and fixed without guesswork.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;

use farmsight::alerting::{Channel, IndicatorSample};
use farmsight::eggcount::Detection;
use farmsight::envforecast::SensorReading;
use farmsight::production::{DailyRecord, EnvDay, FeedPurchase, IndicatorDay};

use super::CliError;

fn reject(path: &Path, line: u64, column: &str, reason: impl AsRef<str>) -> CliError {
    CliError::Validation(format!(
        "{}: line {line}: column {column}: {}",
        path.display(),
        reason.as_ref()
    ))
}

/// Header-indexed CSV row access with line-and-column rejections.
struct Row<'a> {
    path: &'a Path,
    headers: &'a [String],
    record: &'a csv::StringRecord,
    line: u64,
}

impl<'a> Row<'a> {
    fn raw(&self, column: &str) -> Result<&'a str, CliError> {
        let idx = self
            .headers
            .iter()
            .position(|h| h == column)
            .expect("header checked up front");
        self.record
            .get(idx)
            .ok_or_else(|| reject(self.path, self.line, column, "missing value"))
    }

    fn parse<T: std::str::FromStr>(&self, column: &str) -> Result<T, CliError> {
        let raw = self.raw(column)?;
        raw.trim()
            .parse()
            .map_err(|_| reject(self.path, self.line, column, format!("cannot parse {raw:?}")))
    }

    fn float_in(&self, column: &str, lo: f64, hi: f64) -> Result<f64, CliError> {
        let v: f64 = self.parse(column)?;
        if !v.is_finite() || v < lo || v > hi {
            return Err(reject(
                self.path,
                self.line,
                column,
                format!("{v} outside [{lo}, {hi}]"),
            ));
        }
        Ok(v)
    }

    fn finite(&self, column: &str) -> Result<f64, CliError> {
        let v: f64 = self.parse(column)?;
        if !v.is_finite() {
            return Err(reject(self.path, self.line, column, "not finite"));
        }
        Ok(v)
    }

    fn timestamp(&self, column: &str) -> Result<i64, CliError> {
        let raw = self.raw(column)?;
        chrono::DateTime::parse_from_rfc3339(raw.trim())
            .map(|dt| dt.timestamp())
            .map_err(|_| {
                reject(self.path, self.line, column, format!("{raw:?} is not an RFC 3339 timestamp"))
            })
    }

    fn date(&self, column: &str) -> Result<NaiveDate, CliError> {
        let raw = self.raw(column)?;
        NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d")
            .map_err(|_| reject(self.path, self.line, column, format!("{raw:?} is not YYYY-MM-DD")))
    }

    fn channel(&self, column: &str) -> Result<Channel, CliError> {
        match self.raw(column)?.trim() {
            "audio" => Ok(Channel::Audio),
            "video" => Ok(Channel::Video),
            other => Err(reject(
                self.path,
                self.line,
                column,
                format!("{other:?} is not one of audio, video"),
            )),
        }
    }
}

/// Reads a CSV with the given required columns, calling `row_fn` per record.
/// An empty file yields no rows and a warning.
fn read_csv<T>(
    path: &Path,
    text: &str,
    required: &[&str],
    mut row_fn: impl FnMut(&Row) -> Result<T, CliError>,
) -> Result<Vec<T>, CliError> {
    if text.trim().is_empty() {
        super::warn(format!("{}: empty file", path.display()));
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.to_string())
        .collect();
    for col in required {
        if !headers.iter().any(|h| h == col) {
            return Err(CliError::Validation(format!(
                "{}: line 1: column {col}: required column missing",
                path.display()
            )));
        }
    }
    let mut out = Vec::new();
    for result in reader.records() {
        let record = result
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = Row { path, headers: &headers, record: &record, line };
        out.push(row_fn(&row)?);
    }
    if out.is_empty() {
        super::warn(format!("{}: no data rows", path.display()));
    }
    Ok(out)
}

/// Sensor CSV: `timestamp,sensor_id,temp_c,humidity_pct`. Sensor ids map to
/// slots by sorted order of the distinct ids seen.
pub fn sensors(path: &Path, text: &str) -> Result<Vec<SensorReading>, CliError> {
    let rows = read_csv(
        path,
        text,
        &["timestamp", "sensor_id", "temp_c", "humidity_pct"],
        |row| {
            let timestamp = row.timestamp("timestamp")?;
            let id = row.raw("sensor_id")?.trim().to_string();
            let temperature = row.finite("temp_c")?;
            let humidity = row.float_in("humidity_pct", 0.0, 100.0)?;
            Ok((timestamp, id, temperature, humidity))
        },
    )?;
    let mut ids: Vec<&String> = rows.iter().map(|(_, id, _, _)| id).collect();
    ids.sort();
    ids.dedup();
    Ok(rows
        .iter()
        .map(|(timestamp, id, temperature, humidity)| SensorReading {
            timestamp: *timestamp,
            sensor_slot: ids.binary_search(&id).unwrap(),
            temperature: *temperature,
            humidity: *humidity,
        })
        .collect())
}

/// Indicator CSV: `timestamp,channel,value`.
pub fn indicators(path: &Path, text: &str) -> Result<Vec<IndicatorSample>, CliError> {
    read_csv(path, text, &["timestamp", "channel", "value"], |row| {
        Ok(IndicatorSample {
            timestamp: row.timestamp("timestamp")?,
            channel: row.channel("channel")?,
            value: row.finite("value")?,
        })
    })
}

/// Production CSV: `date,eggs,deaths,flock_size,age_weeks`, sorted by date.
pub fn production(path: &Path, text: &str) -> Result<Vec<DailyRecord>, CliError> {
    let mut records = read_csv(
        path,
        text,
        &["date", "eggs", "deaths", "flock_size", "age_weeks"],
        |row| {
            let flock_size: u32 = row.parse("flock_size")?;
            if flock_size == 0 {
                return Err(reject(path, row.line, "flock_size", "must be positive"));
            }
            Ok(DailyRecord {
                date: row.date("date")?,
                eggs: row.parse("eggs")?,
                deaths: row.parse("deaths")?,
                flock_size,
                age_weeks: row.float_in("age_weeks", 0.0, 500.0)?,
            })
        },
    )?;
    records.sort_by_key(|r| r.date);
    Ok(records)
}

/// Feed CSV: `month,kg,cost`.
pub fn feed(path: &Path, text: &str) -> Result<Vec<FeedPurchase>, CliError> {
    read_csv(path, text, &["month", "kg", "cost"], |row| {
        Ok(FeedPurchase {
            month: row.raw("month")?.trim().to_string(),
            kilograms: row.float_in("kg", 0.0, f64::INFINITY)?,
            cost: row.float_in("cost", 0.0, f64::INFINITY)?,
        })
    })
}

/// Daily environment CSV:
/// `date,temp_avg,temp_max,temp_min,hum_avg,hum_max,hum_min`.
pub fn env_days(path: &Path, text: &str) -> Result<Vec<EnvDay>, CliError> {
    let mut days = read_csv(
        path,
        text,
        &["date", "temp_avg", "temp_max", "temp_min", "hum_avg", "hum_max", "hum_min"],
        |row| {
            Ok(EnvDay {
                date: row.date("date")?,
                temp_avg: row.finite("temp_avg")?,
                temp_max: row.finite("temp_max")?,
                temp_min: row.finite("temp_min")?,
                hum_avg: row.float_in("hum_avg", 0.0, 100.0)?,
                hum_max: row.float_in("hum_max", 0.0, 100.0)?,
                hum_min: row.float_in("hum_min", 0.0, 100.0)?,
            })
        },
    )?;
    days.sort_by_key(|d| d.date);
    Ok(days)
}

/// Per-period indicator CSV: `date,channel,period,value`, folded into one
/// entry per day.
pub fn indicator_days(path: &Path, text: &str) -> Result<Vec<IndicatorDay>, CliError> {
    let rows = read_csv(path, text, &["date", "channel", "period", "value"], |row| {
        let period = match row.raw("period")?.trim() {
            p @ ("feeding" | "night" | "rest") => p.to_string(),
            other => {
                return Err(reject(
                    path,
                    row.line,
                    "period",
                    format!("{other:?} is not one of feeding, night, rest"),
                ))
            }
        };
        Ok((row.date("date")?, row.channel("channel")?, period, row.finite("value")?))
    })?;
    let mut by_date: BTreeMap<NaiveDate, IndicatorDay> = BTreeMap::new();
    for (date, channel, period, value) in rows {
        let day = by_date
            .entry(date)
            .or_insert_with(|| IndicatorDay { date, ..IndicatorDay::default() });
        let values = match channel {
            Channel::Audio => &mut day.audio,
            Channel::Video => &mut day.video,
        };
        match period.as_str() {
            "feeding" => values.feeding.push(value),
            "night" => values.night.push(value),
            _ => values.rest.push(value),
        }
    }
    Ok(by_date.into_values().collect())
}

#[derive(serde::Deserialize)]
struct FrameLine {
    frame: u64,
    detections: Vec<DetectionLine>,
}

#[derive(serde::Deserialize)]
struct DetectionLine {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    conf: f64,
}

/// Detection JSONL: one frame per line,
/// `{"frame": N, "detections": [{"cx", "cy", "w", "h", "conf"}, ..]}`.
pub fn detections(path: &Path, text: &str) -> Result<Vec<Detection>, CliError> {
    if text.trim().is_empty() {
        super::warn(format!("{}: empty file", path.display()));
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: FrameLine = serde_json::from_str(line).map_err(|e| {
            CliError::Validation(format!("{}: line {}: {e}", path.display(), i + 1))
        })?;
        for d in parsed.detections {
            if !(0.0..=1.0).contains(&d.conf) {
                return Err(CliError::Validation(format!(
                    "{}: line {}: column conf: {} outside [0, 1]",
                    path.display(),
                    i + 1,
                    d.conf
                )));
            }
            out.push(Detection {
                frame_index: parsed.frame,
                cx: d.cx,
                cy: d.cy,
                width: d.w,
                height: d.h,
                confidence: d.conf,
            });
        }
    }
    Ok(out)
}
