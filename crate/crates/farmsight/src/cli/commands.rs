//! Subcommand implementations. Each one reads its inputs through the
//! manifest-tracking context, runs the library, persists results under the
//! output directory, and writes `manifest.json`.

use std::path::{Path, PathBuf};

use serde::Serialize;

use farmsight::alerting::{
    build_dynamic_band, check_dynamic, check_static, AlertSink, AlertSource, Channel,
    DynamicBand, EnvReading, IndicatorSample, WebhookConfig,
};
use farmsight::eggcount::{calibrate, group_frames, run_count};
use farmsight::envforecast::{
    aggregate_hourly, fit_model, forecast_iterative, grid_search, Target,
};
use farmsight::geometry::{
    beam_usage_descriptor, coverage_fraction, decode_genotype, min_camera_estimate,
    render_svg, FarmLayout, Genotype,
};
use farmsight::optimize::{cmaes_run, map_elites_run, OptimizerConfig};
use farmsight::production::{
    ablation, build_dataset, build_features, cost_per_egg, fit_production_model,
    predict_productivity, FeatureSet, FeedLedger,
};
use farmsight::recommend::{fetch_weather, recommend, RecommendError, Sourced, WeatherProvider};

use super::config::ClockSource;
use super::{derive_seed, ingest, CliError, RunContext};

pub enum Algo {
    Cmaes,
    MapElites,
}

fn runtime(msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}

fn validation(msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(msg.to_string())
}

pub fn optimize(mut ctx: RunContext, layout_path: &Path, algo: Algo) -> Result<(), CliError> {
    let layout_text = ctx.read_input(layout_path)?;
    let layout: FarmLayout = serde_json::from_str(&layout_text)
        .map_err(|e| validation(format!("{}: {e}", layout_path.display())))?;
    layout.validate().map_err(validation)?;
    let spec = ctx.config.camera;
    let dim = 3 * spec.count;
    let seed = derive_seed(ctx.config.seed, "optimize");
    let block = ctx.config.optimizer.clone();

    let objective = {
        let layout = layout.clone();
        move |genes: &[f64]| {
            let g = Genotype::new(genes.to_vec());
            decode_genotype(&g, &layout, &spec)
                .and_then(|poses| coverage_fraction(&poses, &spec, &layout))
                .unwrap_or(0.0)
        }
    };

    println!("cameras: {} (estimated minimum {})", spec.count, min_camera_estimate(&layout, &spec));
    match algo {
        Algo::Cmaes => {
            let mut opt = OptimizerConfig::new(dim, block.max_evaluations, seed);
            opt.cmaes = block.cmaes;
            let report = cmaes_run(&objective, &opt).map_err(runtime)?;
            let poses = decode_genotype(&report.best, &layout, &spec).map_err(runtime)?;
            ctx.write_json("solution.json", &report)?;
            ctx.write_output("layout.svg", &render_svg(&layout, &poses, &spec))?;
            println!(
                "cma-es: coverage {:.4} after {} evaluations (seed {})",
                report.fitness, report.evaluations, report.seed
            );
        }
        Algo::MapElites => {
            let descriptor = {
                let layout = layout.clone();
                let beams = layout.beams.len();
                move |genes: &[f64]| {
                    let g = Genotype::new(genes.to_vec());
                    decode_genotype(&g, &layout, &spec)
                        .and_then(|poses| beam_usage_descriptor(&poses, &layout))
                        .unwrap_or_else(|_| vec![false; beams])
                }
            };
            let mut opt = OptimizerConfig::new(dim, block.map_elites_evaluations, seed);
            opt.map_elites = block.map_elites;
            let archive = map_elites_run(&objective, descriptor, &opt).map_err(runtime)?;
            ctx.write_output("archive.csv", &archive.to_csv())?;
            if let Some((desc, elite)) = archive.best() {
                let poses = decode_genotype(&elite.genotype, &layout, &spec).map_err(runtime)?;
                ctx.write_json("best.json", elite)?;
                ctx.write_output("layout.svg", &render_svg(&layout, &poses, &spec))?;
                let bits: String = desc.iter().map(|&b| if b { '1' } else { '0' }).collect();
                println!(
                    "map-elites: {} cells, best coverage {:.4} in cell {bits}",
                    archive.cells.len(),
                    elite.fitness
                );
            }
        }
    }
    ctx.finish("optimize")
}

#[derive(Serialize)]
struct EnvForecastOutput {
    target: Target,
    lookback_hours: usize,
    use_profile: bool,
    forecast_start: String,
    predictions: Vec<HourPrediction>,
    model: farmsight::envforecast::ForecastModel,
}

#[derive(Serialize)]
struct HourPrediction {
    hour: String,
    value: f64,
}

pub fn forecast_env(
    mut ctx: RunContext,
    sensors_path: &Path,
    target: Target,
    horizon: Option<usize>,
    grid: bool,
) -> Result<(), CliError> {
    let text = ctx.read_input(sensors_path)?;
    let readings = ingest::sensors(sensors_path, &text)?;
    if readings.is_empty() {
        return Err(validation(format!("{}: no sensor readings", sensors_path.display())));
    }
    let series = aggregate_hourly(&readings);

    if grid {
        let cells = grid_search(&series, target).map_err(validation)?;
        let mut csv = String::from("target,use_profile,lookback_hours,horizon,rmse\n");
        for c in &cells {
            csv.push_str(&format!(
                "{:?},{},{},{},{:.6}\n",
                c.target, c.use_profile, c.lookback_hours, c.horizon, c.rmse
            ));
        }
        ctx.write_output("grid.csv", &csv)?;
        if let Some(best) = cells.iter().min_by(|a, b| a.rmse.partial_cmp(&b.rmse).unwrap()) {
            println!(
                "best cell: profile={} lookback={} horizon={} rmse={:.4}",
                best.use_profile, best.lookback_hours, best.horizon, best.rmse
            );
        }
        return ctx.finish("forecast-env");
    }

    let block = ctx.config.envforecast.clone();
    let horizon = horizon.unwrap_or(block.horizon);
    if horizon == 0 {
        return Err(validation("horizon must be positive"));
    }
    let hours: Vec<i64> = series.hours.keys().copied().collect();
    let model = fit_model(
        &series,
        target,
        block.lookback_hours,
        block.use_profile,
        hours.iter().copied(),
    )
    .map_err(validation)?;
    let t0 = series.last_hour().unwrap() + 3600;
    let values = forecast_iterative(&model, &series, t0, horizon).map_err(validation)?;
    let predictions: Vec<HourPrediction> = values
        .iter()
        .enumerate()
        .map(|(i, &value)| HourPrediction {
            hour: farmsight::alerting::iso_ts(t0 + i as i64 * 3600),
            value,
        })
        .collect();
    for p in &predictions {
        println!("{}  {:.2}", p.hour, p.value);
    }
    let output = EnvForecastOutput {
        target,
        lookback_hours: block.lookback_hours,
        use_profile: block.use_profile,
        forecast_start: farmsight::alerting::iso_ts(t0),
        predictions,
        model,
    };
    ctx.write_json("forecast.json", &output)?;
    ctx.finish("forecast-env")
}

pub fn build_band(mut ctx: RunContext, indicators_path: &Path) -> Result<(), CliError> {
    let text = ctx.read_input(indicators_path)?;
    let samples = ingest::indicators(indicators_path, &text)?;
    let mut bands = std::collections::BTreeMap::new();
    for (name, channel) in [("audio", Channel::Audio), ("video", Channel::Video)] {
        match build_dynamic_band(&samples, channel) {
            Ok(band) => {
                bands.insert(name, band);
            }
            Err(e) => super::warn(format!("{name}: {e}")),
        }
    }
    if bands.is_empty() {
        return Err(validation(format!(
            "{}: no indicator history on any channel",
            indicators_path.display()
        )));
    }
    println!("bands built: {}", bands.keys().cloned().collect::<Vec<_>>().join(", "));
    ctx.write_json("band.json", &bands)?;
    ctx.finish("alerts-build-band")
}

enum StreamKind {
    Indicators,
    Sensors,
}

/// One tailed input file: bytes are consumed from `offset`, partial trailing
/// lines wait for their remainder, and read failures pause only this stream.
struct Stream {
    path: PathBuf,
    kind: StreamKind,
    offset: u64,
    pending: String,
    line: u64,
    header: Option<Vec<String>>,
    paused: bool,
}

impl Stream {
    fn new(path: &Path, kind: StreamKind) -> Self {
        Self {
            path: path.to_path_buf(),
            kind,
            offset: 0,
            pending: String::new(),
            line: 0,
            header: None,
            paused: false,
        }
    }

    /// Returns the complete new lines since the last poll, or `None` when
    /// the file is currently unreadable.
    fn poll(&mut self) -> Option<Vec<(u64, String)>> {
        use std::io::{Read, Seek, SeekFrom};
        let mut file = match std::fs::File::open(&self.path) {
            Ok(f) => f,
            Err(e) => {
                if !self.paused {
                    super::warn(format!("{}: {e}; stream paused, will retry", self.path.display()));
                    self.paused = true;
                }
                return None;
            }
        };
        let mut buf = String::new();
        if file.seek(SeekFrom::Start(self.offset)).is_err()
            || file.read_to_string(&mut buf).is_err()
        {
            if !self.paused {
                super::warn(format!("{}: read failed; stream paused, will retry", self.path.display()));
                self.paused = true;
            }
            return None;
        }
        if self.paused {
            super::info(format!("{}: stream resumed", self.path.display()));
            self.paused = false;
        }
        self.offset += buf.len() as u64;
        self.pending.push_str(&buf);
        let mut lines = Vec::new();
        while let Some(nl) = self.pending.find('\n') {
            let line: String = self.pending.drain(..=nl).collect();
            self.line += 1;
            let line = line.trim_end().to_string();
            if !line.is_empty() {
                lines.push((self.line, line));
            }
        }
        Some(lines)
    }
}

fn split_fields(line: &str) -> Vec<String> {
    line.split(',').map(|f| f.trim().to_string()).collect()
}

fn field<'a>(
    fields: &'a [String],
    header: &[String],
    name: &str,
) -> Result<&'a str, String> {
    let idx = header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| format!("column {name}: required column missing"))?;
    fields
        .get(idx)
        .map(|s| s.as_str())
        .ok_or_else(|| format!("column {name}: missing value"))
}

fn parse_indicator(fields: &[String], header: &[String]) -> Result<IndicatorSample, String> {
    let ts = field(fields, header, "timestamp")?;
    let timestamp = chrono::DateTime::parse_from_rfc3339(ts)
        .map_err(|_| format!("column timestamp: {ts:?} is not an RFC 3339 timestamp"))?
        .timestamp();
    let channel = match field(fields, header, "channel")? {
        "audio" => Channel::Audio,
        "video" => Channel::Video,
        other => return Err(format!("column channel: {other:?} is not one of audio, video")),
    };
    let raw = field(fields, header, "value")?;
    let value: f64 = raw.parse().map_err(|_| format!("column value: cannot parse {raw:?}"))?;
    Ok(IndicatorSample { timestamp, channel, value })
}

fn parse_env(fields: &[String], header: &[String]) -> Result<EnvReading, String> {
    let ts = field(fields, header, "timestamp")?;
    let timestamp = chrono::DateTime::parse_from_rfc3339(ts)
        .map_err(|_| format!("column timestamp: {ts:?} is not an RFC 3339 timestamp"))?
        .timestamp();
    let raw_t = field(fields, header, "temp_c")?;
    let temperature: f64 =
        raw_t.parse().map_err(|_| format!("column temp_c: cannot parse {raw_t:?}"))?;
    let raw_h = field(fields, header, "humidity_pct")?;
    let humidity: f64 =
        raw_h.parse().map_err(|_| format!("column humidity_pct: cannot parse {raw_h:?}"))?;
    if !(0.0..=100.0).contains(&humidity) {
        return Err(format!("column humidity_pct: {humidity} outside [0, 100]"));
    }
    Ok(EnvReading { timestamp, temperature: Some(temperature), humidity: Some(humidity) })
}

pub fn alerts_run(
    mut ctx: RunContext,
    band_path: &Path,
    indicators_path: &Path,
    sensors_path: Option<&Path>,
    once: bool,
    poll_ms: u64,
) -> Result<(), CliError> {
    let band_text = ctx.read_input(band_path)?;
    let bands: std::collections::BTreeMap<String, DynamicBand> =
        serde_json::from_str(&band_text)
            .map_err(|e| validation(format!("{}: {e}", band_path.display())))?;
    let band_for = |channel: Channel| match channel {
        Channel::Audio => bands.get("audio"),
        Channel::Video => bands.get("video"),
    };

    let webhook = ctx.config.alerting.webhook_url.clone().map(|url| WebhookConfig {
        url,
        max_retries: ctx.config.alerting.webhook_max_retries,
        backoff_ms: ctx.config.alerting.webhook_backoff_ms,
    });
    let mut sink = AlertSink::new(ctx.out_dir.join("alerts.jsonl"), webhook);
    sink.dedup_window_min = ctx.config.alerting.dedup_window_min;
    ctx.note_output("alerts.jsonl");

    let mut streams = vec![Stream::new(indicators_path, StreamKind::Indicators)];
    ctx.record_input(indicators_path);
    if let Some(p) = sensors_path {
        streams.push(Stream::new(p, StreamKind::Sensors));
        ctx.record_input(p);
    }
    let thresholds = ctx.config.alerting.thresholds;
    let clock = ctx.config.clock.source;

    // In follow mode the manifest is written up front so an external stop
    // at any point leaves a complete run record; alerts append one line at
    // a time, so there is nothing else to flush.
    if !once {
        ctx.manifest_now("alerts-run")?;
    }

    let mut alerts_emitted = 0u64;
    loop {
        for stream in &mut streams {
            let Some(lines) = stream.poll() else { continue };
            for (line_no, line) in lines {
                let fields = split_fields(&line);
                let Some(header) = stream.header.as_ref() else {
                    stream.header = Some(fields);
                    continue;
                };
                let alerts: Vec<(farmsight::alerting::Alert, i64)> = match stream.kind {
                    StreamKind::Indicators => match parse_indicator(&fields, header) {
                        Ok(sample) => match band_for(sample.channel) {
                            Some(band) => check_dynamic(&sample, band)
                                .map(|a| (a, sample.timestamp))
                                .into_iter()
                                .collect(),
                            None => {
                                super::debug(format!(
                                    "{}: line {line_no}: no band for channel, skipped",
                                    stream.path.display()
                                ));
                                Vec::new()
                            }
                        },
                        Err(reason) => {
                            super::warn(format!(
                                "{}: line {line_no}: {reason}",
                                stream.path.display()
                            ));
                            Vec::new()
                        }
                    },
                    StreamKind::Sensors => match parse_env(&fields, header) {
                        Ok(reading) => check_static(&reading, &thresholds, AlertSource::Observed)
                            .into_iter()
                            .map(|a| (a, reading.timestamp))
                            .collect(),
                        Err(reason) => {
                            super::warn(format!(
                                "{}: line {line_no}: {reason}",
                                stream.path.display()
                            ));
                            Vec::new()
                        }
                    },
                };
                for (alert, data_ts) in alerts {
                    let epoch = match clock {
                        ClockSource::Data => data_ts,
                        ClockSource::System => chrono::Utc::now().timestamp(),
                    };
                    match sink.emit(&alert, epoch) {
                        Ok(record) => {
                            if record.logged {
                                alerts_emitted += 1;
                            }
                        }
                        Err(e) => super::warn(format!("alert delivery: {e}")),
                    }
                }
            }
        }
        if once {
            break;
        }
        std::thread::sleep(std::time::Duration::from_millis(poll_ms));
    }
    println!("alerts emitted: {alerts_emitted}");
    ctx.finish("alerts-run")
}

pub fn eggs_calibrate(mut ctx: RunContext, log_path: &Path) -> Result<(), CliError> {
    let text = ctx.read_input(log_path)?;
    let log = ingest::detections(log_path, &text)?;
    let result = calibrate(&log, &ctx.config.calibration).map_err(validation)?;
    let columns: Vec<String> =
        result.spring_lines.iter().map(|(rho, _)| format!("{rho:.1}")).collect();
    println!("spring columns at x = {}", columns.join(", "));
    ctx.write_json("calibration.json", &result)?;
    ctx.finish("eggs-calibrate")
}

pub fn eggs_count(mut ctx: RunContext, log_path: &Path, calib_path: &Path) -> Result<(), CliError> {
    let calib_text = ctx.read_input(calib_path)?;
    let calib: farmsight::eggcount::CalibrationResult = serde_json::from_str(&calib_text)
        .map_err(|e| validation(format!("{}: {e}", calib_path.display())))?;
    let text = ctx.read_input(log_path)?;
    let log = ingest::detections(log_path, &text)?;
    let frames = group_frames(&log);
    let report = run_count(&frames, &calib, &ctx.config.tracker).map_err(validation)?;
    for (class, count) in &report.tallies {
        println!("{class}: {count}");
    }
    println!("total: {}", report.total);
    ctx.write_json("count.json", &report)?;
    ctx.finish("eggs-count")
}

#[derive(Serialize)]
struct ProductionOutput {
    as_of: chrono::NaiveDate,
    feature_set: FeatureSet,
    productivity: farmsight::production::Productivity,
    feed: farmsight::production::FeedCost,
    model: farmsight::production::ProductionModel,
}

pub fn forecast_prod(
    mut ctx: RunContext,
    production_path: &Path,
    feed_path: &Path,
    indicators_path: Option<&Path>,
    env_path: Option<&Path>,
    evaluate: bool,
) -> Result<(), CliError> {
    let text = ctx.read_input(production_path)?;
    let records = ingest::production(production_path, &text)?;
    if records.is_empty() {
        return Err(validation(format!("{}: no production rows", production_path.display())));
    }
    let feed_text = ctx.read_input(feed_path)?;
    let purchases = ingest::feed(feed_path, &feed_text)?;
    let env = match env_path {
        Some(p) => {
            let t = ctx.read_input(p)?;
            ingest::env_days(p, &t)?
        }
        None => Vec::new(),
    };
    let indicators = match indicators_path {
        Some(p) => {
            let t = ctx.read_input(p)?;
            ingest::indicator_days(p, &t)?
        }
        None => Vec::new(),
    };

    let feature_set = ctx
        .config
        .production
        .feature_set
        .resolve(!env.is_empty(), !indicators.is_empty());
    let samples = build_dataset(&records, &env, &indicators);
    if samples.is_empty() {
        return Err(validation(
            "not enough history to build any training sample (10 future days \
             and trailing means are required)",
        ));
    }
    let model = fit_production_model(&samples, &feature_set.mask()).map_err(validation)?;

    let last = records.last().unwrap();
    let as_of = last.date + chrono::Duration::days(1);
    let features = build_features(&records, &env, &indicators, as_of).map_err(validation)?;
    let productivity =
        predict_productivity(&model, &features, last.flock_size).map_err(validation)?;
    let ledger = FeedLedger { purchases, cycle_start: records.first().unwrap().date };
    let feed = cost_per_egg(&ledger, as_of, productivity.eggs_10day_avg).map_err(validation)?;

    println!(
        "as of {as_of}: {:.1} eggs/day over the next 10 days ({:.3} per bird{})",
        productivity.eggs_10day_avg,
        productivity.per_bird,
        if productivity.anomalous { ", ANOMALOUS" } else { "" }
    );
    if feed.no_data {
        println!("feed: no purchases recorded");
    } else {
        println!(
            "feed: {:.1} kg/day, {:.2} cost/day, {:.4} cost/egg",
            feed.daily_feed_kg, feed.daily_feed_cost, feed.cost_per_egg
        );
    }

    let output = ProductionOutput { as_of, feature_set, productivity, feed, model };
    ctx.write_json("production.json", &output)?;

    if evaluate {
        let sets = [FeatureSet::ProductionOnly, FeatureSet::ProductionEnv, FeatureSet::Full];
        let rows = ablation(&samples, &sets).map_err(validation)?;
        let mut csv = String::from("feature_set,mae,train_samples,test_samples\n");
        for r in &rows {
            csv.push_str(&format!(
                "{:?},{:.6},{},{}\n",
                r.feature_set, r.mae, r.train_samples, r.test_samples
            ));
            println!("{:?}: mae {:.4}", r.feature_set, r.mae);
        }
        ctx.write_output("ablation.csv", &csv)?;
    }
    ctx.finish("forecast-prod")
}

pub fn recommend_cmd(
    mut ctx: RunContext,
    context_path: &Path,
    weather_fixture: Option<&Path>,
    weather_url: Option<String>,
) -> Result<(), CliError> {
    let text = ctx.read_input(context_path)?;
    let mut context: farmsight::recommend::RecommendationContext = serde_json::from_str(&text)
        .map_err(|e| validation(format!("{}: {e}", context_path.display())))?;

    let provider = match (weather_fixture, weather_url) {
        (Some(p), _) => {
            ctx.record_input(p);
            Some(WeatherProvider::Fixture(p.to_path_buf()))
        }
        (None, Some(url)) => Some(WeatherProvider::Url(url)),
        (None, None) => None,
    };
    if let Some(provider) = provider {
        let forecast = fetch_weather(&provider).map_err(|e| match e {
            RecommendError::WeatherUnavailable { .. } | RecommendError::Io(_) => runtime(e),
            other => validation(other),
        })?;
        context.weather = Some(Sourced { timestamp: context.as_of, value: forecast });
    }
    if context.thresholds.is_none() {
        context.thresholds = Some(ctx.config.alerting.thresholds);
    }

    let report = recommend(&context);
    for r in &report.recommendations {
        println!("[{:?}] {:?}: {}", r.severity, r.code, r.message);
    }
    if report.recommendations.is_empty() {
        println!("no recommendations");
    }
    for s in &report.skipped_sources {
        super::info(format!("skipped: {s} unavailable"));
    }
    ctx.write_json("recommendations.json", &report)?;
    ctx.finish("recommend")
}
