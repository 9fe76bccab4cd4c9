//! TOML application config. Every block has working defaults, so an empty
//! (or absent) file runs the reference setup; all blocks are validated
//! against their module's invariants before any work starts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use farmsight::alerting::ThresholdConfig;
use farmsight::eggcount::{CalibrationConfig, CountConfig};
use farmsight::geometry::CameraSpec;
use farmsight::optimize::{CmaesParams, MapElitesParams};
use farmsight::production::FeatureSet;

use super::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    /// Master seed; every module seed is derived from it.
    pub seed: u64,
    pub camera: CameraSpec,
    pub optimizer: OptimizerBlock,
    pub envforecast: EnvForecastBlock,
    pub alerting: AlertingBlock,
    pub tracker: CountConfig,
    pub calibration: CalibrationConfig,
    pub production: ProductionBlock,
    pub schedule: ScheduleBlock,
    pub clock: ClockBlock,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            camera: CameraSpec { fov_deg: 102.0, depth: 5.0, count: 6 },
            optimizer: OptimizerBlock::default(),
            envforecast: EnvForecastBlock::default(),
            alerting: AlertingBlock::default(),
            tracker: CountConfig::default(),
            calibration: CalibrationConfig::default(),
            production: ProductionBlock::default(),
            schedule: ScheduleBlock::default(),
            clock: ClockBlock::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerBlock {
    /// Evaluation budget for a CMA-ES run.
    pub max_evaluations: u64,
    /// Evaluation budget for a MAP-Elites run.
    pub map_elites_evaluations: u64,
    pub cmaes: CmaesParams,
    pub map_elites: MapElitesParams,
}

impl Default for OptimizerBlock {
    fn default() -> Self {
        Self {
            max_evaluations: 200_000,
            map_elites_evaluations: 300_000,
            cmaes: CmaesParams {
                sigma0: 0.5,
                population: Some(800),
                target_fitness: Some(0.999),
                ..CmaesParams::default()
            },
            map_elites: MapElitesParams::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvForecastBlock {
    /// Trailing hours fed to the regression.
    pub lookback_hours: usize,
    /// Include the historical same-hour profile features.
    pub use_profile: bool,
    /// Hours ahead to forecast.
    pub horizon: usize,
}

impl Default for EnvForecastBlock {
    fn default() -> Self {
        Self { lookback_hours: 3, use_profile: true, horizon: 3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlertingBlock {
    pub thresholds: ThresholdConfig,
    /// Duplicate-suppression window per (kind, channel) in minutes; 0 off.
    pub dedup_window_min: i64,
    pub webhook_url: Option<String>,
    pub webhook_max_retries: u32,
    pub webhook_backoff_ms: u64,
}

impl Default for AlertingBlock {
    fn default() -> Self {
        Self {
            thresholds: ThresholdConfig::default(),
            dedup_window_min: 30,
            webhook_url: None,
            webhook_max_retries: 3,
            webhook_backoff_ms: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProductionBlock {
    /// `auto` picks the richest feature set the provided files support.
    pub feature_set: FeatureSetChoice,
}

impl Default for ProductionBlock {
    fn default() -> Self {
        Self { feature_set: FeatureSetChoice::Auto }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSetChoice {
    Auto,
    ProductionOnly,
    ProductionEnv,
    Full,
}

impl FeatureSetChoice {
    pub fn resolve(self, have_env: bool, have_indicators: bool) -> FeatureSet {
        match self {
            FeatureSetChoice::ProductionOnly => FeatureSet::ProductionOnly,
            FeatureSetChoice::ProductionEnv => FeatureSet::ProductionEnv,
            FeatureSetChoice::Full => FeatureSet::Full,
            FeatureSetChoice::Auto => match (have_env, have_indicators) {
                (true, true) => FeatureSet::Full,
                (true, false) => FeatureSet::ProductionEnv,
                _ => FeatureSet::ProductionOnly,
            },
        }
    }
}

/// Minute-of-day window, end exclusive.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Period {
    pub start_min: u32,
    pub end_min: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleBlock {
    pub feeding: Period,
    pub night: Period,
    pub rest: Period,
}

impl Default for ScheduleBlock {
    fn default() -> Self {
        Self {
            feeding: Period { start_min: 360, end_min: 600 },
            night: Period { start_min: 0, end_min: 300 },
            rest: Period { start_min: 600, end_min: 1260 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockSource {
    /// Timestamps come from the data itself; replays are deterministic.
    Data,
    /// Wall-clock time; for live tailing only.
    System,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockBlock {
    pub source: ClockSource,
}

impl Default for ClockBlock {
    fn default() -> Self {
        Self { source: ClockSource::Data }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl AppConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.camera
            .validate()
            .map_err(|e| invalid(format!("camera: {e}")))?;
        self.alerting
            .thresholds
            .validate()
            .map_err(|e| invalid(format!("alerting.thresholds: {e}")))?;

        let o = &self.optimizer;
        if o.max_evaluations == 0 || o.map_elites_evaluations == 0 {
            return Err(invalid("optimizer: evaluation budgets must be positive"));
        }
        if !(o.cmaes.sigma0 > 0.0 && o.cmaes.sigma0 <= 1.0) {
            return Err(invalid(format!(
                "optimizer.cmaes: sigma0 must be in (0, 1], got {}",
                o.cmaes.sigma0
            )));
        }
        if let Some(lambda) = o.cmaes.population {
            if lambda < 4 {
                return Err(invalid(format!(
                    "optimizer.cmaes: population must be >= 4, got {lambda}"
                )));
            }
        }
        if o.map_elites.batch == 0 || o.map_elites.init_random < o.map_elites.batch {
            return Err(invalid(
                "optimizer.map_elites: batch must be positive and init_random >= batch",
            ));
        }

        let f = &self.envforecast;
        if f.lookback_hours == 0 || f.horizon == 0 {
            return Err(invalid(
                "envforecast: lookback_hours and horizon must be positive",
            ));
        }

        if self.alerting.dedup_window_min < 0 {
            return Err(invalid("alerting: dedup_window_min must be >= 0"));
        }

        let t = &self.tracker;
        if !(t.max_dist > 0.0) || !(0.0..=1.0).contains(&t.min_confidence) {
            return Err(invalid(
                "tracker: max_dist must be positive and min_confidence within [0, 1]",
            ));
        }

        let c = &self.calibration;
        if !(c.eps > 0.0)
            || c.min_pts == 0
            || !(c.rho_res > 0.0)
            || !(c.theta_res_deg > 0.0)
            || !(c.roi_half_width > 0.0)
            || !(c.lane_top < c.lane_bottom)
        {
            return Err(invalid(
                "calibration: eps/min_pts/rho_res/theta_res_deg/roi_half_width must be \
                 positive and lane_top < lane_bottom",
            ));
        }

        for (name, p) in [
            ("feeding", self.schedule.feeding),
            ("night", self.schedule.night),
            ("rest", self.schedule.rest),
        ] {
            if p.start_min >= p.end_min || p.end_min > 1440 {
                return Err(invalid(format!(
                    "schedule.{name}: need start_min < end_min <= 1440, got {}..{}",
                    p.start_min, p.end_min
                )));
            }
        }
        Ok(())
    }
}

/// Overlays `user` onto `base` recursively; scalar and array values from the
/// file win, objects merge key by key. This lets a config file set only the
/// fields it cares about.
fn merge(base: &mut serde_json::Value, user: serde_json::Value) {
    match (base, user) {
        (serde_json::Value::Object(base_map), serde_json::Value::Object(user_map)) => {
            for (key, value) in user_map {
                match base_map.get_mut(&key) {
                    Some(slot) => merge(slot, value),
                    None => {
                        base_map.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

/// Loads the config file (or defaults), applies the CLI seed override, and
/// validates every block.
pub fn load(path: Option<&Path>, seed_override: Option<u64>) -> Result<AppConfig, CliError> {
    let mut config = match path {
        None => AppConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| invalid(format!("cannot read {}: {e}", p.display())))?;
            let user: toml::Value =
                toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            let user = serde_json::to_value(user)
                .map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            let mut full = serde_json::to_value(AppConfig::default())
                .expect("default config serializes");
            merge(&mut full, user);
            serde_json::from_value(full)
                .map_err(|e| invalid(format!("{}: {e}", p.display())))?
        }
    };
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}
