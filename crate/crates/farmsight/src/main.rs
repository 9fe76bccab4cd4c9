//! Single entry point wiring every module: subcommand routing, config
//! loading, file ingestion, result persistence, and the alert loop.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod cli;

use cli::{CliError, LogLevel};

#[derive(Parser)]
#[command(name = "farmsight", version, about = "Farm intelligence toolkit")]
struct Cli {
    /// TOML config file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; module seeds are derived from it by stable hashing.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for reports, logs, and the run manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value = "info")]
    log_level: LogLevel,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algorithm {
    Cmaes,
    MapElites,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Temperature,
    Humidity,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize camera placement on a farm layout.
    Optimize {
        /// Farm layout JSON (dimensions, cell size, beams).
        #[arg(long)]
        layout: PathBuf,
        #[arg(long, value_enum, default_value = "cmaes")]
        algorithm: Algorithm,
    },
    /// Forecast in-house temperature or humidity from sensor history.
    ForecastEnv {
        /// Sensor CSV: timestamp,sensor_id,temp_c,humidity_pct
        #[arg(long)]
        sensors: PathBuf,
        #[arg(long, value_enum, default_value = "temperature")]
        target: TargetArg,
        /// Hours ahead; defaults to the config value.
        #[arg(long)]
        horizon: Option<usize>,
        /// Run the model grid search and report every cell.
        #[arg(long)]
        grid: bool,
    },
    /// Indicator band construction and the alert loop.
    Alerts {
        #[command(subcommand)]
        cmd: AlertsCmd,
    },
    /// Egg-counter calibration and counting.
    Eggs {
        #[command(subcommand)]
        cmd: EggsCmd,
    },
    /// Forecast per-bird productivity and feed cost.
    ForecastProd {
        /// Production CSV: date,eggs,deaths,flock_size,age_weeks
        #[arg(long)]
        production: PathBuf,
        /// Feed CSV: month,kg,cost
        #[arg(long)]
        feed: PathBuf,
        /// Indicator CSV: date,channel,period,value
        #[arg(long)]
        indicators: Option<PathBuf>,
        /// Daily environment CSV: date,temp_avg,temp_max,temp_min,hum_avg,hum_max,hum_min
        #[arg(long)]
        env: Option<PathBuf>,
        /// Also print the data-source ablation grid.
        #[arg(long)]
        evaluate: bool,
    },
    /// Generate rule-based recommendations from a context file.
    Recommend {
        /// Context JSON; see the library documentation for the schema.
        #[arg(long)]
        context: PathBuf,
        /// Local weather forecast JSON overriding the context's weather.
        #[arg(long, conflicts_with = "weather_url")]
        weather_fixture: Option<PathBuf>,
        /// HTTP endpoint returning a 3-day weather payload.
        #[arg(long)]
        weather_url: Option<String>,
    },
}

#[derive(Subcommand)]
enum AlertsCmd {
    /// Build per-minute dynamic bands from indicator history.
    BuildBand {
        /// Indicator CSV: timestamp,channel,value
        #[arg(long)]
        indicators: PathBuf,
    },
    /// Evaluate alerts over indicator and sensor streams.
    Run {
        /// Band JSON produced by `alerts build-band`.
        #[arg(long)]
        band: PathBuf,
        #[arg(long)]
        indicators: PathBuf,
        /// Sensor CSV for static threshold checks.
        #[arg(long)]
        sensors: Option<PathBuf>,
        /// Replay the files once and exit instead of tailing them.
        #[arg(long)]
        once: bool,
        /// Poll interval when tailing, in milliseconds.
        #[arg(long, default_value = "500")]
        poll_ms: u64,
    },
}

#[derive(Subcommand)]
enum EggsCmd {
    /// Recover the weighing-spring regions from a calibration run.
    Calibrate {
        /// Detection JSONL: {"frame":N,"detections":[{"cx":..,"cy":..,"w":..,"h":..,"conf":..}]}
        #[arg(long)]
        log: PathBuf,
    },
    /// Count eggs per weight class from a detection log.
    Count {
        #[arg(long)]
        log: PathBuf,
        /// Calibration JSON produced by `eggs calibrate`.
        #[arg(long)]
        calib: PathBuf,
    },
}

fn run(args: Cli) -> Result<(), CliError> {
    cli::set_log_level(args.log_level);
    let config = cli::config::load(args.config.as_deref(), args.seed)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", args.out.display())))?;
    let ctx = cli::RunContext::new(&args.out, &config);
    match args.command {
        Command::Optimize { layout, algorithm } => {
            let algo = match algorithm {
                Algorithm::Cmaes => cli::commands::Algo::Cmaes,
                Algorithm::MapElites => cli::commands::Algo::MapElites,
            };
            cli::commands::optimize(ctx, &layout, algo)
        }
        Command::ForecastEnv { sensors, target, horizon, grid } => {
            let target = match target {
                TargetArg::Temperature => farmsight::envforecast::Target::Temperature,
                TargetArg::Humidity => farmsight::envforecast::Target::Humidity,
            };
            cli::commands::forecast_env(ctx, &sensors, target, horizon, grid)
        }
        Command::Alerts { cmd } => match cmd {
            AlertsCmd::BuildBand { indicators } => cli::commands::build_band(ctx, &indicators),
            AlertsCmd::Run { band, indicators, sensors, once, poll_ms } => {
                cli::commands::alerts_run(ctx, &band, &indicators, sensors.as_deref(), once, poll_ms)
            }
        },
        Command::Eggs { cmd } => match cmd {
            EggsCmd::Calibrate { log } => cli::commands::eggs_calibrate(ctx, &log),
            EggsCmd::Count { log, calib } => cli::commands::eggs_count(ctx, &log, &calib),
        },
        Command::ForecastProd { production, feed, indicators, env, evaluate } => {
            cli::commands::forecast_prod(
                ctx,
                &production,
                &feed,
                indicators.as_deref(),
                env.as_deref(),
                evaluate,
            )
        }
        Command::Recommend { context, weather_fixture, weather_url } => {
            cli::commands::recommend_cmd(ctx, &context, weather_fixture.as_deref(), weather_url)
        }
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
