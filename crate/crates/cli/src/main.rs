//! `balance`: run balancing episodes, sweeps, multi-object experiments,
//! and sensor calibration from the command line.
//!
//! Exit code 0 means every episode completed (regardless of success
//! flags); configuration or solver errors exit nonzero.

use anyhow::{bail, Context, Result};
use balance_core::harness::{
    calibrate, run_episode, run_multi_object, run_sweep, write_multi_outputs, write_sweep_outputs,
    write_trace_csv, EstimatorBank, MultiConfig, Scenario, Suite,
};
use balance_core::sensing::TrainConfig;
use balance_core::sim::EstimatorMode;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "balance", about, version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    PerSensor,
    Shared,
    Oracle,
}

impl From<EstimatorArg> for EstimatorMode {
    fn from(value: EstimatorArg) -> Self {
        match value {
            EstimatorArg::PerSensor => EstimatorMode::PerSensor,
            EstimatorArg::Shared => EstimatorMode::Shared,
            EstimatorArg::Oracle => EstimatorMode::Oracle,
        }
    }
}

#[derive(Args)]
struct WeightsArg {
    /// Calibration directory with trained estimator weights
    /// (from `balance calibrate`). Not needed in oracle mode.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Sensor family seed for oracle-mode runs without a weights directory.
    #[arg(long, default_value_t = 7)]
    sensor_seed: u64,
}

impl WeightsArg {
    fn bank(&self, mode: EstimatorMode) -> Result<EstimatorBank> {
        match (&self.weights, mode) {
            (Some(dir), _) => {
                EstimatorBank::load(dir).with_context(|| format!("loading weights from {dir:?}"))
            }
            (None, EstimatorMode::Oracle) => Ok(EstimatorBank::oracle(self.sensor_seed)),
            (None, other) => {
                bail!("estimator mode {other:?} needs --weights (run `balance calibrate` first)")
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario and write its metrics and trace.
    Run {
        /// Scenario description (TOML).
        #[arg(long)]
        scenario: PathBuf,
        /// Episode seed (overrides the scenario's).
        #[arg(long)]
        seed: u64,
        /// Control rate override.
        #[arg(long, value_parser = ["100", "50"])]
        hz: Option<String>,
        /// Estimator mode override.
        #[arg(long, value_enum)]
        estimator: Option<EstimatorArg>,
        /// Drive the tray from forward kinematics of the joint state.
        #[arg(long)]
        strict_kinematics: bool,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        weights: WeightsArg,
    },
    /// Run an object × position × repetition sweep and write the report.
    Sweep {
        /// Suite description (TOML).
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        weights: WeightsArg,
    },
    /// Two-object robustness runs over the three placement patterns.
    Multi {
        /// Multi-object configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "multi_out")]
        out: PathBuf,
        #[command(flatten)]
        weights: WeightsArg,
    },
    /// Generate synthetic datasets and train the force estimators.
    Calibrate {
        /// Number of fingertip sensors.
        #[arg(long, default_value_t = 4)]
        sensors: usize,
        /// Sensor family / training seed.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Dataset scale factor (1.0 = full desk-scale calibration).
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { scenario, seed, hz, estimator, strict_kinematics, out, weights } => {
            let mut scenario = Scenario::from_file(&scenario).context("reading scenario")?;
            scenario.seed = seed;
            if let Some(hz) = hz {
                scenario.control_hz = hz.parse().expect("validated by clap");
            }
            if let Some(mode) = estimator {
                scenario.estimator = mode.into();
            }
            if strict_kinematics {
                scenario.strict_kinematics = true;
            }
            let bank = weights.bank(scenario.estimator)?;
            let run = run_episode(&scenario, &bank)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("metrics.json"), serde_json::to_string_pretty(&run.metrics)?)?;
            write_trace_csv(&out.join("trace.csv"), &run.rows)?;
            println!(
                "episode finished: success={} cause={:?} time={:?} cop_path={:.1} cm",
                run.metrics.success,
                run.metrics.failure_cause,
                run.metrics.time_to_convergence,
                run.metrics.cop_path_length_cm
            );
        }
        Command::Sweep { suite, out, weights } => {
            let suite = Suite::from_file(&suite).context("reading suite")?;
            let bank = match (&weights.weights, suite.estimator) {
                (None, mode) if mode != EstimatorMode::Oracle => {
                    // No weights given: calibrate into the output directory.
                    let dir = out.join("calibration");
                    eprintln!("no --weights given; calibrating into {dir:?}");
                    calibrate(4, weights.sensor_seed, 1.0, &TrainConfig::default(), Some(&dir))?.bank
                }
                _ => weights.bank(suite.estimator)?,
            };
            let (report, runs) = run_sweep(&suite, &bank)?;
            write_sweep_outputs(&out, &report, &runs)?;
            println!("sweep finished: {} episodes, mean success {:.1}%",
                report.episodes.len(),
                report.mean_success_rate * 100.0
            );
            for row in &report.per_object {
                println!(
                    "  object {}: success {:.1}%  time {}  cop {}",
                    row.object,
                    row.success_rate_mean * 100.0,
                    row.time_mean_s.map_or("-".into(), |v| format!("{v:.1} s")),
                    row.cop_distance_mean_cm.map_or("-".into(), |v| format!("{v:.1} cm")),
                );
            }
        }
        Command::Multi { config, out, weights } => {
            let config = MultiConfig::from_file(&config).context("reading multi config")?;
            let bank = weights.bank(config.estimator)?;
            let (report, runs) = run_multi_object(&config, &bank)?;
            write_multi_outputs(&out, &report, &runs)?;
            for placement in &report.placements {
                println!(
                    "{:?}: success {:.0}%  time {}",
                    placement.placement,
                    placement.success_rate * 100.0,
                    placement.mean_time_s.map_or("-".into(), |v| format!("{v:.1} s")),
                );
            }
        }
        Command::Calibrate { sensors, seed, scale, out } => {
            let result = calibrate(sensors, seed, scale, &TrainConfig::default(), Some(&out))?;
            println!("calibration written to {out:?}");
            for (id, nmae) in result.report.per_sensor_nmae.iter().enumerate() {
                println!("  sensor {id}: nMAE {:.1}%", nmae * 100.0);
            }
            println!(
                "  shared: nMAE {:.1}% (per sensor: {})",
                result.report.shared_nmae_mean * 100.0,
                result
                    .report
                    .shared_nmae_per_sensor
                    .iter()
                    .map(|v| format!("{:.1}%", v * 100.0))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
        }
    }
    Ok(())
}
