//! Single-episode execution: estimator bank resolution, scenario assembly,
//! plant invocation, and metric extraction.

use crate::control::ControlGains;
use crate::harness::metrics::{metrics_from_outcome, EpisodeMetrics};
use crate::harness::scenario::{Scenario, ScenarioError};
use crate::kinematics::{chain_from_toml, ChainModel};
use crate::sensing::{MlpEstimator, SensorModel};
use crate::sim::{run_plant, EpisodeOutcome, EstimatorMode, PlantConfig, PlantError, TraceRow};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Kinematics(#[from] crate::kinematics::KinematicsError),
    #[error(transparent)]
    Gains(#[from] crate::control::GainsError),
    #[error(transparent)]
    Mlp(#[from] crate::sensing::MlpError),
    #[error("estimator bank has no trained networks but mode {0:?} needs them")]
    MissingEstimators(EstimatorMode),
    #[error("harness io: {0}")]
    Io(#[from] std::io::Error),
    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),
}

/// Trained estimators plus the seed that reproduces their sensors.
#[derive(Debug, Clone)]
pub struct EstimatorBank {
    /// Seed of the sensor family the estimators were calibrated for.
    pub sensor_seed: u64,
    pub per_sensor: Vec<MlpEstimator>,
    pub shared: Option<MlpEstimator>,
}

impl EstimatorBank {
    /// A bank for oracle-mode runs: sensors exist, no networks.
    pub fn oracle(sensor_seed: u64) -> Self {
        Self { sensor_seed, per_sensor: Vec::new(), shared: None }
    }

    /// Load per-sensor weights `sensor_0..sensor_{n-1}` and the shared
    /// network from a calibration directory; the sensor count and family
    /// seed come from the directory's `calibration.json`.
    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let report: crate::harness::CalibrationReport =
            serde_json::from_str(&std::fs::read_to_string(dir.join("calibration.json"))?)?;
        let n_sensors = report.per_sensor_nmae.len();
        let mut per_sensor = Vec::with_capacity(n_sensors);
        for id in 0..n_sensors {
            per_sensor.push(MlpEstimator::load(dir, &format!("sensor_{id}"))?);
        }
        let shared = MlpEstimator::load(dir, "shared").ok();
        Ok(Self { sensor_seed: report.sensor_seed, per_sensor, shared })
    }

    fn slice_for(&self, mode: EstimatorMode) -> Result<Option<&[MlpEstimator]>, HarnessError> {
        match mode {
            EstimatorMode::Oracle => Ok(None),
            EstimatorMode::PerSensor => {
                if self.per_sensor.is_empty() {
                    return Err(HarnessError::MissingEstimators(mode));
                }
                Ok(Some(&self.per_sensor))
            }
            EstimatorMode::Shared => match &self.shared {
                Some(shared) => Ok(Some(std::slice::from_ref(shared))),
                None => Err(HarnessError::MissingEstimators(mode)),
            },
        }
    }
}

/// Everything an episode produced.
#[derive(Debug)]
pub struct EpisodeRun {
    pub metrics: EpisodeMetrics,
    pub outcome: EpisodeOutcome,
    pub rows: Vec<TraceRow>,
}

fn load_model(scenario: &Scenario) -> Result<ChainModel, HarnessError> {
    match &scenario.chain {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            Ok(chain_from_toml(&text)?)
        }
        None => Ok(ChainModel::bundled_hand()),
    }
}

fn load_gains(scenario: &Scenario) -> Result<ControlGains, HarnessError> {
    match &scenario.gains {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            Ok(ControlGains::from_toml(&text)?)
        }
        None => Ok(ControlGains::default()),
    }
}

/// Run one episode of the scenario against the estimator bank.
pub fn run_episode(scenario: &Scenario, bank: &EstimatorBank) -> Result<EpisodeRun, HarnessError> {
    scenario.validate()?;
    let model = load_model(scenario)?;
    let gains = load_gains(scenario)?;

    let config = PlantConfig {
        control_hz: scenario.control_hz,
        tray_center_offset: scenario.tray_center_offset,
        strict_kinematics: scenario.strict_kinematics,
        joint_bias_fraction: scenario.joint_bias_fraction,
        keep_in_touch: scenario.keep_in_touch,
        max_time: scenario.max_time,
        ..PlantConfig::default()
    };

    // Sensors are rebuilt from the calibration family seed; the episode
    // seed only drives noise, offsets, and placement jitter.
    let mut sensors: Vec<SensorModel> = (0..model.finger_count())
        .map(|id| SensorModel::generate(id as u32, bank.sensor_seed))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1));
    for sensor in sensors.iter_mut() {
        sensor.subtract_offset(1000, &mut rng);
    }

    let objects = scenario
        .objects
        .iter()
        .map(|spec| {
            let mut position = spec.start_coordinates(&config.tray)?;
            if scenario.start_jitter > 0.0 {
                position.x += rng.random_range(-scenario.start_jitter..scenario.start_jitter);
                position.y += rng.random_range(-scenario.start_jitter..scenario.start_jitter);
            }
            Ok(spec.build(position, &config.tray))
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;

    let estimators = bank.slice_for(scenario.estimator)?;
    let result = run_plant(&config, &model, gains, objects, &mut sensors, estimators, scenario.seed)?;
    let metrics = metrics_from_outcome(&result.outcome, &result.rows);
    Ok(EpisodeRun { metrics, outcome: result.outcome, rows: result.rows })
}
