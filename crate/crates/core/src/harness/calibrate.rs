//! Sensor calibration: per-sensor datasets, per-sensor regressors, and the
//! shared-network baseline trained on the pooled data.
//!
//! Every sensor's pool is generated at the default scale, balanced over
//! force magnitude, and split with held-out contact points. The shared
//! network trains on an evenly pooled subset of the per-sensor training
//! splits (same budget as one per-sensor run) and is evaluated on each
//! sensor's own held-out split, so the comparison isolates cross-sensor
//! variation rather than data volume.

use crate::harness::episode::{EstimatorBank, HarnessError};
use crate::sensing::{
    balance_by_force, evaluate_nmae, generate_dataset, split_by_contact_point, train_estimator,
    DatasetConfig, ForceSample, MlpEstimator, SensorModel, TrainConfig, TrainTestSplit,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Balanced per-sensor training-set size.
const BALANCED_PER_SENSOR: usize = 20_000;
const FORCE_BINS: usize = 12;
const TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub sensor_seed: u64,
    pub per_sensor_nmae: Vec<f64>,
    /// Shared network evaluated on each sensor's held-out split.
    pub shared_nmae_per_sensor: Vec<f64>,
    pub shared_nmae_mean: f64,
    pub train_sizes: Vec<usize>,
    pub test_sizes: Vec<usize>,
}

pub struct CalibrationResult {
    pub bank: EstimatorBank,
    pub report: CalibrationReport,
}

struct SensorData {
    samples: Vec<ForceSample>,
    split: TrainTestSplit,
}

fn build_sensor_data(id: u32, sensor_seed: u64, scale: f64) -> SensorData {
    let mut model = SensorModel::generate(id, sensor_seed);
    let mut rng = rand::SeedableRng::seed_from_u64(
        sensor_seed ^ (u64::from(id) + 101).wrapping_mul(0x2545_F491_4F6C_DD1D),
    );
    model.subtract_offset(1000, &mut rng);

    let cfg = DatasetConfig {
        trajectories_per_point: ((18.0 * scale).round() as usize).max(2),
        ..DatasetConfig::default()
    };
    let pool = generate_dataset(&mut model, &cfg, sensor_seed.wrapping_add(u64::from(id) * 7919));
    let target = ((BALANCED_PER_SENSOR as f64 * scale) as usize).min(pool.len()).max(200);
    let samples = balance_by_force(&pool, target, FORCE_BINS, sensor_seed.wrapping_add(31 + u64::from(id)));
    let split = split_by_contact_point(&samples, TEST_FRACTION, sensor_seed.wrapping_add(977 + u64::from(id)));
    SensorData { samples, split }
}

/// Train per-sensor estimators and the shared baseline.
///
/// `scale` shrinks the dataset for fast tests; `1.0` is the full desk-scale
/// calibration. Writes weight files and a JSON report when `out` is given.
pub fn calibrate(
    n_sensors: usize,
    sensor_seed: u64,
    scale: f64,
    train: &TrainConfig,
    out: Option<&Path>,
) -> Result<CalibrationResult, HarnessError> {
    let data: Vec<SensorData> = (0..n_sensors as u32)
        .into_par_iter()
        .map(|id| build_sensor_data(id, sensor_seed, scale))
        .collect();

    // Shared pool: an even, per-sensor-balanced draw from the training
    // splits, matching one per-sensor training budget.
    let per_sensor_budget =
        (data.iter().map(|d| d.split.train.len()).min().unwrap_or(0)).min(
            ((BALANCED_PER_SENSOR as f64 * scale) as usize / n_sensors).max(100),
        );
    let mut shared_samples: Vec<ForceSample> = Vec::new();
    for sensor in &data {
        for &idx in sensor.split.train.iter().take(per_sensor_budget) {
            shared_samples.push(sensor.samples[idx].clone());
        }
    }
    // Internal holdout for the shared training report only.
    let holdout = (shared_samples.len() / 10).max(1);
    let shared_split = TrainTestSplit {
        train: (holdout..shared_samples.len()).collect(),
        test: (0..holdout).collect(),
    };

    // Per-sensor trainings and the shared training, all independent.
    enum Job<'a> {
        Sensor(usize, &'a SensorData),
        Shared(&'a [ForceSample], &'a TrainTestSplit),
    }
    let mut jobs: Vec<Job> = data.iter().enumerate().map(|(i, d)| Job::Sensor(i, d)).collect();
    jobs.push(Job::Shared(&shared_samples, &shared_split));

    let trained: Vec<(usize, MlpEstimator, f64)> = jobs
        .into_par_iter()
        .map(|job| match job {
            Job::Sensor(i, sensor) => {
                let seed = sensor_seed.wrapping_add(4242 + i as u64);
                let (estimator, report) = train_estimator(&sensor.samples, &sensor.split, train, seed)?;
                Ok((i, estimator, report.nmae))
            }
            Job::Shared(samples, split) => {
                let seed = sensor_seed.wrapping_add(777_777);
                let (estimator, report) = train_estimator(samples, split, train, seed)?;
                Ok((usize::MAX, estimator, report.nmae))
            }
        })
        .collect::<Result<Vec<_>, crate::sensing::MlpError>>()?;

    let mut per_sensor: Vec<Option<MlpEstimator>> = (0..n_sensors).map(|_| None).collect();
    let mut per_sensor_nmae = vec![0.0; n_sensors];
    let mut shared: Option<MlpEstimator> = None;
    for (i, estimator, nmae) in trained {
        if i == usize::MAX {
            shared = Some(estimator);
        } else {
            per_sensor_nmae[i] = nmae;
            per_sensor[i] = Some(estimator);
        }
    }
    let per_sensor: Vec<MlpEstimator> =
        per_sensor.into_iter().map(|e| e.expect("every sensor trained")).collect();
    let shared = shared.expect("shared network trained");

    let shared_nmae_per_sensor: Vec<f64> = data
        .iter()
        .map(|sensor| evaluate_nmae(&shared, &sensor.samples, &sensor.split.test))
        .collect();
    let shared_nmae_mean =
        shared_nmae_per_sensor.iter().sum::<f64>() / shared_nmae_per_sensor.len() as f64;

    let report = CalibrationReport {
        sensor_seed,
        per_sensor_nmae,
        shared_nmae_per_sensor,
        shared_nmae_mean,
        train_sizes: data.iter().map(|d| d.split.train.len()).collect(),
        test_sizes: data.iter().map(|d| d.split.test.len()).collect(),
    };

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        for (id, estimator) in per_sensor.iter().enumerate() {
            estimator.save(dir, &format!("sensor_{id}"))?;
        }
        shared.save(dir, "shared")?;
        std::fs::write(dir.join("calibration.json"), serde_json::to_string_pretty(&report)?)?;
    }

    Ok(CalibrationResult {
        bank: EstimatorBank { sensor_seed, per_sensor, shared: Some(shared) },
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_scale_calibration_separates_shared_from_per_sensor() {
        let train = TrainConfig { epochs: 10, ..TrainConfig::default() };
        let result = calibrate(3, 7, 0.12, &train, None).unwrap();
        assert_eq!(result.report.per_sensor_nmae.len(), 3);
        for (id, (own, shared)) in result
            .report
            .per_sensor_nmae
            .iter()
            .zip(&result.report.shared_nmae_per_sensor)
            .enumerate()
        {
            assert!(*own < 0.15, "sensor {id} nMAE {own}");
            assert!(shared > own, "sensor {id}: shared {shared} not worse than own {own}");
        }
    }

    #[test]
    fn calibration_writes_loadable_files() {
        let train = TrainConfig { epochs: 3, ..TrainConfig::default() };
        let dir = tempfile::tempdir().unwrap();
        let result = calibrate(3, 11, 0.06, &train, Some(dir.path())).unwrap();
        assert!(dir.path().join("calibration.json").exists());
        let bank = EstimatorBank::load(dir.path()).unwrap();
        assert_eq!(bank.sensor_seed, 11);
        assert_eq!(bank.per_sensor.len(), 3);
        assert!(bank.shared.is_some());
        // Loaded networks reproduce the trained outputs at f32 precision.
        let probe = crate::sensing::TaxelReading { values: [5.0; 15], sensor_id: 0 };
        let a = result.bank.per_sensor[0].estimate_force(&probe);
        let b = bank.per_sensor[0].estimate_force(&probe);
        assert!((a - b).norm() < 1e-3);
    }

    #[test]
    fn calibration_is_deterministic() {
        let train = TrainConfig { epochs: 2, ..TrainConfig::default() };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        calibrate(2, 5, 0.06, &train, Some(dir_a.path())).unwrap();
        calibrate(2, 5, 0.06, &train, Some(dir_b.path())).unwrap();
        for name in ["sensor_0.bin", "sensor_1.bin", "shared.bin"] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs across reruns");
        }
    }
}
