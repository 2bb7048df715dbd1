//! Synthetic force–tactile dataset generation.
//!
//! Contact points are Poisson-disc sampled on the pad; each point gets
//! random indentation trajectories confined to a narrow cylinder (1 mm
//! radius against tangential slip, 5 mm depth against overload). Probe
//! depth maps to force through a Hertz-like stiffness capped at 6 N.
//! No-contact samples under random orientations augment the pool so the
//! regressor learns to null the gravity response, and the pool is reduced
//! to a force-balanced subset before training.

use crate::sensing::taxel::{SensorModel, TaxelReading, READING_DIM};
use nalgebra::{Rotation3, UnitQuaternion, Vector2, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset io: {0}")]
    Io(#[from] io::Error),
    #[error("dataset csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad record: {0}")]
    BadRecord(String),
}

/// One calibrated force–tactile pair.
#[derive(Debug, Clone)]
pub struct ForceSample {
    /// Offset-subtracted reading.
    pub taxels: TaxelReading,
    /// Ground-truth force in the fingertip frame (N).
    pub force: Vector3<f64>,
    /// Fingertip orientation during the sample.
    pub pose: UnitQuaternion<f64>,
    /// Nominal contact point (the cylinder center) on the pad (m).
    pub contact_point: Vector2<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Half-extent of the square sampling region on the pad (m).
    pub surface_half_extent: f64,
    /// Poisson-disc minimum spacing between contact points (m).
    pub poisson_radius: f64,
    /// Indentation trajectories per contact point.
    pub trajectories_per_point: usize,
    /// Loaded steps per trajectory (a short release tail is appended).
    pub steps_per_trajectory: usize,
    /// Cylinder constraint: lateral radius and depth (m).
    pub cylinder_radius: f64,
    pub cylinder_height: f64,
    /// Force cap (N).
    pub max_force: f64,
    /// Fraction of no-contact gravity samples in the pool.
    pub no_contact_fraction: f64,
    /// Time step between consecutive trajectory samples (s).
    pub sample_dt: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            surface_half_extent: 0.006,
            poisson_radius: 0.0015,
            trajectories_per_point: 18,
            steps_per_trajectory: 20,
            cylinder_radius: 0.001,
            cylinder_height: 0.005,
            max_force: 6.0,
            no_contact_fraction: 0.12,
            sample_dt: 0.05,
        }
    }
}

/// Bridson Poisson-disc sampling on the square pad region.
pub fn poisson_disc_points(half_extent: f64, radius: f64, rng: &mut ChaCha8Rng) -> Vec<Vector2<f64>> {
    let cell = radius / std::f64::consts::SQRT_2;
    let grid_n = ((2.0 * half_extent) / cell).ceil() as usize + 1;
    let mut grid: Vec<Option<usize>> = vec![None; grid_n * grid_n];
    let mut points: Vec<Vector2<f64>> = Vec::new();
    let mut active: Vec<usize> = Vec::new();

    let grid_index = |p: &Vector2<f64>| -> usize {
        let gx = ((p.x + half_extent) / cell) as usize;
        let gy = ((p.y + half_extent) / cell) as usize;
        gy.min(grid_n - 1) * grid_n + gx.min(grid_n - 1)
    };
    let fits = |p: &Vector2<f64>, points: &[Vector2<f64>], grid: &[Option<usize>]| -> bool {
        let gx = ((p.x + half_extent) / cell) as isize;
        let gy = ((p.y + half_extent) / cell) as isize;
        for dy in -2..=2isize {
            for dx in -2..=2isize {
                let (nx, ny) = (gx + dx, gy + dy);
                if nx < 0 || ny < 0 || nx >= grid_n as isize || ny >= grid_n as isize {
                    continue;
                }
                if let Some(idx) = grid[ny as usize * grid_n + nx as usize] {
                    if (points[idx] - p).norm() < radius {
                        return false;
                    }
                }
            }
        }
        true
    };

    let first = Vector2::new(
        rng.random_range(-half_extent..half_extent),
        rng.random_range(-half_extent..half_extent),
    );
    grid[grid_index(&first)] = Some(0);
    points.push(first);
    active.push(0);

    while let Some(&seed_idx) = active.last() {
        let base = points[seed_idx];
        let mut placed = false;
        for _ in 0..30 {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let dist = rng.random_range(radius..2.0 * radius);
            let candidate = base + dist * Vector2::new(angle.cos(), angle.sin());
            if candidate.x.abs() > half_extent || candidate.y.abs() > half_extent {
                continue;
            }
            if fits(&candidate, &points, &grid) {
                grid[grid_index(&candidate)] = Some(points.len());
                points.push(candidate);
                active.push(points.len() - 1);
                placed = true;
                break;
            }
        }
        if !placed {
            active.pop();
        }
    }
    points
}

/// Hertz-like depth-to-force map, calibrated so full depth hits the cap.
fn normal_force(depth: f64, cfg: &DatasetConfig) -> f64 {
    let k = cfg.max_force / cfg.cylinder_height.powf(1.5);
    (k * depth.max(0.0).powf(1.5)).min(cfg.max_force)
}

fn random_orientation_small(rng: &mut ChaCha8Rng, max_angle: f64) -> UnitQuaternion<f64> {
    let axis = Vector3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    let axis = if axis.norm() < 1e-9 { Vector3::z() } else { axis.normalize() };
    UnitQuaternion::from_scaled_axis(axis * rng.random_range(0.0..max_angle))
}

fn random_orientation_full(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    let axis = Vector3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    let axis = if axis.norm() < 1e-9 { Vector3::z() } else { axis.normalize() };
    UnitQuaternion::from_scaled_axis(axis * rng.random_range(0.0..std::f64::consts::PI))
}

/// Generate the raw pool for one sensor. Deterministic per `(seed, model)`.
/// Returned readings are offset-subtracted with the sensor's stored
/// calibration.
pub fn generate_dataset(model: &mut SensorModel, cfg: &DatasetConfig, seed: u64) -> Vec<ForceSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = poisson_disc_points(cfg.surface_half_extent, cfg.poisson_radius, &mut rng);
    let mut samples = Vec::new();

    for center in &points {
        for _ in 0..cfg.trajectories_per_point {
            model.reset_hysteresis();
            let pose = random_orientation_small(&mut rng, 0.55);
            let rotation: Rotation3<f64> = pose.to_rotation_matrix();
            let mut depth = 0.0_f64;
            let mut lateral = Vector2::zeros();
            let mut dwell = 0u32;
            let total = cfg.steps_per_trajectory + 5; // release tail
            for step in 0..total {
                if step < cfg.steps_per_trajectory {
                    if dwell > 0 {
                        // Hold the probe still so settled readings get
                        // labeled, like the steady contacts seen in use.
                        dwell -= 1;
                    } else {
                        // Random walk in the cylinder: descend on average.
                        depth = (depth
                            + rng.random_range(-0.2..1.0) * cfg.cylinder_height
                                / cfg.steps_per_trajectory as f64)
                            .clamp(0.0, cfg.cylinder_height);
                        lateral += Vector2::new(
                            rng.random_range(-0.3..0.3) * cfg.cylinder_radius,
                            rng.random_range(-0.3..0.3) * cfg.cylinder_radius,
                        );
                        if lateral.norm() > cfg.cylinder_radius {
                            lateral *= cfg.cylinder_radius / lateral.norm();
                        }
                        if rng.random_range(0.0..1.0) < 0.35 {
                            dwell = rng.random_range(2..5);
                        }
                    }
                } else {
                    depth = 0.0; // probe released
                }
                let fn_magnitude = normal_force(depth, cfg);
                // Tangential load grows with lateral offset, bounded well
                // below the slip limit.
                let tangential = 0.3 * (lateral / cfg.cylinder_radius) * fn_magnitude;
                let force = Vector3::new(tangential.x, tangential.y, fn_magnitude);
                let contact = center + lateral;
                let raw = model.simulate(&force, contact, &rotation, cfg.sample_dt, &mut rng);
                samples.push(ForceSample {
                    taxels: model.calibrate_reading(&raw),
                    force,
                    pose,
                    contact_point: *center,
                });
            }
        }
    }

    // Gravity augmentation: no contact, arbitrary orientations.
    let n_no_contact =
        ((samples.len() as f64) * cfg.no_contact_fraction / (1.0 - cfg.no_contact_fraction)) as usize;
    model.reset_hysteresis();
    for _ in 0..n_no_contact {
        let pose = random_orientation_full(&mut rng);
        let rotation = pose.to_rotation_matrix();
        let raw = model.simulate(&Vector3::zeros(), Vector2::zeros(), &rotation, cfg.sample_dt, &mut rng);
        samples.push(ForceSample {
            taxels: model.calibrate_reading(&raw),
            force: Vector3::zeros(),
            pose,
            contact_point: Vector2::zeros(),
        });
    }
    samples
}

/// Reduce a pool to `target` samples with an approximately flat histogram
/// over force magnitude (the heavily-populated bins are subsampled).
/// Bins are square-root spaced, so the light-contact regime the balancing
/// task actually operates in keeps proportionally more resolution.
/// Deterministic per seed.
pub fn balance_by_force(samples: &[ForceSample], target: usize, bins: usize, seed: u64) -> Vec<ForceSample> {
    if samples.len() <= target {
        return samples.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_norm = samples.iter().map(|s| s.force.norm()).fold(0.0, f64::max) + 1e-9;
    let mut by_bin: Vec<Vec<usize>> = vec![Vec::new(); bins];
    for (idx, sample) in samples.iter().enumerate() {
        let bin = ((sample.force.norm() / max_norm).sqrt() * bins as f64) as usize;
        by_bin[bin.min(bins - 1)].push(idx);
    }
    for bin in &mut by_bin {
        // Deterministic shuffle.
        for i in (1..bin.len()).rev() {
            let j = rng.random_range(0..=i);
            bin.swap(i, j);
        }
    }
    let quota = target / bins;
    let mut chosen: Vec<usize> = Vec::with_capacity(target);
    let mut leftovers: Vec<usize> = Vec::new();
    for bin in &by_bin {
        let take = quota.min(bin.len());
        chosen.extend_from_slice(&bin[..take]);
        leftovers.extend_from_slice(&bin[take..]);
    }
    let mut k = 0;
    while chosen.len() < target && k < leftovers.len() {
        chosen.push(leftovers[k]);
        k += 1;
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| samples[i].clone()).collect()
}

/// Train/test partition with held-out contact locations: every trajectory
/// from a test contact point (and a share of the no-contact poses) goes to
/// the test side, so evaluation sees unseen placements and orientations.
#[derive(Debug, Clone)]
pub struct TrainTestSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_by_contact_point(samples: &[ForceSample], test_fraction: f64, seed: u64) -> TrainTestSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vector2<f64>> = Vec::new();
    for s in samples {
        if s.force != Vector3::zeros()
            && !centers.iter().any(|c| (c - s.contact_point).norm() < 1e-12)
        {
            centers.push(s.contact_point);
        }
    }
    let mut test_center_flags = vec![false; centers.len()];
    for flag in test_center_flags.iter_mut() {
        *flag = rng.random_range(0.0..1.0) < test_fraction;
    }
    if test_center_flags.iter().all(|f| !f) && !centers.is_empty() {
        test_center_flags[0] = true;
    }

    let mut split = TrainTestSplit { train: Vec::new(), test: Vec::new() };
    for (idx, s) in samples.iter().enumerate() {
        let is_test = if s.force == Vector3::zeros() {
            rng.random_range(0.0..1.0) < test_fraction
        } else {
            centers
                .iter()
                .position(|c| (c - s.contact_point).norm() < 1e-12)
                .map(|k| test_center_flags[k])
                .unwrap_or(false)
        };
        if is_test {
            split.test.push(idx);
        } else {
            split.train.push(idx);
        }
    }
    split
}

const CSV_HEADER: [&str; 25] = [
    "sensor_id", "t0x", "t0y", "t0z", "t1x", "t1y", "t1z", "t2x", "t2y", "t2z", "t3x", "t3y",
    "t3z", "t4x", "t4y", "t4z", "fx", "fy", "fz", "qw", "qx", "qy", "qz", "cx", "cy",
];

pub fn write_csv(path: &Path, samples: &[ForceSample]) -> Result<(), DatasetError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(CSV_HEADER)?;
    for s in samples {
        let mut record: Vec<String> = Vec::with_capacity(25);
        record.push(s.taxels.sensor_id.to_string());
        for v in &s.taxels.values {
            record.push(v.to_string());
        }
        for v in [s.force.x, s.force.y, s.force.z] {
            record.push(v.to_string());
        }
        let q = s.pose.quaternion();
        for v in [q.w, q.i, q.j, q.k] {
            record.push(v.to_string());
        }
        record.push(s.contact_point.x.to_string());
        record.push(s.contact_point.y.to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ForceSample>, DatasetError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut samples = Vec::new();
    for row in reader.records() {
        let row = row?;
        if row.len() != 25 {
            return Err(DatasetError::BadRecord(format!("expected 25 fields, got {}", row.len())));
        }
        let field = |i: usize| -> Result<f64, DatasetError> {
            row[i].parse().map_err(|_| DatasetError::BadRecord(format!("field {i}: `{}`", &row[i])))
        };
        let sensor_id: u32 =
            row[0].parse().map_err(|_| DatasetError::BadRecord("sensor_id".into()))?;
        let mut values = [0.0; READING_DIM];
        for (k, value) in values.iter_mut().enumerate() {
            *value = field(1 + k)?;
        }
        let force = Vector3::new(field(16)?, field(17)?, field(18)?);
        let pose = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
            field(19)?,
            field(20)?,
            field(21)?,
            field(22)?,
        ));
        let contact_point = Vector2::new(field(23)?, field(24)?);
        samples.push(ForceSample {
            taxels: TaxelReading { values, sensor_id },
            force,
            pose,
            contact_point,
        });
    }
    Ok(samples)
}
