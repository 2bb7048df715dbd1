//! Parametric magnetic-taxel fingertip model.
//!
//! Five taxels, each reporting a 3-axis displacement signal in raw counts.
//! A contact force produces per-taxel responses through a Gaussian spatial
//! falloff around the contact point and a per-taxel gain matrix; the
//! contact response passes through an asymmetric first-order lag (fast
//! loading, slow unloading) that leaves force-dependent residuals after
//! release. Orientation couples gravity into the counts, and every sensor
//! id draws its own gains so different sensors answer the same force
//! differently.

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::sim::GRAVITY;

pub const TAXELS: usize = 5;
pub const READING_DIM: usize = 3 * TAXELS;

/// One raw 15-channel reading (5 taxels × 3 axes, counts).
#[derive(Debug, Clone)]
pub struct TaxelReading {
    pub values: [f64; READING_DIM],
    pub sensor_id: u32,
}

impl TaxelReading {
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Synthetic fingertip sensor. Construction is deterministic per
/// `(sensor_id, family_seed)`, so the same physical sensor can be rebuilt
/// by the calibration pipeline and by every episode.
#[derive(Debug, Clone)]
pub struct SensorModel {
    pub sensor_id: u32,
    /// Taxel centers on the pad surface (m).
    pub taxel_positions: [Vector2<f64>; TAXELS],
    /// Per-taxel gain matrices (counts per N).
    pub gains: [Matrix3<f64>; TAXELS],
    /// Hysteresis residual state per taxel axis (counts).
    pub hysteresis: [Vector3<f64>; TAXELS],
    /// Fraction of the elastic signal the residual creeps toward.
    pub hysteresis_gain: f64,
    /// Residual build-up/decay rates (1/s); decay is much slower, so
    /// residuals persist after release and grow with the peak signal.
    pub alpha_load: f64,
    pub alpha_unload: f64,
    /// Gravity coupling per taxel (counts per m/s² along each axis).
    pub gravity_coupling: [Vector3<f64>; TAXELS],
    /// Additive Gaussian noise (counts).
    pub noise_sigma: f64,
    /// Static per-channel offset (counts).
    pub offset: [Vector3<f64>; TAXELS],
    /// Offset estimate from [`SensorModel::subtract_offset`].
    pub calibrated_offset: [Vector3<f64>; TAXELS],
    /// Gaussian falloff radius of the contact footprint (m).
    pub contact_radius: f64,
}

impl SensorModel {
    /// Draw a sensor of the given id from the family seed.
    pub fn generate(sensor_id: u32, family_seed: u64) -> Self {
        let mut rng =
            ChaCha8Rng::seed_from_u64(family_seed ^ (u64::from(sensor_id) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let spread = Normal::<f64>::new(0.0, 0.40).unwrap();
        let cross = Normal::<f64>::new(0.0, 3.0).unwrap();
        let taxel_var = Normal::<f64>::new(0.0, 0.10).unwrap();
        let coupling_dist = Normal::<f64>::new(0.8, 0.2).unwrap();
        let offset_dist = Normal::<f64>::new(0.0, 8.0).unwrap();

        // Per-sensor base gains: markedly different from unit to unit.
        let base = Vector3::new(
            40.0 * spread.sample(&mut rng).exp(),
            40.0 * spread.sample(&mut rng).exp(),
            50.0 * spread.sample(&mut rng).exp(),
        );

        let s = 0.0045;
        let taxel_positions = [
            Vector2::new(0.0, 0.0),
            Vector2::new(s, 0.0),
            Vector2::new(-s, 0.0),
            Vector2::new(0.0, s),
            Vector2::new(0.0, -s),
        ];

        let mut gains = [Matrix3::zeros(); TAXELS];
        let mut gravity_coupling = [Vector3::zeros(); TAXELS];
        let mut offset = [Vector3::zeros(); TAXELS];
        for j in 0..TAXELS {
            let mut g = Matrix3::zeros();
            for axis in 0..3 {
                g[(axis, axis)] = base[axis] * taxel_var.sample(&mut rng).exp();
            }
            for row in 0..3 {
                for col in 0..3 {
                    if row != col {
                        g[(row, col)] = cross.sample(&mut rng);
                    }
                }
            }
            gains[j] = g;
            gravity_coupling[j] = Vector3::new(
                coupling_dist.sample(&mut rng),
                coupling_dist.sample(&mut rng),
                coupling_dist.sample(&mut rng),
            );
            offset[j] = Vector3::new(
                offset_dist.sample(&mut rng),
                offset_dist.sample(&mut rng),
                offset_dist.sample(&mut rng),
            );
        }

        Self {
            sensor_id,
            taxel_positions,
            gains,
            hysteresis: [Vector3::zeros(); TAXELS],
            hysteresis_gain: 0.05,
            alpha_load: 4.0,
            alpha_unload: 0.30,
            gravity_coupling,
            noise_sigma: 0.5,
            offset,
            calibrated_offset: [Vector3::zeros(); TAXELS],
            contact_radius: 0.004,
        }
    }

    pub fn reset_hysteresis(&mut self) {
        self.hysteresis = [Vector3::zeros(); TAXELS];
    }

    /// Advance the taxel dynamics by `dt` under `force` (fingertip frame,
    /// N) applied at `contact_point` on the pad, and return the raw
    /// reading. A zero-force call models no contact.
    pub fn simulate(
        &mut self,
        force: &Vector3<f64>,
        contact_point: Vector2<f64>,
        orientation: &Rotation3<f64>,
        dt: f64,
        rng: &mut ChaCha8Rng,
    ) -> TaxelReading {
        let gravity_local = orientation.inverse() * Vector3::new(0.0, 0.0, -GRAVITY);
        let mut values = [0.0; READING_DIM];
        for j in 0..TAXELS {
            let w = (-(self.taxel_positions[j] - contact_point).norm_squared()
                / (2.0 * self.contact_radius * self.contact_radius))
                .exp();
            let elastic = self.gains[j] * (w * force);
            // The elastic response is instantaneous; a residual component
            // creeps toward a fraction of it while loaded and decays far
            // more slowly after release, so post-release readings stay
            // offset in proportion to the peak signal.
            for axis in 0..3 {
                let target = self.hysteresis_gain * elastic[axis];
                let state = self.hysteresis[j][axis];
                let alpha = if target.abs() >= state.abs() { self.alpha_load } else { self.alpha_unload };
                let blend = 1.0 - (-alpha * dt).exp();
                self.hysteresis[j][axis] = state + blend * (target - state);
            }
            let gravity_term = self.gravity_coupling[j].component_mul(&gravity_local);
            for axis in 0..3 {
                let noise: f64 = if self.noise_sigma > 0.0 {
                    self.noise_sigma * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                values[3 * j + axis] = elastic[axis]
                    + self.hysteresis[j][axis]
                    + gravity_term[axis]
                    + self.offset[j][axis]
                    + noise;
            }
        }
        TaxelReading { values, sensor_id: self.sensor_id }
    }

    /// Average `n_samples` no-contact readings at the upright orientation
    /// and store the result as the calibration offset.
    pub fn subtract_offset(&mut self, n_samples: usize, rng: &mut ChaCha8Rng) -> [Vector3<f64>; TAXELS] {
        let mut mean = [Vector3::zeros(); TAXELS];
        let upright = Rotation3::identity();
        let saved_hysteresis = self.hysteresis;
        for _ in 0..n_samples {
            let reading = self.simulate(&Vector3::zeros(), Vector2::zeros(), &upright, 0.01, rng);
            for (j, taxel) in mean.iter_mut().enumerate() {
                for (axis, value) in taxel.iter_mut().enumerate() {
                    *value += reading.values[3 * j + axis];
                }
            }
        }
        for taxel in &mut mean {
            *taxel /= n_samples as f64;
        }
        self.hysteresis = saved_hysteresis;
        self.calibrated_offset = mean;
        mean
    }

    /// Subtract the stored calibration offset from a raw reading.
    pub fn calibrate_reading(&self, raw: &TaxelReading) -> TaxelReading {
        let mut values = raw.values;
        for j in 0..TAXELS {
            for axis in 0..3 {
                values[3 * j + axis] -= self.calibrated_offset[j][axis];
            }
        }
        TaxelReading { values, sensor_id: raw.sensor_id }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quiet_sensor(id: u32) -> SensorModel {
        let mut sensor = SensorModel::generate(id, 7);
        sensor.noise_sigma = 0.0;
        sensor.gravity_coupling = [Vector3::zeros(); TAXELS];
        sensor
    }

    #[test]
    fn zero_force_no_gravity_reads_offset_exactly() {
        let mut sensor = quiet_sensor(0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let reading =
            sensor.simulate(&Vector3::zeros(), Vector2::zeros(), &Rotation3::identity(), 0.01, &mut rng);
        for j in 0..TAXELS {
            for axis in 0..3 {
                assert_eq!(reading.values[3 * j + axis], sensor.offset[j][axis]);
            }
        }
    }

    fn press_release_residual(sensor: &mut SensorModel, peak: f64) -> f64 {
        sensor.reset_hysteresis();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let up = Rotation3::identity();
        let dt = 0.01;
        // Ramp up, hold, release, settle for one second.
        for k in 0..100 {
            let f = peak * (k as f64 / 99.0);
            sensor.simulate(&Vector3::new(0.0, 0.0, f), Vector2::zeros(), &up, dt, &mut rng);
        }
        for _ in 0..100 {
            sensor.simulate(&Vector3::new(0.0, 0.0, peak), Vector2::zeros(), &up, dt, &mut rng);
        }
        let mut last = 0.0;
        for _ in 0..100 {
            let r = sensor.simulate(&Vector3::zeros(), Vector2::zeros(), &up, dt, &mut rng);
            last = r.values[2] - sensor.offset[0][2];
        }
        last
    }

    #[test]
    fn hysteresis_residual_grows_with_peak_force() {
        let mut sensor = quiet_sensor(1);
        let low = press_release_residual(&mut sensor, 2.0);
        let high = press_release_residual(&mut sensor, 6.0);
        assert!(high > low, "residuals: low {low}, high {high}");
        assert!(low > 0.0, "release must leave a residual");
    }

    #[test]
    fn hysteresis_residual_monotone_in_peak() {
        let mut sensor = quiet_sensor(2);
        let peaks = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut previous = -1.0;
        for peak in peaks {
            let residual = press_release_residual(&mut sensor, peak);
            assert!(residual >= previous, "residual not monotone at {peak} N");
            previous = residual;
        }
    }

    #[test]
    fn identical_force_differs_across_sensors() {
        let mut a = quiet_sensor(0);
        let mut b = quiet_sensor(1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let force = Vector3::new(0.0, 0.0, 3.0);
        let up = Rotation3::identity();
        // Let the lag settle.
        let mut last_a = [0.0; READING_DIM];
        let mut last_b = [0.0; READING_DIM];
        for _ in 0..200 {
            last_a = a.simulate(&force, Vector2::zeros(), &up, 0.01, &mut rng).values;
            last_b = b.simulate(&force, Vector2::zeros(), &up, 0.01, &mut rng).values;
        }
        let diff: f64 = last_a.iter().zip(&last_b).map(|(x, y)| (x - y).abs()).sum();
        assert!(diff > 10.0, "two sensor ids responded identically: diff {diff}");
    }

    #[test]
    fn offset_calibration_recovers_offset() {
        let mut sensor = quiet_sensor(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let estimate = sensor.subtract_offset(1000, &mut rng);
        for (est, truth) in estimate.iter().zip(&sensor.offset) {
            assert_relative_eq!(est, truth, epsilon = 1e-12);
        }
    }

    #[test]
    fn offset_calibration_under_noise() {
        let mut sensor = quiet_sensor(4);
        sensor.noise_sigma = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        sensor.subtract_offset(1000, &mut rng);
        // Standard error of the mean: sigma/sqrt(n); allow 4 sigma.
        let bound = 4.0 * 2.0 / (1000.0f64).sqrt();
        for j in 0..TAXELS {
            for axis in 0..3 {
                assert!(
                    (sensor.calibrated_offset[j][axis] - sensor.offset[j][axis]).abs() <= bound,
                    "offset estimate outside the standard-error bound"
                );
            }
        }
        // Post-subtraction no-contact readings average near zero.
        let mut mean = 0.0;
        let n = 500;
        for _ in 0..n {
            let raw = sensor.simulate(&Vector3::zeros(), Vector2::zeros(), &Rotation3::identity(), 0.01, &mut rng);
            let cal = sensor.calibrate_reading(&raw);
            mean += cal.values.iter().sum::<f64>();
        }
        mean /= (n * READING_DIM) as f64;
        assert!(mean.abs() < 0.5);
    }

    #[test]
    fn gravity_term_follows_orientation() {
        let mut sensor = quiet_sensor(5);
        sensor.gravity_coupling = [Vector3::new(1.0, 1.0, 1.0); TAXELS];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let up = sensor
            .simulate(&Vector3::zeros(), Vector2::zeros(), &Rotation3::identity(), 0.01, &mut rng)
            .values;
        let flipped = Rotation3::from_scaled_axis(Vector3::new(std::f64::consts::PI, 0.0, 0.0));
        let down = sensor
            .simulate(&Vector3::zeros(), Vector2::zeros(), &flipped, 0.01, &mut rng)
            .values;
        // The z channel flips sign with the fingertip inverted.
        let up_z = up[2] - sensor.offset[0][2];
        let down_z = down[2] - sensor.offset[0][2];
        assert!(up_z * down_z < 0.0, "gravity response did not flip: {up_z} vs {down_z}");
    }
}
