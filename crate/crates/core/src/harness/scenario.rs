//! Scenario and suite descriptions.
//!
//! The five bundled object profiles mirror the experiment set: three tea
//! boxes of increasing mass (with friction growing alongside), a light
//! rolling ball, and a slick aluminum box. Start positions 1–5 uniformly
//! divide the tray along its major axis. Friction coefficients, restitution
//! and fall multipliers are free parameters of the synthetic plant, chosen
//! so the qualitative difficulty ordering of the original set emerges.

use crate::sim::{EstimatorMode, ObjectState, TrayModel};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario config: {0}")]
    Parse(String),
    #[error("unknown object profile {0}, expected 1..=5")]
    UnknownProfile(u8),
    #[error("start position {0} out of range 1..=5")]
    BadPosition(u8),
    #[error("control_hz must be 50 or 100, got {0}")]
    BadRate(u32),
    #[error("scenario io: {0}")]
    Io(#[from] std::io::Error),
}

/// Start placement: an indexed position on the tray's major axis or an
/// explicit tray-frame coordinate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartPosition {
    Indexed(u8),
    Explicit([f64; 2]),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub mass: f64,
    pub mu_s: f64,
    pub mu_k: f64,
    pub restitution: f64,
    /// Scales the barrier escape speed; boxes must tip their center of
    /// mass over the barrier and thus tolerate faster impacts than the
    /// point-mass energy argument suggests.
    pub fall_multiplier: f64,
    pub start: StartPosition,
}

impl ObjectSpec {
    /// Bundled profile by experiment object number (1..=5).
    pub fn profile(number: u8) -> Result<Self, ScenarioError> {
        let (mass, mu_s, mu_k, restitution, fall_multiplier) = match number {
            1 => (0.1227, 0.35, 0.28, 0.25, 1.8),
            2 => (0.1526, 0.36, 0.29, 0.25, 1.6),
            3 => (0.2162, 0.45, 0.33, 0.25, 1.35),
            4 => (0.0986, 0.12, 0.10, 0.30, 1.7),
            5 => (0.1256, 0.24, 0.20, 0.30, 2.1),
            other => return Err(ScenarioError::UnknownProfile(other)),
        };
        Ok(Self { mass, mu_s, mu_k, restitution, fall_multiplier, start: StartPosition::Indexed(3) })
    }

    pub fn with_start(mut self, start: StartPosition) -> Self {
        self.start = start;
        self
    }

    /// Tray-frame start coordinate (m) before jitter.
    pub fn start_coordinates(&self, tray: &TrayModel) -> Result<Vector2<f64>, ScenarioError> {
        match self.start {
            StartPosition::Explicit([x, y]) => Ok(Vector2::new(x, y)),
            StartPosition::Indexed(k) => {
                if !(1..=5).contains(&k) {
                    return Err(ScenarioError::BadPosition(k));
                }
                Ok(Vector2::new(position_coordinate(k, tray), 0.0))
            }
        }
    }

    pub fn build(&self, position: Vector2<f64>, tray: &TrayModel) -> ObjectState {
        ObjectState::new(
            self.mass,
            position,
            self.mu_s,
            self.mu_k,
            self.restitution,
            tray.barrier_escape_speed() * self.fall_multiplier,
        )
    }
}

/// Position `k` of 5 along the major axis: uniform division of the tray.
pub fn position_coordinate(k: u8, tray: &TrayModel) -> f64 {
    -tray.length / 2.0 + f64::from(k) * tray.length / 6.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub objects: Vec<ObjectSpec>,
    pub control_hz: u32,
    pub estimator: EstimatorMode,
    /// Optional gains file (TOML); defaults otherwise.
    pub gains: Option<PathBuf>,
    /// Optional chain description; the bundled hand otherwise.
    pub chain: Option<PathBuf>,
    pub seed: u64,
    pub max_time: f64,
    pub tray_center_offset: [f64; 2],
    pub strict_kinematics: bool,
    pub joint_bias_fraction: f64,
    pub keep_in_touch: bool,
    /// Uniform start-position jitter per episode (m).
    pub start_jitter: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            objects: vec![ObjectSpec::profile(5).expect("profile 5 exists")],
            control_hz: 100,
            estimator: EstimatorMode::PerSensor,
            gains: None,
            chain: None,
            seed: 0,
            max_time: 120.0,
            tray_center_offset: [-0.025, 0.0],
            strict_kinematics: false,
            joint_bias_fraction: 0.0,
            keep_in_touch: true,
            start_jitter: 0.005,
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.control_hz != 100 && self.control_hz != 50 {
            return Err(ScenarioError::BadRate(self.control_hz));
        }
        for spec in &self.objects {
            spec.start_coordinates(&TrayModel::default())?;
        }
        Ok(())
    }
}

/// The Table-style sweep: object profiles × positions × repetitions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Suite {
    pub objects: Vec<u8>,
    pub positions: Vec<u8>,
    pub repetitions: u32,
    pub control_hz: u32,
    pub estimator: EstimatorMode,
    pub base_seed: u64,
    pub max_time: f64,
    pub tray_center_offset: [f64; 2],
    pub start_jitter: f64,
}

impl Default for Suite {
    fn default() -> Self {
        Self {
            objects: vec![1, 2, 3, 4, 5],
            positions: vec![1, 2, 3, 4, 5],
            repetitions: 3,
            control_hz: 100,
            estimator: EstimatorMode::PerSensor,
            base_seed: 7,
            max_time: 120.0,
            tray_center_offset: [-0.025, 0.0],
            start_jitter: 0.005,
        }
    }
}

impl Suite {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn episode_count(&self) -> usize {
        self.objects.len() * self.positions.len() * self.repetitions as usize
    }
}

/// Two-object robustness runs: three placement patterns, randomized trials.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MultiConfig {
    pub trials_per_placement: u32,
    pub control_hz: u32,
    pub estimator: EstimatorMode,
    pub base_seed: u64,
    pub max_time: f64,
    /// Combined mass of the two boxes (kg).
    pub total_mass: f64,
    pub tray_center_offset: [f64; 2],
    /// Randomization radius of the placements (m).
    pub placement_jitter: f64,
}

impl Default for MultiConfig {
    fn default() -> Self {
        Self {
            trials_per_placement: 5,
            control_hz: 100,
            estimator: EstimatorMode::PerSensor,
            base_seed: 99,
            max_time: 120.0,
            total_mass: 0.299,
            tray_center_offset: [-0.025, 0.0],
            placement_jitter: 0.008,
        }
    }
}

impl MultiConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// The three multi-object placement patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    OppositeSides,
    SameSide,
    Center,
}

impl Placement {
    pub const ALL: [Placement; 3] = [Placement::OppositeSides, Placement::SameSide, Placement::Center];

    /// Nominal tray-frame coordinates of the two boxes.
    pub fn nominal_positions(&self) -> [Vector2<f64>; 2] {
        match self {
            Placement::OppositeSides => [Vector2::new(-0.10, 0.0), Vector2::new(0.10, 0.0)],
            Placement::SameSide => [Vector2::new(-0.105, -0.035), Vector2::new(-0.05, 0.035)],
            Placement::Center => [Vector2::new(-0.02, -0.02), Vector2::new(0.02, 0.02)],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn positions_divide_major_axis_uniformly() {
        let tray = TrayModel::default();
        let coords: Vec<f64> = (1..=5).map(|k| position_coordinate(k, &tray)).collect();
        for pair in coords.windows(2) {
            assert_relative_eq!(pair[1] - pair[0], tray.length / 6.0, epsilon = 1e-12);
        }
        assert_relative_eq!(coords[2], 0.0, epsilon = 1e-12);
        assert!(coords[0] > -tray.length / 2.0 && coords[4] < tray.length / 2.0);
    }

    #[test]
    fn position_4_nearest_the_polygon_centroid() {
        // With the default tray offset the fingertip-polygon centroid sits
        // at +offset in tray coordinates; position 4 must be its nearest
        // start position.
        let tray = TrayModel::default();
        let scenario = Scenario::default();
        let centroid_x = -scenario.tray_center_offset[0];
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for k in 1..=5u8 {
            let d = (position_coordinate(k, &tray) - centroid_x).abs();
            if d < best_dist {
                best_dist = d;
                best = k;
            }
        }
        assert_eq!(best, 4);
    }

    #[test]
    fn profiles_ordered_and_valid() {
        for k in 1..=5 {
            let p = ObjectSpec::profile(k).unwrap();
            assert!(p.mu_k <= p.mu_s);
            assert!(p.mass > 0.09 && p.mass < 0.3);
            assert!((0.0..=1.0).contains(&p.restitution));
        }
        assert!(ObjectSpec::profile(6).is_err());
        // Masses are the experiment values.
        assert_eq!(ObjectSpec::profile(1).unwrap().mass, 0.1227);
        assert_eq!(ObjectSpec::profile(2).unwrap().mass, 0.1526);
        assert_eq!(ObjectSpec::profile(3).unwrap().mass, 0.2162);
        assert_eq!(ObjectSpec::profile(4).unwrap().mass, 0.0986);
        assert_eq!(ObjectSpec::profile(5).unwrap().mass, 0.1256);
    }

    #[test]
    fn scenario_toml_round_trip() {
        let scenario = Scenario {
            objects: vec![ObjectSpec::profile(3).unwrap().with_start(StartPosition::Indexed(1))],
            control_hz: 50,
            estimator: EstimatorMode::Shared,
            seed: 17,
            ..Scenario::default()
        };
        let text = scenario.to_toml();
        let parsed = Scenario::from_toml(&text).unwrap();
        assert_eq!(parsed.control_hz, 50);
        assert_eq!(parsed.estimator, EstimatorMode::Shared);
        assert_eq!(parsed.seed, 17);
        assert_eq!(parsed.objects.len(), 1);
    }

    #[test]
    fn scenario_rejects_bad_rate() {
        let scenario = Scenario { control_hz: 60, ..Scenario::default() };
        assert!(scenario.validate().is_err());
    }

    #[test]
    fn explicit_start_positions_parse() {
        let text = r#"
            control_hz = 100
            [[objects]]
            mass = 0.1
            mu_s = 0.3
            mu_k = 0.2
            restitution = 0.3
            fall_multiplier = 1.0
            start = [0.01, -0.02]
        "#;
        let scenario = Scenario::from_toml(text).unwrap();
        let coords = scenario.objects[0].start_coordinates(&TrayModel::default()).unwrap();
        assert_eq!(coords, Vector2::new(0.01, -0.02));
    }
}
