//! Controller gains and their TOML representation.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GainsError {
    #[error("gains config: {0}")]
    Parse(String),
    #[error("gain `{name}` must be positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("k_l must lie in (0, 1], got {0}")]
    BadLimitFactor(f64),
}

/// Sign convention of the postural task.
///
/// `Stabilizing` drives joints back toward the reference posture.
/// `Verbatim` keeps the published sign, which feeds the position error
/// back positively; it is retained behind this switch for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosturalSign {
    Stabilizing,
    #[serde(rename = "paper", alias = "verbatim")]
    Verbatim,
}

/// All controller gains. Defaults are the experiment values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlGains {
    /// Task weights: fingers-on-plane, centroid, posture, regularizer.
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    /// Fingers-on-plane PD gains.
    pub k_np: f64,
    pub k_nd: f64,
    /// Centroid PD gains.
    pub k_tp: f64,
    pub k_td: f64,
    /// Postural PD gains.
    pub k_pq: f64,
    pub k_dq: f64,
    /// Acceleration-bound shrink factor, in (0, 1].
    pub k_l: f64,
    /// Control period (s).
    pub dt: f64,
    /// CoP rotation law PI gains (rad per m, rad per m·s).
    pub k_pe: f64,
    pub k_ie: f64,
    /// Keep-in-touch proportional gain (rad/N) and force threshold (N).
    pub k_pf: f64,
    pub f_th: f64,
    /// Recorded for completeness; appears in no implemented law.
    pub k_pomega: f64,
    /// Plane orientation saturation (rad).
    pub tilt_limit_rad: f64,
    pub postural_sign: PosturalSign,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self {
            w1: 10.0,
            w2: 10.0,
            w3: 0.01,
            w4: 2.5,
            k_np: 140.0,
            k_nd: 10.0,
            k_tp: 140.0,
            k_td: 10.0,
            k_pq: 15.0,
            k_dq: 5.0,
            k_l: 0.9,
            dt: 0.01,
            k_pe: 8000.0 * PI / 180.0,
            k_ie: 25.0 * PI / 180.0,
            k_pf: 50.0 * PI / 180.0,
            f_th: 0.15,
            k_pomega: 100.0,
            tilt_limit_rad: 30.0 * PI / 180.0,
            postural_sign: PosturalSign::Stabilizing,
        }
    }
}

impl ControlGains {
    /// Parse a gains file; omitted fields take their defaults.
    pub fn from_toml(text: &str) -> Result<Self, GainsError> {
        let gains: ControlGains = toml::from_str(text).map_err(|e| GainsError::Parse(e.to_string()))?;
        gains.validate()?;
        Ok(gains)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("gains serialization cannot fail")
    }

    pub fn validate(&self) -> Result<(), GainsError> {
        let positives: [(&'static str, f64); 14] = [
            ("w1", self.w1),
            ("w2", self.w2),
            ("w3", self.w3),
            ("w4", self.w4),
            ("k_np", self.k_np),
            ("k_nd", self.k_nd),
            ("k_tp", self.k_tp),
            ("k_td", self.k_td),
            ("k_pq", self.k_pq),
            ("k_dq", self.k_dq),
            ("dt", self.dt),
            ("k_pe", self.k_pe),
            ("k_ie", self.k_ie),
            ("f_th", self.f_th),
        ];
        for (name, value) in positives {
            if value <= 0.0 {
                return Err(GainsError::NotPositive { name, value });
            }
        }
        if !(self.k_l > 0.0 && self.k_l <= 1.0) {
            return Err(GainsError::BadLimitFactor(self.k_l));
        }
        Ok(())
    }

    pub fn rotation_gains(&self) -> crate::plane::RotationGains {
        crate::plane::RotationGains { k_pe: self.k_pe, k_ie: self.k_ie, tilt_limit: self.tilt_limit_rad }
    }

    /// Same gains with the control period of the given loop rate.
    pub fn with_rate(mut self, hz: u32) -> Self {
        self.dt = 1.0 / f64::from(hz);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_experiment_values() {
        let g = ControlGains::default();
        assert_eq!(g.w1, 10.0);
        assert_eq!(g.w3, 0.01);
        assert_eq!(g.w4, 2.5);
        assert_eq!(g.k_np, 140.0);
        assert_eq!(g.k_nd, 10.0);
        assert_eq!(g.k_pq, 15.0);
        assert_eq!(g.k_dq, 5.0);
        assert_eq!(g.k_l, 0.9);
        assert_eq!(g.dt, 0.01);
        assert!((g.k_pe - 8000.0 * PI / 180.0).abs() < 1e-12);
        assert!((g.k_ie - 25.0 * PI / 180.0).abs() < 1e-12);
        assert!((g.k_pf - 50.0 * PI / 180.0).abs() < 1e-12);
        assert_eq!(g.f_th, 0.15);
        assert_eq!(g.k_pomega, 100.0);
        assert!((g.tilt_limit_rad - PI / 6.0).abs() < 1e-12);
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let g = ControlGains::from_toml("w3 = 0.5\npostural_sign = \"paper\"\n").unwrap();
        assert_eq!(g.w3, 0.5);
        assert_eq!(g.w1, 10.0);
        assert_eq!(g.postural_sign, PosturalSign::Verbatim);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ControlGains::from_toml("k_l = 1.5").is_err());
        assert!(ControlGains::from_toml("w1 = -1.0").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let g = ControlGains::default();
        let text = g.to_toml();
        let g2 = ControlGains::from_toml(&text).unwrap();
        assert_eq!(g2.k_pe, g.k_pe);
        assert_eq!(g2.postural_sign, g.postural_sign);
    }
}
