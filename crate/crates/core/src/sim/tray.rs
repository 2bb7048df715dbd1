//! Tray geometry and inertial parameters.

use serde::{Deserialize, Serialize};

/// Rigid tray with barriers along all four edges. Defaults follow the
/// physical tray used in the balancing experiments: 250 g, 27 cm × 17 cm,
/// 2 cm barriers of 5 mm thickness.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrayModel {
    pub length: f64,
    pub width: f64,
    pub barrier_height: f64,
    pub barrier_thickness: f64,
    pub mass: f64,
}

impl Default for TrayModel {
    fn default() -> Self {
        Self { length: 0.27, width: 0.17, barrier_height: 0.02, barrier_thickness: 0.005, mass: 0.25 }
    }
}

impl TrayModel {
    /// Half-extents of the interior surface an object can occupy,
    /// i.e. inside the barriers.
    pub fn interior_half_extents(&self) -> (f64, f64) {
        (
            self.length / 2.0 - self.barrier_thickness,
            self.width / 2.0 - self.barrier_thickness,
        )
    }

    /// Barrier-climb escape speed from the energy argument
    /// `m·g·h = ½·m·v²`, independent of mass.
    pub fn barrier_escape_speed(&self) -> f64 {
        (2.0 * crate::sim::GRAVITY * self.barrier_height).sqrt()
    }

    pub fn validate(&self) -> bool {
        self.length > 0.0
            && self.width > 0.0
            && self.barrier_height > 0.0
            && self.barrier_thickness >= 0.0
            && self.mass > 0.0
            && self.barrier_thickness * 2.0 < self.width.min(self.length)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_dimensions() {
        let tray = TrayModel::default();
        assert!(tray.validate());
        let (hx, hy) = tray.interior_half_extents();
        assert_relative_eq!(hx, 0.13, epsilon = 1e-12);
        assert_relative_eq!(hy, 0.08, epsilon = 1e-12);
    }

    #[test]
    fn escape_speed_from_energy_balance() {
        let tray = TrayModel::default();
        assert_relative_eq!(tray.barrier_escape_speed(), (2.0f64 * 9.81 * 0.02).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(tray.barrier_escape_speed(), 0.6264, epsilon = 1e-4);
    }
}
