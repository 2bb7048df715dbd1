//! Keep-in-touch compensation.
//!
//! A per-finger joint offset added on top of the QP references. Whenever a
//! finger's measured force drops below the threshold the offset closes the
//! finger, re-establishing contact lost to model or actuation error. The
//! offset never pushes a reference beyond the upper joint limit.

use crate::control::gains::ControlGains;
use crate::kinematics::ChainModel;
use nalgebra::DVector;

/// Deactivation happens above this multiple of the force threshold; the
/// band absorbs sensor hysteresis around the threshold.
const RELEASE_BAND: f64 = 1.5;

#[derive(Debug, Clone)]
pub struct KeepInTouchState {
    /// Offsets over the full stacked vector; nonzero only on finger joints.
    pub delta_q: DVector<f64>,
    /// Whether each finger is currently in its closing regime.
    pub closing: Vec<bool>,
}

impl KeepInTouchState {
    pub fn new(model: &ChainModel) -> Self {
        Self {
            delta_q: DVector::zeros(model.n_joints()),
            closing: vec![false; model.finger_count()],
        }
    }

    /// Update the offset for one finger from its measured force (N).
    ///
    /// While `force < F_th` the closing law runs; inside the release band
    /// the offset only shrinks as needed to respect the joint range; above
    /// the band the closing regime ends (the reached offset is held).
    pub fn update_finger(
        &mut self,
        model: &ChainModel,
        finger: usize,
        force: f64,
        q_reference: &DVector<f64>,
        q_measured: &DVector<f64>,
        gains: &ControlGains,
    ) {
        let upper = model.upper_limits();
        let range = model.finger_range(finger);
        if force < gains.f_th {
            self.closing[finger] = true;
            for idx in range {
                let headroom = upper[idx] - q_reference[idx];
                let raw = gains.k_pf * (gains.f_th - force) + q_measured[idx] - q_reference[idx];
                self.delta_q[idx] = raw.clamp(0.0, headroom.max(0.0));
            }
        } else {
            if force >= RELEASE_BAND * gains.f_th {
                self.closing[finger] = false;
            }
            for idx in range {
                let headroom = (upper[idx] - q_reference[idx]).max(0.0);
                if self.delta_q[idx] > headroom {
                    self.delta_q[idx] = headroom;
                }
            }
        }
    }

    pub fn reset(&mut self) {
        self.delta_q.fill(0.0);
        self.closing.iter_mut().for_each(|c| *c = false);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn setup() -> (ChainModel, KeepInTouchState, ControlGains) {
        let model = ChainModel::bundled_hand();
        let state = KeepInTouchState::new(&model);
        (model, state, ControlGains::default())
    }

    #[test]
    fn zero_activation_at_threshold() {
        let (model, mut kit, gains) = setup();
        let q = DVector::zeros(model.n_joints());
        kit.update_finger(&model, 0, gains.f_th, &q, &q, &gains);
        for idx in model.finger_range(0) {
            assert_eq!(kit.delta_q[idx], 0.0);
        }
        assert!(!kit.closing[0]);
    }

    #[test]
    fn zero_force_closing_magnitude() {
        // F = 0, q_m = q_ref: inner term is K_pf · F_th before clamping.
        let (model, mut kit, gains) = setup();
        let q = DVector::zeros(model.n_joints());
        kit.update_finger(&model, 1, 0.0, &q, &q, &gains);
        let expected = gains.k_pf * gains.f_th;
        for idx in model.finger_range(1) {
            assert_relative_eq!(kit.delta_q[idx], expected, epsilon = 1e-12);
        }
        assert!(kit.closing[1]);
    }

    #[test]
    fn clamped_at_upper_headroom() {
        let (model, mut kit, mut gains) = setup();
        gains.k_pf = 1e3; // force saturation
        let q = DVector::zeros(model.n_joints());
        kit.update_finger(&model, 2, 0.0, &q, &q, &gains);
        let upper = model.upper_limits();
        for idx in model.finger_range(2) {
            assert_eq!(kit.delta_q[idx], upper[idx]);
        }
    }

    #[test]
    fn offset_never_exceeds_reference_headroom() {
        // With the reference already near the limit, the held offset shrinks.
        let (model, mut kit, gains) = setup();
        let q = DVector::zeros(model.n_joints());
        kit.update_finger(&model, 0, 0.0, &q, &q, &gains);
        let upper = model.upper_limits();
        let mut q_high = q.clone();
        for idx in model.finger_range(0) {
            q_high[idx] = upper[idx] - 0.01;
        }
        kit.update_finger(&model, 0, gains.f_th * 1.2, &q_high, &q_high, &gains);
        for idx in model.finger_range(0) {
            assert!(kit.delta_q[idx] <= 0.01 + 1e-12);
            assert!(q_high[idx] + kit.delta_q[idx] <= upper[idx] + 1e-12);
        }
        // Force within the release band keeps the closing regime alive.
        assert!(kit.closing[0]);
        kit.update_finger(&model, 0, gains.f_th * 2.0, &q_high, &q_high, &gains);
        assert!(!kit.closing[0]);
    }
}
