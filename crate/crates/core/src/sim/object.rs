//! Planar point-mass objects sliding on the tray under Coulomb friction.
//!
//! Object state lives in the tray frame: 2D position and velocity on the
//! tray surface. Gravity is split into its in-plane and normal components
//! from the tray orientation; sticking inside the friction cone performs
//! no floating-point update at all, so resting positions are bit-stable.

use crate::sim::tray::TrayModel;
use crate::sim::GRAVITY;
use nalgebra::{Rotation3, Vector2, Vector3};

/// One object on the tray.
#[derive(Debug, Clone)]
pub struct ObjectState {
    pub mass: f64,
    /// Position in the tray frame (m).
    pub position: Vector2<f64>,
    /// Velocity in the tray frame (m/s).
    pub velocity: Vector2<f64>,
    pub mu_s: f64,
    pub mu_k: f64,
    pub restitution: f64,
    /// Barrier-crossing speed above which the object leaves the tray.
    pub fall_speed_threshold: f64,
    pub fallen: bool,
}

impl ObjectState {
    pub fn new(mass: f64, position: Vector2<f64>, mu_s: f64, mu_k: f64, restitution: f64, fall_speed_threshold: f64) -> Self {
        debug_assert!(mu_k <= mu_s, "kinetic friction must not exceed static");
        Self { mass, position, velocity: Vector2::zeros(), mu_s, mu_k, restitution, fall_speed_threshold, fallen: false }
    }
}

/// In-plane gravitational acceleration (tray frame) and the normal
/// gravity magnitude for the given tray orientation.
pub fn gravity_split(tray_rotation: &Rotation3<f64>) -> (Vector2<f64>, f64) {
    let g = Vector3::new(0.0, 0.0, -GRAVITY);
    let b: Vector3<f64> = tray_rotation.matrix().column(0).into();
    let t: Vector3<f64> = tray_rotation.matrix().column(1).into();
    let n: Vector3<f64> = tray_rotation.matrix().column(2).into();
    let tangential = Vector2::new(b.dot(&g), t.dot(&g));
    // Normal load vanishes if the tray ever passes vertical.
    let normal = (-n.dot(&g)).max(0.0);
    (tangential, normal)
}

/// Advance one substep of stick/slide dynamics (symplectic Euler).
pub fn step_object(obj: &mut ObjectState, tray_rotation: &Rotation3<f64>, dt: f64) {
    if obj.fallen {
        return;
    }
    let (g_t, g_n) = gravity_split(tray_rotation);

    let at_rest = obj.velocity == Vector2::zeros();
    if at_rest && g_t.norm() <= obj.mu_s * g_n {
        // Inside the static friction cone: nothing moves.
        return;
    }

    let direction = if at_rest { g_t.normalize() } else { obj.velocity.normalize() };
    let accel = g_t - obj.mu_k * g_n * direction;
    obj.velocity += accel * dt;
    obj.position += obj.velocity * dt;

    // Capture back into stick: friction can reverse the velocity within a
    // substep; if the remaining speed is below one substep of friction
    // deceleration and the cone holds, pin the object.
    if obj.velocity.norm() <= obj.mu_k * g_n * dt && g_t.norm() <= obj.mu_s * g_n {
        obj.velocity = Vector2::zeros();
    }
}

/// Barrier test after integration: reflect or fall at each crossed edge.
pub fn barrier_interaction(obj: &mut ObjectState, tray: &TrayModel) {
    if obj.fallen {
        return;
    }
    let (hx, hy) = tray.interior_half_extents();
    for axis in 0..2 {
        let half = if axis == 0 { hx } else { hy };
        let p = obj.position[axis];
        if p.abs() <= half {
            continue;
        }
        let normal_speed = obj.velocity[axis].abs();
        if normal_speed >= obj.fall_speed_threshold {
            obj.fallen = true;
            obj.position[axis] = p.clamp(-half, half);
            return;
        }
        // Reflect position overshoot and damp the normal velocity.
        let sign = p.signum();
        obj.position[axis] = sign * (2.0 * half - sign * p);
        obj.velocity[axis] *= -obj.restitution;
    }
}
