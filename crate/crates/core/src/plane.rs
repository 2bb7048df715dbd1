//! The virtual support plane: frame bookkeeping, orthonormal projections,
//! center-of-pressure computation, and the CoP-driven rotation law.
//!
//! The plane frame carries its initial pose; the commanded rotation is
//! always applied to that initial orientation rather than chained onto the
//! previous pose, so the commanded tilt cannot accumulate beyond what the
//! PI law (plus its integral state) asks for.

use nalgebra::{Matrix3, Rotation3, Vector3};
use thiserror::Error;

/// Contact-force floor below which the CoP is undefined and plane
/// adaptation must be skipped for the step.
pub const CONTACT_FORCE_FLOOR: f64 = 0.05;

#[derive(Debug, Error)]
pub enum PlaneError {
    #[error("resultant normal force {resultant:.4} N is below the {floor:.2} N contact floor")]
    AllForcesBelowThreshold { resultant: f64, floor: f64 },
    #[error("forces/positions length mismatch: {forces} vs {positions}")]
    LengthMismatch { forces: usize, positions: usize },
}

/// Moving frame of the virtual plane with its (held) derivatives.
#[derive(Debug, Clone)]
pub struct PlaneFrame {
    pub origin: Vector3<f64>,
    /// Columns `[b, t, n]`: two in-plane axes and the unit normal.
    pub rotation: Rotation3<f64>,
    pub linear_velocity: Vector3<f64>,
    pub linear_acceleration: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
    pub angular_acceleration: Vector3<f64>,
    pub initial_origin: Vector3<f64>,
    pub initial_rotation: Rotation3<f64>,
}

impl PlaneFrame {
    /// A stationary plane whose current pose is also the reference pose.
    pub fn new(origin: Vector3<f64>, rotation: Rotation3<f64>) -> Self {
        Self {
            origin,
            rotation,
            linear_velocity: Vector3::zeros(),
            linear_acceleration: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            angular_acceleration: Vector3::zeros(),
            initial_origin: origin,
            initial_rotation: rotation,
        }
    }

    /// Horizontal plane through `origin` with the identity orientation.
    pub fn horizontal(origin: Vector3<f64>) -> Self {
        Self::new(origin, Rotation3::identity())
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.rotation.matrix().column(2).into()
    }

    pub fn axis_b(&self) -> Vector3<f64> {
        self.rotation.matrix().column(0).into()
    }

    pub fn axis_t(&self) -> Vector3<f64> {
        self.rotation.matrix().column(1).into()
    }

    /// Orthogonal projector onto the normal line, `P_n = n·nᵀ`.
    pub fn normal_projector(&self) -> Matrix3<f64> {
        let n = self.normal();
        n * n.transpose()
    }

    /// In-plane coordinates `(b·v, t·v)` of a base-frame vector.
    pub fn tangential_coords(&self, v: &Vector3<f64>) -> [f64; 2] {
        [self.axis_b().dot(v), self.axis_t().dot(v)]
    }

    /// Rotation orthonormality defect, for validity checks.
    pub fn orthonormality_defect(&self) -> f64 {
        let r = self.rotation.matrix();
        (r.transpose() * r - Matrix3::identity()).norm()
    }
}

/// Decomposition of a point against the plane: `proj = O + tangential`
/// and `proj = point + normal_offset`.
#[derive(Debug, Clone)]
pub struct Projection {
    /// Closest point on the plane, `D^Π`.
    pub projected: Vector3<f64>,
    /// In-plane displacement from the plane origin, `D_t^Π`.
    pub tangential: Vector3<f64>,
    /// Offset from the point to its projection along the normal, `D_n^Π`.
    pub normal_offset: Vector3<f64>,
}

/// Project a point orthogonally onto the plane.
pub fn project_point(plane: &PlaneFrame, point: &Vector3<f64>) -> Projection {
    let p_n = plane.normal_projector();
    let tangential = (Matrix3::identity() - p_n) * (point - plane.origin);
    let normal_offset = p_n * (plane.origin - point);
    Projection { projected: plane.origin + tangential, tangential, normal_offset }
}

/// Center of pressure of the current contact forces, plus the running
/// integral used by the rotation law. The integral is owned by whoever
/// drives the control loop and is threaded through [`compute_cop`].
#[derive(Debug, Clone)]
pub struct CopState {
    /// CoP position relative to the plane origin, in base coordinates.
    /// Lies in the plane's tangential subspace.
    pub cop: Vector3<f64>,
    /// Resultant of the clamped normal components (N).
    pub resultant: f64,
    /// Per-finger clamped normal components `R_{n,i}` (N).
    pub per_finger: Vec<f64>,
    /// Running integral of `s = cop × n` (m·s).
    pub s_integral: Vector3<f64>,
}

/// Compute the CoP as the normal-force-weighted mean of the fingertip
/// projections. Negative normal components are clamped to zero before
/// normalization (fingertips can only push; estimator noise can produce
/// small negatives).
pub fn compute_cop(
    plane: &PlaneFrame,
    forces: &[Vector3<f64>],
    finger_positions: &[Vector3<f64>],
    s_integral: Vector3<f64>,
) -> Result<CopState, PlaneError> {
    if forces.len() != finger_positions.len() {
        return Err(PlaneError::LengthMismatch { forces: forces.len(), positions: finger_positions.len() });
    }
    let n = plane.normal();
    let per_finger: Vec<f64> = forces.iter().map(|f| n.dot(f).max(0.0)).collect();
    let resultant: f64 = per_finger.iter().sum();
    if resultant <= CONTACT_FORCE_FLOOR {
        return Err(PlaneError::AllForcesBelowThreshold { resultant, floor: CONTACT_FORCE_FLOOR });
    }
    let mut cop = Vector3::zeros();
    for (rn, pos) in per_finger.iter().zip(finger_positions) {
        let tangential = project_point(plane, pos).tangential;
        cop += (rn / resultant) * tangential;
    }
    Ok(CopState { cop, resultant, per_finger, s_integral })
}

/// Gains of the CoP-to-rotation PI law.
#[derive(Debug, Clone, Copy)]
pub struct RotationGains {
    pub k_pe: f64,
    pub k_ie: f64,
    /// Saturation on the commanded axis-angle magnitude (rad). Bounding the
    /// magnitude bounds every axis component and the tilt of the normal.
    pub tilt_limit: f64,
}

/// PI rotation law: `s = cop × n`, `e = K_pe·s + K_ie·∫s`, `R_e = exp(ê)`.
///
/// The integral is updated with the current `s` before use, but frozen
/// (not committed) on any step where the saturation is active, so a
/// saturated command cannot wind it up.
pub fn rotation_from_cop(
    cop_state: &mut CopState,
    plane: &PlaneFrame,
    gains: &RotationGains,
    dt: f64,
) -> Rotation3<f64> {
    let n = plane.normal();
    let s = cop_state.cop.cross(&n);
    let tentative = cop_state.s_integral + s * dt;
    let mut e = gains.k_pe * s + gains.k_ie * tentative;
    let magnitude = e.norm();
    if magnitude > gains.tilt_limit {
        e *= gains.tilt_limit / magnitude;
    } else {
        cop_state.s_integral = tentative;
    }
    Rotation3::from_scaled_axis(e)
}

/// Command the plane pose: the rotation applies to the initial orientation
/// and the origin holds at its initial value; all derivatives are zero.
pub fn plane_trajectory(plane: &PlaneFrame, rotation_error: &Rotation3<f64>) -> PlaneFrame {
    PlaneFrame {
        origin: plane.initial_origin,
        rotation: rotation_error * plane.initial_rotation,
        linear_velocity: Vector3::zeros(),
        linear_acceleration: Vector3::zeros(),
        angular_velocity: Vector3::zeros(),
        angular_acceleration: Vector3::zeros(),
        initial_origin: plane.initial_origin,
        initial_rotation: plane.initial_rotation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_plane(rng: &mut ChaCha8Rng) -> PlaneFrame {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let angle = rng.random_range(-0.5..0.5);
        let rotation = Rotation3::from_scaled_axis(axis.normalize() * angle);
        let origin = Vector3::new(
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
        );
        PlaneFrame::new(origin, rotation)
    }

    fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
        Vector3::new(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        )
    }

    #[test]
    fn projection_fixed_point_on_plane() {
        let plane = PlaneFrame::horizontal(Vector3::new(0.1, 0.2, 0.3));
        let point = plane.origin + Vector3::new(0.05, -0.03, 0.0);
        let proj = project_point(&plane, &point);
        assert_relative_eq!(proj.normal_offset.norm(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(proj.projected, point, epsilon = 1e-15);
    }

    #[test]
    fn projection_pure_normal_offset() {
        let plane = PlaneFrame::horizontal(Vector3::new(0.0, 0.0, 0.2));
        let n = plane.normal();
        let point = plane.origin + 2.0 * n;
        let proj = project_point(&plane, &point);
        assert_relative_eq!(proj.normal_offset, -2.0 * n, epsilon = 1e-14);
        assert_relative_eq!(proj.projected, plane.origin, epsilon = 1e-14);
    }

    #[test]
    fn projection_matches_least_squares_oracle() {
        // Closest point on plane via explicit minimization of
        // ‖x − d‖² subject to nᵀ(x − o) = 0: x = d − n·nᵀ(d − o).
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let plane = random_plane(&mut rng);
            let d = random_vec(&mut rng, 1.0);
            let n = plane.normal();
            let oracle = d - n * n.dot(&(d - plane.origin));
            let proj = project_point(&plane, &d);
            assert_relative_eq!(proj.projected, oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn projection_decomposition_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..500 {
            let plane = random_plane(&mut rng);
            let d = random_vec(&mut rng, 1.0);
            let proj = project_point(&plane, &d);
            let lhs = plane.origin + proj.tangential;
            let rhs = d + proj.normal_offset;
            assert!((lhs - rhs).norm() <= 1e-12);
            assert!(plane.normal().dot(&proj.tangential).abs() <= 1e-12);
            let n = plane.normal();
            let parallel = proj.normal_offset - n * n.dot(&proj.normal_offset);
            assert!(parallel.norm() <= 1e-12);
        }
    }

    #[test]
    fn normal_projector_symmetric_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let plane = random_plane(&mut rng);
            let p = plane.normal_projector();
            assert!((p - p.transpose()).norm() <= 1e-14);
            assert!((p * p - p).norm() <= 1e-12);
        }
    }

    #[test]
    fn cop_symmetric_two_fingers() {
        let plane = PlaneFrame::horizontal(Vector3::zeros());
        let forces = vec![Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.0, 0.0, 1.0)];
        let positions = vec![Vector3::new(0.05, 0.0, 0.0), Vector3::new(-0.05, 0.0, 0.0)];
        let cop = compute_cop(&plane, &forces, &positions, Vector3::zeros()).unwrap();
        assert_relative_eq!(cop.cop.norm(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(cop.resultant, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn cop_single_contact() {
        let plane = PlaneFrame::horizontal(Vector3::zeros());
        let forces = vec![Vector3::zeros(), Vector3::new(0.0, 0.0, 0.7)];
        let positions = vec![Vector3::new(0.05, 0.0, 0.0), Vector3::new(-0.03, 0.02, 0.0)];
        let cop = compute_cop(&plane, &forces, &positions, Vector3::zeros()).unwrap();
        assert_relative_eq!(cop.cop, Vector3::new(-0.03, 0.02, 0.0), epsilon = 1e-14);
    }

    #[test]
    fn cop_all_forces_below_floor() {
        let plane = PlaneFrame::horizontal(Vector3::zeros());
        let forces = vec![Vector3::new(0.0, 0.0, 0.01); 4];
        let positions = vec![Vector3::new(0.05, 0.0, 0.0); 4];
        assert!(matches!(
            compute_cop(&plane, &forces, &positions, Vector3::zeros()),
            Err(PlaneError::AllForcesBelowThreshold { .. })
        ));
    }

    #[test]
    fn cop_matches_torque_balance_oracle() {
        // The CoP is the in-plane point where the net moment of the normal
        // forces has no tangential component: Σ R_i (p_i − c) × n = 0.
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..200 {
            let plane = random_plane(&mut rng);
            let n = plane.normal();
            let count = rng.random_range(3..=6);
            let mut forces = Vec::new();
            let mut positions = Vec::new();
            for _ in 0..count {
                let rn: f64 = rng.random_range(0.1..2.0);
                forces.push(n * rn);
                positions.push(plane.origin + random_vec(&mut rng, 0.1));
            }
            let cop = compute_cop(&plane, &forces, &positions, Vector3::zeros()).unwrap();
            let c = plane.origin + cop.cop;
            let mut moment = Vector3::zeros();
            for (f, p) in forces.iter().zip(&positions) {
                let proj = project_point(&plane, p).projected;
                moment += (proj - c).cross(f);
            }
            let tangential_moment = moment - n * n.dot(&moment);
            assert!(tangential_moment.norm() <= 1e-9, "residual {}", tangential_moment.norm());
        }
    }

    #[test]
    fn cop_convexity_and_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for _ in 0..300 {
            let plane = random_plane(&mut rng);
            let n = plane.normal();
            let count = rng.random_range(3..=5);
            let mut forces = Vec::new();
            let mut positions = Vec::new();
            for _ in 0..count {
                // Mix of pushing and (to-be-clamped) pulling forces.
                let rn: f64 = rng.random_range(-0.5..2.0);
                forces.push(n * rn + random_vec(&mut rng, 0.2));
                positions.push(plane.origin + random_vec(&mut rng, 0.1));
            }
            let Ok(cop) = compute_cop(&plane, &forces, &positions, Vector3::zeros()) else {
                continue;
            };
            let weights: Vec<f64> = cop.per_finger.iter().map(|r| r / cop.resultant).collect();
            assert!(weights.iter().all(|w| *w >= 0.0));
            assert_relative_eq!(weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            // Convex combination reproduces the cop.
            let mut combo = Vector3::zeros();
            for (w, p) in weights.iter().zip(&positions) {
                combo += *w * project_point(&plane, p).tangential;
            }
            assert_relative_eq!(combo, cop.cop, epsilon = 1e-12);
            // Uniform force scaling leaves the cop unchanged.
            let scaled: Vec<_> = forces.iter().map(|f| f * 3.7).collect();
            let cop2 = compute_cop(&plane, &scaled, &positions, Vector3::zeros()).unwrap();
            assert_relative_eq!(cop.cop, cop2.cop, epsilon = 1e-12);
        }
    }

    #[test]
    fn rotation_zero_error_is_identity() {
        let plane = PlaneFrame::horizontal(Vector3::zeros());
        let mut cop = CopState {
            cop: Vector3::zeros(),
            resultant: 1.0,
            per_finger: vec![1.0],
            s_integral: Vector3::zeros(),
        };
        let gains = RotationGains { k_pe: 100.0, k_ie: 1.0, tilt_limit: 0.5 };
        let r = rotation_from_cop(&mut cop, &plane, &gains, 0.01);
        assert!((r.matrix() - Matrix3::identity()).norm() <= 1e-15);
    }

    #[test]
    fn rotation_axis_orthogonal_to_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let gains = RotationGains { k_pe: 10.0, k_ie: 0.5, tilt_limit: 10.0 };
        for _ in 0..100 {
            let plane = random_plane(&mut rng);
            let n = plane.normal();
            let tangential = random_vec(&mut rng, 0.05);
            let cop_vec = tangential - n * n.dot(&tangential);
            let mut cop = CopState {
                cop: cop_vec,
                resultant: 1.0,
                per_finger: vec![1.0],
                s_integral: Vector3::zeros(),
            };
            let _ = rotation_from_cop(&mut cop, &plane, &gains, 0.01);
            // With zero prior integral the commanded axis is parallel to
            // s = cop × n, hence orthogonal to n.
            let s = cop_vec.cross(&n);
            assert!(n.dot(&s).abs() <= 1e-14);
        }
    }

    #[test]
    fn rotation_matches_quaternion_oracle() {
        // Hand-rolled quaternion exponential: q = (cos θ/2, sin θ/2 · axis).
        let e: Vector3<f64> = Vector3::new(0.0, 0.0, 0.2);
        let r = Rotation3::from_scaled_axis(e);
        let theta = e.norm();
        let axis = e / theta;
        let (w, s): (f64, f64) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let (x, y, z) = (axis.x * s, axis.y * s, axis.z * s);
        let oracle = Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        );
        assert!((r.matrix() - oracle).norm() <= 1e-10);
    }

    #[test]
    fn saturated_tilt_is_exactly_the_limit() {
        // A 1 rad commanded axis-angle saturates to the 30 degree limit, and
        // the resulting normal tilts by exactly that angle.
        let plane = PlaneFrame::horizontal(Vector3::zeros());
        let limit = 30.0_f64.to_radians();
        let gains = RotationGains { k_pe: 1.0, k_ie: 0.0, tilt_limit: limit };
        // cop × n with cop = (0, -1, 0) gives s = (-1, 0, 0)·(-1)… pick cop so |s| = 1.
        let mut cop = CopState {
            cop: Vector3::new(0.0, 1.0, 0.0),
            resultant: 1.0,
            per_finger: vec![1.0],
            s_integral: Vector3::zeros(),
        };
        let r = rotation_from_cop(&mut cop, &plane, &gains, 0.01);
        let commanded = plane_trajectory(&plane, &r);
        let tilt = plane.normal().dot(&commanded.normal()).clamp(-1.0, 1.0).acos();
        assert_relative_eq!(tilt, limit, epsilon = 1e-12);
        // Saturation freezes the integral.
        assert_eq!(cop.s_integral, Vector3::zeros());
    }

    #[test]
    fn tilt_never_exceeds_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let limit = 30.0_f64.to_radians();
        let gains = RotationGains { k_pe: 8000.0 * std::f64::consts::PI / 180.0, k_ie: 25.0 * std::f64::consts::PI / 180.0, tilt_limit: limit };
        for _ in 0..500 {
            let plane = random_plane(&mut rng);
            let n = plane.normal();
            let tangential = random_vec(&mut rng, 0.2);
            let mut cop = CopState {
                cop: tangential - n * n.dot(&tangential),
                resultant: 1.0,
                per_finger: vec![1.0],
                s_integral: random_vec(&mut rng, 0.5),
            };
            let r = rotation_from_cop(&mut cop, &plane, &gains, 0.01);
            assert!((r.matrix().transpose() * r.matrix() - Matrix3::identity()).norm() <= 1e-12);
            assert!(r.matrix().determinant() > 0.0);
            let commanded = plane_trajectory(&plane, &r);
            let tilt = plane
                .initial_rotation
                .matrix()
                .column(2)
                .dot(&commanded.normal())
                .clamp(-1.0, 1.0)
                .acos();
            assert!(tilt <= limit + 1e-9, "tilt {tilt} exceeds limit");
        }
    }

    #[test]
    fn trajectory_identity_returns_initial_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let mut plane = random_plane(&mut rng);
        // Move the plane somewhere else first.
        plane.rotation = Rotation3::from_scaled_axis(Vector3::new(0.2, 0.1, 0.0)) * plane.rotation;
        let commanded = plane_trajectory(&plane, &Rotation3::identity());
        assert_relative_eq!(
            (commanded.rotation.matrix() - plane.initial_rotation.matrix()).norm(),
            0.0,
            epsilon = 1e-15
        );
        assert_eq!(commanded.origin, plane.initial_origin);
    }

    #[test]
    fn trajectory_does_not_accumulate() {
        let plane = PlaneFrame::horizontal(Vector3::zeros());
        let r = Rotation3::from_scaled_axis(Vector3::new(0.1, -0.05, 0.0));
        let once = plane_trajectory(&plane, &r);
        let twice = plane_trajectory(&once, &r);
        assert!((once.rotation.matrix() - twice.rotation.matrix()).norm() <= 1e-15);
        assert_eq!(once.origin, twice.origin);
    }
}
