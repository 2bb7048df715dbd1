//! Serial-chain hand kinematics.
//!
//! A [`ChainModel`] is a torso/arm/wrist chain shared by every finger
//! (the "common" block) plus one short chain per finger. Joint positions
//! are stacked as `q = [q_common, q_f1, .., q_fd]`, and all Jacobians are
//! expressed against that full vector: columns belonging to other fingers
//! are identically zero.
//!
//! Only revolute joints are supported. Forward kinematics and the
//! positional Jacobian are analytic; the Jacobian time-derivative product
//! `J̇·q̇` is obtained by central differences of the analytic Jacobian.

mod config;

pub use config::{chain_from_toml, chain_to_toml};

use nalgebra::{DMatrix, DVector, Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use std::ops::Range;
use thiserror::Error;

/// Step size (seconds) for the central-difference evaluation of `J̇·q̇`.
const JDOT_STEP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("finger index {finger} out of range (model has {count} fingers)")]
    FingerOutOfRange { finger: usize, count: usize },
    #[error("joint vector has length {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid chain model: {0}")]
    InvalidModel(String),
    #[error("chain config: {0}")]
    Config(String),
}

/// One revolute joint: a fixed transform from the parent frame followed by
/// a rotation about `axis`.
#[derive(Debug, Clone)]
pub struct JointSpec {
    pub axis: Unit<Vector3<f64>>,
    pub offset: Isometry3<f64>,
    pub lower: f64,
    pub upper: f64,
}

impl JointSpec {
    pub fn new(axis: Vector3<f64>, offset_xyz: Vector3<f64>, offset_rpy: Vector3<f64>, limits: (f64, f64)) -> Self {
        Self {
            axis: Unit::new_normalize(axis),
            offset: Isometry3::from_parts(
                Translation3::from(offset_xyz),
                UnitQuaternion::from_euler_angles(offset_rpy.x, offset_rpy.y, offset_rpy.z),
            ),
            lower: limits.0,
            upper: limits.1,
        }
    }
}

/// A finger: its own joints plus a fixed fingertip transform after the last joint.
#[derive(Debug, Clone)]
pub struct FingerChain {
    pub joints: Vec<JointSpec>,
    pub tip_offset: Isometry3<f64>,
}

/// Kinematic description of the hand: common chain plus `d` finger chains.
#[derive(Debug, Clone)]
pub struct ChainModel {
    common: Vec<JointSpec>,
    fingers: Vec<FingerChain>,
    /// Column range of each finger's joints in the stacked vector.
    finger_ranges: Vec<Range<usize>>,
    n_total: usize,
}

impl ChainModel {
    pub fn new(common: Vec<JointSpec>, fingers: Vec<FingerChain>) -> Result<Self, KinematicsError> {
        if common.is_empty() {
            return Err(KinematicsError::InvalidModel("need at least one common joint".into()));
        }
        if fingers.len() < 3 {
            return Err(KinematicsError::InvalidModel(format!(
                "need at least 3 fingers for a contact polygon, got {}",
                fingers.len()
            )));
        }
        let mut finger_ranges = Vec::with_capacity(fingers.len());
        let mut cursor = common.len();
        for finger in &fingers {
            if finger.joints.is_empty() {
                return Err(KinematicsError::InvalidModel("finger with no joints".into()));
            }
            finger_ranges.push(cursor..cursor + finger.joints.len());
            cursor += finger.joints.len();
        }
        for joint in common.iter().chain(fingers.iter().flat_map(|f| f.joints.iter())) {
            if joint.lower >= joint.upper {
                return Err(KinematicsError::InvalidModel(format!(
                    "joint limits must satisfy lower < upper, got [{}, {}]",
                    joint.lower, joint.upper
                )));
            }
        }
        Ok(Self { common, fingers, finger_ranges, n_total: cursor })
    }

    /// The bundled hand description: a 10-joint torso/arm/wrist chain and
    /// four fingers (two joints for thumb and index, one for the others).
    pub fn bundled_hand() -> Self {
        chain_from_toml(include_str!("../../configs/ergocub_like.toml"))
            .expect("bundled chain config must parse")
    }

    pub fn n_common(&self) -> usize {
        self.common.len()
    }

    pub fn finger_count(&self) -> usize {
        self.fingers.len()
    }

    /// Total stacked joint count `n_C + Σ n_Fi`.
    pub fn n_joints(&self) -> usize {
        self.n_total
    }

    pub fn common_joints(&self) -> &[JointSpec] {
        &self.common
    }

    pub fn fingers(&self) -> &[FingerChain] {
        &self.fingers
    }

    /// Slice of the stacked vector holding finger `i`'s joints.
    pub fn finger_range(&self, finger: usize) -> Range<usize> {
        self.finger_ranges[finger].clone()
    }

    pub fn lower_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.n_total, self.joints_iter().map(|j| j.lower))
    }

    pub fn upper_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.n_total, self.joints_iter().map(|j| j.upper))
    }

    fn joints_iter(&self) -> impl Iterator<Item = &JointSpec> {
        self.common.iter().chain(self.fingers.iter().flat_map(|f| f.joints.iter()))
    }

    fn check_finger(&self, finger: usize) -> Result<(), KinematicsError> {
        if finger >= self.fingers.len() {
            return Err(KinematicsError::FingerOutOfRange { finger, count: self.fingers.len() });
        }
        Ok(())
    }

    fn check_dim(&self, q: &DVector<f64>) -> Result<(), KinematicsError> {
        if q.len() != self.n_total {
            return Err(KinematicsError::DimensionMismatch { expected: self.n_total, got: q.len() });
        }
        Ok(())
    }

    /// Fingertip pose in the base frame.
    pub fn fingertip_pose(&self, q: &DVector<f64>, finger: usize) -> Result<Isometry3<f64>, KinematicsError> {
        self.check_finger(finger)?;
        self.check_dim(q)?;
        let mut transform = Isometry3::identity();
        for (joint, idx) in self.path_joints(finger) {
            transform *= joint.offset;
            transform *= joint_rotation(&joint.axis, q[idx]);
        }
        Ok(transform * self.fingers[finger].tip_offset)
    }

    /// Fingertip position in the base frame.
    pub fn forward_kinematics(&self, q: &DVector<f64>, finger: usize) -> Result<Vector3<f64>, KinematicsError> {
        Ok(self.fingertip_pose(q, finger)?.translation.vector)
    }

    /// Positional Jacobian of fingertip `finger` against the full stacked
    /// vector. Columns for the common block and this finger's block are
    /// `axis × (tip − joint_origin)`; every other column is zero.
    pub fn positional_jacobian(&self, q: &DVector<f64>, finger: usize) -> Result<DMatrix<f64>, KinematicsError> {
        self.check_finger(finger)?;
        self.check_dim(q)?;
        let mut transform = Isometry3::identity();
        let mut origins = Vec::with_capacity(self.common.len() + self.fingers[finger].joints.len());
        let mut axes = Vec::with_capacity(origins.capacity());
        let mut cols = Vec::with_capacity(origins.capacity());
        for (joint, idx) in self.path_joints(finger) {
            transform *= joint.offset;
            origins.push(transform.translation.vector);
            axes.push(transform.rotation * joint.axis.into_inner());
            cols.push(idx);
            transform *= joint_rotation(&joint.axis, q[idx]);
        }
        let tip = (transform * self.fingers[finger].tip_offset).translation.vector;

        let mut jac = DMatrix::zeros(3, self.n_total);
        for ((origin, axis), col) in origins.iter().zip(&axes).zip(&cols) {
            let column = axis.cross(&(tip - origin));
            jac.column_mut(*col).copy_from(&column);
        }
        Ok(jac)
    }

    /// The drift acceleration `J̇_{P,i}·q̇`, via central differences of the
    /// analytic Jacobian along the current velocity.
    pub fn jdot_qdot(&self, q: &DVector<f64>, qdot: &DVector<f64>, finger: usize) -> Result<Vector3<f64>, KinematicsError> {
        self.check_finger(finger)?;
        self.check_dim(q)?;
        self.check_dim(qdot)?;
        if qdot.iter().all(|v| *v == 0.0) {
            return Ok(Vector3::zeros());
        }
        let h = JDOT_STEP;
        let q_plus = q + qdot * h;
        let q_minus = q - qdot * h;
        let j_plus = self.positional_jacobian(&q_plus, finger)?;
        let j_minus = self.positional_jacobian(&q_minus, finger)?;
        let jdot = (j_plus - j_minus) / (2.0 * h);
        let v = &jdot * qdot;
        Ok(Vector3::new(v[0], v[1], v[2]))
    }

    /// Everything the controller needs about one finger at the current state.
    pub fn finger_kinematics(&self, state: &JointState, finger: usize) -> Result<FingerKinematics, KinematicsError> {
        let position = self.forward_kinematics(&state.q, finger)?;
        let jacobian = self.positional_jacobian(&state.q, finger)?;
        let velocity = {
            let v = &jacobian * &state.qdot;
            Vector3::new(v[0], v[1], v[2])
        };
        let jdot_qdot = self.jdot_qdot(&state.q, &state.qdot, finger)?;
        Ok(FingerKinematics { position, velocity, jacobian, jdot_qdot })
    }

    /// Joints along the chain to `finger`'s tip, with their stacked indices.
    fn path_joints(&self, finger: usize) -> impl Iterator<Item = (&JointSpec, usize)> {
        let range = self.finger_ranges[finger].clone();
        self.common
            .iter()
            .enumerate()
            .map(|(i, j)| (j, i))
            .chain(self.fingers[finger].joints.iter().zip(range))
    }
}

fn joint_rotation(axis: &Unit<Vector3<f64>>, angle: f64) -> Isometry3<f64> {
    Isometry3::from_parts(Translation3::identity(), UnitQuaternion::from_axis_angle(axis, angle))
}

/// Stacked joint positions and velocities, layout `[common, f1, .., fd]`.
#[derive(Debug, Clone)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl JointState {
    pub fn new(model: &ChainModel, q: DVector<f64>, qdot: DVector<f64>) -> Result<Self, KinematicsError> {
        model.check_dim(&q)?;
        model.check_dim(&qdot)?;
        Ok(Self { q, qdot })
    }

    pub fn zeros(model: &ChainModel) -> Self {
        Self { q: DVector::zeros(model.n_joints()), qdot: DVector::zeros(model.n_joints()) }
    }

    /// Clamp positions into the joint range.
    pub fn clamp_positions(&mut self, model: &ChainModel) {
        for (i, joint) in model.joints_iter().enumerate() {
            self.q[i] = self.q[i].clamp(joint.lower, joint.upper);
        }
    }
}

/// Per-finger kinematic quantities consumed by the controller tasks.
#[derive(Debug, Clone)]
pub struct FingerKinematics {
    /// Fingertip position `D_i` (m).
    pub position: Vector3<f64>,
    /// Fingertip velocity `Ḋ_i` (m/s).
    pub velocity: Vector3<f64>,
    /// Positional Jacobian, 3 × n_joints.
    pub jacobian: DMatrix<f64>,
    /// `J̇·q̇` drift term (m/s²).
    pub jdot_qdot: Vector3<f64>,
}
