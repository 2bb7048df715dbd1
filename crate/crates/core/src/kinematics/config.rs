//! TOML chain descriptions.
//!
//! Format: one `[[common_joint]]` table per common joint, and per finger a
//! `[finger.N]` table (fingertip offset) with `[[finger.N.joint]]` tables.
//! Fingers are ordered by their numeric key.
//!
//! ```toml
//! [[common_joint]]
//! axis = [0.0, 0.0, 1.0]
//! offset_xyz_m = [0.0, 0.0, 0.12]
//! offset_rpy_rad = [0.0, 0.0, 0.0]
//! limits_rad = [-1.5, 1.5]
//!
//! [finger.1]
//! tip_offset_xyz_m = [0.0, -0.02, 0.02]
//!
//! [[finger.1.joint]]
//! axis = [-1.0, 0.0, 0.0]
//! offset_xyz_m = [0.06, 0.0, -0.035]
//! limits_rad = [-0.35, 1.25]
//! ```

use super::{ChainModel, FingerChain, JointSpec, KinematicsError};
use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Serialize, Deserialize)]
struct RawChain {
    #[serde(default)]
    common_joint: Vec<RawJoint>,
    #[serde(default)]
    finger: BTreeMap<String, RawFinger>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawJoint {
    axis: [f64; 3],
    offset_xyz_m: [f64; 3],
    #[serde(default)]
    offset_rpy_rad: [f64; 3],
    limits_rad: [f64; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct RawFinger {
    tip_offset_xyz_m: [f64; 3],
    #[serde(default)]
    tip_offset_rpy_rad: [f64; 3],
    #[serde(default)]
    joint: Vec<RawJoint>,
}

/// Parse a chain description. Axes are normalized on load; a clearly
/// non-unit axis (off by more than 1%) is rejected as a typo.
pub fn chain_from_toml(text: &str) -> Result<ChainModel, KinematicsError> {
    let raw: RawChain = toml::from_str(text).map_err(|e| KinematicsError::Config(e.to_string()))?;
    let common = raw
        .common_joint
        .iter()
        .map(convert_joint)
        .collect::<Result<Vec<_>, _>>()?;

    let mut keyed: Vec<(usize, &RawFinger)> = Vec::new();
    for (key, finger) in &raw.finger {
        let index: usize = key
            .parse()
            .map_err(|_| KinematicsError::Config(format!("finger key `{key}` is not a number")))?;
        keyed.push((index, finger));
    }
    keyed.sort_by_key(|(index, _)| *index);

    let fingers = keyed
        .iter()
        .map(|(_, raw)| {
            let joints = raw.joint.iter().map(convert_joint).collect::<Result<Vec<_>, _>>()?;
            Ok(FingerChain {
                joints,
                tip_offset: Isometry3::from_parts(
                    Translation3::new(raw.tip_offset_xyz_m[0], raw.tip_offset_xyz_m[1], raw.tip_offset_xyz_m[2]),
                    UnitQuaternion::from_euler_angles(
                        raw.tip_offset_rpy_rad[0],
                        raw.tip_offset_rpy_rad[1],
                        raw.tip_offset_rpy_rad[2],
                    ),
                ),
            })
        })
        .collect::<Result<Vec<_>, KinematicsError>>()?;

    ChainModel::new(common, fingers)
}

fn convert_joint(raw: &RawJoint) -> Result<JointSpec, KinematicsError> {
    let axis = Vector3::new(raw.axis[0], raw.axis[1], raw.axis[2]);
    let norm = axis.norm();
    if !(0.99..=1.01).contains(&norm) {
        return Err(KinematicsError::Config(format!(
            "joint axis {:?} has norm {norm:.4}, expected unit",
            raw.axis
        )));
    }
    if raw.limits_rad[0] >= raw.limits_rad[1] {
        return Err(KinematicsError::Config(format!(
            "joint limits {:?} must be ordered lo < hi",
            raw.limits_rad
        )));
    }
    Ok(JointSpec::new(
        axis,
        Vector3::new(raw.offset_xyz_m[0], raw.offset_xyz_m[1], raw.offset_xyz_m[2]),
        Vector3::new(raw.offset_rpy_rad[0], raw.offset_rpy_rad[1], raw.offset_rpy_rad[2]),
        (raw.limits_rad[0], raw.limits_rad[1]),
    ))
}

/// Serialize a model back to the TOML description format.
pub fn chain_to_toml(model: &ChainModel) -> String {
    let raw = RawChain {
        common_joint: model.common_joints().iter().map(raw_from_joint).collect(),
        finger: model
            .fingers()
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let rpy = euler_of(&f.tip_offset.rotation);
                (
                    (i + 1).to_string(),
                    RawFinger {
                        tip_offset_xyz_m: [
                            f.tip_offset.translation.x,
                            f.tip_offset.translation.y,
                            f.tip_offset.translation.z,
                        ],
                        tip_offset_rpy_rad: rpy,
                        joint: f.joints.iter().map(raw_from_joint).collect(),
                    },
                )
            })
            .collect(),
    };
    toml::to_string(&raw).expect("chain serialization cannot fail")
}

fn raw_from_joint(joint: &JointSpec) -> RawJoint {
    RawJoint {
        axis: [joint.axis.x, joint.axis.y, joint.axis.z],
        offset_xyz_m: [joint.offset.translation.x, joint.offset.translation.y, joint.offset.translation.z],
        offset_rpy_rad: euler_of(&joint.offset.rotation),
        limits_rad: [joint.lower, joint.upper],
    }
}

fn euler_of(q: &UnitQuaternion<f64>) -> [f64; 3] {
    let (r, p, y) = q.euler_angles();
    [r, p, y]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    #[test]
    fn parse_round_trip() {
        let model = ChainModel::bundled_hand();
        let text = chain_to_toml(&model);
        let reparsed = chain_from_toml(&text).unwrap();
        assert_eq!(reparsed.n_joints(), model.n_joints());
        let q = DVector::from_element(model.n_joints(), 0.1);
        for finger in 0..model.finger_count() {
            let a = model.forward_kinematics(&q, finger).unwrap();
            let b = reparsed.forward_kinematics(&q, finger).unwrap();
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn reject_bad_axis() {
        let text = r#"
            [[common_joint]]
            axis = [0.0, 0.0, 2.0]
            offset_xyz_m = [0.0, 0.0, 0.1]
            limits_rad = [-1.0, 1.0]
        "#;
        assert!(chain_from_toml(text).is_err());
    }

    #[test]
    fn reject_bad_limits() {
        let text = r#"
            [[common_joint]]
            axis = [0.0, 0.0, 1.0]
            offset_xyz_m = [0.0, 0.0, 0.1]
            limits_rad = [1.0, -1.0]
        "#;
        assert!(chain_from_toml(text).is_err());
    }
}
