//! Task construction and assembly of the per-step quadratic program.
//!
//! Each task contributes a weighted least-squares residual `‖A·q̈ − b‖²_W`.
//! Within a control step the plane is treated as stationary (its commanded
//! angular and linear rates are zero), so the projector derivative terms
//! drop out of the centroid task.

use crate::control::gains::{ControlGains, PosturalSign};
use crate::kinematics::FingerKinematics;
use crate::plane::{PlaneFrame, Projection};
use nalgebra::{DMatrix, DVector, Matrix3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("task dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// One weighted task block `‖A·q̈ − b‖²_W`.
#[derive(Debug, Clone)]
pub struct TaskBlock {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub weight: f64,
}

/// Assembled strictly convex box-constrained program
/// `min ½ q̈ᵀH q̈ + gᵀq̈  s.t.  lower ≤ q̈ ≤ upper`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

/// Joint acceleration bounds derived from the joint range: one step of the
/// bound keeps the position inside `[q_L, q_U]` with margin factor `k_l`.
pub fn acceleration_bounds(
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    lower_limits: &DVector<f64>,
    upper_limits: &DVector<f64>,
    gains: &ControlGains,
) -> (DVector<f64>, DVector<f64>) {
    let scale = gains.k_l / gains.dt;
    let c_l = scale * ((lower_limits - q) / gains.dt - qdot);
    let c_u = scale * ((upper_limits - q) / gains.dt - qdot);
    (c_l, c_u)
}

/// Fingers-on-plane task: per finger, impose critically stable dynamics on
/// the normal offset `D_n` so the fingertip converges to its projection.
pub fn build_task_t1(
    fingers: &[FingerKinematics],
    projections: &[Projection],
    plane: &PlaneFrame,
    gains: &ControlGains,
) -> Vec<TaskBlock> {
    let p_n = plane.normal_projector();
    fingers
        .iter()
        .zip(projections)
        .map(|(kin, proj)| {
            let a = p_n * &kin.jacobian;
            let a = DMatrix::from_iterator(3, a.ncols(), a.iter().copied());
            let dn_dot = p_n * (plane.linear_velocity - kin.velocity);
            let b3 = gains.k_nd * dn_dot
                + gains.k_np * proj.normal_offset
                + p_n * (plane.linear_acceleration - kin.jdot_qdot);
            TaskBlock { a, b: DVector::from_column_slice(b3.as_slice()), weight: gains.w1 }
        })
        .collect()
}

/// Centroid task: drive the mean of the tangential projections to the
/// plane origin with PD dynamics on `e_t = −(1/d)·Σ D_t`.
pub fn build_task_t2(
    fingers: &[FingerKinematics],
    projections: &[Projection],
    plane: &PlaneFrame,
    gains: &ControlGains,
) -> TaskBlock {
    let d = fingers.len() as f64;
    let tangent_projector = Matrix3::identity() - plane.normal_projector();

    let n_cols = fingers[0].jacobian.ncols();
    let mut jac_mean = DMatrix::zeros(3, n_cols);
    let mut e_t = nalgebra::Vector3::zeros();
    let mut e_t_dot = nalgebra::Vector3::zeros();
    let mut drift = nalgebra::Vector3::zeros();
    for (kin, proj) in fingers.iter().zip(projections) {
        jac_mean += &kin.jacobian;
        e_t -= proj.tangential;
        e_t_dot -= tangent_projector * (kin.velocity - plane.linear_velocity);
        drift += tangent_projector * (plane.linear_acceleration - kin.jdot_qdot);
    }
    jac_mean /= d;
    e_t /= d;
    e_t_dot /= d;
    drift /= d;

    let a = tangent_projector * jac_mean;
    let a = DMatrix::from_iterator(3, a.ncols(), a.iter().copied());
    let b3 = drift + gains.k_td * e_t_dot + gains.k_tp * e_t;
    TaskBlock { a, b: DVector::from_column_slice(b3.as_slice()), weight: gains.w2 }
}

/// Postural task: identity task matrix with a PD target around `q0`.
pub fn build_task_t3(q: &DVector<f64>, qdot: &DVector<f64>, q0: &DVector<f64>, gains: &ControlGains) -> TaskBlock {
    let position_term = match gains.postural_sign {
        PosturalSign::Stabilizing => gains.k_pq * (q0 - q),
        PosturalSign::Verbatim => gains.k_pq * (q - q0),
    };
    let b = -gains.k_dq * qdot + position_term;
    TaskBlock { a: DMatrix::identity(q.len(), q.len()), b, weight: gains.w3 }
}

/// Stack the tasks into the normal-equation form and add the `W4`
/// regularizer, which makes the Hessian strictly positive definite.
pub fn assemble(
    tasks: &[TaskBlock],
    w4: f64,
    bounds: (DVector<f64>, DVector<f64>),
) -> Result<QpProblem, TaskError> {
    let n = bounds.0.len();
    let mut h = DMatrix::<f64>::identity(n, n) * w4;
    let mut g = DVector::<f64>::zeros(n);
    for task in tasks {
        if task.a.ncols() != n {
            return Err(TaskError::DimensionMismatch { expected: n, got: task.a.ncols() });
        }
        let at = task.a.transpose();
        h += task.weight * (&at * &task.a);
        g -= task.weight * (&at * &task.b);
    }
    // Enforce exact symmetry against accumulation noise.
    let h = (&h + h.transpose()) * 0.5;
    Ok(QpProblem { h, g, lower: bounds.0, upper: bounds.1 })
}
