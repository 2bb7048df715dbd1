//! The per-tick finger-position controller.
//!
//! Each step consumes the estimated fingertip forces, adapts the plane pose
//! from the CoP error, assembles the task QP, integrates the solved joint
//! accelerations into references, and applies the keep-in-touch offsets.
//!
//! The controller runs on its own internal reference trajectory: forward
//! kinematics, Jacobians, and bounds use the integrated references, while
//! measured joint positions enter only through the keep-in-touch law. This
//! matches a position-controlled robot tracking the emitted references.

mod gains;
mod keep_in_touch;
pub mod solver;
pub mod tasks;

pub use gains::{ControlGains, GainsError, PosturalSign};
pub use keep_in_touch::KeepInTouchState;
pub use solver::{solve_box_qp, QpError, QpSolution};
pub use tasks::{acceleration_bounds, assemble, build_task_t1, build_task_t2, build_task_t3, QpProblem, TaskBlock};

use crate::kinematics::{ChainModel, FingerKinematics, JointState, KinematicsError};
use crate::plane::{self, PlaneFrame, Projection};
use nalgebra::{DVector, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Solver(#[from] QpError),
    #[error("controller expects {expected} finger forces, got {got}")]
    ForceCountMismatch { expected: usize, got: usize },
}

/// Per-tick sensor inputs.
pub struct ControlInput<'a> {
    /// Estimated fingertip forces in the base frame, one per finger.
    pub forces: &'a [Vector3<f64>],
    /// Measured joint positions (used by keep-in-touch only).
    pub q_measured: &'a DVector<f64>,
}

/// Everything a plant or logger wants to know about one control step.
#[derive(Debug, Clone)]
pub struct ControlOutput {
    /// Joint position references including keep-in-touch offsets.
    pub q_command: DVector<f64>,
    /// Solved joint accelerations.
    pub qddot: DVector<f64>,
    /// Commanded plane pose for this step.
    pub plane: PlaneFrame,
    /// CoP relative to the plane origin (base frame), when contact held.
    pub cop: Option<Vector3<f64>>,
    /// CoP minus fingertip-projection centroid, in plane coordinates (m).
    pub cop_error: Option<[f64; 2]>,
    /// Clamped per-finger normal force components (N).
    pub normal_components: Vec<f64>,
    /// Centroid of the tangential projections, relative to the origin.
    pub centroid: Vector3<f64>,
    /// True when the resultant normal force was below the contact floor
    /// and the plane held its previous pose.
    pub plane_adaptation_skipped: bool,
    pub solver_iterations: usize,
    pub solver_converged: bool,
}

pub struct Controller {
    model: ChainModel,
    gains: ControlGains,
    /// Postural reference.
    q0: DVector<f64>,
    /// Internal reference trajectory (integrated).
    state: JointState,
    plane: PlaneFrame,
    cop_integral: Vector3<f64>,
    kit: KeepInTouchState,
    kit_enabled: bool,
    warm_start: Option<DVector<f64>>,
}

impl Controller {
    /// Set up a controller at the given initial configuration. The plane
    /// starts horizontal through the fingertip centroid.
    pub fn new(model: ChainModel, gains: ControlGains, q0: DVector<f64>) -> Result<Self, ControlError> {
        let state = JointState::new(&model, q0.clone(), DVector::zeros(q0.len()))?;
        let mut centroid = Vector3::zeros();
        for finger in 0..model.finger_count() {
            centroid += model.forward_kinematics(&q0, finger)?;
        }
        centroid /= model.finger_count() as f64;
        let plane = PlaneFrame::horizontal(centroid);
        let kit = KeepInTouchState::new(&model);
        Ok(Self {
            model,
            gains,
            q0,
            state,
            plane,
            cop_integral: Vector3::zeros(),
            kit,
            kit_enabled: true,
            warm_start: None,
        })
    }

    pub fn set_keep_in_touch(&mut self, enabled: bool) {
        self.kit_enabled = enabled;
        if !enabled {
            self.kit.reset();
        }
    }

    pub fn model(&self) -> &ChainModel {
        &self.model
    }

    pub fn gains(&self) -> &ControlGains {
        &self.gains
    }

    pub fn plane(&self) -> &PlaneFrame {
        &self.plane
    }

    /// Internal reference state (the integrated trajectory).
    pub fn reference(&self) -> &JointState {
        &self.state
    }

    /// Run one control step at the configured rate.
    pub fn step(&mut self, input: &ControlInput) -> Result<ControlOutput, ControlError> {
        let d = self.model.finger_count();
        if input.forces.len() != d {
            return Err(ControlError::ForceCountMismatch { expected: d, got: input.forces.len() });
        }

        // Kinematics of the current reference state.
        let fingers: Vec<FingerKinematics> = (0..d)
            .map(|f| self.model.finger_kinematics(&self.state, f))
            .collect::<Result<_, _>>()?;
        let positions: Vec<Vector3<f64>> = fingers.iter().map(|k| k.position).collect();

        // CoP and plane adaptation. Below the contact floor the plane holds
        // its pose and the integral stays untouched.
        let mut plane_adaptation_skipped = false;
        let mut cop_rel = None;
        let mut normal_components = vec![0.0; d];
        match plane::compute_cop(&self.plane, input.forces, &positions, self.cop_integral) {
            Ok(mut cop_state) => {
                let rotation = plane::rotation_from_cop(
                    &mut cop_state,
                    &self.plane,
                    &self.gains.rotation_gains(),
                    self.gains.dt,
                );
                self.cop_integral = cop_state.s_integral;
                self.plane = plane::plane_trajectory(&self.plane, &rotation);
                normal_components.copy_from_slice(&cop_state.per_finger);
                cop_rel = Some(cop_state.cop);
            }
            Err(plane::PlaneError::AllForcesBelowThreshold { .. }) => {
                plane_adaptation_skipped = true;
            }
            Err(other) => {
                // Length mismatch was checked above; propagate defensively.
                debug_assert!(false, "unexpected cop error: {other}");
                plane_adaptation_skipped = true;
            }
        }

        // Projections onto the (possibly updated) plane.
        let projections: Vec<Projection> =
            positions.iter().map(|p| plane::project_point(&self.plane, p)).collect();
        let mut centroid = Vector3::zeros();
        for proj in &projections {
            centroid += proj.tangential;
        }
        centroid /= d as f64;

        // Tasks, bounds, solve.
        let mut task_blocks = build_task_t1(&fingers, &projections, &self.plane, &self.gains);
        task_blocks.push(build_task_t2(&fingers, &projections, &self.plane, &self.gains));
        task_blocks.push(build_task_t3(&self.state.q, &self.state.qdot, &self.q0, &self.gains));
        let bounds = acceleration_bounds(
            &self.state.q,
            &self.state.qdot,
            &self.model.lower_limits(),
            &self.model.upper_limits(),
            &self.gains,
        );
        let problem = assemble(&task_blocks, self.gains.w4, bounds)
            .expect("task blocks are built against the model dimension");
        let solution = solve_box_qp(&problem, self.warm_start.as_ref())?;
        self.warm_start = Some(solution.x.clone());

        // Semi-implicit Euler into the reference trajectory, then clamp.
        self.state.qdot += &solution.x * self.gains.dt;
        self.state.q += &self.state.qdot * self.gains.dt;
        self.state.clamp_positions(&self.model);

        // Keep-in-touch offsets on finger joints only.
        if self.kit_enabled {
            for finger in 0..d {
                self.kit.update_finger(
                    &self.model,
                    finger,
                    input.forces[finger].norm(),
                    &self.state.q,
                    input.q_measured,
                    &self.gains,
                );
            }
        }
        let mut q_command = self.state.q.clone();
        q_command += &self.kit.delta_q;
        // The clamp in the keep-in-touch law already enforces the upper
        // limit; clamp again to keep the invariant airtight.
        let upper = self.model.upper_limits();
        let lower = self.model.lower_limits();
        for i in 0..q_command.len() {
            q_command[i] = q_command[i].clamp(lower[i], upper[i]);
        }

        let cop_error = cop_rel.map(|c| {
            let err = c - centroid;
            self.plane.tangential_coords(&err)
        });

        Ok(ControlOutput {
            q_command,
            qddot: solution.x,
            plane: self.plane.clone(),
            cop: cop_rel,
            cop_error,
            normal_components,
            centroid,
            plane_adaptation_skipped,
            solver_iterations: solution.iterations,
            solver_converged: solution.converged,
        })
    }
}
