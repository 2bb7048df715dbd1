//! Force-aware multifingered balancing.
//!
//! A QP-based finger-position controller keeps the fingertips of a serial-
//! chain hand on a virtual plane, estimates the center of pressure from
//! fingertip force measurements, and tilts the plane to drive the CoP
//! toward the center of the contact polygon. The crate also ships the
//! synthetic tactile pipeline (taxel model, dataset generation, MLP force
//! regressor), a deterministic tray-and-object plant, and the experiment
//! harness that reproduces the balancing protocol.

pub mod control;
pub mod harness;
pub mod kinematics;
pub mod plane;
pub mod sensing;
pub mod sim;

pub use control::{ControlGains, Controller};
pub use kinematics::{ChainModel, JointState};
pub use plane::PlaneFrame;
