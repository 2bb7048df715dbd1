//! Closed-loop plant: the tray tracking the commanded plane, objects
//! sliding under Coulomb friction, and the quasi-static distribution of
//! the support load onto the fingertip contacts.

mod contact;
mod object;
mod plant;
mod tray;

pub use contact::{distribute_contact_forces, ContactError, ContactSolution};
pub use object::{barrier_interaction, gravity_split, step_object, ObjectState};
pub use plant::{
    run_plant, EpisodeOutcome, EstimatorMode, PlantConfig, PlantError, PlantResult, TraceRow,
};
pub use tray::TrayModel;

/// Gravitational acceleration used throughout the plant (m/s²).
pub const GRAVITY: f64 = 9.81;
