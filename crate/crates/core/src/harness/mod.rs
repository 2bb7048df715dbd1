//! Experiment harness: scenarios, episode execution, sweeps, ablations,
//! sensor calibration, and machine-readable reports.

mod calibrate;
mod episode;
mod metrics;
mod report;
mod scenario;
mod sweep;

pub use calibrate::{calibrate, CalibrationReport, CalibrationResult};
pub use episode::{run_episode, EpisodeRun, EstimatorBank, HarnessError};
pub use metrics::{
    cop_path_length_cm, metrics_from_outcome, metrics_from_trace, EpisodeMetrics, FailureCause,
    COP_MOVE_FLOOR,
};
pub use report::{
    read_trace_csv, write_multi_outputs, write_sweep_outputs, write_table_csv, write_trace_csv,
};
pub use scenario::{
    position_coordinate, MultiConfig, ObjectSpec, Placement, Scenario, ScenarioError,
    StartPosition, Suite,
};
pub use sweep::{
    aggregate, run_multi_object, run_sweep, EpisodeRecord, MultiObjectReport, ObjectAggregate,
    PlacementAggregate, SweepReport,
};
