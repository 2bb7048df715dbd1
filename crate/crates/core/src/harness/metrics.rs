//! Episode metrics: the convergence criterion and the CoP path length.
//!
//! Success means the estimated CoP stays within 3 cm of the fingertip
//! centroid for at least 5 s inside the episode budget, without a fall.
//! The CoP path length accumulates per-tick displacements, ignoring moves
//! under 5 mm to filter sensor noise. Metrics are pure functions of the
//! trace, so reports can always be recomputed from raw episode data.

use crate::sim::{EpisodeOutcome, TraceRow};
use serde::{Deserialize, Serialize};

/// Displacements below this are noise, not CoP motion (m).
pub const COP_MOVE_FLOOR: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    Fell,
    Timeout,
    Tipped,
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub success: bool,
    /// Time at which the sustained-convergence window completed (s).
    pub time_to_convergence: Option<f64>,
    /// Cumulative filtered CoP path (cm).
    pub cop_path_length_cm: f64,
    pub failure_cause: FailureCause,
}

/// Metrics from the plant outcome plus its trace.
pub fn metrics_from_outcome(outcome: &EpisodeOutcome, rows: &[TraceRow]) -> EpisodeMetrics {
    let cop_path_length_cm = cop_path_length_cm(rows);
    match outcome {
        EpisodeOutcome::Converged { time } => EpisodeMetrics {
            success: true,
            time_to_convergence: Some(*time),
            cop_path_length_cm,
            failure_cause: FailureCause::None,
        },
        EpisodeOutcome::Fell { .. } => EpisodeMetrics {
            success: false,
            time_to_convergence: None,
            cop_path_length_cm,
            failure_cause: FailureCause::Fell,
        },
        EpisodeOutcome::Tipped { .. } => EpisodeMetrics {
            success: false,
            time_to_convergence: None,
            cop_path_length_cm,
            failure_cause: FailureCause::Tipped,
        },
        EpisodeOutcome::Timeout => EpisodeMetrics {
            success: false,
            time_to_convergence: None,
            cop_path_length_cm,
            failure_cause: FailureCause::Timeout,
        },
    }
}

/// Filtered cumulative CoP path in centimeters.
pub fn cop_path_length_cm(rows: &[TraceRow]) -> f64 {
    let mut path = 0.0;
    for pair in rows.windows(2) {
        let a = pair[0].cop_err;
        let b = pair[1].cop_err;
        if a[0].is_nan() || b[0].is_nan() {
            continue;
        }
        let step = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        if step >= COP_MOVE_FLOOR {
            path += step;
        }
    }
    path * 100.0
}

/// Re-derive the full metrics from a raw trace alone: the convergence
/// clock from the CoP-error columns, the failure cause from the terminal
/// event. Must agree exactly with the online bookkeeping.
pub fn metrics_from_trace(rows: &[TraceRow], threshold: f64, window: f64) -> EpisodeMetrics {
    let cop_path = cop_path_length_cm(rows);
    let mut in_band_since: Option<f64> = None;
    for row in rows {
        let distance = (row.cop_err[0].powi(2) + row.cop_err[1].powi(2)).sqrt();
        if distance.is_finite() && distance < threshold {
            let since = *in_band_since.get_or_insert(row.t);
            if row.t - since >= window {
                return EpisodeMetrics {
                    success: true,
                    time_to_convergence: Some(row.t),
                    cop_path_length_cm: cop_path,
                    failure_cause: FailureCause::None,
                };
            }
        } else {
            in_band_since = None;
        }
    }
    let failure_cause = match rows.last().map(|r| r.event.as_str()) {
        Some("fell") => FailureCause::Fell,
        Some("tipped") => FailureCause::Tipped,
        _ => FailureCause::Timeout,
    };
    EpisodeMetrics { success: false, time_to_convergence: None, cop_path_length_cm: cop_path, failure_cause }
}
