//! Experiment sweeps: the object × position × repetition protocol and the
//! two-object robustness runs. Episodes execute in a worker pool; records
//! are reduced in index order so reports are deterministic.

use crate::harness::episode::{run_episode, EpisodeRun, EstimatorBank, HarnessError};
use crate::harness::metrics::EpisodeMetrics;
use crate::harness::scenario::{
    MultiConfig, ObjectSpec, Placement, Scenario, StartPosition, Suite,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: usize,
    pub object: u8,
    pub position: u8,
    pub repetition: u32,
    pub seed: u64,
    pub metrics: EpisodeMetrics,
}

/// Per-object aggregate row: mean time and CoP distance over successful
/// runs per position (None when no run succeeded), success rate per
/// position, and the row means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectAggregate {
    pub object: u8,
    pub time_s: Vec<Option<f64>>,
    pub time_mean_s: Option<f64>,
    pub cop_distance_cm: Vec<Option<f64>>,
    pub cop_distance_mean_cm: Option<f64>,
    pub success_rate: Vec<f64>,
    pub success_rate_mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub suite: Suite,
    pub episodes: Vec<EpisodeRecord>,
    pub per_object: Vec<ObjectAggregate>,
    pub mean_success_rate: f64,
}

/// Runs an episode for each (object, position, repetition) triple.
/// Episode `k` uses seed `base_seed + k`.
pub fn run_sweep(
    suite: &Suite,
    bank: &EstimatorBank,
) -> Result<(SweepReport, Vec<EpisodeRun>), HarnessError> {
    let mut plan: Vec<(usize, u8, u8, u32)> = Vec::with_capacity(suite.episode_count());
    let mut index = 0;
    for &object in &suite.objects {
        for &position in &suite.positions {
            for repetition in 0..suite.repetitions {
                plan.push((index, object, position, repetition));
                index += 1;
            }
        }
    }

    let mut runs: Vec<(EpisodeRecord, EpisodeRun)> = plan
        .into_par_iter()
        .map(|(index, object, position, repetition)| {
            let seed = suite.base_seed.wrapping_add(index as u64);
            let scenario = Scenario {
                objects: vec![ObjectSpec::profile(object)?.with_start(StartPosition::Indexed(position))],
                control_hz: suite.control_hz,
                estimator: suite.estimator,
                seed,
                max_time: suite.max_time,
                tray_center_offset: suite.tray_center_offset,
                start_jitter: suite.start_jitter,
                ..Scenario::default()
            };
            let run = run_episode(&scenario, bank)?;
            Ok((
                EpisodeRecord { index, object, position, repetition, seed, metrics: run.metrics.clone() },
                run,
            ))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    runs.sort_by_key(|(record, _)| record.index);

    let (records, episode_runs): (Vec<EpisodeRecord>, Vec<EpisodeRun>) = runs.into_iter().unzip();
    let report = aggregate(suite, records);
    Ok((report, episode_runs))
}

/// Reduce episode records into the per-object table.
pub fn aggregate(suite: &Suite, episodes: Vec<EpisodeRecord>) -> SweepReport {
    let mut per_object = Vec::with_capacity(suite.objects.len());
    for &object in &suite.objects {
        let mut time_s = Vec::with_capacity(suite.positions.len());
        let mut cop_cm = Vec::with_capacity(suite.positions.len());
        let mut success_rate = Vec::with_capacity(suite.positions.len());
        for &position in &suite.positions {
            let cell: Vec<&EpisodeRecord> = episodes
                .iter()
                .filter(|r| r.object == object && r.position == position)
                .collect();
            let successes: Vec<&EpisodeRecord> =
                cell.iter().filter(|r| r.metrics.success).copied().collect();
            success_rate.push(if cell.is_empty() {
                0.0
            } else {
                successes.len() as f64 / cell.len() as f64
            });
            // Only successful runs contribute to the time and CoP numbers.
            time_s.push(mean(successes.iter().filter_map(|r| r.metrics.time_to_convergence)));
            cop_cm.push(mean(successes.iter().map(|r| r.metrics.cop_path_length_cm)));
        }
        let time_mean_s = mean(time_s.iter().flatten().copied());
        let cop_mean = mean(cop_cm.iter().flatten().copied());
        let success_mean = success_rate.iter().sum::<f64>() / success_rate.len().max(1) as f64;
        per_object.push(ObjectAggregate {
            object,
            time_s,
            time_mean_s,
            cop_distance_cm: cop_cm,
            cop_distance_mean_cm: cop_mean,
            success_rate,
            success_rate_mean: success_mean,
        });
    }
    let mean_success_rate =
        per_object.iter().map(|o| o.success_rate_mean).sum::<f64>() / per_object.len().max(1) as f64;
    SweepReport { suite: suite.clone(), episodes, per_object, mean_success_rate }
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        sum += v;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacementAggregate {
    pub placement: Placement,
    pub success_rate: f64,
    pub mean_time_s: Option<f64>,
    pub mean_cop_distance_cm: Option<f64>,
    pub episodes: Vec<EpisodeRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiObjectReport {
    pub config: MultiConfig,
    pub placements: Vec<PlacementAggregate>,
}

/// Two identical boxes in three placement patterns, randomized per trial.
pub fn run_multi_object(
    config: &MultiConfig,
    bank: &EstimatorBank,
) -> Result<(MultiObjectReport, Vec<EpisodeRun>), HarnessError> {
    let box_mass = config.total_mass / 2.0;
    let template = {
        // The two boxes share the slick-box profile, scaled to half the
        // combined mass.
        let mut spec = ObjectSpec::profile(5).expect("profile 5 exists");
        spec.mass = box_mass;
        spec
    };

    let mut plan: Vec<(usize, Placement, u32)> = Vec::new();
    let mut index = 0;
    for placement in Placement::ALL {
        for trial in 0..config.trials_per_placement {
            plan.push((index, placement, trial));
            index += 1;
        }
    }

    let mut runs: Vec<(usize, Placement, EpisodeRecord, EpisodeRun)> = plan
        .into_par_iter()
        .map(|(index, placement, trial)| {
            let seed = config.base_seed.wrapping_add(index as u64);
            // Placement randomization, separate from the episode noise.
            let mut jitter_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x5851_F42D_4C95_7F2D));
            let objects = placement
                .nominal_positions()
                .iter()
                .map(|nominal| {
                    let dx = jitter_rng.random_range(-config.placement_jitter..config.placement_jitter);
                    let dy = jitter_rng.random_range(-config.placement_jitter..config.placement_jitter);
                    template.clone().with_start(StartPosition::Explicit([nominal.x + dx, nominal.y + dy]))
                })
                .collect();
            let scenario = Scenario {
                objects,
                control_hz: config.control_hz,
                estimator: config.estimator,
                seed,
                max_time: config.max_time,
                tray_center_offset: config.tray_center_offset,
                start_jitter: 0.0,
                ..Scenario::default()
            };
            let run = run_episode(&scenario, bank)?;
            let record = EpisodeRecord {
                index,
                object: 5,
                position: 0,
                repetition: trial,
                seed,
                metrics: run.metrics.clone(),
            };
            Ok((index, placement, record, run))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    runs.sort_by_key(|(index, ..)| *index);

    let mut placements = Vec::new();
    let mut episode_runs = Vec::new();
    for placement in Placement::ALL {
        let records: Vec<EpisodeRecord> = runs
            .iter()
            .filter(|(_, p, ..)| *p == placement)
            .map(|(_, _, record, _)| record.clone())
            .collect();
        let successes: Vec<&EpisodeRecord> = records.iter().filter(|r| r.metrics.success).collect();
        placements.push(PlacementAggregate {
            placement,
            success_rate: successes.len() as f64 / records.len().max(1) as f64,
            mean_time_s: mean(successes.iter().filter_map(|r| r.metrics.time_to_convergence)),
            mean_cop_distance_cm: mean(successes.iter().map(|r| r.metrics.cop_path_length_cm)),
            episodes: records,
        });
    }
    for (_, _, _, run) in runs {
        episode_runs.push(run);
    }
    Ok((MultiObjectReport { config: config.clone(), placements }, episode_runs))
}
