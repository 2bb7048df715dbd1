//! Machine-readable experiment outputs: `metrics.json`, the wide-format
//! `table1.csv`, and per-episode `trace.csv` files.

use crate::harness::episode::{EpisodeRun, HarnessError};
use crate::harness::sweep::{MultiObjectReport, SweepReport};
use crate::sim::TraceRow;
use std::fmt::Write as _;
use std::path::Path;

/// Write one trace as CSV: one row per control tick with the stacked joint
/// commands, the CoP error in plane coordinates, the actual tray tilt, the
/// estimated per-finger normal components, object positions in the tray
/// frame, and the tick's events.
pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<(), HarnessError> {
    let mut out = String::new();
    let n_q = rows.first().map_or(0, |r| r.q.len());
    let n_f = rows.first().map_or(0, |r| r.rn_est.len());
    let n_obj = rows.first().map_or(0, |r| r.objects.len());
    out.push('t');
    for i in 0..n_q {
        write!(out, ",q{i}").unwrap();
    }
    out.push_str(",cop_x,cop_y,plane_tilt_x,plane_tilt_y");
    for i in 1..=n_f {
        write!(out, ",Rn_{i}").unwrap();
    }
    for k in 1..=n_obj {
        write!(out, ",obj{k}_x,obj{k}_y").unwrap();
    }
    out.push_str(",event\n");

    for row in rows {
        write!(out, "{}", row.t).unwrap();
        for v in &row.q {
            write!(out, ",{v}").unwrap();
        }
        write!(out, ",{},{}", row.cop_err[0], row.cop_err[1]).unwrap();
        write!(out, ",{},{}", row.plane_tilt[0], row.plane_tilt[1]).unwrap();
        for v in &row.rn_est {
            write!(out, ",{v}").unwrap();
        }
        for o in &row.objects {
            write!(out, ",{},{}", o[0], o[1]).unwrap();
        }
        out.push(',');
        out.push_str(&row.event);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parse a trace CSV back into rows (used to recompute metrics from disk).
pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let columns: Vec<&str> = header.split(',').collect();
    let q_cols = columns.iter().filter(|c| c.starts_with('q')).count();
    let f_cols = columns.iter().filter(|c| c.starts_with("Rn_")).count();
    let obj_cols = columns.iter().filter(|c| c.starts_with("obj") && c.ends_with("_x")).count();

    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let mut cursor = 0;
        let mut next = |n: usize| {
            let slice = &fields[cursor..cursor + n];
            cursor += n;
            slice.iter().map(|v| v.parse::<f64>().unwrap_or(f64::NAN)).collect::<Vec<f64>>()
        };
        let t = next(1)[0];
        let q = next(q_cols);
        let cop = next(2);
        let tilt = next(2);
        let rn = next(f_cols);
        let objs = next(2 * obj_cols);
        let event = fields[cursor..].join(",");
        rows.push(TraceRow {
            t,
            q,
            cop_err: [cop[0], cop[1]],
            plane_tilt: [tilt[0], tilt[1]],
            rn_est: rn,
            objects: objs.chunks(2).map(|c| [c[0], c[1]]).collect(),
            event,
        });
    }
    Ok(rows)
}

fn cell(value: &Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.2}"),
        None => String::new(),
    }
}

/// Wide-format per-object table: time, CoP distance, and success rate per
/// position plus the means. Cells without a successful run stay empty.
pub fn write_table_csv(path: &Path, report: &SweepReport) -> Result<(), HarnessError> {
    let positions = &report.suite.positions;
    let mut out = String::from("object");
    for p in positions {
        write!(out, ",time_p{p}_s").unwrap();
    }
    out.push_str(",time_mean_s");
    for p in positions {
        write!(out, ",cop_p{p}_cm").unwrap();
    }
    out.push_str(",cop_mean_cm");
    for p in positions {
        write!(out, ",success_p{p}").unwrap();
    }
    out.push_str(",success_mean\n");

    for row in &report.per_object {
        write!(out, "{}", row.object).unwrap();
        for v in &row.time_s {
            write!(out, ",{}", cell(v)).unwrap();
        }
        write!(out, ",{}", cell(&row.time_mean_s)).unwrap();
        for v in &row.cop_distance_cm {
            write!(out, ",{}", cell(v)).unwrap();
        }
        write!(out, ",{}", cell(&row.cop_distance_mean_cm)).unwrap();
        for v in &row.success_rate {
            write!(out, ",{v:.3}").unwrap();
        }
        writeln!(out, ",{:.3}", row.success_rate_mean).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Write the full sweep artifacts into `dir`.
pub fn write_sweep_outputs(
    dir: &Path,
    report: &SweepReport,
    runs: &[EpisodeRun],
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(report)?)?;
    write_table_csv(&dir.join("table1.csv"), report)?;
    let episodes_dir = dir.join("episodes");
    std::fs::create_dir_all(&episodes_dir)?;
    for (record, run) in report.episodes.iter().zip(runs) {
        let name = format!(
            "ep{:03}_obj{}_pos{}_rep{}",
            record.index, record.object, record.position, record.repetition
        );
        let ep_dir = episodes_dir.join(name);
        std::fs::create_dir_all(&ep_dir)?;
        write_trace_csv(&ep_dir.join("trace.csv"), &run.rows)?;
    }
    Ok(())
}

pub fn write_multi_outputs(
    dir: &Path,
    report: &MultiObjectReport,
    runs: &[EpisodeRun],
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(report)?)?;
    let episodes_dir = dir.join("episodes");
    std::fs::create_dir_all(&episodes_dir)?;
    let mut index = 0usize;
    for placement in &report.placements {
        for record in &placement.episodes {
            let name = format!("ep{:03}_{:?}_trial{}", record.index, placement.placement, record.repetition);
            let ep_dir = episodes_dir.join(name.to_lowercase());
            std::fs::create_dir_all(&ep_dir)?;
            write_trace_csv(&ep_dir.join("trace.csv"), &runs[index].rows)?;
            index += 1;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics;

    fn sample_rows() -> Vec<TraceRow> {
        (0..20)
            .map(|k| TraceRow {
                t: k as f64 * 0.01,
                q: vec![0.1 * k as f64, -0.2],
                cop_err: if k == 3 { [f64::NAN, f64::NAN] } else { [0.001 * k as f64, -0.02] },
                plane_tilt: [0.05, -0.01],
                rn_est: vec![1.0, 0.5, 0.25, 0.25],
                objects: vec![[0.01, 0.02]],
                event: if k == 7 { "load_outside_support".into() } else { String::new() },
            })
            .collect()
    }

    #[test]
    fn trace_round_trip_preserves_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let rows = sample_rows();
        write_trace_csv(&path, &rows).unwrap();
        let loaded = read_trace_csv(&path).unwrap();
        assert_eq!(loaded.len(), rows.len());
        for (a, b) in rows.iter().zip(&loaded) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.q, b.q);
            assert!(
                (a.cop_err[0] == b.cop_err[0])
                    || (a.cop_err[0].is_nan() && b.cop_err[0].is_nan())
            );
            assert_eq!(a.event, b.event);
        }
        let m1 = metrics::cop_path_length_cm(&rows);
        let m2 = metrics::cop_path_length_cm(&loaded);
        assert_eq!(m1, m2);
    }

    #[test]
    fn trace_header_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        write_trace_csv(&path, &sample_rows()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "t,q0,q1,cop_x,cop_y,plane_tilt_x,plane_tilt_y,Rn_1,Rn_2,Rn_3,Rn_4,obj1_x,obj1_y,event"
        );
    }
}
