//! CSV and JSON emission. CSV floats carry four decimals; JSON is lossless.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use thiserror::Error;

use super::batch::{ModeSummary, WinCount};
use super::metrics::MetricsReport;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no reports to write")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

fn opt4(x: Option<f64>) -> String {
    x.map(f4).unwrap_or_default()
}

fn write_rows<W: Write>(w: W, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(&header)?;
    for r in rows {
        out.write_record(&r)?;
    }
    out.flush()?;
    Ok(())
}

/// One row per (mode, seed), in input order.
pub fn write_reports_csv<W: Write>(reports: &[MetricsReport], w: W) -> Result<(), ReportError> {
    let first = reports.first().ok_or(ReportError::Empty)?;
    let mut header: Vec<String> = [
        "mode",
        "seed",
        "query",
        "duration",
        "path_length",
        "explored_volume",
        "coverage_pct",
        "reachable_coverage_pct",
        "completed",
        "end_reason",
    ]
    .map(String::from)
    .to_vec();
    for t in &first.thresholds {
        let th = t.threshold;
        header.extend([
            format!("t_first_{th}"),
            format!("started_within_{th}"),
            format!("reached_{th}"),
            format!("total_{th}"),
            format!("all_reached_{th}"),
        ]);
    }
    let rows = reports
        .iter()
        .map(|r| {
            let mut row = vec![
                r.mode.to_string(),
                r.seed.to_string(),
                r.query.clone(),
                f4(r.duration),
                f4(r.path_length),
                f4(r.explored_volume),
                f4(r.coverage_pct),
                f4(r.reachable_coverage_pct),
                r.completed.to_string(),
                r.end_reason.clone(),
            ];
            for t in &r.thresholds {
                row.extend([
                    opt4(t.t_first),
                    t.started_within.to_string(),
                    t.reached.to_string(),
                    t.total.to_string(),
                    t.all_reached.to_string(),
                ]);
            }
            row
        })
        .collect();
    write_rows(w, header, rows)
}

pub fn write_summary_csv<W: Write>(summary: &[ModeSummary], w: W) -> Result<(), ReportError> {
    let first = summary.first().ok_or(ReportError::Empty)?;
    let mut header: Vec<String> = [
        "mode",
        "runs",
        "duration",
        "path_length",
        "explored_volume",
        "coverage_pct",
        "reachable_coverage_pct",
        "completed_rate",
    ]
    .map(String::from)
    .to_vec();
    for t in &first.thresholds {
        let th = t.threshold;
        header.extend([
            format!("mean_t_first_{th}"),
            format!("runs_with_t_first_{th}"),
            format!("mean_rt_{th}"),
            format!("all_reached_rate_{th}"),
        ]);
    }
    let rows = summary
        .iter()
        .map(|s| {
            let mut row = vec![
                s.mode.to_string(),
                s.runs.to_string(),
                f4(s.duration),
                f4(s.path_length),
                f4(s.explored_volume),
                f4(s.coverage_pct),
                f4(s.reachable_coverage_pct),
                f4(s.completed_rate),
            ];
            for t in &s.thresholds {
                row.extend([
                    opt4(t.mean_t_first),
                    t.runs_with_t_first.to_string(),
                    f4(t.mean_rt),
                    f4(t.all_reached_rate),
                ]);
            }
            row
        })
        .collect();
    write_rows(w, header, rows)
}

pub fn write_wins_csv<W: Write>(wins: &[WinCount], w: W) -> Result<(), ReportError> {
    let header = ["metric", "mode_a", "mode_b", "wins_a", "wins_b", "ties"]
        .map(String::from)
        .to_vec();
    let rows = wins
        .iter()
        .map(|c| {
            vec![
                c.metric.clone(),
                c.mode_a.to_string(),
                c.mode_b.to_string(),
                c.wins_a.to_string(),
                c.wins_b.to_string(),
                c.ties.to_string(),
            ]
        })
        .collect();
    write_rows(w, header, rows)
}

pub fn write_reports_json<W: Write>(reports: &[MetricsReport], mut w: W) -> Result<(), ReportError> {
    if reports.is_empty() {
        return Err(ReportError::Empty);
    }
    serde_json::to_writer_pretty(&mut w, reports)?;
    writeln!(w)?;
    Ok(())
}

pub fn read_reports_json(path: impl AsRef<Path>) -> Result<Vec<MetricsReport>, ReportError> {
    let f = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(f)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::ThresholdMetrics;
    use crate::planner::PlannerMode;

    fn report(mode: PlannerMode, seed: u64) -> MetricsReport {
        MetricsReport {
            mode,
            seed,
            query: "chair".into(),
            duration: 12.345678,
            path_length: 1.0 / 3.0,
            explored_volume: 2.5,
            coverage_pct: 99.99999,
            reachable_coverage_pct: 100.0,
            completed: true,
            end_reason: "complete".into(),
            thresholds: vec![ThresholdMetrics {
                threshold: 1.5,
                t_first: None,
                started_within: false,
                reached: 0,
                total: 1,
                all_reached: false,
            }],
        }
    }

    #[test]
    fn one_report_gives_header_and_row() {
        let mut buf = Vec::new();
        write_reports_csv(&[report(PlannerMode::Sage, 1)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("mode,seed,query,duration"));
        assert_eq!(
            lines[1],
            "sage,1,chair,12.3457,0.3333,2.5000,100.0000,100.0000,true,complete,,false,0,1,false"
        );
    }

    #[test]
    fn mixed_modes_one_row_each() {
        let rs = [report(PlannerMode::Sage, 0), report(PlannerMode::Geometric, 0)];
        let mut buf = Vec::new();
        write_reports_csv(&rs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn json_round_trip_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("runs.json");
        let rs = vec![report(PlannerMode::Sage, 0), report(PlannerMode::SemanticOnly, 2)];
        write_reports_json(&rs, File::create(&p).unwrap()).unwrap();
        let back = read_reports_json(&p).unwrap();
        assert_eq!(back, rs);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_reports_json(&rs, &mut a).unwrap();
        write_reports_json(&back, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(write_reports_csv(&[], Vec::new()), Err(ReportError::Empty)));
    }
}
