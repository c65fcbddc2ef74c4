//! Multi-seed, multi-mode batches and their aggregate tables.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, MetricsReport};
use super::mission::{run_mission, MissionError, MissionOptions};
use crate::embedding::EmbeddingProvider;
use crate::planner::PlannerMode;
use crate::sim::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub threshold: f64,
    /// Mean over runs that reached a target; `None` if none did.
    pub mean_t_first: Option<f64>,
    pub runs_with_t_first: usize,
    /// Mean reached-over-total ratio.
    pub mean_rt: f64,
    /// Share of runs that reached every target.
    pub all_reached_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: PlannerMode,
    pub runs: usize,
    pub duration: f64,
    pub path_length: f64,
    pub explored_volume: f64,
    pub coverage_pct: f64,
    pub reachable_coverage_pct: f64,
    pub completed_rate: f64,
    pub thresholds: Vec<ThresholdSummary>,
}

/// Strict wins of `mode_a` over `mode_b` on one metric, seed by seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinCount {
    pub metric: String,
    pub mode_a: PlannerMode,
    pub mode_b: PlannerMode,
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    /// Sorted by (mode, seed).
    pub reports: Vec<MetricsReport>,
    pub summary: Vec<ModeSummary>,
    pub wins: Vec<WinCount>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Per-mode means. Runs are summed in seed order, so the result does not
/// depend on the order reports arrive in.
pub fn summarize(reports: &[MetricsReport]) -> Vec<ModeSummary> {
    let mut modes: Vec<PlannerMode> = reports.iter().map(|r| r.mode).collect();
    modes.sort();
    modes.dedup();
    modes
        .into_iter()
        .map(|mode| {
            let mut rs: Vec<&MetricsReport> = reports.iter().filter(|r| r.mode == mode).collect();
            rs.sort_by_key(|r| r.seed);
            let thresholds = rs[0]
                .thresholds
                .iter()
                .enumerate()
                .map(|(k, t0)| {
                    let firsts: Vec<f64> = rs.iter().filter_map(|r| r.thresholds[k].t_first).collect();
                    ThresholdSummary {
                        threshold: t0.threshold,
                        mean_t_first: (!firsts.is_empty()).then(|| mean(firsts.iter().copied())),
                        runs_with_t_first: firsts.len(),
                        mean_rt: mean(rs.iter().map(|r| {
                            let t = &r.thresholds[k];
                            if t.total == 0 {
                                0.0
                            } else {
                                t.reached as f64 / t.total as f64
                            }
                        })),
                        all_reached_rate: mean(rs.iter().map(|r| r.thresholds[k].all_reached as u8 as f64)),
                    }
                })
                .collect();
            ModeSummary {
                mode,
                runs: rs.len(),
                duration: mean(rs.iter().map(|r| r.duration)),
                path_length: mean(rs.iter().map(|r| r.path_length)),
                explored_volume: mean(rs.iter().map(|r| r.explored_volume)),
                coverage_pct: mean(rs.iter().map(|r| r.coverage_pct)),
                reachable_coverage_pct: mean(rs.iter().map(|r| r.reachable_coverage_pct)),
                completed_rate: mean(rs.iter().map(|r| r.completed as u8 as f64)),
                thresholds,
            }
        })
        .collect()
}

/// Compare two optional values where lower is better; a missing value
/// loses to any present one.
fn cmp_lower(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Greater,
        (None, Some(_)) => Ordering::Less,
        (None, None) => Ordering::Equal,
    }
}

fn cmp_higher(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}

type Metric = (String, Box<dyn Fn(&MetricsReport, &MetricsReport) -> Ordering>);

fn metrics_for(thresholds: &[f64]) -> Vec<Metric> {
    let mut out: Vec<Metric> = vec![
        ("duration".into(), Box::new(|a, b| cmp_lower(Some(a.duration), Some(b.duration)))),
        ("path_length".into(), Box::new(|a, b| cmp_lower(Some(a.path_length), Some(b.path_length)))),
        ("explored_volume".into(), Box::new(|a, b| cmp_higher(a.explored_volume, b.explored_volume))),
        ("coverage_pct".into(), Box::new(|a, b| cmp_higher(a.coverage_pct, b.coverage_pct))),
    ];
    for (k, th) in thresholds.iter().enumerate() {
        out.push((
            format!("t_first_{th}"),
            Box::new(move |a, b| cmp_lower(a.thresholds[k].t_first, b.thresholds[k].t_first)),
        ));
        out.push((
            format!("reached_{th}"),
            Box::new(move |a, b| a.thresholds[k].reached.cmp(&b.thresholds[k].reached)),
        ));
    }
    out
}

/// Pairwise strict win counts over seeds both modes ran; ties are counted
/// separately and never credited.
pub fn win_counts(reports: &[MetricsReport]) -> Vec<WinCount> {
    let mut modes: Vec<PlannerMode> = reports.iter().map(|r| r.mode).collect();
    modes.sort();
    modes.dedup();
    let thresholds: Vec<f64> = reports
        .first()
        .map(|r| r.thresholds.iter().map(|t| t.threshold).collect())
        .unwrap_or_default();
    let mut out = Vec::new();
    for (name, cmp) in metrics_for(&thresholds) {
        for (i, &a) in modes.iter().enumerate() {
            for &b in &modes[i + 1..] {
                let mut w = WinCount {
                    metric: name.clone(),
                    mode_a: a,
                    mode_b: b,
                    wins_a: 0,
                    wins_b: 0,
                    ties: 0,
                };
                let mut ra: Vec<&MetricsReport> = reports.iter().filter(|r| r.mode == a).collect();
                ra.sort_by_key(|r| r.seed);
                for x in ra {
                    let Some(y) = reports.iter().find(|r| r.mode == b && r.seed == x.seed) else {
                        continue;
                    };
                    match cmp(x, y) {
                        Ordering::Greater => w.wins_a += 1,
                        Ordering::Less => w.wins_b += 1,
                        Ordering::Equal => w.ties += 1,
                    }
                }
                out.push(w);
            }
        }
    }
    out
}

/// Run every (mode, seed) pair. Trials run in parallel; results are joined
/// in (mode, seed) order.
pub fn run_batch(
    scenario: &Scenario,
    provider: &dyn EmbeddingProvider,
    modes: &[PlannerMode],
    seeds: &[u64],
    max_time: Option<f64>,
) -> Result<BatchResult, MissionError> {
    let mut jobs: Vec<(PlannerMode, u64)> = modes
        .iter()
        .flat_map(|m| seeds.iter().map(move |s| (*m, *s)))
        .collect();
    jobs.sort();
    jobs.dedup();
    let reports: Vec<MetricsReport> = jobs
        .par_iter()
        .map(|&(mode, seed)| {
            let opts = MissionOptions {
                max_time,
                ..MissionOptions::new(mode, seed)
            };
            let out = run_mission(scenario, provider, &opts)?;
            Ok(compute_metrics(&out.log, &scenario.scene, &scenario.file.thresholds))
        })
        .collect::<Result<_, MissionError>>()?;
    Ok(BatchResult {
        summary: summarize(&reports),
        wins: win_counts(&reports),
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::ThresholdMetrics;

    fn report(mode: PlannerMode, seed: u64, duration: f64, t_first: Option<f64>) -> MetricsReport {
        MetricsReport {
            mode,
            seed,
            query: "chair".into(),
            duration,
            path_length: duration * 0.5,
            explored_volume: 1.0,
            coverage_pct: 90.0,
            reachable_coverage_pct: 100.0,
            completed: true,
            end_reason: "complete".into(),
            thresholds: vec![ThresholdMetrics {
                threshold: 1.5,
                t_first,
                started_within: false,
                reached: t_first.is_some() as usize,
                total: 1,
                all_reached: t_first.is_some(),
            }],
        }
    }

    #[test]
    fn single_seed_means_equal_the_report() {
        let r = report(PlannerMode::Sage, 3, 12.5, Some(4.0));
        let s = summarize(std::slice::from_ref(&r));
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].duration, 12.5);
        assert_eq!(s[0].path_length, r.path_length);
        assert_eq!(s[0].thresholds[0].mean_t_first, Some(4.0));
        assert_eq!(s[0].thresholds[0].mean_rt, 1.0);
    }

    #[test]
    fn means_ignore_seed_order() {
        let rs = vec![
            report(PlannerMode::Sage, 0, 0.1, None),
            report(PlannerMode::Sage, 1, 0.2, Some(1.0)),
            report(PlannerMode::Sage, 2, 0.3, Some(2.0)),
        ];
        let mut rev = rs.clone();
        rev.reverse();
        assert_eq!(summarize(&rs), summarize(&rev));
    }

    #[test]
    fn ties_are_not_wins() {
        let rs = vec![
            report(PlannerMode::Sage, 0, 10.0, Some(1.0)),
            report(PlannerMode::Geometric, 0, 10.0, Some(2.0)),
            report(PlannerMode::Sage, 1, 8.0, None),
            report(PlannerMode::Geometric, 1, 9.0, None),
        ];
        let w = win_counts(&rs);
        let dur = w.iter().find(|w| w.metric == "duration").unwrap();
        // Geometric sorts before Sage
        assert_eq!((dur.mode_a, dur.mode_b), (PlannerMode::Geometric, PlannerMode::Sage));
        assert_eq!((dur.wins_a, dur.wins_b, dur.ties), (0, 1, 1));
        let t1 = w.iter().find(|w| w.metric == "t_first_1.5").unwrap();
        assert_eq!((t1.wins_a, t1.wins_b, t1.ties), (0, 1, 1));
    }
}
