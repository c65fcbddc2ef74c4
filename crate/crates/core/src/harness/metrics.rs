//! Per-mission metrics.

use serde::{Deserialize, Serialize};

use super::mission::MissionLog;
use crate::planner::PlannerMode;
use crate::sim::Scene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    /// Earliest time any target came within the threshold.
    pub t_first: Option<f64>,
    /// A target was already within the threshold at mission start.
    pub started_within: bool,
    pub reached: usize,
    pub total: usize,
    pub all_reached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: PlannerMode,
    pub seed: u64,
    pub query: String,
    pub duration: f64,
    pub path_length: f64,
    pub explored_volume: f64,
    pub coverage_pct: f64,
    pub reachable_coverage_pct: f64,
    pub completed: bool,
    pub end_reason: String,
    pub thresholds: Vec<ThresholdMetrics>,
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        100.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

pub fn path_length(log: &MissionLog) -> f64 {
    log.poses
        .windows(2)
        .map(|w| {
            let d: f64 = (0..3).map(|a| (w[1].position[a] - w[0].position[a]).powi(2)).sum();
            d.sqrt()
        })
        .sum()
}

pub fn compute_metrics(log: &MissionLog, scene: &Scene, thresholds: &[f64]) -> MetricsReport {
    let total = scene.targets().count();
    let s = &log.final_stats;
    let per_threshold = thresholds
        .iter()
        .map(|&th| {
            let events: Vec<_> = log
                .reach_events
                .iter()
                .filter(|e| e.threshold == th)
                .collect();
            let t_first = events.iter().map(|e| e.t).min_by(f64::total_cmp);
            let mut ids: Vec<u32> = events.iter().map(|e| e.object_id).collect();
            ids.sort_unstable();
            ids.dedup();
            ThresholdMetrics {
                threshold: th,
                t_first,
                started_within: t_first == Some(0.0),
                reached: ids.len(),
                total,
                all_reached: ids.len() == total,
            }
        })
        .collect();
    MetricsReport {
        mode: log.mode,
        seed: log.seed,
        query: log.query.clone(),
        duration: log.duration,
        path_length: path_length(log),
        explored_volume: s.task_known as f64 * s.voxel_volume,
        coverage_pct: pct(s.task_known, s.task_voxels),
        reachable_coverage_pct: pct(s.reachable_known, s.reachable_voxels),
        completed: log.completed(),
        end_reason: log.end_reason.name().to_string(),
        thresholds: per_threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Aabb;
    use crate::harness::mission::{EndReason, GridStats, PoseSample, ReachEvent};
    use crate::sim::LabeledObject;

    fn scene() -> Scene {
        Scene {
            bounds: Aabb::from_arrays([0.0; 3], [4.0, 4.0, 1.0]),
            obstacles: vec![],
            objects: vec![LabeledObject {
                id: 1,
                bbox: Aabb::from_arrays([2.0, 2.0, 0.0], [2.5, 2.5, 0.5]),
                category: "chair".into(),
                is_target: true,
            }],
            task_box: Aabb::from_arrays([0.0; 3], [4.0, 4.0, 1.0]),
        }
    }

    fn log(poses: Vec<[f64; 3]>, events: Vec<ReachEvent>) -> MissionLog {
        MissionLog {
            query: "chair".into(),
            mode: PlannerMode::Sage,
            seed: 0,
            dt: 0.1,
            max_time: 10.0,
            poses: poses
                .into_iter()
                .enumerate()
                .map(|(i, p)| PoseSample {
                    t: i as f64 * 0.1,
                    position: p,
                    yaw: 0.0,
                })
                .collect(),
            reach_events: events,
            cycles: vec![],
            end_reason: EndReason::TimeLimit,
            duration: 1.0,
            final_stats: GridStats {
                free: 10,
                occupied: 5,
                unknown: 5,
                task_voxels: 20,
                task_known: 15,
                reachable_voxels: 10,
                reachable_known: 10,
                voxel_volume: 0.001,
            },
            instances: 0,
            memory_floats: 0,
            dense_floats: 0,
        }
    }

    #[test]
    fn start_within_threshold_reports_zero_with_flag() {
        let ev = ReachEvent {
            object_id: 1,
            t: 0.0,
            threshold: 1.5,
            position: [1.0, 2.0, 0.3],
        };
        let r = compute_metrics(&log(vec![[1.0, 2.0, 0.3]], vec![ev]), &scene(), &[1.0, 1.5]);
        assert_eq!(r.thresholds[1].t_first, Some(0.0));
        assert!(r.thresholds[1].started_within);
        assert_eq!(r.thresholds[0].t_first, None);
        assert!(!r.thresholds[0].started_within);
    }

    #[test]
    fn nothing_reached() {
        let r = compute_metrics(&log(vec![[0.5; 3]], vec![]), &scene(), &[1.0]);
        let t = &r.thresholds[0];
        assert_eq!((t.reached, t.total, t.all_reached, t.t_first), (0, 1, false, None));
        assert!((r.coverage_pct - 75.0).abs() < 1e-12);
        assert!((r.explored_volume - 0.015).abs() < 1e-12);
    }

    #[test]
    fn stationary_path_is_zero() {
        let r = compute_metrics(&log(vec![[0.5; 3]; 5], vec![]), &scene(), &[1.0]);
        assert_eq!(r.path_length, 0.0);
        let moving = compute_metrics(&log(vec![[0.0; 3], [3.0, 4.0, 0.0]], vec![]), &scene(), &[1.0]);
        assert!((moving.path_length - 5.0).abs() < 1e-12);
    }
}
