//! The closed sensing, mapping and planning loop of one mission.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::TemporalCache;
use crate::embedding::{EmbeddingError, EmbeddingProvider, FrameInput, FrameKey, RunningMax};
use crate::geometry::{Aabb, Vec3};
use crate::memory::SemanticMemory;
use crate::planner::{
    is_exploration_complete, plan_cycle, CycleDiagnostics, PlanContext, PlanOutput, PlannerError,
    PlannerMode, PlannerState, ViewpointKind, ViewpointTarget,
};
use crate::sim::robot::turn_toward;
use crate::sim::{check_reached, step_along_path, MissionClock, RobotPose, Scenario, Scene};
use crate::voxel::{
    flood_fill, inflate_obstacles, integrate_depth, is_frontier, CellState, Connectivity,
    IntegrationOptions, VoxelGrid,
};

/// Yaw error below which a viewpoint counts as reached.
const ARRIVAL_YAW_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MissionError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissionOptions {
    pub mode: PlannerMode,
    pub seed: u64,
    /// Overrides the scenario's time limit (s).
    pub max_time: Option<f64>,
    /// Keep the full per-cycle planner diagnostics.
    pub record_diagnostics: bool,
}

impl MissionOptions {
    pub fn new(mode: PlannerMode, seed: u64) -> Self {
        Self {
            mode,
            seed,
            max_time: None,
            record_diagnostics: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub t: f64,
    pub position: [f64; 3],
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachEvent {
    pub object_id: u32,
    pub t: f64,
    pub threshold: f64,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSummary {
    pub tick: u64,
    pub t: f64,
    pub waypoint: Option<[f64; 3]>,
    pub error: Option<String>,
    /// Confidence of every frontier cluster assembled in the cycle.
    pub c_f: Vec<f64>,
    pub cache_empty_after: bool,
    pub explored_volume: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    /// No frontier reachable through known free space.
    Complete,
    /// Frontiers remain but none has a reachable viewpoint.
    NoViewableFrontiers,
    TimeLimit,
}

impl EndReason {
    pub fn name(self) -> &'static str {
        match self {
            EndReason::Complete => "complete",
            EndReason::NoViewableFrontiers => "no_viewable_frontiers",
            EndReason::TimeLimit => "time_limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridStats {
    pub free: usize,
    pub occupied: usize,
    pub unknown: usize,
    pub task_voxels: usize,
    pub task_known: usize,
    /// Non-solid task-box voxels face-connected to the start.
    pub reachable_voxels: usize,
    pub reachable_known: usize,
    pub voxel_volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionLog {
    pub query: String,
    pub mode: PlannerMode,
    pub seed: u64,
    pub dt: f64,
    pub max_time: f64,
    pub poses: Vec<PoseSample>,
    pub reach_events: Vec<ReachEvent>,
    pub cycles: Vec<CycleSummary>,
    pub end_reason: EndReason,
    pub duration: f64,
    pub final_stats: GridStats,
    pub instances: usize,
    pub memory_floats: usize,
    /// Floats a dense embedding per occupied voxel would need.
    pub dense_floats: usize,
}

impl MissionLog {
    pub fn completed(&self) -> bool {
        self.end_reason == EndReason::Complete
    }
}

pub struct MissionOutcome {
    pub log: MissionLog,
    pub grid: VoxelGrid,
    pub memory: SemanticMemory,
    /// Empty unless requested in the options.
    pub diagnostics: Vec<CycleDiagnostics>,
}

/// Task-box voxels that are not solid and face-connected to `start`.
pub fn reachable_voxels(scene: &Scene, grid: &VoxelGrid, start: &Vec3) -> Vec<bool> {
    let inside = |v| {
        let c = grid.center(v);
        scene.task_box.contains(&c) && !scene.is_solid(&c)
    };
    match grid.world_to_index(start) {
        Ok(seed) => flood_fill(grid, seed, Connectivity::Face6, inside),
        Err(_) => vec![false; grid.len()],
    }
}

fn grid_stats(grid: &VoxelGrid, task_box: &Aabb, reachable: &[bool]) -> GridStats {
    let mut s = GridStats {
        free: 0,
        occupied: 0,
        unknown: 0,
        task_voxels: 0,
        task_known: 0,
        reachable_voxels: 0,
        reachable_known: 0,
        voxel_volume: grid.resolution().powi(3),
    };
    for i in 0..grid.len() {
        let st = grid.state_at_linear(i);
        match st {
            CellState::Free => s.free += 1,
            CellState::Occupied => s.occupied += 1,
            CellState::Unknown => s.unknown += 1,
        }
        if task_box.contains(&grid.center(grid.from_linear(i))) {
            s.task_voxels += 1;
            s.task_known += st.is_known() as usize;
        }
        if reachable[i] {
            s.reachable_voxels += 1;
            s.reachable_known += st.is_known() as usize;
        }
    }
    s
}

fn explored_volume(grid: &VoxelGrid, task_box: &Aabb) -> f64 {
    let known = grid
        .indices_in(task_box)
        .into_iter()
        .filter(|v| grid.state(*v).is_known())
        .count();
    known as f64 * grid.resolution().powi(3)
}

fn config_error(e: (String, String)) -> MissionError {
    MissionError::Config {
        path: e.0,
        message: e.1,
    }
}

struct ActivePlan {
    out: PlanOutput,
    next: usize,
}

impl ActivePlan {
    /// Worth finishing: the target still has frontier voxels and the rest of
    /// the path is still traversable.
    fn still_valid(&self, grid: &VoxelGrid, robot_radius: f64) -> bool {
        let alive = match self.out.waypoint.target {
            ViewpointTarget::Cluster(_) => self.out.target_voxels.iter().any(|v| is_frontier(grid, *v)),
            ViewpointTarget::Instance(_) => true,
        };
        if !alive {
            return false;
        }
        let mask = inflate_obstacles(grid, robot_radius);
        self.out.path[self.next..].iter().all(|p| {
            grid.world_to_index(p)
                .is_ok_and(|v| mask.is_traversable(v))
        })
    }
}

/// Run one mission to completion, exhaustion of viewable frontiers, or the
/// time limit. Deterministic for a fixed scenario, provider and options.
pub fn run_mission(
    scenario: &Scenario,
    provider: &dyn EmbeddingProvider,
    opts: &MissionOptions,
) -> Result<MissionOutcome, MissionError> {
    let file = &scenario.file;
    let scene = &scenario.scene;
    let intr = scenario.intrinsics;
    let res = scenario.voxel_size();
    let params = file.planner.with_mode(opts.mode);
    params.validate(res).map_err(config_error)?;
    file.memory.validate().map_err(config_error)?;
    let dt = file.mission.dt;
    let max_time = opts.max_time.unwrap_or(file.mission.max_time).max(0.0);
    let replan_every = file.mission.replan_every.max(1);
    let robot = file.robot;

    let mut grid = VoxelGrid::covering(&scene.bounds, res).map_err(|e| MissionError::Config {
        path: "world".into(),
        message: e.to_string(),
    })?;
    let query = provider.embed_text(&file.query)?;
    let mut rm = RunningMax::default();
    let mut memory = SemanticMemory::new();
    let mut cache = TemporalCache::new(query.dim());
    let mut state = PlannerState::new();
    let mut pose = scenario.start_pose(opts.seed);
    let reachable = reachable_voxels(scene, &grid, &pose.position);

    // the robot knows the space it occupies
    let clearance = robot.radius + res;
    let around = Aabb::new(
        pose.position - Vec3::repeat(clearance),
        pose.position + Vec3::repeat(clearance),
    );
    for v in grid.indices_in(&around) {
        let c = grid.center(v);
        if (c - pose.position).norm() <= clearance && !scene.is_solid(&c) {
            grid.mark_free(v);
        }
    }

    let targets: Vec<_> = scene.targets().collect();
    let mut reached: BTreeSet<(u32, usize)> = BTreeSet::new();
    let mut reach_events = Vec::new();
    let mut check_reach = |pose: &RobotPose, t: f64, events: &mut Vec<ReachEvent>| {
        for o in &targets {
            for (k, &th) in file.thresholds.iter().enumerate() {
                if !reached.contains(&(o.id, k)) && check_reached(pose, o, th) {
                    reached.insert((o.id, k));
                    events.push(ReachEvent {
                        object_id: o.id,
                        t,
                        threshold: th,
                        position: pose.position.into(),
                    });
                }
            }
        }
    };

    let mut clock = MissionClock::new(dt);
    let max_ticks = (max_time / dt + 1e-9).floor() as u64;
    let mut poses = Vec::new();
    let mut cycles = Vec::new();
    let mut diagnostics = Vec::new();
    let mut plan: Option<ActivePlan> = None;
    let mut end_reason = EndReason::TimeLimit;
    if max_ticks > 0 {
        poses.push(PoseSample {
            t: 0.0,
            position: pose.position.into(),
            yaw: pose.yaw,
        });
        check_reach(&pose, 0.0, &mut reach_events);
    }

    for tick in 0..max_ticks {
        // sense
        let frame = scene.render(&pose, &intr);
        let labels = scene.labels_from_frame(&frame, &intr);
        let patches = provider.embed_patches(&FrameInput {
            scene,
            frame: &frame,
            labels: &labels,
            intrinsics: &intr,
            key: FrameKey {
                mission_seed: opts.seed,
                tick,
            },
        })?;
        let ids: Vec<_> = patches.iter().map(|p| cache.register(p.clone())).collect();
        let width = frame.depth.width;
        integrate_depth(
            &mut grid,
            &pose,
            &intr,
            &frame.depth,
            IntegrationOptions::default(),
            |pixel, path| {
                let patch = intr.patch_of(pixel % width, pixel / width);
                cache.write_voxels(path, ids[patch]);
            },
        );
        memory.observe_frame(
            &patches,
            &query,
            &mut rm,
            &frame.depth,
            &pose,
            &intr,
            &grid,
            &file.memory.association,
        );

        // plan
        if plan.is_none() || tick % replan_every == 0 {
            if is_exploration_complete(&grid, &pose.position, &scene.task_box) {
                end_reason = EndReason::Complete;
                break;
            }
            let ctx = PlanContext {
                grid: &grid,
                memory: &memory,
                pose: &pose,
                query: &query,
                rm: &rm,
                intrinsics: &intr,
                task_box: &scene.task_box,
                robot_radius: robot.radius,
                params: &params,
                region_params: &file.memory.region,
            };
            let result = plan_cycle(&ctx, &mut cache, &mut state);
            assert!(cache.is_empty(), "temporal cache survived a plan cycle");
            let mut summary = CycleSummary {
                tick,
                t: clock.t(),
                waypoint: None,
                error: None,
                c_f: Vec::new(),
                cache_empty_after: cache.is_empty(),
                explored_volume: explored_volume(&grid, &scene.task_box),
            };
            match result {
                Ok(out) => {
                    summary.waypoint = Some(out.waypoint.position.into());
                    summary.c_f = out.diagnostics.clusters.iter().map(|c| c.c_f).collect();
                    if opts.record_diagnostics {
                        diagnostics.push(out.diagnostics.clone());
                    }
                    // Commit to the current viewpoint unless it went stale or
                    // the new plan turns from a frontier toward an object.
                    let keep = plan.as_ref().is_some_and(|a| {
                        let redirect = out.waypoint.kind == ViewpointKind::ObjectFrontier
                            && a.out.waypoint.kind == ViewpointKind::RegularFrontier;
                        !redirect && a.still_valid(&grid, robot.radius)
                    });
                    if !keep {
                        plan = Some(ActivePlan { out, next: 0 });
                    }
                }
                Err(PlannerError::NoFrontiers) => {
                    summary.error = Some(PlannerError::NoFrontiers.to_string());
                    cycles.push(summary);
                    end_reason = EndReason::NoViewableFrontiers;
                    break;
                }
                Err(e) => {
                    summary.error = Some(e.to_string());
                    plan = None;
                }
            }
            cycles.push(summary);
        }

        // act
        let mut arrived = false;
        if let Some(active) = plan.as_mut() {
            let rest = &active.out.path[active.next..];
            if rest.is_empty() {
                let yaw = turn_toward(pose.yaw, active.out.waypoint.yaw, robot.yaw_rate_max * dt);
                pose = RobotPose::new(pose.position, yaw);
                let err = crate::geometry::wrap_angle(yaw - active.out.waypoint.yaw).abs();
                arrived = err < ARRIVAL_YAW_TOL;
            } else {
                let (next, consumed) = step_along_path(&pose, rest, robot.v_max, robot.yaw_rate_max, dt);
                pose = next;
                active.next += consumed;
            }
        }
        if arrived {
            if let Some(active) = plan.take() {
                state.mark_arrived(&active.out);
            }
        }
        clock.advance();
        poses.push(PoseSample {
            t: clock.t(),
            position: pose.position.into(),
            yaw: pose.yaw,
        });
        check_reach(&pose, clock.t(), &mut reach_events);
    }

    let final_stats = grid_stats(&grid, &scene.task_box, &reachable);
    let log = MissionLog {
        query: file.query.clone(),
        mode: opts.mode,
        seed: opts.seed,
        dt,
        max_time,
        poses,
        reach_events,
        cycles,
        end_reason,
        duration: clock.t(),
        instances: memory.len(),
        memory_floats: memory.stored_floats(),
        dense_floats: final_stats.occupied * query.dim(),
        final_stats,
    };
    Ok(MissionOutcome {
        log,
        grid,
        memory,
        diagnostics,
    })
}
