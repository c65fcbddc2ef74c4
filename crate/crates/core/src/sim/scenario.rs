//! Scenario files.
//!
//! One JSON document describes the world, the mission query and every
//! tunable. Unknown fields are rejected everywhere so that typos surface as
//! errors instead of silently falling back to defaults.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::camera::{CameraIntrinsics, RobotPose};
use super::scene::{LabeledObject, Scene};
use crate::embedding::{SyntheticEmbedder, SyntheticEmbedderConfig};
use crate::geometry::{Aabb, Vec3};
use crate::memory::MemoryParams;
use crate::planner::PlannerParams;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario is not valid JSON: {0}")]
    Parse(String),
    #[error("invalid scenario at `{path}`: {message}")]
    Validation { path: String, message: String },
}

fn invalid<T>(path: impl Into<String>, message: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Validation {
        path: path.into(),
        message: message.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub bounds: Aabb,
    pub voxel_size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StartJitter {
    /// Half-width of the uniform horizontal position offset (m).
    pub position: f64,
    /// Half-width of the uniform yaw offset (rad).
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartConfig {
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    #[serde(default)]
    pub jitter: StartJitter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotConfig {
    pub v_max: f64,
    pub yaw_rate_max: f64,
    pub radius: f64,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            v_max: 1.0,
            yaw_rate_max: 1.5,
            radius: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
    pub max_range: f64,
    pub patch_grid: usize,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 48,
            hfov_deg: 90.0,
            max_range: 5.0,
            patch_grid: 8,
        }
    }
}

impl CameraConfig {
    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics::from_hfov(
            self.width,
            self.height,
            self.hfov_deg.to_radians(),
            self.max_range,
            self.patch_grid,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MissionConfig {
    pub dt: f64,
    /// Ticks between plan cycles.
    pub replan_every: u64,
    /// Simulated-time limit (s).
    pub max_time: f64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            replan_every: 5,
            max_time: 300.0,
        }
    }
}

fn default_thresholds() -> Vec<f64> {
    vec![1.0, 1.5]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// On-disk layout of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub world: WorldConfig,
    #[serde(default)]
    pub obstacles: Vec<Aabb>,
    #[serde(default)]
    pub objects: Vec<LabeledObject>,
    /// Defaults to the world bounds.
    #[serde(default)]
    pub task_box: Option<Aabb>,
    pub start: StartConfig,
    pub query: String,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub robot: RobotConfig,
    #[serde(default)]
    pub camera: CameraConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub mission: MissionConfig,
    #[serde(default)]
    pub planner: PlannerParams,
    #[serde(default)]
    pub memory: MemoryParams,
    #[serde(default)]
    pub embedder: SyntheticEmbedderConfig,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub scene: Scene,
    pub intrinsics: CameraIntrinsics,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => ScenarioError::Validation {
                path,
                message: inner.to_string(),
            },
            _ => ScenarioError::Parse(inner.to_string()),
        }
    })?;
    Scenario::from_file(file)
}

fn check_box(path: &str, b: &Aabb) -> Result<(), ScenarioError> {
    for a in 0..3 {
        if !(b.min[a].is_finite() && b.max[a].is_finite()) {
            return invalid(path, "coordinates must be finite");
        }
        if b.max[a] - b.min[a] <= 0.0 {
            let axis = ["x", "y", "z"][a];
            return invalid(path, format!("box has non-positive {axis}-extent"));
        }
    }
    Ok(())
}

impl Scenario {
    pub fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        let w = &file.world;
        if !(w.voxel_size > 0.0 && w.voxel_size.is_finite()) {
            return invalid("world.voxel_size", "must be positive");
        }
        check_box("world.bounds", &w.bounds)?;
        for (i, b) in file.obstacles.iter().enumerate() {
            let p = format!("obstacles[{i}]");
            check_box(&p, b)?;
            if !b.intersects(&w.bounds) {
                return invalid(p, "obstacle lies outside the world bounds");
            }
        }
        let mut ids = std::collections::BTreeSet::new();
        for (i, o) in file.objects.iter().enumerate() {
            let p = format!("objects[{i}]");
            check_box(&format!("{p}.box"), &o.bbox)?;
            if !o.bbox.intersects(&w.bounds) {
                return invalid(format!("{p}.box"), "object lies outside the world bounds");
            }
            if !ids.insert(o.id) {
                return invalid(format!("{p}.id"), format!("duplicate object id {}", o.id));
            }
            if o.category.trim().is_empty() {
                return invalid(format!("{p}.category"), "must not be empty");
            }
        }
        let task_box = file.task_box.unwrap_or(w.bounds);
        check_box("task_box", &task_box)?;
        if !task_box.intersects(&w.bounds) {
            return invalid("task_box", "task box lies outside the world bounds");
        }
        if file.query.trim().is_empty() {
            return invalid("query", "must not be empty");
        }
        if file.thresholds.is_empty() {
            return invalid("thresholds", "at least one threshold is required");
        }
        if let Some(i) = file.thresholds.iter().position(|t| !(*t > 0.0)) {
            return invalid(format!("thresholds[{i}]"), "must be positive");
        }
        let r = &file.robot;
        if !(r.v_max > 0.0) {
            return invalid("robot.v_max", "must be positive");
        }
        if !(r.yaw_rate_max > 0.0) {
            return invalid("robot.yaw_rate_max", "must be positive");
        }
        if !(r.radius >= 0.0) {
            return invalid("robot.radius", "must be non-negative");
        }
        let c = &file.camera;
        if !(c.hfov_deg > 0.0 && c.hfov_deg < 180.0) {
            return invalid("camera.hfov_deg", "must lie in (0, 180)");
        }
        let intrinsics = c.intrinsics();
        if let Err(m) = intrinsics.validate() {
            return invalid("camera", m);
        }
        if file.seeds.is_empty() {
            return invalid("seeds", "at least one seed is required");
        }
        let m = &file.mission;
        if !(m.dt > 0.0) {
            return invalid("mission.dt", "must be positive");
        }
        if m.replan_every == 0 {
            return invalid("mission.replan_every", "must be at least 1");
        }
        if !(m.max_time >= 0.0) {
            return invalid("mission.max_time", "must be non-negative");
        }
        if let Err((p, msg)) = file.planner.validate(w.voxel_size) {
            return invalid(p, msg);
        }
        if let Err((p, msg)) = file.memory.validate() {
            return invalid(p, msg);
        }
        if !(file.embedder.noise_std >= 0.0) {
            return invalid("embedder.noise_std", "must be non-negative");
        }
        if file.embedder.dim == 0 {
            return invalid("embedder.dim", "must be positive");
        }

        let scene = Scene {
            bounds: w.bounds,
            obstacles: file.obstacles.clone(),
            objects: file.objects.clone(),
            task_box,
        };
        let start = Vec3::from(file.start.position);
        if !w.bounds.contains(&start) {
            return invalid("start.position", "start lies outside the world bounds");
        }
        if scene.is_solid(&start) {
            return invalid("start.position", "start lies inside an obstacle or object");
        }
        Ok(Self {
            file,
            scene,
            intrinsics,
        })
    }

    pub fn voxel_size(&self) -> f64 {
        self.file.world.voxel_size
    }

    pub fn query(&self) -> &str {
        &self.file.query
    }

    /// The seeded stand-in embedder over this scene's categories.
    pub fn synthetic_embedder(&self) -> SyntheticEmbedder {
        let cats: Vec<&str> = self.scene.objects.iter().map(|o| o.category.as_str()).collect();
        SyntheticEmbedder::new(self.file.embedder.clone(), &cats)
    }

    /// Start pose for a seed: the nominal start plus a seeded jitter draw.
    /// Draws that land within the robot radius of solid geometry are
    /// rejected; after a bounded number of attempts the nominal pose is used.
    pub fn start_pose(&self, seed: u64) -> RobotPose {
        let s = &self.file.start;
        let nominal = RobotPose::new(Vec3::from(s.position), s.yaw);
        if s.jitter.position <= 0.0 && s.jitter.yaw <= 0.0 {
            return nominal;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5747_4152_5453_u64);
        let clearance = self.file.robot.radius + self.voxel_size();
        for _ in 0..64 {
            let jp = s.jitter.position;
            let dx = if jp > 0.0 { rng.random_range(-jp..=jp) } else { 0.0 };
            let dy = if jp > 0.0 { rng.random_range(-jp..=jp) } else { 0.0 };
            let jy = s.jitter.yaw;
            let dyaw = if jy > 0.0 { rng.random_range(-jy..=jy) } else { 0.0 };
            let p = nominal.position + Vec3::new(dx, dy, 0.0);
            let probe = Aabb::new(p - Vec3::repeat(clearance), p + Vec3::repeat(clearance));
            if self.scene.task_box.contains(&p) && !self.scene.overlaps_solid(&probe) {
                return RobotPose::new(p, s.yaw + dyaw);
            }
        }
        nominal
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "world": {"bounds": {"min": [0, 0, 0], "max": [4, 4, 1]}, "voxel_size": 0.1},
        "objects": [{"id": 1, "box": {"min": [2, 2, 0], "max": [2.5, 2.5, 0.5]},
                     "category": "chair", "is_target": true}],
        "start": {"position": [1, 1, 0.5]},
        "query": "chair"
    }"#;

    #[test]
    fn minimal_file_loads() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.scene.objects.len(), 1);
        assert_eq!(s.scene.task_box, s.file.world.bounds);
        assert_eq!(s.file.thresholds, vec![1.0, 1.5]);
        assert_eq!(s.file.seeds, vec![0]);
    }

    #[test]
    fn flat_object_is_rejected() {
        let text = MINIMAL.replace("[2.5, 2.5, 0.5]", "[2.5, 2.5, 0]");
        match parse_scenario(&text) {
            Err(ScenarioError::Validation { path, message }) => {
                assert_eq!(path, "objects[0].box");
                assert!(message.contains("z-extent"), "{message}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_field_is_named() {
        let text = MINIMAL.replace("\"query\": \"chair\"", "\"query\": \"chair\", \"colour\": 3");
        match parse_scenario(&text) {
            Err(ScenarioError::Validation { message, .. }) => {
                assert!(message.contains("colour"), "{message}")
            }
            other => panic!("expected validation error, got {other:?}"),
        }
        let nested = MINIMAL.replace("\"voxel_size\": 0.1", "\"voxel_size\": 0.1, \"res\": 1");
        match parse_scenario(&nested) {
            Err(ScenarioError::Validation { path, message }) => {
                assert!(message.contains("res"));
                assert_eq!(path, "world.res");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_is_parse_error() {
        assert!(matches!(
            parse_scenario("{\"world\": "),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn rejects_duplicate_ids_and_bad_voxel_size() {
        let dup = MINIMAL.replace(
            "\"is_target\": true}]",
            "\"is_target\": true}, {\"id\": 1, \"box\": {\"min\": [3, 3, 0], \"max\": [3.5, 3.5, 0.5]}, \"category\": \"sofa\", \"is_target\": false}]",
        );
        assert!(matches!(
            parse_scenario(&dup),
            Err(ScenarioError::Validation { path, .. }) if path == "objects[1].id"
        ));
        let bad = MINIMAL.replace("\"voxel_size\": 0.1", "\"voxel_size\": 0");
        assert!(matches!(
            parse_scenario(&bad),
            Err(ScenarioError::Validation { path, .. }) if path == "world.voxel_size"
        ));
    }

    #[test]
    fn jittered_start_is_deterministic_and_clear() {
        let text = MINIMAL.replace(
            "\"start\": {\"position\": [1, 1, 0.5]}",
            "\"start\": {\"position\": [1, 1, 0.5], \"jitter\": {\"position\": 0.5, \"yaw\": 1.0}}",
        );
        let s = parse_scenario(&text).unwrap();
        let a = s.start_pose(3);
        assert_eq!(a, s.start_pose(3));
        assert_ne!(a, s.start_pose(4));
        assert!((a.position - Vec3::new(1.0, 1.0, 0.5)).abs().max() <= 0.5);
    }
}
