//! Seeded single-room scenes for coverage testing.
//!
//! A 4 x 4 x 0.6 m walled room at 0.1 m voxels, holding one to three
//! full-height pillars and three to five low objects (exactly one target).
//! Every box is voxel-aligned. Footprints keep 0.6 m of horizontal
//! clearance from each other, 0.3 m from the walls and 0.4 m from the
//! start, so the free space is connected for a robot of radius 0.1 m.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{
    CameraConfig, MissionConfig, RobotConfig, ScenarioFile, StartConfig, StartJitter, WorldConfig,
};
use super::scene::LabeledObject;
use crate::embedding::SyntheticEmbedderConfig;
use crate::geometry::Aabb;
use crate::memory::MemoryParams;
use crate::planner::PlannerParams;

const SIZE: f64 = 4.0;
const HEIGHT: f64 = 0.6;
const WALL: f64 = 0.1;
const RES: f64 = 0.1;
const GAP: f64 = 0.6;
const WALL_GAP: f64 = 0.3;
const START_GAP: f64 = 0.4;
pub const TARGET_CATEGORY: &str = "chair";
const OTHER_CATEGORIES: [&str; 4] = ["table", "plant", "crate", "lamp"];

fn xy_gap(a: &Aabb, b: &Aabb) -> f64 {
    let dx = (a.min[0] - b.max[0]).max(b.min[0] - a.max[0]).max(0.0);
    let dy = (a.min[1] - b.max[1]).max(b.min[1] - a.max[1]).max(0.0);
    dx.hypot(dy)
}

/// Voxel-aligned footprint of `w x d` voxels placed with at least
/// `WALL_GAP` to the walls.
fn random_footprint(rng: &mut ChaCha8Rng, z_max: f64) -> Aabb {
    let w = rng.random_range(2..=4) as f64 * RES;
    let d = rng.random_range(2..=4) as f64 * RES;
    let lo = WALL + WALL_GAP;
    let max_x = ((SIZE - WALL - WALL_GAP - w - lo) / RES + 1e-9).floor() as i64;
    let max_y = ((SIZE - WALL - WALL_GAP - d - lo) / RES + 1e-9).floor() as i64;
    let x = lo + rng.random_range(0..=max_x) as f64 * RES;
    let y = lo + rng.random_range(0..=max_y) as f64 * RES;
    Aabb::from_arrays([x, y, 0.0], [x + w, y + d, z_max])
}

/// Scenario for `seed`. Its query names the target category.
pub fn generate_room(seed: u64) -> ScenarioFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(17));
    let start = [
        WALL + WALL_GAP + 0.05 + rng.random_range(0..4) as f64 * RES,
        WALL + WALL_GAP + 0.05 + rng.random_range(0..4) as f64 * RES,
        0.35,
    ];
    let start_box = Aabb::from_arrays([start[0], start[1], 0.0], [start[0], start[1], HEIGHT]);

    let n_pillars = rng.random_range(1..=3);
    let n_low = rng.random_range(3..=5);
    let (pillars, low) = loop {
        let mut placed: Vec<Aabb> = Vec::new();
        let mut pillars = Vec::new();
        let mut low = Vec::new();
        for _ in 0..500 {
            if pillars.len() == n_pillars && low.len() == n_low {
                break;
            }
            let is_pillar = pillars.len() < n_pillars;
            let top = if is_pillar {
                HEIGHT
            } else {
                rng.random_range(2..=3) as f64 * RES
            };
            let b = random_footprint(&mut rng, top);
            let clear = placed.iter().all(|p| xy_gap(p, &b) >= GAP - 1e-9)
                && xy_gap(&start_box, &b) >= START_GAP - 1e-9;
            if !clear {
                continue;
            }
            placed.push(b);
            if is_pillar {
                pillars.push(b);
            } else {
                low.push(b);
            }
        }
        if pillars.len() == n_pillars && low.len() == n_low {
            break (pillars, low);
        }
    };

    let mut obstacles = vec![
        Aabb::from_arrays([0.0, 0.0, 0.0], [WALL, SIZE, HEIGHT]),
        Aabb::from_arrays([SIZE - WALL, 0.0, 0.0], [SIZE, SIZE, HEIGHT]),
        Aabb::from_arrays([WALL, 0.0, 0.0], [SIZE - WALL, WALL, HEIGHT]),
        Aabb::from_arrays([WALL, SIZE - WALL, 0.0], [SIZE - WALL, SIZE, HEIGHT]),
    ];
    obstacles.extend(pillars);
    let objects = low
        .into_iter()
        .enumerate()
        .map(|(i, b)| LabeledObject {
            id: i as u32 + 1,
            bbox: b,
            category: if i == 0 {
                TARGET_CATEGORY.to_string()
            } else {
                OTHER_CATEGORIES[(i - 1) % OTHER_CATEGORIES.len()].to_string()
            },
            is_target: i == 0,
        })
        .collect();

    ScenarioFile {
        world: WorldConfig {
            bounds: Aabb::from_arrays([0.0; 3], [SIZE, SIZE, HEIGHT]),
            voxel_size: RES,
        },
        obstacles,
        objects,
        task_box: Some(Aabb::from_arrays([WALL, WALL, 0.0], [SIZE - WALL, SIZE - WALL, HEIGHT])),
        start: StartConfig {
            position: start,
            yaw: rng.random_range(-3.0..3.0),
            jitter: StartJitter::default(),
        },
        query: TARGET_CATEGORY.to_string(),
        thresholds: vec![1.0, 1.5],
        robot: RobotConfig {
            radius: 0.1,
            ..RobotConfig::default()
        },
        camera: CameraConfig::default(),
        seeds: vec![seed],
        mission: MissionConfig::default(),
        planner: PlannerParams {
            cell_size: 2.0,
            ..PlannerParams::default()
        },
        memory: MemoryParams::default(),
        embedder: SyntheticEmbedderConfig::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Scenario;

    #[test]
    fn rooms_validate_and_respect_clearance() {
        for seed in 0..20 {
            let f = generate_room(seed);
            let s = Scenario::from_file(f.clone()).unwrap();
            assert_eq!(s.scene.targets().count(), 1);
            let n_pillars = f.obstacles.len() - 4;
            assert!((1..=3).contains(&n_pillars));
            assert!((3..=5).contains(&f.objects.len()));
            let mut boxes: Vec<Aabb> = f.obstacles[4..].to_vec();
            boxes.extend(f.objects.iter().map(|o| o.bbox));
            for (i, a) in boxes.iter().enumerate() {
                for b in &boxes[i + 1..] {
                    assert!(xy_gap(a, b) >= GAP - 1e-9);
                }
                for k in 0..3 {
                    let snapped = (a.min[k] / RES).round() * RES;
                    assert!((a.min[k] - snapped).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate_room(3), generate_room(3));
        assert_ne!(generate_room(3), generate_room(4));
    }
}
