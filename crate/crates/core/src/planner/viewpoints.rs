//! Frontier clusters, their viewpoints, and object-frontier viewpoints.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use serde::Serialize;

use super::cells::Cell;
use super::{PlannerError, PlannerParams};
use crate::cache::SemanticsSource;
use crate::embedding::{cosine, normalize_similarity, Embedding, RunningMax};
use crate::geometry::{Aabb, Vec3};
use crate::memory::ObjectInstance;
use crate::sim::{CameraIntrinsics, RobotPose};
use crate::voxel::{
    connected_components, traverse, CellState, Connectivity, TraversabilityMask, VoxelGrid,
    VoxelIndex,
};

const RING_SAMPLES: usize = 16;
/// Ring radii tried in order, as multiples of the configured radius.
const RING_SCALES: [f64; 3] = [1.0, 0.5, 1.5];
/// Vertical search, in voxels, for a traversable spot in a ring column.
const COLUMN_SEARCH: i64 = 3;
/// Cluster voxels scored per candidate.
const SCORE_SAMPLES: usize = 48;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierCluster {
    pub id: usize,
    /// Sorted.
    pub voxels: Vec<VoxelIndex>,
    pub centroid: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ViewpointKind {
    RegularFrontier,
    ObjectFrontier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ViewpointTarget {
    /// Index into the cycle's cluster list.
    Cluster(usize),
    /// Object instance id.
    Instance(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Viewpoint {
    pub position: Vec3,
    pub yaw: f64,
    pub voxel: VoxelIndex,
    pub kind: ViewpointKind,
    pub target: ViewpointTarget,
    pub s_f: f64,
    pub c_f: f64,
    /// Where `s_f` and `c_f` came from; `None` for object frontiers.
    pub semantics: Option<SemanticsSource>,
    /// Sampled cluster voxels in view from this pose.
    pub visible: usize,
}

/// Group frontier voxels per `tile`-sized block of the region, then split
/// each group into 26-connected components.
pub fn cluster_frontiers(
    grid: &VoxelGrid,
    frontiers: &[VoxelIndex],
    region: &Aabb,
    tile: f64,
) -> Vec<FrontierCluster> {
    let mut groups: BTreeMap<[i64; 3], Vec<VoxelIndex>> = BTreeMap::new();
    for v in frontiers {
        let c = grid.center(*v);
        let key = [0, 1, 2].map(|a| ((c[a] - region.min[a]) / tile).floor() as i64);
        groups.entry(key).or_default().push(*v);
    }
    let mut out = Vec::new();
    for members in groups.values() {
        for comp in connected_components(members, Connectivity::Full26) {
            let sum: Vec3 = comp.iter().map(|v| grid.center(*v)).sum();
            out.push(FrontierCluster {
                id: out.len(),
                centroid: sum / comp.len() as f64,
                voxels: comp,
            });
        }
    }
    out
}

fn line_of_sight(grid: &VoxelGrid, from: &Vec3, to: VoxelIndex) -> bool {
    let target = grid.center(to);
    let d = target - from;
    let dist = d.norm();
    if dist < 1e-9 {
        return true;
    }
    match traverse(grid, from, &(d / dist), dist, |g, v| {
        v != to && g.state(v) == CellState::Occupied
    }) {
        Ok(t) => t.hit.is_none(),
        Err(_) => false,
    }
}

/// Traversable voxel in the column under `p` closest in height to `p`.
fn column_spot(grid: &VoxelGrid, mask: &TraversabilityMask, p: &Vec3) -> Option<VoxelIndex> {
    let base = grid.world_to_index(p).ok()?;
    for k in 0..=COLUMN_SEARCH {
        for dz in if k == 0 { vec![0] } else { vec![k, -k] } {
            if let Some(v) = grid.offset(base, [0, 0, dz]) {
                if mask.is_traversable(v) {
                    return Some(v);
                }
            }
        }
    }
    None
}

/// Best viewpoint for a cluster: candidates on a horizontal ring around the
/// centroid, facing it; the traversable candidate that sees the most
/// cluster voxels (frustum and line of sight) wins. Smaller and larger
/// rings are tried only when the nominal ring yields nothing.
pub fn sample_viewpoints(
    grid: &VoxelGrid,
    mask: &TraversabilityMask,
    cluster: &FrontierCluster,
    intr: &CameraIntrinsics,
    ring_radius: f64,
) -> Result<Viewpoint, PlannerError> {
    let samples = score_samples(cluster);
    let c = cluster.centroid;
    for scale in RING_SCALES {
        let r = ring_radius * scale;
        let mut best: Option<Viewpoint> = None;
        for k in 0..RING_SAMPLES {
            let th = TAU * k as f64 / RING_SAMPLES as f64;
            let probe = Vec3::new(c.x + r * th.cos(), c.y + r * th.sin(), c.z);
            let Some(v) = column_spot(grid, mask, &probe) else {
                continue;
            };
            let Some(vp) = facing(grid, intr, cluster, &samples, v) else {
                continue;
            };
            if best.as_ref().is_none_or(|b| vp.visible > b.visible) {
                best = Some(vp);
            }
        }
        if let Some(b) = best {
            return Ok(b);
        }
    }
    Err(PlannerError::ClusterUnviewable)
}

/// Viewpoint at `spot` that only turns toward the cluster. Used when no
/// ring candidate is known to be traversable yet, as right after start-up
/// facing a close wall.
pub fn turn_in_place_viewpoint(
    grid: &VoxelGrid,
    cluster: &FrontierCluster,
    intr: &CameraIntrinsics,
    spot: VoxelIndex,
) -> Option<Viewpoint> {
    facing(grid, intr, cluster, &score_samples(cluster), spot)
}

fn score_samples(cluster: &FrontierCluster) -> Vec<VoxelIndex> {
    let stride = cluster.voxels.len().div_ceil(SCORE_SAMPLES).max(1);
    cluster.voxels.iter().step_by(stride).copied().collect()
}

/// Candidate at `v` facing the centroid, if it sees any sampled voxel.
fn facing(
    grid: &VoxelGrid,
    intr: &CameraIntrinsics,
    cluster: &FrontierCluster,
    samples: &[VoxelIndex],
    v: VoxelIndex,
) -> Option<Viewpoint> {
    let c = cluster.centroid;
    let p = grid.center(v);
    let yaw = (c.y - p.y).atan2(c.x - p.x);
    let pose = RobotPose::new(p, yaw);
    let visible = samples
        .iter()
        .filter(|s| intr.sees(&pose, &grid.center(**s)) && line_of_sight(grid, &p, **s))
        .count();
    (visible > 0).then(|| Viewpoint {
        position: p,
        yaw: pose.yaw,
        voxel: v,
        kind: ViewpointKind::RegularFrontier,
        target: ViewpointTarget::Cluster(cluster.id),
        s_f: 0.0,
        c_f: 0.0,
        semantics: None,
        visible,
    })
}

/// March from `start` toward `goal_xy` at voxel steps while the voxel stays
/// inside `bounds` and traversable. Returns the last admitted voxel.
fn march(
    grid: &VoxelGrid,
    mask: &TraversabilityMask,
    start: &Vec3,
    goal: &Vec3,
    bounds: &Aabb,
) -> Option<VoxelIndex> {
    let admit = |p: &Vec3| -> Option<VoxelIndex> {
        if !bounds.contains(p) {
            return None;
        }
        let v = grid.world_to_index(p).ok()?;
        mask.is_traversable(v).then_some(v)
    };
    let mut last = admit(start)?;
    let flat = Vec3::new(goal.x - start.x, goal.y - start.y, 0.0);
    let len = flat.norm();
    if len < 1e-9 {
        return Some(last);
    }
    let dir = flat / len;
    let step = grid.resolution();
    let n = (len / step).floor() as usize;
    for m in 1..=n {
        match admit(&(start + dir * (step * m as f64))) {
            Some(v) => last = v,
            None => break,
        }
    }
    Some(last)
}

/// Object-frontier viewpoints for one free subregion.
///
/// Candidates are instances within `r_obj` of the subregion center whose
/// query cosine is at least half the running maximum. Up to
/// `max_object_frontiers_per_subregion` are kept: the most similar first,
/// then greedily the one farthest from those already kept. Per instance,
/// three horizontal rays at the quartile heights of its box march from the
/// subregion anchor toward its center; the collision-free endpoint nearest
/// the instance becomes the viewpoint.
#[allow(clippy::too_many_arguments)]
pub fn generate_object_frontiers(
    cell: &Cell,
    anchor: Option<VoxelIndex>,
    instances: &[ObjectInstance],
    query: &Embedding,
    rm: &RunningMax,
    grid: &VoxelGrid,
    mask: &TraversabilityMask,
    params: &PlannerParams,
    suppressed: &BTreeSet<u32>,
) -> Vec<Viewpoint> {
    let Some(anchor) = anchor else {
        return Vec::new();
    };
    let mut cands: Vec<(&ObjectInstance, f64)> = instances
        .iter()
        .filter(|i| !suppressed.contains(&i.id))
        .map(|i| (i, cosine(&i.embedding, query)))
        .filter(|(i, c)| {
            *c >= 0.5 * rm.value() && (i.bbox.center() - cell.center).norm() <= params.r_obj
        })
        .collect();
    cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.id.cmp(&b.0.id)));

    let mut chosen: Vec<(&ObjectInstance, f64)> = Vec::new();
    let mut pool = cands;
    while chosen.len() < params.max_object_frontiers_per_subregion && !pool.is_empty() {
        let pick = if chosen.is_empty() {
            0
        } else {
            let sep = |i: &ObjectInstance| {
                chosen
                    .iter()
                    .map(|(c, _)| (c.bbox.center() - i.bbox.center()).norm())
                    .fold(f64::INFINITY, f64::min)
            };
            let mut best = 0;
            for k in 1..pool.len() {
                if sep(pool[k].0) > sep(pool[best].0) {
                    best = k;
                }
            }
            best
        };
        chosen.push(pool.remove(pick));
    }

    let a = grid.center(anchor);
    let mut out = Vec::new();
    for (inst, cos) in chosen {
        let center = inst.bbox.center();
        let (z0, z1) = (inst.bbox.min[2], inst.bbox.max[2]);
        let mut best: Option<(f64, VoxelIndex)> = None;
        for k in 1..=3 {
            let z = z0 + k as f64 * (z1 - z0) / 4.0;
            let start = Vec3::new(a.x, a.y, z);
            let Some(end) = march(grid, mask, &start, &center, &cell.region) else {
                continue;
            };
            let d = inst.bbox.distance_to_point(&grid.center(end));
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, end));
            }
        }
        if let Some((_, v)) = best {
            let p = grid.center(v);
            out.push(Viewpoint {
                position: p,
                yaw: (center.y - p.y).atan2(center.x - p.x),
                voxel: v,
                kind: ViewpointKind::ObjectFrontier,
                target: ViewpointTarget::Instance(inst.id),
                s_f: normalize_similarity(cos, rm),
                c_f: 1.0,
                semantics: None,
                visible: 0,
            });
        }
    }
    out
}
