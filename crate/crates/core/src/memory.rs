//! Object-level semantic memory.
//!
//! Patches whose query similarity clears half the running maximum are
//! back-projected onto occupied voxels. Each 26-connected component either
//! fuses into an existing instance (exponential moving average on the unit
//! sphere) or starts a new one. Free-subregion centers read a pooled
//! embedding from nearby instances.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{axpy, cosine, Embedding, RunningMax};
use crate::geometry::{Aabb, Vec3};
use crate::sim::camera::{CameraIntrinsics, DepthImage, RobotPose};
use crate::voxel::{connected_components, CellState, Connectivity, VoxelGrid, VoxelIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssociationParams {
    /// Minimum cosine(p, e) to fuse into an instance.
    pub cos_threshold: f64,
    /// Fraction of the component's z-extent that must overlap the instance box.
    pub min_vertical_overlap: f64,
    pub alpha0: f64,
    /// Voxel count at which the EMA step halves.
    pub alpha_halflife_voxels: f64,
}

impl Default for AssociationParams {
    fn default() -> Self {
        Self {
            cos_threshold: 0.8,
            min_vertical_overlap: 0.2,
            alpha0: 0.5,
            alpha_halflife_voxels: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionPoolParams {
    /// Pooling radius (m).
    pub r: f64,
    pub epsilon: f64,
}

impl Default for RegionPoolParams {
    fn default() -> Self {
        Self { r: 3.0, epsilon: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemoryParams {
    pub association: AssociationParams,
    pub region: RegionPoolParams,
}

impl MemoryParams {
    pub fn validate(&self) -> Result<(), (String, String)> {
        let a = &self.association;
        let bad = |f: &str, m: &str| Err((format!("memory.{f}"), m.to_string()));
        if !(a.cos_threshold > 0.0 && a.cos_threshold < 1.0) {
            return bad("association.cos_threshold", "must lie in (0, 1)");
        }
        if !(a.min_vertical_overlap > 0.0 && a.min_vertical_overlap <= 1.0) {
            return bad("association.min_vertical_overlap", "must lie in (0, 1]");
        }
        if !(a.alpha0 > 0.0 && a.alpha0 < 1.0) {
            return bad("association.alpha0", "must lie in (0, 1)");
        }
        if !(a.alpha_halflife_voxels > 0.0) {
            return bad("association.alpha_halflife_voxels", "must be positive");
        }
        if !(self.region.r > 0.0) {
            return bad("region.r", "must be positive");
        }
        if !(self.region.epsilon > 0.0) {
            return bad("region.epsilon", "must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("fusion of near-antipodal embeddings has no direction")]
    DegenerateFusion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectInstance {
    pub id: u32,
    pub voxels: BTreeSet<VoxelIndex>,
    /// Tight cover of `voxels`.
    pub bbox: Aabb,
    pub embedding: Embedding,
}

impl ObjectInstance {
    pub fn voxel_count(&self) -> usize {
        self.voxels.len()
    }
}

/// One gated patch, ready for association.
#[derive(Debug, Clone)]
pub struct PatchObservation {
    pub embedding: Embedding,
    pub query_similarity: f64,
    pub components: Vec<Vec<VoxelIndex>>,
}

/// Debug export row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: u32,
    pub bbox: Aabb,
    pub voxel_count: usize,
    pub query_cosine: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SemanticMemory {
    instances: Vec<ObjectInstance>,
    next_id: u32,
}

/// Occupied voxels hit by the valid pixels of one patch, split into
/// 26-connected components.
pub fn project_patch_to_components(
    patch: usize,
    depth: &DepthImage,
    pose: &RobotPose,
    intr: &CameraIntrinsics,
    grid: &VoxelGrid,
) -> Vec<Vec<VoxelIndex>> {
    let mut hit: Vec<VoxelIndex> = intr
        .patch_pixels(patch)
        .filter_map(|(u, v)| {
            let d = depth.at(u, v);
            if !DepthImage::is_valid_depth(d) {
                return None;
            }
            let p = crate::voxel::surface_point(pose, intr, u, v, d);
            let idx = grid.world_to_index(&p).ok()?;
            (grid.state(idx) == CellState::Occupied).then_some(idx)
        })
        .collect();
    hit.sort_unstable();
    hit.dedup();
    connected_components(&hit, Connectivity::Full26)
}

/// Patch passes if its similarity is at least half the running maximum.
pub fn gate_patch(patch_query_sim: f64, rm: &RunningMax) -> bool {
    patch_query_sim >= 0.5 * rm.value()
}

/// `alpha0 / (1 + n / halflife)`.
pub fn alpha_schedule(voxel_count: usize, params: &AssociationParams) -> f64 {
    params.alpha0 / (1.0 + voxel_count as f64 / params.alpha_halflife_voxels)
}

/// `normalize((1 - alpha) e + alpha p)`.
pub fn fuse_embedding(e: &Embedding, p: &Embedding, alpha: f64) -> Result<Embedding, FusionError> {
    let mixed: Vec<f64> = e
        .as_slice()
        .iter()
        .zip(p.as_slice())
        .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
        .collect();
    Embedding::normalized(mixed).ok_or(FusionError::DegenerateFusion)
}

fn vertical_overlap_fraction(component: &Aabb, instance: &Aabb) -> f64 {
    let extent = component.max[2] - component.min[2];
    if extent <= 0.0 {
        return 0.0;
    }
    let overlap = component.max[2].min(instance.max[2]) - component.min[2].max(instance.min[2]);
    overlap.max(0.0) / extent
}

/// Best qualifying instance for a component: its box must touch the
/// instance box grown by `tolerance`, overlap that grown box vertically by
/// the configured fraction, and its patch embedding must clear the cosine
/// threshold. Highest cosine wins, lowest id on ties.
///
/// A one-voxel tolerance lets fragments seen through vertically adjacent
/// image patches join the same instance.
pub fn associate_component(
    component_bbox: &Aabb,
    p: &Embedding,
    instances: &[ObjectInstance],
    params: &AssociationParams,
    tolerance: f64,
) -> Option<u32> {
    let mut best: Option<(f64, u32)> = None;
    for inst in instances {
        let grown = Aabb::from_arrays(
            inst.bbox.min.map(|v| v - tolerance),
            inst.bbox.max.map(|v| v + tolerance),
        );
        if !component_bbox.intersects(&grown) {
            continue;
        }
        if vertical_overlap_fraction(component_bbox, &grown) < params.min_vertical_overlap {
            continue;
        }
        let c = cosine(p, &inst.embedding);
        if c < params.cos_threshold {
            continue;
        }
        if best.is_none_or(|(bc, _)| c > bc) {
            best = Some((c, inst.id));
        }
    }
    best.map(|(_, id)| id)
}

/// Distance-weighted pooled embedding around `center`. Zero if no instance
/// box center lies within `r`, or if the weighted sum cancels out.
pub fn pool_region_embedding(
    center: &Vec3,
    instances: &[ObjectInstance],
    params: &RegionPoolParams,
    dim: usize,
) -> Embedding {
    let mut near: Vec<(&ObjectInstance, f64)> = instances
        .iter()
        .map(|i| (i, (i.bbox.center() - center).norm()))
        .filter(|(_, d)| *d <= params.r)
        .collect();
    if near.is_empty() {
        return Embedding::zeros(dim);
    }
    // fixed summation order keeps the result independent of storage order
    near.sort_by_key(|(i, _)| i.id);
    let mut acc = vec![0.0; dim];
    let mut wsum = 0.0;
    for (inst, d) in near {
        let w = 1.0 / (d + params.epsilon);
        axpy(&mut acc, w, &inst.embedding);
        wsum += w;
    }
    acc.iter_mut().for_each(|x| *x /= wsum);
    Embedding::normalized(acc).unwrap_or_else(|| Embedding::zeros(dim))
}

impl SemanticMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Memory preloaded with `instances`; new ids continue after the largest.
    pub fn from_instances(instances: Vec<ObjectInstance>) -> Self {
        let next_id = instances.iter().map(|i| i.id + 1).max().unwrap_or(0);
        Self { instances, next_id }
    }

    pub fn instances(&self) -> &[ObjectInstance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&ObjectInstance> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// Floats held by stored embeddings.
    pub fn stored_floats(&self) -> usize {
        self.instances.iter().map(|i| i.embedding.dim()).sum()
    }

    /// Fuse or create one instance per component of a gated patch.
    /// Returns the ids touched, in component order.
    pub fn upsert(
        &mut self,
        obs: &PatchObservation,
        params: &AssociationParams,
        grid: &VoxelGrid,
    ) -> Vec<u32> {
        let mut touched = Vec::with_capacity(obs.components.len());
        for comp in &obs.components {
            let Some(cb) = grid.voxels_bbox(comp) else {
                continue;
            };
            match associate_component(&cb, &obs.embedding, &self.instances, params, grid.resolution()) {
                Some(id) => {
                    let inst = self
                        .instances
                        .iter_mut()
                        .find(|i| i.id == id)
                        .expect("associated id exists");
                    let alpha = alpha_schedule(inst.voxel_count(), params);
                    if let Ok(e) = fuse_embedding(&inst.embedding, &obs.embedding, alpha) {
                        inst.embedding = e;
                    }
                    inst.voxels.extend(comp.iter().copied());
                    inst.bbox = inst.bbox.union(&cb);
                    touched.push(self.absorb_overlapping(id, params, grid.resolution()));
                }
                None => {
                    let id = self.next_id;
                    self.next_id += 1;
                    self.instances.push(ObjectInstance {
                        id,
                        voxels: comp.iter().copied().collect(),
                        bbox: cb,
                        embedding: obs.embedding.clone(),
                    });
                    touched.push(id);
                }
            }
        }
        touched
    }

    /// Merge into `id` every instance its grown box now meets under the
    /// association rules, repeating until none is left. Returns the id of the
    /// survivor, which is the smallest id among the merged instances.
    fn absorb_overlapping(&mut self, mut id: u32, params: &AssociationParams, tolerance: f64) -> u32 {
        loop {
            let a = self.instances.iter().position(|i| i.id == id).expect("instance exists");
            let other = self.instances.iter().position(|b| {
                b.id != id && associate_component(&self.instances[a].bbox, &self.instances[a].embedding, std::slice::from_ref(b), params, tolerance).is_some()
            });
            let Some(b) = other else {
                return id;
            };
            let absorbed = self.instances.remove(b);
            let a = self.instances.iter().position(|i| i.id == id).expect("survivor exists");
            let keep = &mut self.instances[a];
            let mut acc = vec![0.0; keep.embedding.dim()];
            axpy(&mut acc, keep.voxel_count() as f64, &keep.embedding);
            axpy(&mut acc, absorbed.voxel_count() as f64, &absorbed.embedding);
            if let Some(e) = Embedding::normalized(acc) {
                keep.embedding = e;
            }
            keep.voxels.extend(absorbed.voxels);
            keep.bbox = keep.bbox.union(&absorbed.bbox);
            keep.id = keep.id.min(absorbed.id);
            id = keep.id;
        }
    }

    /// Process one frame: update the running maximum with every patch's
    /// query similarity, then gate, project and upsert.
    #[allow(clippy::too_many_arguments)]
    pub fn observe_frame(
        &mut self,
        patches: &[Embedding],
        query: &Embedding,
        rm: &mut RunningMax,
        depth: &DepthImage,
        pose: &RobotPose,
        intr: &CameraIntrinsics,
        grid: &VoxelGrid,
        params: &AssociationParams,
    ) -> usize {
        let sims: Vec<f64> = patches.iter().map(|p| cosine(p, query)).collect();
        rm.update(sims.iter().copied());
        let mut gated = 0;
        for (i, (p, &s)) in patches.iter().zip(&sims).enumerate() {
            if !gate_patch(s, rm) {
                continue;
            }
            gated += 1;
            let components = project_patch_to_components(i, depth, pose, intr, grid);
            if components.is_empty() {
                continue;
            }
            let obs = PatchObservation {
                embedding: p.clone(),
                query_similarity: s,
                components,
            };
            self.upsert(&obs, params, grid);
        }
        gated
    }

    pub fn export(&self, query: &Embedding) -> Vec<InstanceRecord> {
        self.instances
            .iter()
            .map(|i| InstanceRecord {
                id: i.id,
                bbox: i.bbox,
                voxel_count: i.voxel_count(),
                query_cosine: cosine(&i.embedding, query),
            })
            .collect()
    }
}
