//! Per-cycle voxel embedding cache.
//!
//! During sensing every pixel's patch embedding is written into each voxel
//! its ray crosses, free voxels included. Planning reads the cache to give
//! each frontier cluster an embedding `e_F` and a support fraction `c_F`,
//! then the cache is cleared.
//!
//! An entry is logically `(sum of written vectors, write count)`. Since one
//! frame writes the same handful of patch embeddings along thousands of rays,
//! entries store write counts per registered embedding instead of dense sums;
//! the mean is identical.

use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::embedding::{axpy, Embedding};
use crate::geometry::{point_segment_distance, Vec3};
use crate::memory::ObjectInstance;
use crate::voxel::{moore_offsets, RayTraversal, VoxelIndex};

/// Confidence assigned to embeddings pooled from objects along the
/// pose-to-viewpoint segment.
pub const FALLBACK_CONFIDENCE: f64 = 0.5;

const DEGENERATE: f64 = 1e-9;

/// Handle to an embedding registered with [`TemporalCache::register`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EmbeddingId(u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SemanticsSource {
    Cache,
    Fallback,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierSemantics {
    pub embedding: Embedding,
    pub confidence: f64,
    pub source: SemanticsSource,
}

impl FrontierSemantics {
    pub fn none(dim: usize) -> Self {
        Self {
            embedding: Embedding::zeros(dim),
            confidence: 0.0,
            source: SemanticsSource::None,
        }
    }

    pub fn is_none(&self) -> bool {
        self.source == SemanticsSource::None
    }
}

#[derive(Debug, Clone)]
pub struct TemporalCache {
    dim: usize,
    arena: Vec<Embedding>,
    entries: FxHashMap<VoxelIndex, Vec<(EmbeddingId, u32)>>,
}

impl TemporalCache {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            arena: Vec::new(),
            entries: FxHashMap::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of voxels with at least one write.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total writes recorded for `v`.
    pub fn write_count(&self, v: VoxelIndex) -> u32 {
        self.entries
            .get(&v)
            .map_or(0, |e| e.iter().map(|(_, c)| c).sum())
    }

    pub fn register(&mut self, p: Embedding) -> EmbeddingId {
        debug_assert_eq!(p.dim(), self.dim);
        self.arena.push(p);
        EmbeddingId((self.arena.len() - 1) as u32)
    }

    /// Add one write of a registered embedding to every voxel in `voxels`.
    pub fn write_voxels(&mut self, voxels: &[VoxelIndex], id: EmbeddingId) {
        for v in voxels {
            let e = self.entries.entry(*v).or_default();
            match e.iter_mut().find(|(i, _)| *i == id) {
                Some((_, c)) => *c += 1,
                None => e.push((id, 1)),
            }
        }
    }

    /// Write `p` into every voxel the ray visited.
    pub fn cache_write(&mut self, ray: &RayTraversal, p: &Embedding) {
        let id = self.register(p.clone());
        self.write_voxels(&ray.visited, id);
    }

    /// Unnormalized mean of the writes at `v`.
    fn mean(&self, v: VoxelIndex) -> Option<Vec<f64>> {
        let e = self.entries.get(&v)?;
        let mut acc = vec![0.0; self.dim];
        let mut n = 0u32;
        for (id, c) in e {
            axpy(&mut acc, *c as f64, &self.arena[id.0 as usize]);
            n += c;
        }
        acc.iter_mut().for_each(|x| *x /= n as f64);
        Some(acc)
    }

    /// Normalized mean embedding at `v`; `None` without writes or when the
    /// writes cancel out.
    pub fn lookup_voxel(&self, v: VoxelIndex) -> Option<Embedding> {
        self.mean(v).and_then(|m| {
            let n = m.iter().map(|x| x * x).sum::<f64>().sqrt();
            (n >= DEGENERATE).then(|| Embedding::from_raw(m.into_iter().map(|x| x / n).collect()))
        })
    }

    /// Direct entry, else the mean of the usable 26-neighbor entries.
    fn voxel_vector(&self, v: VoxelIndex) -> Option<Embedding> {
        if let Some(e) = self.lookup_voxel(v) {
            return Some(e);
        }
        let mut acc = vec![0.0; self.dim];
        let mut any = false;
        for d in moore_offsets() {
            let (x, y, z) = (v.x as i64 + d[0], v.y as i64 + d[1], v.z as i64 + d[2]);
            if x < 0 || y < 0 || z < 0 {
                continue;
            }
            if let Some(e) = self.lookup_voxel(VoxelIndex::new(x as usize, y as usize, z as usize)) {
                axpy(&mut acc, 1.0, &e);
                any = true;
            }
        }
        if any {
            Embedding::normalized(acc)
        } else {
            None
        }
    }

    /// Pooled embedding and support fraction of a frontier cluster.
    pub fn frontier_embedding(&self, cluster: &[VoxelIndex]) -> FrontierSemantics {
        if cluster.is_empty() {
            return FrontierSemantics::none(self.dim);
        }
        let mut voxels = cluster.to_vec();
        voxels.sort_unstable();
        voxels.dedup();
        let mut acc = vec![0.0; self.dim];
        let mut supported = 0usize;
        for v in &voxels {
            if let Some(e) = self.voxel_vector(*v) {
                axpy(&mut acc, 1.0, &e);
                supported += 1;
            }
        }
        if supported == 0 {
            return FrontierSemantics::none(self.dim);
        }
        match Embedding::normalized(acc) {
            Some(embedding) => FrontierSemantics {
                embedding,
                confidence: supported as f64 / voxels.len() as f64,
                source: SemanticsSource::Cache,
            },
            None => FrontierSemantics::none(self.dim),
        }
    }

    pub fn reset(&mut self) {
        self.entries.clear();
        self.arena.clear();
    }
}

/// Combine the previous and current semantics of a persistent frontier:
/// confidence-weighted direction, max confidence.
pub fn merge_frontier(prev: &FrontierSemantics, curr: &FrontierSemantics) -> FrontierSemantics {
    match (prev.is_none(), curr.is_none()) {
        (true, true) => FrontierSemantics::none(curr.embedding.dim()),
        (true, false) => curr.clone(),
        (false, true) => prev.clone(),
        (false, false) => {
            let mut acc = vec![0.0; curr.embedding.dim()];
            axpy(&mut acc, prev.confidence, &prev.embedding);
            axpy(&mut acc, curr.confidence, &curr.embedding);
            match Embedding::normalized(acc) {
                Some(embedding) => FrontierSemantics {
                    embedding,
                    confidence: prev.confidence.max(curr.confidence),
                    source: SemanticsSource::Cache,
                },
                None => curr.clone(),
            }
        }
    }
}

/// Unweighted mean of the instances whose box the pose-to-viewpoint segment
/// crosses, or whose box center lies within one voxel of the segment.
pub fn fallback_ray_pool(
    pose: &Vec3,
    viewpoint: &Vec3,
    instances: &[ObjectInstance],
    voxel_size: f64,
    dim: usize,
) -> FrontierSemantics {
    let mut acc = vec![0.0; dim];
    let mut any = false;
    let mut ordered: Vec<&ObjectInstance> = instances.iter().collect();
    ordered.sort_by_key(|i| i.id);
    for inst in ordered {
        let crosses = inst.bbox.intersects_segment(pose, viewpoint);
        let near = point_segment_distance(&inst.bbox.center(), pose, viewpoint) <= voxel_size;
        if crosses || near {
            axpy(&mut acc, 1.0, &inst.embedding);
            any = true;
        }
    }
    if !any {
        return FrontierSemantics::none(dim);
    }
    match Embedding::normalized(acc) {
        Some(embedding) => FrontierSemantics {
            embedding,
            confidence: FALLBACK_CONFIDENCE,
            source: SemanticsSource::Fallback,
        },
        None => FrontierSemantics::none(dim),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine;
    use crate::geometry::Aabb;
    use crate::voxel::RayExit;
    use proptest::prelude::*;

    fn unit(dim: usize, i: usize) -> Embedding {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Embedding::from_raw(v)
    }

    fn ray(voxels: &[(usize, usize, usize)]) -> RayTraversal {
        RayTraversal {
            visited: voxels.iter().map(|&(x, y, z)| VoxelIndex::new(x, y, z)).collect(),
            hit: None,
            exit_reason: RayExit::MaxRange,
        }
    }

    #[test]
    fn writes_and_counts() {
        let mut c = TemporalCache::new(4);
        let r = ray(&[(0, 0, 0), (1, 0, 0), (2, 0, 0)]);
        c.cache_write(&r, &unit(4, 0));
        assert_eq!(c.len(), 3);
        assert!(r.visited.iter().all(|v| c.write_count(*v) == 1));
        c.cache_write(&r, &unit(4, 0));
        assert!(r.visited.iter().all(|v| c.write_count(*v) == 2));
        assert_eq!(c.lookup_voxel(VoxelIndex::new(1, 0, 0)), Some(unit(4, 0)));

        let crossing = ray(&[(1, 1, 0), (1, 0, 0), (1, 2, 0)]);
        let mut fresh = TemporalCache::new(4);
        fresh.cache_write(&r, &unit(4, 0));
        fresh.cache_write(&crossing, &unit(4, 1));
        assert_eq!(fresh.write_count(VoxelIndex::new(1, 0, 0)), 2);
    }

    #[test]
    fn lookup_cases() {
        let mut c = TemporalCache::new(3);
        let v = VoxelIndex::new(0, 0, 0);
        assert_eq!(c.lookup_voxel(v), None);
        c.cache_write(&ray(&[(0, 0, 0)]), &unit(3, 2));
        assert_eq!(c.lookup_voxel(v), Some(unit(3, 2)));
        c.cache_write(&ray(&[(0, 0, 0)]), &Embedding::from_raw(vec![0.0, 0.0, -1.0]));
        assert_eq!(c.lookup_voxel(v), None);
    }

    #[test]
    fn cluster_support_fraction() {
        let mut c = TemporalCache::new(4);
        c.cache_write(&ray(&[(0, 0, 0), (1, 0, 0)]), &unit(4, 1));
        // (10,*,0) voxels have no direct entry and no cached neighbor
        let cluster: Vec<_> = [(0, 0, 0), (1, 0, 0), (10, 0, 0), (11, 0, 0)]
            .iter()
            .map(|&(x, y, z)| VoxelIndex::new(x, y, z))
            .collect();
        let f = c.frontier_embedding(&cluster);
        assert_eq!(f.confidence, 0.5);
        assert_eq!(f.source, SemanticsSource::Cache);
        assert_eq!(f.embedding, unit(4, 1));

        // neighbor support
        let with_neighbor = vec![VoxelIndex::new(2, 1, 0)];
        let g = c.frontier_embedding(&with_neighbor);
        assert_eq!(g.confidence, 1.0);
        assert!((cosine(&g.embedding, &unit(4, 1)) - 1.0).abs() < 1e-12);

        let empty = TemporalCache::new(4);
        let n = empty.frontier_embedding(&cluster);
        assert_eq!(n, FrontierSemantics::none(4));
    }

    #[test]
    fn merge_cases() {
        let none = FrontierSemantics::none(4);
        let curr = FrontierSemantics {
            embedding: unit(4, 0),
            confidence: 0.6,
            source: SemanticsSource::Cache,
        };
        assert_eq!(merge_frontier(&none, &curr), curr);
        assert_eq!(merge_frontier(&curr, &curr), curr);
        assert!(merge_frontier(&none, &none).is_none());

        let a = FrontierSemantics {
            embedding: unit(4, 0),
            confidence: 0.2,
            source: SemanticsSource::Cache,
        };
        let b = FrontierSemantics {
            embedding: unit(4, 1),
            confidence: 0.8,
            source: SemanticsSource::Cache,
        };
        let m = merge_frontier(&a, &b);
        assert!((cosine(&m.embedding, &unit(4, 1)) - 0.8 / 0.68f64.sqrt()).abs() < 1e-12);
        assert_eq!(m.confidence, 0.8);
    }

    fn inst(id: u32, bbox: Aabb, e: Embedding) -> ObjectInstance {
        ObjectInstance {
            id,
            voxels: [VoxelIndex::new(0, 0, 0)].into_iter().collect(),
            bbox,
            embedding: e,
        }
    }

    #[test]
    fn fallback_cases() {
        let a = Vec3::new(0.0, 0.0, 0.5);
        let b = Vec3::new(4.0, 0.0, 0.5);
        assert!(fallback_ray_pool(&a, &b, &[], 0.1, 4).is_none());

        let straddle = inst(0, Aabb::from_arrays([1.0, -0.5, 0.0], [2.0, 0.5, 1.0]), unit(4, 0));
        let f = fallback_ray_pool(&a, &b, std::slice::from_ref(&straddle), 0.1, 4);
        assert_eq!(f.source, SemanticsSource::Fallback);
        assert_eq!(f.confidence, 0.5);
        assert_eq!(f.embedding, unit(4, 0));

        let other = inst(1, Aabb::from_arrays([3.0, 0.05, 0.4], [3.2, 0.15, 0.6]), unit(4, 1));
        let g = fallback_ray_pool(&a, &b, &[other.clone(), straddle], 0.1, 4);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((g.embedding[0] - h).abs() < 1e-12 && (g.embedding[1] - h).abs() < 1e-12);

        let far = inst(2, Aabb::from_arrays([1.0, 2.0, 0.0], [2.0, 3.0, 1.0]), unit(4, 2));
        assert!(fallback_ray_pool(&a, &b, &[far], 0.1, 4).is_none());
    }

    #[test]
    fn reset_is_idempotent() {
        let mut c = TemporalCache::new(2);
        c.cache_write(&ray(&[(0, 0, 0), (0, 1, 0)]), &unit(2, 0));
        c.reset();
        assert!(c.is_empty());
        c.reset();
        assert!(c.is_empty());
        c.cache_write(&ray(&[(5, 5, 5)]), &unit(2, 1));
        assert_eq!(c.len(), 1);
        assert_eq!(c.lookup_voxel(VoxelIndex::new(0, 0, 0)), None);
    }

    proptest! {
        #[test]
        fn confidence_bounded_and_order_invariant(
            writes in proptest::collection::vec((0usize..6, 0usize..6, 0usize..3), 0..20),
            cluster in proptest::collection::vec((0usize..8, 0usize..8, 0usize..3), 1..15),
        ) {
            let mut c = TemporalCache::new(3);
            for (k, (x, y, z)) in writes.iter().enumerate() {
                c.cache_write(&ray(&[(*x, *y, *z)]), &unit(3, k % 3));
            }
            let vox: Vec<VoxelIndex> = cluster.iter().map(|&(x, y, z)| VoxelIndex::new(x, y, z)).collect();
            let f = c.frontier_embedding(&vox);
            prop_assert!((0.0..=1.0).contains(&f.confidence));
            let mut rev = vox.clone();
            rev.reverse();
            prop_assert_eq!(f, c.frontier_embedding(&rev));
        }
    }
}
