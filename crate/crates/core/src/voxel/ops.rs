use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{moore_offsets, CellState, VoxelGrid, VoxelIndex, FACE_OFFSETS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Face6,
    Full26,
}

impl Connectivity {
    pub fn offsets(self) -> Vec<[i64; 3]> {
        match self {
            Connectivity::Face6 => FACE_OFFSETS.to_vec(),
            Connectivity::Full26 => moore_offsets().collect(),
        }
    }
}

/// A Free voxel with at least one Unknown face neighbor.
pub fn is_frontier(grid: &VoxelGrid, idx: VoxelIndex) -> bool {
    grid.state(idx) == CellState::Free
        && FACE_OFFSETS.iter().any(|d| {
            grid.offset(idx, *d)
                .is_some_and(|n| grid.state(n) == CellState::Unknown)
        })
}

/// Every frontier voxel, in index order.
pub fn detect_frontiers(grid: &VoxelGrid) -> Vec<VoxelIndex> {
    (0..grid.len())
        .map(|i| grid.from_linear(i))
        .filter(|&v| is_frontier(grid, v))
        .collect()
}

/// Partition `voxels` into connected components. Components come out in
/// order of their smallest member and each is sorted.
pub fn connected_components(voxels: &[VoxelIndex], conn: Connectivity) -> Vec<Vec<VoxelIndex>> {
    let mut sorted: Vec<VoxelIndex> = voxels.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let members: HashSet<VoxelIndex> = sorted.iter().copied().collect();
    let mut seen: HashSet<VoxelIndex> = HashSet::with_capacity(sorted.len());
    let offsets = conn.offsets();
    let mut comps = Vec::new();

    for &seed in &sorted {
        if !seen.insert(seed) {
            continue;
        }
        let mut comp = vec![seed];
        let mut queue = VecDeque::from([seed]);
        while let Some(v) = queue.pop_front() {
            for d in &offsets {
                let (x, y, z) = (v.x as i64 + d[0], v.y as i64 + d[1], v.z as i64 + d[2]);
                if x < 0 || y < 0 || z < 0 {
                    continue;
                }
                let n = VoxelIndex::new(x as usize, y as usize, z as usize);
                if members.contains(&n) && seen.insert(n) {
                    comp.push(n);
                    queue.push_back(n);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

/// Robot-radius clearance map.
#[derive(Debug, Clone)]
pub struct TraversabilityMask {
    dims: [usize; 3],
    /// Free and clear of obstacles.
    strict: Vec<bool>,
    /// Free-or-Unknown and clear of obstacles; for costing only.
    optimistic: Vec<bool>,
}

impl TraversabilityMask {
    fn linear(&self, idx: VoxelIndex) -> usize {
        idx.x + self.dims[0] * (idx.y + self.dims[1] * idx.z)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn is_traversable(&self, idx: VoxelIndex) -> bool {
        self.strict[self.linear(idx)]
    }

    pub fn is_traversable_optimistic(&self, idx: VoxelIndex) -> bool {
        self.optimistic[self.linear(idx)]
    }

    pub fn allows(&self, idx: VoxelIndex, optimistic: bool) -> bool {
        if optimistic {
            self.is_traversable_optimistic(idx)
        } else {
            self.is_traversable(idx)
        }
    }

    pub fn traversable_count(&self) -> usize {
        self.strict.iter().filter(|&&b| b).count()
    }
}

/// A voxel is traversable iff it is Free and no Occupied voxel center lies
/// within `radius` meters of its center.
pub fn inflate_obstacles(grid: &VoxelGrid, radius: f64) -> TraversabilityMask {
    let res = grid.resolution();
    let r_vox = (radius.max(0.0) / res).floor() as i64;
    let r2 = radius.max(0.0) * radius.max(0.0);
    let mut kernel = Vec::new();
    for dz in -r_vox..=r_vox {
        for dy in -r_vox..=r_vox {
            for dx in -r_vox..=r_vox {
                let d2 = ((dx * dx + dy * dy + dz * dz) as f64) * res * res;
                if d2 <= r2 + 1e-12 {
                    kernel.push([dx, dy, dz]);
                }
            }
        }
    }

    let mut near = vec![false; grid.len()];
    for i in 0..grid.len() {
        if grid.state_at_linear(i) != CellState::Occupied {
            continue;
        }
        let idx = grid.from_linear(i);
        for d in &kernel {
            if let Some(n) = grid.offset(idx, *d) {
                near[grid.linear(n)] = true;
            }
        }
    }

    let strict = (0..grid.len())
        .map(|i| grid.state_at_linear(i) == CellState::Free && !near[i])
        .collect();
    let optimistic = (0..grid.len())
        .map(|i| grid.state_at_linear(i) != CellState::Occupied && !near[i])
        .collect();
    TraversabilityMask {
        dims: grid.dims(),
        strict,
        optimistic,
    }
}

/// Breadth-first flood from `seed` over voxels accepted by `pass`.
/// Returns a per-linear-index membership mask.
pub fn flood_fill<F>(grid: &VoxelGrid, seed: VoxelIndex, conn: Connectivity, pass: F) -> Vec<bool>
where
    F: Fn(VoxelIndex) -> bool,
{
    let mut reached = vec![false; grid.len()];
    if !grid.contains_index(seed) || !pass(seed) {
        return reached;
    }
    let offsets = conn.offsets();
    reached[grid.linear(seed)] = true;
    let mut queue = VecDeque::from([seed]);
    while let Some(v) = queue.pop_front() {
        for d in &offsets {
            if let Some(n) = grid.offset(v, *d) {
                let li = grid.linear(n);
                if !reached[li] && pass(n) {
                    reached[li] = true;
                    queue.push_back(n);
                }
            }
        }
    }
    reached
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn grid(n: usize, s: CellState) -> VoxelGrid {
        let mut g = VoxelGrid::new(Vec3::zeros(), 0.1, [n, n, n]).unwrap();
        for i in 0..g.len() {
            let idx = g.from_linear(i);
            g.set(idx, s);
        }
        g
    }

    #[test]
    fn frontier_cases() {
        assert!(detect_frontiers(&grid(5, CellState::Unknown)).is_empty());
        assert!(detect_frontiers(&grid(5, CellState::Free)).is_empty());
        let mut g = grid(5, CellState::Unknown);
        g.set(VoxelIndex::new(2, 2, 2), CellState::Free);
        assert_eq!(detect_frontiers(&g), vec![VoxelIndex::new(2, 2, 2)]);
    }

    #[test]
    fn component_connectivity() {
        let a = VoxelIndex::new(0, 0, 0);
        let face = VoxelIndex::new(1, 0, 0);
        let diag = VoxelIndex::new(1, 1, 0);
        assert_eq!(connected_components(&[a, face], Connectivity::Face6).len(), 1);
        assert_eq!(connected_components(&[a, diag], Connectivity::Face6).len(), 2);
        assert_eq!(connected_components(&[a, diag], Connectivity::Full26).len(), 1);
        assert!(connected_components(&[], Connectivity::Face6).is_empty());
    }

    #[test]
    fn inflation_cases() {
        let free = grid(5, CellState::Free);
        let m = inflate_obstacles(&free, 0.3);
        assert_eq!(m.traversable_count(), free.len());

        let mut g = grid(5, CellState::Free);
        g.set(VoxelIndex::new(2, 2, 2), CellState::Occupied);
        let m0 = inflate_obstacles(&g, 0.0);
        assert_eq!(m0.traversable_count(), g.len() - 1);
        let m = inflate_obstacles(&g, 0.15);
        // center distance 0.1 < 0.15
        assert!(!m.is_traversable(VoxelIndex::new(3, 2, 2)));
        // diagonal: 0.141 < 0.15
        assert!(!m.is_traversable(VoxelIndex::new(3, 3, 2)));
        // corner diagonal: 0.173 > 0.15
        assert!(m.is_traversable(VoxelIndex::new(3, 3, 3)));
    }

    #[test]
    fn unknown_is_not_traversable() {
        let g = grid(3, CellState::Unknown);
        let m = inflate_obstacles(&g, 0.0);
        assert_eq!(m.traversable_count(), 0);
        assert!(m.is_traversable_optimistic(VoxelIndex::new(1, 1, 1)));
    }
}
