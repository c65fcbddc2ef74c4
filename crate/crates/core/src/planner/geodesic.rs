//! Shortest paths over the 26-connected traversable voxel graph.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::Vec3;
use crate::voxel::{moore_offsets, TraversabilityMask, VoxelGrid, VoxelIndex};

const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    key: f64,
    idx: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    // min-heap on (key, idx)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn steps(res: f64) -> Vec<([i64; 3], f64)> {
    moore_offsets()
        .map(|d| {
            let n = d.iter().map(|x| x.abs()).sum::<i64>() as f64;
            (d, res * n.sqrt())
        })
        .collect()
}

/// Single-source distances over traversable voxels.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub source: VoxelIndex,
    dist: Vec<f64>,
    parent: Vec<u32>,
}

impl DistanceField {
    /// Dijkstra from `source`. The source itself is always admitted; other
    /// voxels must pass the mask. Stops early once every voxel in `targets`
    /// is settled (an empty target list explores everything reachable).
    pub fn compute(
        grid: &VoxelGrid,
        mask: &TraversabilityMask,
        optimistic: bool,
        source: VoxelIndex,
        targets: &[VoxelIndex],
    ) -> Self {
        let n = grid.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![NO_PARENT; n];
        let mut settled = vec![false; n];
        let mut pending: Vec<bool> = vec![false; n];
        let mut remaining = 0usize;
        for t in targets {
            let li = grid.linear(*t);
            if !pending[li] {
                pending[li] = true;
                remaining += 1;
            }
        }
        let steps = steps(grid.resolution());
        let s = grid.linear(source);
        dist[s] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Entry {
            cost: 0.0,
            key: 0.0,
            idx: s as u32,
        });
        while let Some(Entry { cost, idx, .. }) = heap.pop() {
            let li = idx as usize;
            if settled[li] {
                continue;
            }
            settled[li] = true;
            if pending[li] {
                pending[li] = false;
                remaining -= 1;
                if remaining == 0 {
                    break;
                }
            }
            let v = grid.from_linear(li);
            for (d, w) in &steps {
                let Some(nb) = grid.offset(v, *d) else {
                    continue;
                };
                if !mask.allows(nb, optimistic) {
                    continue;
                }
                let ni = grid.linear(nb);
                let nc = cost + w;
                if nc < dist[ni] {
                    dist[ni] = nc;
                    parent[ni] = idx;
                    heap.push(Entry {
                        cost: nc,
                        key: nc,
                        idx: ni as u32,
                    });
                }
            }
        }
        Self {
            source,
            dist,
            parent,
        }
    }

    pub fn distance(&self, grid: &VoxelGrid, v: VoxelIndex) -> Option<f64> {
        let d = self.dist[grid.linear(v)];
        d.is_finite().then_some(d)
    }

    /// Voxel path from the source to `v`, both ends included.
    pub fn path_to(&self, grid: &VoxelGrid, v: VoxelIndex) -> Option<Vec<VoxelIndex>> {
        self.distance(grid, v)?;
        let mut out = vec![v];
        let mut cur = grid.linear(v);
        let s = grid.linear(self.source);
        while cur != s {
            let p = self.parent[cur];
            if p == NO_PARENT {
                return None;
            }
            cur = p as usize;
            out.push(grid.from_linear(cur));
        }
        out.reverse();
        Some(out)
    }
}

/// A* shortest-path length between the voxels containing `a` and `b`.
/// `None` if either end is outside the grid, `a` is not traversable, or `b`
/// cannot be reached.
pub fn geodesic_distance(
    a: &Vec3,
    b: &Vec3,
    grid: &VoxelGrid,
    mask: &TraversabilityMask,
    optimistic: bool,
) -> Option<f64> {
    let sa = grid.world_to_index(a).ok()?;
    let sb = grid.world_to_index(b).ok()?;
    if !mask.allows(sa, optimistic) {
        return None;
    }
    if sa == sb {
        return Some(0.0);
    }
    if !mask.allows(sb, optimistic) {
        return None;
    }
    let goal = grid.center(sb);
    let h = |v: VoxelIndex| (grid.center(v) - goal).norm();
    let steps = steps(grid.resolution());
    let n = grid.len();
    let mut g = vec![f64::INFINITY; n];
    let mut closed = vec![false; n];
    let s = grid.linear(sa);
    let t = grid.linear(sb);
    g[s] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry {
        cost: 0.0,
        key: h(sa),
        idx: s as u32,
    });
    while let Some(Entry { cost, idx, .. }) = heap.pop() {
        let li = idx as usize;
        if closed[li] {
            continue;
        }
        if li == t {
            return Some(cost);
        }
        closed[li] = true;
        let v = grid.from_linear(li);
        for (d, w) in &steps {
            let Some(nb) = grid.offset(v, *d) else {
                continue;
            };
            if !mask.allows(nb, optimistic) {
                continue;
            }
            let ni = grid.linear(nb);
            let nc = cost + w;
            if nc < g[ni] {
                g[ni] = nc;
                heap.push(Entry {
                    cost: nc,
                    key: nc + h(nb),
                    idx: ni as u32,
                });
            }
        }
    }
    None
}

/// Nearest mask-admitted voxel to `p` within `max_steps` voxels (Chebyshev),
/// ties broken by index order.
pub fn snap_to_mask(
    grid: &VoxelGrid,
    mask: &TraversabilityMask,
    optimistic: bool,
    p: &Vec3,
    max_steps: i64,
) -> Option<VoxelIndex> {
    let res = grid.resolution();
    let o = grid.origin();
    let f = [(p.x - o.x) / res, (p.y - o.y) / res, (p.z - o.z) / res].map(|x| x.floor() as i64);
    let mut best: Option<(f64, VoxelIndex)> = None;
    for r in 0..=max_steps {
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                        continue;
                    }
                    let Some(v) = grid.index_checked(f[0] + dx, f[1] + dy, f[2] + dz) else {
                        continue;
                    };
                    if !mask.allows(v, optimistic) {
                        continue;
                    }
                    let d = (grid.center(v) - p).norm();
                    if best.is_none_or(|(bd, bv)| d < bd - 1e-12 || (d <= bd + 1e-12 && v < bv)) {
                        best = Some((d, v));
                    }
                }
            }
        }
        // a hit on ring r can still lose to ring r + 1 by Euclidean distance,
        // but never to ring r + 2
        if let Some((d, _)) = best {
            if d <= r as f64 * res {
                break;
            }
        }
    }
    best.map(|(_, v)| v)
}

/// Pairwise geodesic distances between nodes (symmetric since the graph is
/// undirected). Nodes without a voxel are unreachable from everything.
/// Also returns the full field of node 0 for path extraction.
pub fn geodesic_matrix(
    grid: &VoxelGrid,
    mask: &TraversabilityMask,
    optimistic: bool,
    nodes: &[Option<VoxelIndex>],
) -> (Vec<Vec<Option<f64>>>, Option<DistanceField>) {
    let n = nodes.len();
    let mut d = vec![vec![None; n]; n];
    let mut first = None;
    for i in 0..n {
        d[i][i] = nodes[i].map(|_| 0.0);
        let Some(src) = nodes[i] else {
            continue;
        };
        let targets: Vec<VoxelIndex> = nodes[i + 1..].iter().flatten().copied().collect();
        if targets.is_empty() && i > 0 {
            continue;
        }
        let field = DistanceField::compute(grid, mask, optimistic, src, &targets);
        for j in i + 1..n {
            if let Some(t) = nodes[j] {
                let dij = field.distance(grid, t);
                d[i][j] = dij;
                d[j][i] = dij;
            }
        }
        if i == 0 {
            first = Some(field);
        }
    }
    (d, first)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::{inflate_obstacles, CellState};

    fn free_grid(dims: [usize; 3]) -> VoxelGrid {
        let mut g = VoxelGrid::new(Vec3::zeros(), 0.1, dims).unwrap();
        for i in 0..g.len() {
            let v = g.from_linear(i);
            g.set(v, CellState::Free);
        }
        g
    }

    #[test]
    fn corridor_length() {
        let g = free_grid([12, 1, 1]);
        let m = inflate_obstacles(&g, 0.0);
        let a = g.center(VoxelIndex::new(0, 0, 0));
        let b = g.center(VoxelIndex::new(10, 0, 0));
        let d = geodesic_distance(&a, &b, &g, &m, false).unwrap();
        assert!((d - 1.0).abs() < 1e-9);
        assert_eq!(geodesic_distance(&a, &a, &g, &m, false), Some(0.0));
    }

    #[test]
    fn walled_target_is_unreachable() {
        let mut g = free_grid([10, 10, 1]);
        for y in 0..10 {
            g.set(VoxelIndex::new(5, y, 0), CellState::Occupied);
        }
        let m = inflate_obstacles(&g, 0.0);
        let a = g.center(VoxelIndex::new(1, 1, 0));
        let b = g.center(VoxelIndex::new(8, 8, 0));
        assert_eq!(geodesic_distance(&a, &b, &g, &m, false), None);
    }

    #[test]
    fn optimistic_crosses_unknown() {
        let mut g = free_grid([10, 3, 1]);
        for y in 0..3 {
            g.set(VoxelIndex::new(5, y, 0), CellState::Unknown);
        }
        let m = inflate_obstacles(&g, 0.0);
        let a = g.center(VoxelIndex::new(0, 1, 0));
        let b = g.center(VoxelIndex::new(9, 1, 0));
        assert_eq!(geodesic_distance(&a, &b, &g, &m, false), None);
        assert!((geodesic_distance(&a, &b, &g, &m, true).unwrap() - 0.9).abs() < 1e-9);
    }

    #[test]
    fn diagonal_steps() {
        let g = free_grid([5, 5, 5]);
        let m = inflate_obstacles(&g, 0.0);
        let a = g.center(VoxelIndex::new(0, 0, 0));
        let b = g.center(VoxelIndex::new(3, 3, 3));
        let d = geodesic_distance(&a, &b, &g, &m, false).unwrap();
        assert!((d - 0.3 * 3f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn astar_matches_dijkstra_around_obstacles() {
        let mut g = free_grid([16, 16, 3]);
        for (x, y) in [(4, 2), (4, 3), (4, 4), (4, 5), (4, 6), (9, 8), (10, 8), (11, 8), (12, 8)] {
            for z in 0..3 {
                g.set(VoxelIndex::new(x, y, z), CellState::Occupied);
            }
        }
        let m = inflate_obstacles(&g, 0.0);
        let src = VoxelIndex::new(1, 4, 1);
        let field = DistanceField::compute(&g, &m, false, src, &[]);
        for t in [VoxelIndex::new(7, 4, 1), VoxelIndex::new(11, 12, 0), VoxelIndex::new(15, 0, 2)] {
            let a = geodesic_distance(&g.center(src), &g.center(t), &g, &m, false).unwrap();
            let b = field.distance(&g, t).unwrap();
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            let path = field.path_to(&g, t).unwrap();
            assert_eq!(path[0], src);
            assert_eq!(*path.last().unwrap(), t);
        }
    }

    #[test]
    fn snapping() {
        let mut g = free_grid([6, 6, 1]);
        g.set(VoxelIndex::new(2, 2, 0), CellState::Occupied);
        let m = inflate_obstacles(&g, 0.0);
        let p = g.center(VoxelIndex::new(2, 2, 0));
        let s = snap_to_mask(&g, &m, false, &p, 2).unwrap();
        assert_ne!(s, VoxelIndex::new(2, 2, 0));
        assert!(((g.center(s) - p).norm() - 0.1).abs() < 1e-9);
    }
}
