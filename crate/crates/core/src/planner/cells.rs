//! Uniform cell decomposition of the task box.

use serde::Serialize;

use crate::embedding::Embedding;
use crate::geometry::{Aabb, Vec3};
use crate::voxel::{detect_frontiers, CellState, VoxelGrid, VoxelIndex};

/// Share of a cell's voxels that must be Free (or Unknown) for it to count
/// as a free (or unknown) subregion.
const KIND_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CellKind {
    FreeSubregion,
    UnknownSubregion,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub id: usize,
    pub center: Vec3,
    pub region: Aabb,
    pub kind: CellKind,
    /// Pooled region embedding; zero for unknown subregions.
    #[serde(skip)]
    pub embedding: Embedding,
    /// Query similarity of `embedding`, normalized by the running maximum.
    pub similarity: f64,
    pub frontier_count: usize,
}

/// Axis-aligned cells of edge `cell_size` tiling `region` (the last cell per
/// axis is clipped). Cells are classified by voxel-center membership and
/// kept when they are unknown subregions or hold at least one frontier.
pub fn decompose_cells(grid: &VoxelGrid, region: &Aabb, cell_size: f64) -> Vec<Cell> {
    let frontier_mask = {
        let mut m = vec![false; grid.len()];
        for f in detect_frontiers(grid) {
            m[grid.linear(f)] = true;
        }
        m
    };
    decompose_with_frontiers(grid, region, cell_size, &frontier_mask, 0)
}

fn cell_counts(region: &Aabb, cell_size: f64) -> [usize; 3] {
    let ext = region.extent();
    [0, 1, 2].map(|a| ((ext[a] / cell_size) - 1e-9).ceil().max(1.0) as usize)
}

/// Id of the cell containing `p` (clamped into the tiling).
pub(crate) fn cell_id_of(region: &Aabb, cell_size: f64, p: &Vec3) -> usize {
    let counts = cell_counts(region, cell_size);
    let k = [0, 1, 2].map(|a| {
        let f = ((p[a] - region.min[a]) / cell_size).floor().max(0.0) as usize;
        f.min(counts[a] - 1)
    });
    k[0] + counts[0] * (k[1] + counts[1] * k[2])
}

pub(crate) fn decompose_with_frontiers(
    grid: &VoxelGrid,
    region: &Aabb,
    cell_size: f64,
    frontier_mask: &[bool],
    dim: usize,
) -> Vec<Cell> {
    let counts = cell_counts(region, cell_size);
    let mut out = Vec::new();
    for kz in 0..counts[2] {
        for ky in 0..counts[1] {
            for kx in 0..counts[0] {
                let k = [kx, ky, kz];
                let mut min = [0.0; 3];
                let mut max = [0.0; 3];
                for a in 0..3 {
                    min[a] = region.min[a] + k[a] as f64 * cell_size;
                    max[a] = (min[a] + cell_size).min(region.max[a]);
                }
                let cell_box = Aabb::from_arrays(min, max);
                let voxels: Vec<VoxelIndex> = grid.indices_in(&cell_box);
                if voxels.is_empty() {
                    continue;
                }
                let total = voxels.len() as f64;
                let free = voxels.iter().filter(|v| grid.state(**v) == CellState::Free).count();
                let unknown = voxels
                    .iter()
                    .filter(|v| grid.state(**v) == CellState::Unknown)
                    .count();
                let frontier_count = voxels.iter().filter(|v| frontier_mask[grid.linear(**v)]).count();
                let kind = if free as f64 >= KIND_FRACTION * total {
                    CellKind::FreeSubregion
                } else if unknown as f64 >= KIND_FRACTION * total {
                    CellKind::UnknownSubregion
                } else {
                    continue;
                };
                if frontier_count == 0 && kind != CellKind::UnknownSubregion {
                    continue;
                }
                out.push(Cell {
                    id: kx + counts[0] * (ky + counts[1] * kz),
                    center: cell_box.center(),
                    region: cell_box,
                    kind,
                    embedding: Embedding::zeros(dim),
                    similarity: 0.0,
                    frontier_count,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> VoxelGrid {
        VoxelGrid::new(Vec3::zeros(), 0.1, [40, 20, 10]).unwrap()
    }

    #[test]
    fn all_unknown_gives_unknown_cells() {
        let g = grid();
        let cells = decompose_cells(&g, &g.bounds(), 2.0);
        assert_eq!(cells.len(), 2);
        assert!(cells.iter().all(|c| c.kind == CellKind::UnknownSubregion));
    }

    #[test]
    fn fully_explored_gives_nothing() {
        let mut g = grid();
        for i in 0..g.len() {
            let v = g.from_linear(i);
            g.set(v, CellState::Free);
        }
        assert!(decompose_cells(&g, &g.bounds(), 2.0).is_empty());
    }

    #[test]
    fn half_carved_cell_is_free() {
        let mut g = grid();
        for v in g.indices_in(&Aabb::from_arrays([0.0, 0.0, 0.0], [1.0, 2.0, 1.0])) {
            g.set(v, CellState::Free);
        }
        let cells = decompose_cells(&g, &g.bounds(), 2.0);
        let first = cells.iter().find(|c| c.id == 0).unwrap();
        assert_eq!(first.kind, CellKind::FreeSubregion);
        assert!(first.frontier_count > 0);
    }
}
