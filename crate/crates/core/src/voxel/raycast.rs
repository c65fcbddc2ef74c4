//! Uniform-grid ray traversal (Amanatides & Woo).

use serde::Serialize;

use super::{CellState, VoxelError, VoxelGrid, VoxelIndex};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RayExit {
    MaxRange,
    Hit,
    OutOfBounds,
}

/// Voxels crossed by a ray, in order. Consecutive entries are face-adjacent.
#[derive(Debug, Clone, PartialEq)]
pub struct RayTraversal {
    pub visited: Vec<VoxelIndex>,
    /// The terminal occupied voxel; equal to the last visited entry when set.
    pub hit: Option<VoxelIndex>,
    pub exit_reason: RayExit,
}

/// Walk from `origin` along unit `dir` until the first Occupied voxel,
/// `max_range` meters, or the grid boundary.
pub fn raycast(
    grid: &VoxelGrid,
    origin: &Vec3,
    dir: &Vec3,
    max_range: f64,
) -> Result<RayTraversal, VoxelError> {
    traverse(grid, origin, dir, max_range, |g, v| {
        g.state(v) == CellState::Occupied
    })
}

/// Same traversal as [`raycast`] with a caller-supplied stop predicate.
///
/// A voxel is entered only if its entry parameter is strictly below
/// `max_range`; a ray ending exactly on a face does not enter the next voxel.
pub fn traverse<F>(
    grid: &VoxelGrid,
    origin: &Vec3,
    dir: &Vec3,
    max_range: f64,
    mut stop: F,
) -> Result<RayTraversal, VoxelError>
where
    F: FnMut(&VoxelGrid, VoxelIndex) -> bool,
{
    let start = grid.world_to_index(origin)?;
    let res = grid.resolution();
    let dims = grid.dims();
    let go = grid.origin();

    let mut visited = vec![start];
    if stop(grid, start) {
        return Ok(RayTraversal {
            visited,
            hit: Some(start),
            exit_reason: RayExit::Hit,
        });
    }

    // Position in voxel units relative to the grid origin.
    let f = [
        (origin.x - go.x) / res,
        (origin.y - go.y) / res,
        (origin.z - go.z) / res,
    ];
    let mut cur = [start.x as i64, start.y as i64, start.z as i64];
    let step: [i64; 3] = [0, 1, 2].map(|a| {
        if dir[a] > 0.0 {
            1
        } else if dir[a] < 0.0 {
            -1
        } else {
            0
        }
    });
    // Crossings per axis so far; the next boundary is recomputed from the
    // crossing count rather than accumulated to avoid drift.
    let next_t = |a: usize, c: i64| -> f64 {
        match step[a] {
            1 => ((c + 1) as f64 - f[a]) * res / dir[a],
            -1 => (f[a] - c as f64) * res / -dir[a],
            _ => f64::INFINITY,
        }
    };

    loop {
        let t = [
            next_t(0, cur[0]),
            next_t(1, cur[1]),
            next_t(2, cur[2]),
        ];
        let axis = if t[0] <= t[1] && t[0] <= t[2] {
            0
        } else if t[1] <= t[2] {
            1
        } else {
            2
        };
        let t_enter = t[axis].max(0.0);
        if !(t_enter < max_range) {
            return Ok(RayTraversal {
                visited,
                hit: None,
                exit_reason: RayExit::MaxRange,
            });
        }
        cur[axis] += step[axis];
        if cur[axis] < 0 || cur[axis] >= dims[axis] as i64 {
            return Ok(RayTraversal {
                visited,
                hit: None,
                exit_reason: RayExit::OutOfBounds,
            });
        }
        let idx = VoxelIndex::new(cur[0] as usize, cur[1] as usize, cur[2] as usize);
        visited.push(idx);
        if stop(grid, idx) {
            return Ok(RayTraversal {
                visited,
                hit: Some(idx),
                exit_reason: RayExit::Hit,
            });
        }
    }
}
