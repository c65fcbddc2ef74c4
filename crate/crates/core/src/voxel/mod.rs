//! Tri-state voxel occupancy map: indexing, ray traversal, depth integration,
//! frontier detection, connected components and obstacle inflation.
//!
//! The grid never wraps. Every query outside `dims` is rejected with
//! [`VoxelError::OutOfBounds`].

mod dump;
mod integrate;
mod ops;
mod raycast;

pub use dump::{read_dump, write_dump};
pub use integrate::{integrate_depth, IntegrationOptions};
pub(crate) use integrate::surface_point;
pub use ops::{
    connected_components, detect_frontiers, flood_fill, inflate_obstacles, is_frontier, Connectivity,
    TraversabilityMask,
};
pub use raycast::{raycast, traverse, RayExit, RayTraversal};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Vec3};

/// Slack applied before flooring so that points sitting on a voxel face (up to
/// float noise) land in the higher-index voxel.
const FACE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoxelError {
    #[error("position ({x:.4}, {y:.4}, {z:.4}) lies outside the grid")]
    OutOfBounds { x: f64, y: f64, z: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("malformed grid dump: {0}")]
    MalformedDump(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum CellState {
    Unknown = 0,
    Free = 1,
    Occupied = 2,
}

impl CellState {
    pub fn is_known(self) -> bool {
        self != CellState::Unknown
    }

    fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(CellState::Unknown),
            1 => Some(CellState::Free),
            2 => Some(CellState::Occupied),
            _ => None,
        }
    }
}

/// Integer voxel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoxelIndex {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl VoxelIndex {
    pub const fn new(x: usize, y: usize, z: usize) -> Self {
        Self { x, y, z }
    }

    pub fn get(&self, axis: usize) -> usize {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

/// Dense occupancy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    origin: Vec3,
    resolution: f64,
    dims: [usize; 3],
    states: Vec<CellState>,
}

impl VoxelGrid {
    /// All-Unknown grid.
    pub fn new(origin: Vec3, resolution: f64, dims: [usize; 3]) -> Result<Self, VoxelError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(VoxelError::InvalidGrid(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(VoxelError::InvalidGrid(format!(
                "dims must be positive on every axis, got {dims:?}"
            )));
        }
        let n = dims[0] * dims[1] * dims[2];
        Ok(Self {
            origin,
            resolution,
            dims,
            states: vec![CellState::Unknown; n],
        })
    }

    /// Grid covering `bounds`; partial voxels at the max faces are rounded up.
    pub fn covering(bounds: &Aabb, resolution: f64) -> Result<Self, VoxelError> {
        let ext = bounds.extent();
        let mut dims = [0usize; 3];
        for a in 0..3 {
            dims[a] = ((ext[a] / resolution) - 1e-6).ceil().max(1.0) as usize;
        }
        Self::new(bounds.min_v(), resolution, dims)
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        let ext = Vec3::new(
            self.dims[0] as f64,
            self.dims[1] as f64,
            self.dims[2] as f64,
        ) * self.resolution;
        Aabb::new(self.origin, self.origin + ext)
    }

    pub fn linear(&self, idx: VoxelIndex) -> usize {
        debug_assert!(self.contains_index(idx));
        idx.x + self.dims[0] * (idx.y + self.dims[1] * idx.z)
    }

    pub fn from_linear(&self, i: usize) -> VoxelIndex {
        let x = i % self.dims[0];
        let y = (i / self.dims[0]) % self.dims[1];
        let z = i / (self.dims[0] * self.dims[1]);
        VoxelIndex { x, y, z }
    }

    pub fn contains_index(&self, idx: VoxelIndex) -> bool {
        idx.x < self.dims[0] && idx.y < self.dims[1] && idx.z < self.dims[2]
    }

    /// Signed-coordinate lookup used by neighborhood walks.
    pub fn index_checked(&self, x: i64, y: i64, z: i64) -> Option<VoxelIndex> {
        if x < 0 || y < 0 || z < 0 {
            return None;
        }
        let idx = VoxelIndex::new(x as usize, y as usize, z as usize);
        self.contains_index(idx).then_some(idx)
    }

    pub fn offset(&self, idx: VoxelIndex, d: [i64; 3]) -> Option<VoxelIndex> {
        self.index_checked(idx.x as i64 + d[0], idx.y as i64 + d[1], idx.z as i64 + d[2])
    }

    pub fn state(&self, idx: VoxelIndex) -> CellState {
        self.states[self.linear(idx)]
    }

    pub fn get(&self, idx: VoxelIndex) -> Result<CellState, VoxelError> {
        if !self.contains_index(idx) {
            let c = self.origin
                + Vec3::new(idx.x as f64, idx.y as f64, idx.z as f64) * self.resolution;
            return Err(VoxelError::OutOfBounds {
                x: c.x,
                y: c.y,
                z: c.z,
            });
        }
        Ok(self.state(idx))
    }

    /// Raw state write; callers that model sensing should go through
    /// [`integrate_depth`] which enforces the monotone transitions.
    pub fn set(&mut self, idx: VoxelIndex, s: CellState) {
        let i = self.linear(idx);
        self.states[i] = s;
    }

    /// Unknown -> Free only; Free and Occupied are left alone.
    pub fn mark_free(&mut self, idx: VoxelIndex) -> bool {
        let i = self.linear(idx);
        if self.states[i] == CellState::Unknown {
            self.states[i] = CellState::Free;
            true
        } else {
            false
        }
    }

    /// Any state -> Occupied. Returns true if the voxel was not already occupied.
    pub fn mark_occupied(&mut self, idx: VoxelIndex) -> bool {
        let i = self.linear(idx);
        let was = self.states[i];
        self.states[i] = CellState::Occupied;
        was != CellState::Occupied
    }

    pub fn states(&self) -> &[CellState] {
        &self.states
    }

    pub fn state_at_linear(&self, i: usize) -> CellState {
        self.states[i]
    }

    pub fn indices(&self) -> impl Iterator<Item = VoxelIndex> + '_ {
        (0..self.states.len()).map(move |i| self.from_linear(i))
    }

    /// Voxel containing `pos`. Points on a shared face belong to the
    /// higher-index voxel; the grid's max faces are outside.
    pub fn world_to_index(&self, pos: &Vec3) -> Result<VoxelIndex, VoxelError> {
        let oob = || VoxelError::OutOfBounds {
            x: pos.x,
            y: pos.y,
            z: pos.z,
        };
        let mut out = [0usize; 3];
        for a in 0..3 {
            let f = (pos[a] - self.origin[a]) / self.resolution;
            if !f.is_finite() || f < -FACE_EPS {
                return Err(oob());
            }
            let i = (f + FACE_EPS).floor();
            if i >= self.dims[a] as f64 {
                return Err(oob());
            }
            out[a] = i.max(0.0) as usize;
        }
        Ok(VoxelIndex::new(out[0], out[1], out[2]))
    }

    pub fn center(&self, idx: VoxelIndex) -> Vec3 {
        self.origin
            + Vec3::new(
                idx.x as f64 + 0.5,
                idx.y as f64 + 0.5,
                idx.z as f64 + 0.5,
            ) * self.resolution
    }

    pub fn voxel_box(&self, idx: VoxelIndex) -> Aabb {
        let lo = self.origin
            + Vec3::new(idx.x as f64, idx.y as f64, idx.z as f64) * self.resolution;
        Aabb::new(lo, lo + Vec3::repeat(self.resolution))
    }

    /// Tight world-frame box over a set of voxels.
    pub fn voxels_bbox<'a, I>(&self, voxels: I) -> Option<Aabb>
    where
        I: IntoIterator<Item = &'a VoxelIndex>,
    {
        voxels
            .into_iter()
            .map(|v| self.voxel_box(*v))
            .reduce(|a, b| a.union(&b))
    }

    pub fn count(&self, s: CellState) -> usize {
        self.states.iter().filter(|&&x| x == s).count()
    }

    /// Voxels whose center lies inside `region`.
    pub fn indices_in(&self, region: &Aabb) -> Vec<VoxelIndex> {
        let lo = self.index_range_lo(region);
        let hi = self.index_range_hi(region);
        let mut out = Vec::new();
        for z in lo[2]..hi[2] {
            for y in lo[1]..hi[1] {
                for x in lo[0]..hi[0] {
                    let idx = VoxelIndex::new(x, y, z);
                    if region.contains(&self.center(idx)) {
                        out.push(idx);
                    }
                }
            }
        }
        out
    }

    fn index_range_lo(&self, region: &Aabb) -> [usize; 3] {
        let mut lo = [0usize; 3];
        for a in 0..3 {
            let f = ((region.min[a] - self.origin[a]) / self.resolution - 0.5).ceil();
            lo[a] = f.clamp(0.0, self.dims[a] as f64) as usize;
        }
        lo
    }

    fn index_range_hi(&self, region: &Aabb) -> [usize; 3] {
        let mut hi = [0usize; 3];
        for a in 0..3 {
            let f = ((region.max[a] - self.origin[a]) / self.resolution - 0.5).floor() + 1.0;
            hi[a] = f.clamp(0.0, self.dims[a] as f64) as usize;
        }
        hi
    }
}

/// The six face-neighbor offsets.
pub const FACE_OFFSETS: [[i64; 3]; 6] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

/// The 26 neighbor offsets, in a fixed order.
pub fn moore_offsets() -> impl Iterator<Item = [i64; 3]> {
    (-1..=1).flat_map(|dz| {
        (-1..=1).flat_map(move |dy| {
            (-1..=1).filter_map(move |dx| {
                if dx == 0 && dy == 0 && dz == 0 {
                    None
                } else {
                    Some([dx, dy, dz])
                }
            })
        })
    })
}
