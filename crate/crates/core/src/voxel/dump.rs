//! Flat binary grid dump for debugging.
//!
//! Layout, all little-endian:
//!
//! ```text
//! origin.x  f64 | origin.y f64 | origin.z f64
//! resolution f64
//! dims.x u32 | dims.y u32 | dims.z u32
//! states: dims.x * dims.y * dims.z bytes, x fastest then y then z
//!         (0 = Unknown, 1 = Free, 2 = Occupied)
//! ```

use std::io::{Read, Write};

use super::{CellState, VoxelError, VoxelGrid};
use crate::geometry::Vec3;

const HEADER_LEN: usize = 4 * 8 + 3 * 4;

pub fn write_dump<W: Write>(grid: &VoxelGrid, mut w: W) -> std::io::Result<()> {
    let o = grid.origin();
    for v in [o.x, o.y, o.z, grid.resolution()] {
        w.write_all(&v.to_le_bytes())?;
    }
    for d in grid.dims() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    let bytes: Vec<u8> = grid.states().iter().map(|s| *s as u8).collect();
    w.write_all(&bytes)
}

pub fn read_dump<R: Read>(mut r: R) -> Result<VoxelGrid, VoxelError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| VoxelError::MalformedDump(e.to_string()))?;
    if buf.len() < HEADER_LEN {
        return Err(VoxelError::MalformedDump("truncated header".into()));
    }
    let f = |i: usize| f64::from_le_bytes(buf[i * 8..i * 8 + 8].try_into().unwrap());
    let u = |i: usize| {
        let at = 32 + i * 4;
        u32::from_le_bytes(buf[at..at + 4].try_into().unwrap()) as usize
    };
    let mut grid = VoxelGrid::new(Vec3::new(f(0), f(1), f(2)), f(3), [u(0), u(1), u(2)])?;
    let body = &buf[HEADER_LEN..];
    if body.len() != grid.len() {
        return Err(VoxelError::MalformedDump(format!(
            "expected {} state bytes, found {}",
            grid.len(),
            body.len()
        )));
    }
    for (i, b) in body.iter().enumerate() {
        let s = CellState::from_u8(*b)
            .ok_or_else(|| VoxelError::MalformedDump(format!("bad state byte {b} at {i}")))?;
        let idx = grid.from_linear(i);
        grid.set(idx, s);
    }
    Ok(grid)
}
