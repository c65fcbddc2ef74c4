use super::{raycast, CellState, VoxelGrid, VoxelIndex};
use crate::geometry::Vec3;
use crate::sim::camera::{CameraIntrinsics, DepthImage, RobotPose};

/// Distance a surface point is pushed along its ray so that it lands inside
/// the surface it was measured on rather than on the shared voxel face.
pub(crate) const SURFACE_NUDGE: f64 = 1e-4;

#[derive(Debug, Clone, Copy)]
pub struct IntegrationOptions {
    /// Carve free space up to the sensor range for pixels with no return.
    pub carve_no_return: bool,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            carve_no_return: true,
        }
    }
}

/// World point for a valid z-depth measurement, nudged into the surface.
pub(crate) fn surface_point(
    pose: &RobotPose,
    intr: &CameraIntrinsics,
    u: usize,
    v: usize,
    depth: f64,
) -> Vec3 {
    let ray = intr.pixel_ray(pose, u, v);
    let range = depth * ray.norm();
    pose.position + ray.normalize() * (range + SURFACE_NUDGE)
}

/// Fuse one depth frame into the grid.
///
/// Voxels the ray crosses before its surface become Free, the voxel holding
/// the surface becomes Occupied. Pixels with no return carve Free up to the
/// sensor range. Occupied is never cleared. `on_ray` receives each pixel's
/// voxel path (surface voxel included) for downstream consumers such as the
/// temporal cache. Returns voxels that became Occupied in this call, sorted.
pub fn integrate_depth<F>(
    grid: &mut VoxelGrid,
    pose: &RobotPose,
    intr: &CameraIntrinsics,
    depth: &DepthImage,
    opts: IntegrationOptions,
    mut on_ray: F,
) -> Vec<VoxelIndex>
where
    F: FnMut(usize, &[VoxelIndex]),
{
    let mut newly = Vec::new();
    if grid.world_to_index(&pose.position).is_err() {
        return newly;
    }
    let mut path: Vec<VoxelIndex> = Vec::with_capacity(64);

    for v in 0..depth.height {
        for u in 0..depth.width {
            let d = depth.at(u, v);
            let ray = intr.pixel_ray(pose, u, v);
            let dir = ray.normalize();
            let (carve_to, endpoint) = if DepthImage::is_valid_depth(d) {
                let range = d * ray.norm();
                if range > intr.max_range {
                    if !opts.carve_no_return {
                        continue;
                    }
                    (intr.max_range, None)
                } else {
                    let p = pose.position + dir * (range + SURFACE_NUDGE);
                    (range, grid.world_to_index(&p).ok())
                }
            } else if DepthImage::is_no_return(d) && opts.carve_no_return {
                (intr.max_range, None)
            } else {
                continue;
            };

            let Ok(trav) = raycast(grid, &pose.position, &dir, carve_to) else {
                continue;
            };
            path.clear();
            for &vox in &trav.visited {
                if Some(vox) == endpoint {
                    continue;
                }
                if grid.state(vox) != CellState::Occupied {
                    grid.mark_free(vox);
                }
                path.push(vox);
            }
            if let Some(end) = endpoint {
                if grid.mark_occupied(end) {
                    newly.push(end);
                }
                path.push(end);
            }
            on_ray(v * depth.width + u, &path);
        }
    }
    newly.sort_unstable();
    newly.dedup();
    newly
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (VoxelGrid, CameraIntrinsics, RobotPose) {
        let g = VoxelGrid::new(Vec3::zeros(), 0.1, [20, 20, 20]).unwrap();
        let intr = CameraIntrinsics::from_hfov(1, 1, 0.1, 5.0, 1);
        let pose = RobotPose::new(Vec3::new(0.05, 1.05, 1.05), 0.0);
        (g, intr, pose)
    }

    #[test]
    fn single_pixel_carves_then_occupies() {
        // camera at x = 0.05 looking +x, surface at x = 0.55:
        // voxels 0..=4 carved Free, voxel 5 Occupied
        let (mut g, intr, pose) = setup();
        let depth = DepthImage::filled(1, 1, 0.5);
        let newly = integrate_depth(&mut g, &pose, &intr, &depth, Default::default(), |_, _| {});
        assert_eq!(newly, vec![VoxelIndex::new(5, 10, 10)]);
        let free = g.count(CellState::Free);
        assert!((4..=5).contains(&free), "free = {free}");
        assert_eq!(g.count(CellState::Occupied), 1);
    }

    #[test]
    fn invalid_pixels_leave_grid_unchanged() {
        let (mut g, intr, pose) = setup();
        let before = g.clone();
        let depth = DepthImage::filled(1, 1, f64::NAN);
        integrate_depth(&mut g, &pose, &intr, &depth, Default::default(), |_, _| {});
        assert_eq!(g, before);
    }

    #[test]
    fn reobserving_is_idempotent() {
        let (mut g, _, pose) = setup();
        let intr = CameraIntrinsics::from_hfov(16, 16, 1.2, 5.0, 4);
        let mut depth = DepthImage::filled(16, 16, 0.8);
        depth.set(3, 3, f64::INFINITY);
        integrate_depth(&mut g, &pose, &intr, &depth, Default::default(), |_, _| {});
        let once = g.clone();
        integrate_depth(&mut g, &pose, &intr, &depth, Default::default(), |_, _| {});
        assert_eq!(g, once);
    }

    #[test]
    fn no_return_carves_to_range_only() {
        let (mut g, _, pose) = setup();
        let intr = CameraIntrinsics::from_hfov(1, 1, 0.1, 0.45, 1);
        let depth = DepthImage::filled(1, 1, f64::INFINITY);
        integrate_depth(&mut g, &pose, &intr, &depth, Default::default(), |_, _| {});
        assert_eq!(g.count(CellState::Occupied), 0);
        assert_eq!(g.count(CellState::Free), 5);
    }

    #[test]
    fn ray_callback_includes_surface_voxel() {
        let (mut g, intr, pose) = setup();
        let depth = DepthImage::filled(1, 1, 0.5);
        let mut seen = Vec::new();
        integrate_depth(&mut g, &pose, &intr, &depth, Default::default(), |_, p| {
            seen = p.to_vec()
        });
        assert_eq!(seen.last(), Some(&VoxelIndex::new(5, 10, 10)));
        assert_eq!(seen.len(), 6);
    }
}
