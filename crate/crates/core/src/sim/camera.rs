//! Pinhole depth camera, robot pose and depth images.
//!
//! Camera frame: the optical axis is the robot heading (yaw about +z, no
//! pitch or roll), image `u` grows to the right and `v` grows downward.
//! Depth values are z-depth along the optical axis, the same convention as
//! stereo and time-of-flight depth sensors.

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Vec3};

/// Robot position (m) and heading (rad, normalized to `(-pi, pi]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotPose {
    pub position: Vec3,
    pub yaw: f64,
}

impl RobotPose {
    pub fn new(position: Vec3, yaw: f64) -> Self {
        Self {
            position,
            yaw: wrap_angle(yaw),
        }
    }

    pub fn forward(&self) -> Vec3 {
        Vec3::new(self.yaw.cos(), self.yaw.sin(), 0.0)
    }

    /// Image-right direction.
    pub fn right(&self) -> Vec3 {
        Vec3::new(self.yaw.sin(), -self.yaw.cos(), 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub max_range: f64,
    /// Patches per image side (P x P tiling).
    pub patch_grid: usize,
}

impl Default for CameraIntrinsics {
    /// 64x48, 90 degree horizontal FOV, 5 m range, 8x8 patches.
    fn default() -> Self {
        Self::from_hfov(64, 48, 90f64.to_radians(), 5.0, 8)
    }
}

impl CameraIntrinsics {
    /// Square pixels, principal point at the image center.
    pub fn from_hfov(
        width: usize,
        height: usize,
        hfov: f64,
        max_range: f64,
        patch_grid: usize,
    ) -> Self {
        let fx = (width as f64 / 2.0) / (hfov / 2.0).tan();
        Self {
            width,
            height,
            fx,
            fy: fx,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            max_range,
            patch_grid,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.width == 0 || self.height == 0 {
            return Err("image size must be positive".into());
        }
        if self.patch_grid == 0 {
            return Err("patch_grid must be positive".into());
        }
        if self.width % self.patch_grid != 0 || self.height % self.patch_grid != 0 {
            return Err(format!(
                "patch_grid {} must divide the {}x{} image evenly",
                self.patch_grid, self.width, self.height
            ));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err("focal lengths must be positive".into());
        }
        if !(self.max_range > 0.0) {
            return Err("max_range must be positive".into());
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn patch_width(&self) -> usize {
        self.width / self.patch_grid
    }

    pub fn patch_height(&self) -> usize {
        self.height / self.patch_grid
    }

    /// Row-major patch index of a pixel.
    pub fn patch_of(&self, u: usize, v: usize) -> usize {
        (v / self.patch_height()) * self.patch_grid + u / self.patch_width()
    }

    /// Pixels `(u, v)` belonging to row-major patch `patch`.
    pub fn patch_pixels(&self, patch: usize) -> impl Iterator<Item = (usize, usize)> {
        let (pw, ph) = (self.patch_width(), self.patch_height());
        let (pr, pc) = (patch / self.patch_grid, patch % self.patch_grid);
        (pr * ph..(pr + 1) * ph).flat_map(move |v| (pc * pw..(pc + 1) * pw).map(move |u| (u, v)))
    }

    /// World-frame ray through the center of pixel `(u, v)`. The vector is
    /// not normalized: its component along the optical axis is exactly 1, so
    /// `position + depth * ray` is the surface point for z-depth `depth`.
    pub fn pixel_ray(&self, pose: &RobotPose, u: usize, v: usize) -> Vec3 {
        let xr = (u as f64 + 0.5 - self.cx) / self.fx;
        let yd = (v as f64 + 0.5 - self.cy) / self.fy;
        pose.forward() + pose.right() * xr - Vec3::z() * yd
    }

    /// Whether `point` projects inside the image and lies within range.
    pub fn sees(&self, pose: &RobotPose, point: &Vec3) -> bool {
        let d = point - pose.position;
        let z = d.dot(&pose.forward());
        if z <= 1e-9 || d.norm() > self.max_range {
            return false;
        }
        let u = self.fx * d.dot(&pose.right()) / z + self.cx;
        let v = self.fy * (-d.z) / z + self.cy;
        u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64
    }

    pub fn hfov(&self) -> f64 {
        2.0 * (self.width as f64 / 2.0 / self.fx).atan()
    }
}

/// Row-major z-depth image. `NaN` marks an invalid pixel; `+inf` marks a
/// pixel with no return inside the sensor range.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, d: f64) {
        self.data[v * self.width + u] = d;
    }

    /// A finite, positive depth measurement.
    pub fn is_valid_depth(d: f64) -> bool {
        d.is_finite() && d > 0.0
    }

    pub fn is_no_return(d: f64) -> bool {
        d == f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_camera_is_valid() {
        let c = CameraIntrinsics::default();
        c.validate().unwrap();
        assert!((c.hfov() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert_eq!(c.patch_width(), 8);
        assert_eq!(c.patch_height(), 6);
    }

    #[test]
    fn patch_grid_must_divide() {
        let c = CameraIntrinsics::from_hfov(64, 48, 1.5, 5.0, 7);
        assert!(c.validate().is_err());
    }

    #[test]
    fn patch_pixels_cover_image_once() {
        let c = CameraIntrinsics::default();
        let mut hits = vec![0; c.pixel_count()];
        for p in 0..c.patch_grid * c.patch_grid {
            for (u, v) in c.patch_pixels(p) {
                assert_eq!(c.patch_of(u, v), p);
                hits[v * c.width + u] += 1;
            }
        }
        assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn pixel_ray_has_unit_forward_component() {
        let c = CameraIntrinsics::default();
        let pose = RobotPose::new(Vec3::new(1.0, 2.0, 0.3), 0.7);
        for (u, v) in [(0, 0), (63, 47), (31, 20)] {
            let r = c.pixel_ray(&pose, u, v);
            assert!((r.dot(&pose.forward()) - 1.0).abs() < 1e-12);
            assert!(c.sees(&pose, &(pose.position + r * 2.0)));
        }
    }

    #[test]
    fn behind_camera_not_seen() {
        let c = CameraIntrinsics::default();
        let pose = RobotPose::new(Vec3::zeros(), 0.0);
        assert!(!c.sees(&pose, &Vec3::new(-1.0, 0.0, 0.0)));
        assert!(c.sees(&pose, &Vec3::new(1.0, 0.0, 0.0)));
        assert!(!c.sees(&pose, &Vec3::new(6.0, 0.0, 0.0)));
    }
}
