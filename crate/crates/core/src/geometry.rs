//! Small geometric primitives shared by the simulator, the map and the planner.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// World-frame vector in meters.
pub type Vec3 = Vector3<f64>;

/// Axis-aligned box in world coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self {
            min: [min.x, min.y, min.z],
            max: [max.x, max.y, max.z],
        }
    }

    pub fn from_arrays(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn min_v(&self) -> Vec3 {
        Vec3::from(self.min)
    }

    pub fn max_v(&self) -> Vec3 {
        Vec3::from(self.max)
    }

    pub fn center(&self) -> Vec3 {
        (self.min_v() + self.max_v()) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max_v() - self.min_v()
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// Closed-box intersection; boxes that only touch count as intersecting.
    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= other.max[a] && other.min[a] <= self.max[a])
    }

    /// Intersection with positive volume.
    pub fn overlaps_interior(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] < other.max[a] && other.min[a] < self.max[a])
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        for a in 0..3 {
            out.min[a] = out.min[a].min(other.min[a]);
            out.max[a] = out.max[a].max(other.max[a]);
        }
        out
    }

    /// Closest point of the box to `p`.
    pub fn closest_point(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.min[0], self.max[0]),
            p.y.clamp(self.min[1], self.max[1]),
            p.z.clamp(self.min[2], self.max[2]),
        )
    }

    pub fn distance_to_point(&self, p: &Vec3) -> f64 {
        (self.closest_point(p) - p).norm()
    }

    /// Slab test. Returns the parameter interval `(t_enter, t_exit)` of the
    /// line `origin + t * dir` inside the box, or `None` if the line misses.
    /// `dir` need not be normalized.
    pub fn ray_interval(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            if dir[a] == 0.0 {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[a];
            let mut ta = (self.min[a] - origin[a]) * inv;
            let mut tb = (self.max[a] - origin[a]) * inv;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }

    /// First forward hit parameter of a ray, `None` if the box is behind or missed.
    /// A ray starting inside the box reports `t = 0`.
    pub fn ray_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let (t0, t1) = self.ray_interval(origin, dir)?;
        if t1 < 0.0 {
            None
        } else {
            Some(t0.max(0.0))
        }
    }

    /// Whether the closed segment `a -> b` touches the box.
    pub fn intersects_segment(&self, a: &Vec3, b: &Vec3) -> bool {
        let d = b - a;
        match self.ray_interval(a, &d) {
            Some((t0, t1)) => t0 <= 1.0 && t1 >= 0.0,
            None => false,
        }
    }
}

/// Distance from `p` to the closed segment `a -> b`.
pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&d) / len2).clamp(0.0, 1.0);
    (a + d * t - p).norm()
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut x = a % (2.0 * PI);
    if x <= -PI {
        x += 2.0 * PI;
    } else if x > PI {
        x -= 2.0 * PI;
    }
    x
}
