//! Box-world ground truth and its depth/label renderer.

use serde::{Deserialize, Serialize};

use super::camera::{CameraIntrinsics, DepthImage, RobotPose};
use crate::geometry::{Aabb, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledObject {
    pub id: u32,
    #[serde(rename = "box")]
    pub bbox: Aabb,
    pub category: String,
    /// Whether the object is a ground-truth match for the mission query.
    pub is_target: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub bounds: Aabb,
    pub obstacles: Vec<Aabb>,
    pub objects: Vec<LabeledObject>,
    pub task_box: Aabb,
}

/// What a pixel ray hit first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelHit {
    Nothing,
    Obstacle(usize),
    /// Index into `Scene::objects`.
    Object(usize),
}

/// One rendered frame: depth plus per-pixel hit identity.
#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub depth: DepthImage,
    pub hits: Vec<PixelHit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum PatchLabel {
    Background,
    Object { category: String, object_id: u32 },
}

impl PatchLabel {
    pub fn category(&self) -> Option<&str> {
        match self {
            PatchLabel::Background => None,
            PatchLabel::Object { category, .. } => Some(category),
        }
    }
}

/// Row-major `P x P` patch labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchLabels {
    pub grid: usize,
    pub labels: Vec<PatchLabel>,
}

impl PatchLabels {
    pub fn at(&self, row: usize, col: usize) -> &PatchLabel {
        &self.labels[row * self.grid + col]
    }
}

impl Scene {
    pub fn targets(&self) -> impl Iterator<Item = &LabeledObject> {
        self.objects.iter().filter(|o| o.is_target)
    }

    /// Nearest hit along an (unnormalized) ray, as `(t, what)`.
    pub fn intersect(&self, origin: &Vec3, ray: &Vec3) -> Option<(f64, PixelHit)> {
        let mut best: Option<(f64, PixelHit)> = None;
        let boxes = self
            .obstacles
            .iter()
            .enumerate()
            .map(|(i, b)| (b, PixelHit::Obstacle(i)))
            .chain(
                self.objects
                    .iter()
                    .enumerate()
                    .map(|(i, o)| (&o.bbox, PixelHit::Object(i))),
            );
        for (b, what) in boxes {
            if let Some(t) = b.ray_hit(origin, ray) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, what));
                }
            }
        }
        best
    }

    /// Whether a point lies strictly inside any obstacle or object.
    pub fn is_solid(&self, p: &Vec3) -> bool {
        let inside = |b: &Aabb| (0..3).all(|a| p[a] > b.min[a] && p[a] < b.max[a]);
        self.obstacles.iter().any(inside) || self.objects.iter().any(|o| inside(&o.bbox))
    }

    /// Whether an axis-aligned box overlaps any obstacle or object with positive volume.
    pub fn overlaps_solid(&self, region: &Aabb) -> bool {
        self.obstacles.iter().any(|b| b.overlaps_interior(region))
            || self.objects.iter().any(|o| o.bbox.overlaps_interior(region))
    }

    /// Render depth and per-pixel hit identity.
    pub fn render(&self, pose: &RobotPose, intr: &CameraIntrinsics) -> RenderedFrame {
        let mut depth = DepthImage::filled(intr.width, intr.height, f64::INFINITY);
        let mut hits = vec![PixelHit::Nothing; intr.pixel_count()];
        for v in 0..intr.height {
            for u in 0..intr.width {
                let ray = intr.pixel_ray(pose, u, v);
                if let Some((t, what)) = self.intersect(&pose.position, &ray) {
                    if t * ray.norm() <= intr.max_range {
                        depth.set(u, v, t);
                        hits[v * intr.width + u] = what;
                    }
                }
            }
        }
        RenderedFrame { depth, hits }
    }

    /// Z-depth per pixel; `+inf` where nothing is hit within range.
    pub fn render_depth(&self, pose: &RobotPose, intr: &CameraIntrinsics) -> DepthImage {
        self.render(pose, intr).depth
    }

    pub fn patch_labels(&self, pose: &RobotPose, intr: &CameraIntrinsics) -> PatchLabels {
        self.labels_from_frame(&self.render(pose, intr), intr)
    }

    /// Per patch, the object covering the most pixels (lowest index on ties);
    /// Background if no object pixel falls in the patch.
    pub fn labels_from_frame(&self, frame: &RenderedFrame, intr: &CameraIntrinsics) -> PatchLabels {
        let p = intr.patch_grid;
        let mut labels = Vec::with_capacity(p * p);
        let mut counts = vec![0usize; self.objects.len()];
        for patch in 0..p * p {
            counts.iter_mut().for_each(|c| *c = 0);
            for (u, v) in intr.patch_pixels(patch) {
                if let PixelHit::Object(i) = frame.hits[v * intr.width + u] {
                    counts[i] += 1;
                }
            }
            let best = counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)));
            labels.push(match best {
                Some((i, _)) => PatchLabel::Object {
                    category: self.objects[i].category.clone(),
                    object_id: self.objects[i].id,
                },
                None => PatchLabel::Background,
            });
        }
        PatchLabels { grid: p, labels }
    }
}
