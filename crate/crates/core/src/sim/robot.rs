//! Kinematic point robot.

use serde::Serialize;

use super::camera::RobotPose;
use super::scene::LabeledObject;
use crate::geometry::{wrap_angle, Vec3};

/// Simulated time. `t` is derived from the tick count, so it never drifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MissionClock {
    pub ticks: u64,
    pub dt: f64,
}

impl MissionClock {
    pub fn new(dt: f64) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        Self { ticks: 0, dt }
    }

    pub fn t(&self) -> f64 {
        self.ticks as f64 * self.dt
    }

    pub fn advance(&mut self) {
        self.ticks += 1;
    }
}

/// Rotate `yaw` toward `target` by at most `max_step` radians.
pub fn turn_toward(yaw: f64, target: f64, max_step: f64) -> f64 {
    let diff = wrap_angle(target - yaw);
    if diff.abs() <= max_step {
        wrap_angle(target)
    } else {
        wrap_angle(yaw + max_step * diff.signum())
    }
}

/// Advance toward `waypoint` by at most `v_max * dt` without overshooting,
/// turning toward the direction of travel by at most `yaw_rate_max * dt`.
pub fn step_robot(
    pose: &RobotPose,
    waypoint: &Vec3,
    v_max: f64,
    yaw_rate_max: f64,
    dt: f64,
) -> RobotPose {
    assert!(dt > 0.0, "dt must be positive");
    let delta = waypoint - pose.position;
    let dist = delta.norm();
    if dist <= 0.0 {
        return *pose;
    }
    let step = dist.min(v_max * dt);
    let position = if step >= dist {
        *waypoint
    } else {
        pose.position + delta * (step / dist)
    };
    let yaw = if delta.x.hypot(delta.y) > 1e-9 {
        turn_toward(pose.yaw, delta.y.atan2(delta.x), yaw_rate_max * dt)
    } else {
        pose.yaw
    };
    RobotPose { position, yaw }
}

/// Move along a polyline for one tick. Returns the new pose and the number
/// of leading path points that were fully reached.
pub fn step_along_path(
    pose: &RobotPose,
    path: &[Vec3],
    v_max: f64,
    yaw_rate_max: f64,
    dt: f64,
) -> (RobotPose, usize) {
    let mut budget = v_max * dt;
    let mut pos = pose.position;
    let mut consumed = 0;
    let mut heading: Option<f64> = None;
    for p in path {
        let d = p - pos;
        let dist = d.norm();
        if d.x.hypot(d.y) > 1e-9 && heading.is_none() {
            heading = Some(d.y.atan2(d.x));
        }
        if dist <= budget {
            budget -= dist;
            pos = *p;
            consumed += 1;
        } else {
            pos += d * (budget / dist);
            break;
        }
    }
    let yaw = match heading {
        Some(h) => turn_toward(pose.yaw, h, yaw_rate_max * dt),
        None => pose.yaw,
    };
    (RobotPose { position: pos, yaw }, consumed)
}

/// Within `threshold` meters of the object's box (inside counts as zero).
pub fn check_reached(pose: &RobotPose, object: &LabeledObject, threshold: f64) -> bool {
    object.bbox.distance_to_point(&pose.position) <= threshold
}
