//! Box-world simulator: ground-truth scenes, depth camera, patch labels,
//! kinematic robot, scenario files and procedural scenes.

pub mod camera;
pub mod procgen;
pub mod robot;
pub mod scenario;
pub mod scene;

pub use camera::{CameraIntrinsics, DepthImage, RobotPose};
pub use procgen::generate_room;
pub use robot::{check_reached, step_along_path, step_robot, MissionClock};
pub use scenario::{load_scenario, parse_scenario, Scenario, ScenarioError};
pub use scene::{LabeledObject, PatchLabel, PatchLabels, PixelHit, RenderedFrame, Scene};
