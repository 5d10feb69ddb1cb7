//! Camera model, pixel containers and the point-cloud constructions built on them.

mod camera;
mod points;
mod raster;

pub use camera::{
    axis_angle, pose_distance_angle, relative_rotation_angle, PinholeCamera, Pose, MIN_PROJECT_DEPTH,
    ROTATION_TOLERANCE,
};
pub use points::{depth_to_points, depth_to_range, ray_points};
pub use raster::{DepthMap, Frame, ImageBuffer, PointMap, Raster, RayMap, VisibilityMask, RAY_NORM_TOLERANCE};
