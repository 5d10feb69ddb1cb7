use nalgebra::Point3;
use rayon::prelude::*;

use super::camera::PinholeCamera;
use super::raster::{DepthMap, Frame, PointMap, RayMap};
use crate::error::{Error, Result};

/// Unprojects every valid pixel of a camera-frame depth map into world space.
pub fn depth_to_points(camera: &PinholeCamera, depth: &DepthMap) -> Result<PointMap> {
    depth.check_size(camera.width, camera.height)?;
    let (points, valid): (Vec<_>, Vec<_>) = (0..depth.len())
        .into_par_iter()
        .map(|i| {
            let (u, v) = (i % camera.width, i / camera.width);
            match depth.at(i) {
                Some(d) => {
                    let p = camera.pose.inverse_transform_point(
                        &camera.unproject_camera(&PinholeCamera::pixel_center(u, v), d),
                    );
                    (p, true)
                }
                None => (Point3::origin(), false),
            }
        })
        .unzip();
    PointMap::new(camera.width, camera.height, Frame::World, points, valid)
}

/// `μ = o + (D + ΔD)·d` per pixel. Pixels with invalid `D` or `D + ΔD ≤ 0` are invalid.
///
/// `D` is a distance along the unit ray. `offset = None` means ΔD = 0.
pub fn ray_points(rays: &RayMap, depth: &DepthMap, offset: Option<&[f64]>) -> Result<PointMap> {
    depth.check_size(rays.width(), rays.height())?;
    if let Some(off) = offset {
        if off.len() != depth.len() {
            return Err(Error::dims(depth.len(), off.len()));
        }
    }
    let (points, valid): (Vec<_>, Vec<_>) = (0..depth.len())
        .map(|i| {
            let total = depth.at(i).map(|d| d + offset.map_or(0.0, |o| o[i]));
            match total {
                Some(t) if t > 0.0 && t.is_finite() => (rays.origins()[i] + rays.directions()[i] * t, true),
                _ => (Point3::origin(), false),
            }
        })
        .unzip();
    PointMap::new(rays.width(), rays.height(), Frame::World, points, valid)
}

impl RayMap {
    /// Per-pixel rays of a pinhole camera: origin at the camera center, unit direction
    /// through the pixel center.
    pub fn from_camera(camera: &PinholeCamera) -> RayMap {
        let center = camera.center();
        let n = camera.pixel_count();
        let directions = (0..n)
            .map(|i| camera.ray_direction(&PinholeCamera::pixel_center(i % camera.width, i / camera.width)))
            .collect();
        RayMap::new(camera.width, camera.height, vec![center; n], directions)
            .expect("camera rays are unit length")
    }
}

/// Converts camera-frame depth (z) into distance along the pixel's unit ray.
pub fn depth_to_range(camera: &PinholeCamera, depth: &DepthMap) -> Result<DepthMap> {
    depth.check_size(camera.width, camera.height)?;
    let values = (0..depth.len())
        .map(|i| match depth.at(i) {
            Some(d) => d * camera.range_per_depth(&PinholeCamera::pixel_center(i % camera.width, i / camera.width)),
            None => 0.0,
        })
        .collect();
    DepthMap::from_values(depth.width(), depth.height(), values)
}
