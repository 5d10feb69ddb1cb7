use nalgebra::{Matrix2, Matrix2x3, Matrix3, Point2, Point3, Quaternion, UnitQuaternion, Vector3};

use crate::gaussians::sh_to_color;
use crate::geom::PinholeCamera;

/// Added to every projected covariance, in px².
pub const COV2D_DILATION: f64 = 0.3;
/// Primitives closer than this camera-frame depth are culled.
pub const NEAR_PLANE: f64 = 0.01;
/// Footprint extent, in standard deviations, used for culling and tile binning.
pub const FOOTPRINT_SIGMAS: f64 = 3.0;

/// A Gaussian after EWA projection into one camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGaussian {
    pub mean2d: Point2<f64>,
    pub cov2d: Matrix2<f64>,
    /// Inverse of `cov2d`, cached for compositing.
    pub conic: Matrix2<f64>,
    pub view_depth: f64,
    pub rgb: [f64; 3],
    pub alpha: f64,
    /// `FOOTPRINT_SIGMAS` times the largest standard deviation, in pixels.
    pub radius: f64,
}

pub fn rotation_matrix(q: [f64; 4]) -> Matrix3<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3])).to_rotation_matrix().into_inner()
}

/// `R·diag(s)²·Rᵀ`.
pub fn cov3d(rotation: [f64; 4], scale: &Vector3<f64>) -> Matrix3<f64> {
    let r = rotation_matrix(rotation);
    let m = r * Matrix3::from_diagonal(scale);
    m * m.transpose()
}

/// Local affine approximation of the perspective projection at a camera-frame point.
pub fn projection_jacobian(camera: &PinholeCamera, p: &Point3<f64>) -> Matrix2x3<f64> {
    let inv_z = 1.0 / p.z;
    let inv_z2 = inv_z * inv_z;
    Matrix2x3::new(
        camera.fx * inv_z,
        0.0,
        -camera.fx * p.x * inv_z2,
        0.0,
        camera.fy * inv_z,
        -camera.fy * p.y * inv_z2,
    )
}

/// `J·W·Σ·Wᵀ·Jᵀ` without dilation.
pub fn project_covariance(camera: &PinholeCamera, cam_point: &Point3<f64>, cov: &Matrix3<f64>) -> Matrix2<f64> {
    let j = projection_jacobian(camera, cam_point);
    let w = camera.pose.rotation();
    let t = j * w;
    t * cov * t.transpose()
}

/// Projects one primitive; `None` when culled (near plane or footprint fully outside).
pub fn project_gaussian(
    camera: &PinholeCamera,
    mean: &Point3<f64>,
    rotation: [f64; 4],
    scale: &Vector3<f64>,
    opacity: f64,
    sh: &[f64],
    sh_degree: usize,
) -> Option<ProjectedGaussian> {
    let p = camera.pose.transform_point(mean);
    if p.z < NEAR_PLANE {
        return None;
    }
    let mean2d = Point2::new(camera.fx * p.x / p.z + camera.cx, camera.fy * p.y / p.z + camera.cy);
    let cov2d = project_covariance(camera, &p, &cov3d(rotation, scale)) + Matrix2::identity() * COV2D_DILATION;
    let det = cov2d.determinant();
    if !(det > 0.0) {
        return None;
    }
    let conic = Matrix2::new(cov2d[(1, 1)], -cov2d[(0, 1)], -cov2d[(1, 0)], cov2d[(0, 0)]) / det;
    let mid = 0.5 * (cov2d[(0, 0)] + cov2d[(1, 1)]);
    let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
    let radius = FOOTPRINT_SIGMAS * lambda_max.sqrt();
    let (w, h) = (camera.width as f64, camera.height as f64);
    if mean2d.x + radius < 0.0 || mean2d.x - radius > w || mean2d.y + radius < 0.0 || mean2d.y - radius > h {
        return None;
    }
    let dir: Vector3<f64> = (mean - camera.center()).normalize();
    Some(ProjectedGaussian {
        mean2d,
        cov2d,
        conic,
        view_depth: p.z,
        rgb: sh_to_color(sh, sh_degree, &dir),
        alpha: opacity,
        radius,
    })
}
