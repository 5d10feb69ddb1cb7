use nalgebra::{Matrix3, Point2, Point3, Rotation3, Vector3};

use crate::error::{Error, Result};

/// Tolerance used when validating that a matrix is a proper rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Points whose camera-frame depth is at or below this are behind the camera.
pub const MIN_PROJECT_DEPTH: f64 = 1e-9;

/// Rigid world-to-camera transform: `x_cam = rotation * x_world + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidCamera("translation is not finite".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Pose of a camera centered at `eye` whose optical axis points at `target`.
    ///
    /// Camera axes follow the computer-vision convention: +z forward, +y down.
    /// `up` is the world direction that should appear upward in the image.
    pub fn look_at(eye: Point3<f64>, target: Point3<f64>, up: Vector3<f64>) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() <= f64::EPSILON {
            return Err(Error::InvalidCamera("eye and target coincide".into()));
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() <= 1e-12 {
            return Err(Error::InvalidCamera("up vector is parallel to the view axis".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye.coords);
        Self::new(rotation, translation)
    }

    /// Pose from a camera-to-world rotation and the camera center in world coordinates.
    pub fn from_center(camera_to_world: Matrix3<f64>, center: Point3<f64>) -> Result<Self> {
        let rotation = camera_to_world.transpose();
        let translation = -(rotation * center.coords);
        Self::new(rotation, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation.transpose() * self.translation))
    }

    pub fn transform_point(&self, world: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * world.coords + self.translation)
    }

    pub fn inverse_transform_point(&self, cam: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.transpose() * (cam.coords - self.translation))
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidCamera("rotation is not finite".into()));
    }
    let orth = (r.transpose() * r - Matrix3::identity()).abs().max();
    if orth > ROTATION_TOLERANCE {
        return Err(Error::InvalidCamera(format!(
            "rotation is not orthonormal (max deviation {orth:e})"
        )));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(Error::InvalidCamera(format!("rotation determinant is {det}")));
    }
    Ok(())
}

/// Pinhole intrinsics with a world-to-camera pose. No distortion.
///
/// Integer pixel `(u, v)` samples the continuous image point `(u + 0.5, v + 0.5)`;
/// [`PinholeCamera::project`] returns continuous coordinates in that frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub pose: Pose,
}

impl PinholeCamera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        pose: Pose,
    ) -> Result<Self> {
        if !(fx > 0.0 && fx.is_finite() && fy > 0.0 && fy.is_finite()) {
            return Err(Error::InvalidCamera(format!("focal lengths must be positive ({fx}, {fy})")));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera("image size must be positive".into()));
        }
        if !(cx > 0.0 && cx < width as f64 && cy > 0.0 && cy < height as f64) {
            return Err(Error::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside the {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            pose,
        })
    }

    /// Camera with the principal point at the image center and a shared focal length.
    pub fn centered(focal: f64, width: usize, height: usize, pose: Pose) -> Result<Self> {
        Self::new(focal, focal, width as f64 / 2.0, height as f64 / 2.0, width, height, pose)
    }

    pub fn with_pose(&self, pose: Pose) -> Self {
        Self { pose, ..*self }
    }

    pub fn center(&self) -> Point3<f64> {
        self.pose.center()
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Projects a world point. Returns the continuous pixel and the camera-frame depth.
    pub fn project(&self, world: &Point3<f64>) -> Result<(Point2<f64>, f64)> {
        let p = self.pose.transform_point(world);
        self.project_camera_point(&p)
    }

    pub fn project_camera_point(&self, p: &Point3<f64>) -> Result<(Point2<f64>, f64)> {
        if p.z <= MIN_PROJECT_DEPTH {
            return Err(Error::BehindCamera { z: p.z });
        }
        let pixel = Point2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy);
        Ok((pixel, p.z))
    }

    /// Inverse of [`PinholeCamera::project`] for a camera-frame depth.
    pub fn unproject(&self, pixel: &Point2<f64>, depth: f64) -> Result<Point3<f64>> {
        if !(depth > 0.0) {
            return Err(Error::NonPositiveDepth(depth));
        }
        Ok(self.pose.inverse_transform_point(&self.unproject_camera(pixel, depth)))
    }

    pub fn unproject_camera(&self, pixel: &Point2<f64>, depth: f64) -> Point3<f64> {
        Point3::new(
            (pixel.x - self.cx) / self.fx * depth,
            (pixel.y - self.cy) / self.fy * depth,
            depth,
        )
    }

    /// Unit-norm viewing ray through a continuous pixel, in world coordinates.
    pub fn ray_direction(&self, pixel: &Point2<f64>) -> Vector3<f64> {
        let cam = Vector3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, 1.0);
        (self.pose.rotation().transpose() * cam).normalize()
    }

    /// Ratio between distance along the unit ray and camera-frame depth at a pixel.
    pub fn range_per_depth(&self, pixel: &Point2<f64>) -> f64 {
        let x = (pixel.x - self.cx) / self.fx;
        let y = (pixel.y - self.cy) / self.fy;
        (x * x + y * y + 1.0).sqrt()
    }

    /// Continuous coordinate of the center of integer pixel `(u, v)`.
    pub fn pixel_center(u: usize, v: usize) -> Point2<f64> {
        Point2::new(u as f64 + 0.5, v as f64 + 0.5)
    }

    /// Integer pixel containing a continuous coordinate, if it lies inside the image.
    pub fn pixel_index(&self, pixel: &Point2<f64>) -> Option<(usize, usize)> {
        if !(pixel.x >= 0.0 && pixel.y >= 0.0) {
            return None;
        }
        let (u, v) = (pixel.x.floor() as usize, pixel.y.floor() as usize);
        (u < self.width && v < self.height).then_some((u, v))
    }
}

/// Distance between camera centers and magnitude of the relative rotation, in radians.
pub fn pose_distance_angle(a: &PinholeCamera, b: &PinholeCamera) -> (f64, f64) {
    let distance = (a.center() - b.center()).norm();
    (distance, relative_rotation_angle(a.pose.rotation(), b.pose.rotation()))
}

/// Axis-angle magnitude of `a * bᵀ`, in `[0, π]`.
pub fn relative_rotation_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let rel = a * b.transpose();
    // atan2 keeps precision near zero where acos of the trace does not.
    let cos = (rel.trace() - 1.0) / 2.0;
    let axis = Vector3::new(
        rel[(2, 1)] - rel[(1, 2)],
        rel[(0, 2)] - rel[(2, 0)],
        rel[(1, 0)] - rel[(0, 1)],
    );
    let sin = axis.norm() / 2.0;
    sin.atan2(cos.clamp(-1.0, 1.0))
}

/// Rotation about a unit axis; convenience for building test and synthetic poses.
pub fn axis_angle(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner()
}
