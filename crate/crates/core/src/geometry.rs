//! Pinhole cameras, rays and frustum membership.
//!
//! Conventions: poses map world to camera coordinates (`x_cam = R x_world + t`),
//! the camera looks down its +Z axis with +X right and +Y down in the image, and
//! pixel `(x, y)` addresses the continuous image plane, so integer pixel `(i, j)`
//! has its center at `(i + 0.5, j + 0.5)`.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub focal_x: f64,
    pub focal_y: f64,
    pub principal_x: f64,
    pub principal_y: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        focal_x: f64,
        focal_y: f64,
        principal_x: f64,
        principal_y: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        if !(focal_x > 0.0 && focal_y > 0.0) || !focal_x.is_finite() || !focal_y.is_finite() {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive, got ({focal_x}, {focal_y})"
            )));
        }
        if !principal_x.is_finite() || !principal_y.is_finite() {
            return Err(Error::InvalidCamera("principal point must be finite".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera(format!(
                "image size must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(CameraIntrinsics {
            focal_x,
            focal_y,
            principal_x,
            principal_y,
            width,
            height,
        })
    }

    /// Square pixels, centered principal point, vertical field of view in degrees.
    pub fn from_fov_y(width: u32, height: u32, fov_y_deg: f64) -> Result<Self> {
        if !(fov_y_deg > 0.0 && fov_y_deg < 180.0) {
            return Err(Error::InvalidCamera(format!(
                "vertical field of view must lie in (0, 180) degrees, got {fov_y_deg}"
            )));
        }
        let focal = 0.5 * height as f64 / (0.5 * fov_y_deg.to_radians()).tan();
        Self::new(
            focal,
            focal,
            0.5 * width as f64,
            0.5 * height as f64,
            width,
            height,
        )
    }

    /// Intrinsics for the same field of view sampled on a coarser pixel grid.
    pub fn downsampled(&self, factor: u32) -> Self {
        let factor = factor.max(1);
        let width = (self.width / factor).max(1);
        let height = (self.height / factor).max(1);
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        CameraIntrinsics {
            focal_x: self.focal_x * sx,
            focal_y: self.focal_y * sy,
            principal_x: self.principal_x * sx,
            principal_y: self.principal_y * sy,
            width,
            height,
        }
    }
}

/// World-to-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram_err = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if !(gram_err < ORTHONORMAL_TOL) {
            return Err(Error::InvalidPose(format!(
                "rotation is not orthonormal (max |R^T R - I| = {gram_err:e})"
            )));
        }
        let det = rotation.determinant();
        if !((det - 1.0).abs() < ORTHONORMAL_TOL) {
            return Err(Error::InvalidPose(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidPose("translation must be finite".into()));
        }
        Ok(CameraPose {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        CameraPose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Pose from a world-to-camera rotation and the camera center in world coordinates.
    pub fn from_center(rotation: Matrix3<f64>, center: Vector3<f64>) -> Result<Self> {
        Self::new(rotation, -(rotation * center))
    }

    /// Camera at `eye` looking at `target`; `up` fixes the roll so that image +Y
    /// points against it.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::InvalidPose("eye and target coincide".into()));
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(Error::InvalidPose(
                "up vector is parallel to the viewing direction".into(),
            ));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[
            right.transpose(),
            down.transpose(),
            forward.transpose(),
        ]);
        // Gram-Schmidt output is orthonormal to ~1e-16, well inside the tolerance.
        Self::from_center(rotation, eye)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn world_to_camera(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }

    pub fn camera_to_world(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (point - self.translation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
    pub near: f64,
    pub far: f64,
}

/// Result of projecting a world point through a camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Continuous pixel coordinates; NaN when the point is at or behind the camera plane.
    pub pixel: Vector2<f64>,
    /// Camera-space Z of the point.
    pub depth: f64,
    /// Whether the point lies in the frustum `[0, W) x [0, H) x [near, far]`.
    pub inside: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub near: f64,
    pub far: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }
}

impl Camera {
    pub fn new(intrinsics: CameraIntrinsics, pose: CameraPose, near: f64, far: f64) -> Result<Self> {
        if !(near > 0.0 && near < far && far.is_finite()) {
            return Err(Error::InvalidCamera(format!(
                "need 0 < near < far, got near={near}, far={far}"
            )));
        }
        Ok(Camera {
            intrinsics,
            pose,
            near,
            far,
        })
    }

    pub fn width(&self) -> u32 {
        self.intrinsics.width
    }

    pub fn height(&self) -> u32 {
        self.intrinsics.height
    }

    pub fn center(&self) -> Vector3<f64> {
        self.pose.center()
    }

    /// Same pose and depth range on a pixel grid coarser by `factor`.
    pub fn downsampled(&self, factor: u32) -> Camera {
        Camera {
            intrinsics: self.intrinsics.downsampled(factor),
            ..*self
        }
    }

    pub fn project(&self, point: &Vector3<f64>) -> Projection {
        let p = self.pose.world_to_camera(point);
        let depth = p.z;
        if depth <= 0.0 {
            return Projection {
                pixel: Vector2::new(f64::NAN, f64::NAN),
                depth,
                inside: false,
            };
        }
        let k = &self.intrinsics;
        let pixel = Vector2::new(
            k.focal_x * p.x / depth + k.principal_x,
            k.focal_y * p.y / depth + k.principal_y,
        );
        let inside = depth >= self.near
            && depth <= self.far
            && pixel.x >= 0.0
            && pixel.x < k.width as f64
            && pixel.y >= 0.0
            && pixel.y < k.height as f64;
        Projection {
            pixel,
            depth,
            inside,
        }
    }

    /// Frustum indicator for a world point.
    #[inline]
    pub fn contains(&self, point: &Vector3<f64>) -> bool {
        self.project(point).inside
    }

    /// Ray through a continuous pixel position. The ray's `[near, far]` interval
    /// is the stretch of the ray whose camera depth lies in `[near, far]`.
    pub fn generate_ray(&self, pixel: Vector2<f64>) -> Result<Ray> {
        let k = &self.intrinsics;
        let in_bounds = pixel.x >= 0.0
            && pixel.x < k.width as f64
            && pixel.y >= 0.0
            && pixel.y < k.height as f64;
        if !in_bounds {
            return Err(Error::PixelOutOfBounds {
                x: pixel.x,
                y: pixel.y,
                width: k.width,
                height: k.height,
            });
        }
        let dir_cam = Vector3::new(
            (pixel.x - k.principal_x) / k.focal_x,
            (pixel.y - k.principal_y) / k.focal_y,
            1.0,
        )
        .normalize();
        let direction = self.pose.rotation().transpose() * dir_cam;
        Ok(Ray {
            origin: self.center(),
            direction,
            near: self.near / dir_cam.z,
            far: self.far / dir_cam.z,
        })
    }

    /// Ray through the center of integer pixel `(x, y)`.
    pub fn pixel_ray(&self, x: u32, y: u32) -> Result<Ray> {
        self.generate_ray(Vector2::new(x as f64 + 0.5, y as f64 + 0.5))
    }

    /// Point at camera-space coordinates `(u, v)` in pixels and depth `z`.
    pub fn unproject(&self, pixel: Vector2<f64>, depth: f64) -> Vector3<f64> {
        let k = &self.intrinsics;
        let p = Vector3::new(
            (pixel.x - k.principal_x) / k.focal_x * depth,
            (pixel.y - k.principal_y) / k.focal_y * depth,
            depth,
        );
        self.pose.camera_to_world(&p)
    }
}

/// Euclidean distance between camera centers.
pub fn pose_distance(a: &Camera, b: &Camera) -> f64 {
    (a.center() - b.center()).norm()
}
