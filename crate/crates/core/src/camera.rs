//! Pinhole camera with an OpenCV-style frame: +x right, +y down, +z forward.

use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NEAR_CLIP: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub world_to_camera: Isometry3<f64>,
    /// `(fx, fy)` in pixels.
    pub focal: [f64; 2],
    /// `(cx, cy)` in pixels.
    pub principal_point: [f64; 2],
    pub width: u32,
    pub height: u32,
    pub near_clip: f64,
}

impl Camera {
    pub fn new(
        world_to_camera: Isometry3<f64>,
        focal: [f64; 2],
        principal_point: [f64; 2],
        width: u32,
        height: u32,
        near_clip: f64,
    ) -> Result<Self> {
        let cam = Self {
            world_to_camera,
            focal,
            principal_point,
            width,
            height,
            near_clip,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, with a vertical field of view in
    /// degrees and the principal point at the image center.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        fov_y_deg: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        if !(fov_y_deg > 0.0 && fov_y_deg < 180.0) {
            return Err(Error::InvalidParameter(format!("fov_y_deg {fov_y_deg} outside (0, 180)")));
        }
        let fy = 0.5 * height as f64 / (0.5 * fov_y_deg.to_radians()).tan();
        let pose = look_at_pose(eye, target, up)?;
        Self::new(
            pose,
            [fy, fy],
            [0.5 * width as f64, 0.5 * height as f64],
            width,
            height,
            DEFAULT_NEAR_CLIP,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let [fx, fy] = self.focal;
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::InvalidParameter(format!("focal lengths must be > 0, got ({fx}, {fy})")));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("camera resolution must be positive".into()));
        }
        if !(self.near_clip > 0.0) {
            return Err(Error::InvalidParameter(format!("near_clip {} must be > 0", self.near_clip)));
        }
        Ok(())
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        self.world_to_camera.inverse_transform_point(&Point3::origin()).coords
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.world_to_camera.rotation.to_rotation_matrix().into_inner()
    }

    /// The camera that sees a world moved by `motion` exactly as this camera
    /// sees the unmoved world.
    pub fn following(&self, motion: &Isometry3<f64>) -> Camera {
        Camera {
            world_to_camera: self.world_to_camera * motion.inverse(),
            ..self.clone()
        }
    }
}

/// World-to-camera pose looking from `eye` toward `target`.
pub fn look_at_pose(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<Isometry3<f64>> {
    let forward = target - eye;
    if forward.norm() < 1e-12 {
        return Err(Error::InvalidParameter("eye and target coincide".into()));
    }
    let z = forward.normalize();
    let x = z.cross(&up);
    if x.norm() < 1e-9 {
        return Err(Error::InvalidParameter("up vector is parallel to the view direction".into()));
    }
    let x = x.normalize();
    let y = z.cross(&x);
    let rows = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rows));
    let t = -(rot * eye);
    Ok(Isometry3::from_parts(Translation3::from(t), rot))
}
