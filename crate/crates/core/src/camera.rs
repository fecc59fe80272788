//! Pinhole cameras, world/pixel mapping and the rotation-based view distance.
//!
//! Extrinsics follow the world-to-camera convention `x_cam = R * x_world + t`,
//! so the camera center is `-Rᵀ t`. Pixel coordinates are continuous with the
//! center of pixel `(col, row)` at `(col + 0.5, row + 0.5)`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Point2, Rotation3, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    k: Matrix3<f64>,
    k_inv: Matrix3<f64>,
    r: Matrix3<f64>,
    t: Vector3<f64>,
}

impl Camera {
    pub fn new(k: Matrix3<f64>, r: Matrix3<f64>, t: Vector3<f64>) -> Result<Self> {
        if !k
            .iter()
            .chain(r.iter())
            .chain(t.iter())
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidCamera("non-finite entry".into()));
        }
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
            return Err(Error::InvalidCamera("K must be upper triangular".into()));
        }
        if k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 || k[(2, 2)] != 1.0 {
            return Err(Error::InvalidCamera(
                "K needs positive focal lengths and K[2,2] = 1".into(),
            ));
        }
        let residual = (r * r.transpose() - Matrix3::identity()).abs().max();
        if residual > ORTHONORMAL_TOL {
            return Err(Error::InvalidCamera(format!(
                "R is not orthonormal (residual {residual:.3e})"
            )));
        }
        if r.determinant() <= 0.0 {
            return Err(Error::InvalidCamera("det(R) must be +1".into()));
        }
        let k_inv = k
            .try_inverse()
            .ok_or_else(|| Error::InvalidCamera("K is singular".into()))?;
        Ok(Self { k, k_inv, r, t })
    }

    /// Intrinsics with square pixels and the given principal point.
    pub fn intrinsics(focal: f64, cx: f64, cy: f64) -> Matrix3<f64> {
        Matrix3::new(focal, 0.0, cx, 0.0, focal, cy, 0.0, 0.0, 1.0)
    }

    /// A camera at `eye` looking at `target`, image `y` pointing along `-up`.
    pub fn look_at(
        k: Matrix3<f64>,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self> {
        let z = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidCamera("eye coincides with target".into()))?;
        let x = z
            .cross(&-up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidCamera("up is parallel to the view direction".into()))?;
        let y = z.cross(&x);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Self::new(k, r, -(r * eye))
    }

    pub fn k(&self) -> &Matrix3<f64> {
        &self.k
    }

    pub fn k_inv(&self) -> &Matrix3<f64> {
        &self.k_inv
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.r
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.t
    }

    pub fn center(&self) -> Vector3<f64> {
        -(self.r.transpose() * self.t)
    }

    #[inline]
    pub fn world_to_camera(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.r * point + self.t
    }

    #[inline]
    pub fn camera_to_world(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.r.transpose() * (point - self.t)
    }

    /// Projects a camera-frame point to pixel coordinates (no depth check).
    #[inline]
    pub fn camera_to_pixel(&self, p: &Vector3<f64>) -> Point2<f64> {
        let h = self.k * p;
        Point2::new(h.x / h.z, h.y / h.z)
    }

    /// Projects a world point, returning its pixel position and camera-frame depth.
    pub fn project(&self, point: &Vector3<f64>) -> Result<(Point2<f64>, f64)> {
        let p = self.world_to_camera(point);
        if p.z <= 0.0 {
            return Err(Error::BehindCamera { depth: p.z });
        }
        Ok((self.camera_to_pixel(&p), p.z))
    }

    /// Lifts a pixel at the given camera-frame depth to world coordinates.
    pub fn unproject(&self, pixel: &Point2<f64>, depth: f64) -> Vector3<f64> {
        self.camera_to_world(&(self.k_inv * Vector3::new(pixel.x, pixel.y, 1.0) * depth))
    }

    /// Camera-frame direction through a pixel, scaled so that its z component is 1.
    pub fn pixel_ray(&self, pixel: &Point2<f64>) -> Vector3<f64> {
        self.k_inv * Vector3::new(pixel.x, pixel.y, 1.0)
    }
}

#[derive(Serialize, Deserialize)]
struct CameraJson {
    #[serde(rename = "K")]
    k: [f64; 9],
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
}

fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    for row in 0..3 {
        for col in 0..3 {
            out[row * 3 + col] = m[(row, col)];
        }
    }
    out
}

impl Serialize for Camera {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        CameraJson {
            k: row_major(&self.k),
            r: row_major(&self.r),
            t: [self.t.x, self.t.y, self.t.z],
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Camera {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = CameraJson::deserialize(deserializer)?;
        Camera::new(
            Matrix3::from_row_slice(&raw.k),
            Matrix3::from_row_slice(&raw.r),
            Vector3::from(raw.t),
        )
        .map_err(serde::de::Error::custom)
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Intrinsic Z-Y-X Euler angles `(yaw, pitch, roll)` with `R = Rz(yaw) Ry(pitch) Rx(roll)`,
/// each wrapped to `(-π, π]`.
pub fn euler_zyx(r: &Matrix3<f64>) -> Vector3<f64> {
    let sin_pitch = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let pitch = sin_pitch.asin();
    let cos_pitch = (r[(0, 0)].powi(2) + r[(1, 0)].powi(2)).sqrt();
    let (yaw, roll) = if cos_pitch > 1e-12 {
        (r[(1, 0)].atan2(r[(0, 0)]), r[(2, 1)].atan2(r[(2, 2)]))
    } else {
        ((-r[(0, 1)]).atan2(r[(1, 1)]), 0.0)
    };
    Vector3::new(wrap_angle(yaw), wrap_angle(pitch), wrap_angle(roll))
}

/// Inverse of [`euler_zyx`].
pub fn rotation_from_euler_zyx(angles: &Vector3<f64>) -> Matrix3<f64> {
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), angles.x);
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), angles.y);
    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), angles.z);
    (rz * ry * rx).into_inner()
}

/// Euclidean norm of the Euler angles of the relative rotation `R_aᵀ R_b`.
/// Translation does not contribute.
pub fn view_distance(a: &Camera, b: &Camera) -> f64 {
    euler_zyx(&(a.r.transpose() * b.r)).norm()
}
