//! Pinhole camera model, rigid transforms on SE(3) and the Huber penalty.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3, Vector6};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("missing or out-of-range depth measurement ({0} m)")]
    InvalidDepth(f64),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// Rectified pinhole intrinsics plus the raw depth unit conversion.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Raw depth units per meter.
    pub depth_scale: f64,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        depth_scale: f64,
    ) -> Result<Self, GeometryError> {
        let intr = Self { fx, fy, cx, cy, width, height, depth_scale };
        intr.validate()?;
        Ok(intr)
    }

    /// Freiburg 3 calibration of the TUM RGB-D benchmark.
    pub fn tum_freiburg3() -> Self {
        Self {
            fx: 535.4,
            fy: 539.2,
            cx: 320.1,
            cy: 247.6,
            width: 640,
            height: 480,
            depth_scale: 5000.0,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: &str| Err(GeometryError::InvalidIntrinsics(msg.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            return bad("cx must lie inside the image");
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            return bad("cy must lie inside the image");
        }
        if !(self.depth_scale > 0.0) {
            return bad("depth_scale must be positive");
        }
        Ok(())
    }

    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x < self.width as f64
            && pixel.y < self.height as f64
    }
}

/// Valid metric depth window; measurements outside are treated as missing.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

impl Default for DepthRange {
    fn default() -> Self {
        Self { min: 0.1, max: 8.0 }
    }
}

impl DepthRange {
    pub fn contains(&self, meters: f64) -> bool {
        meters >= self.min && meters <= self.max
    }
}

pub fn project(point: &Vector3<f64>, intr: &CameraIntrinsics) -> Result<Vector2<f64>, GeometryError> {
    if !(point.z > 0.0) {
        return Err(GeometryError::BehindCamera(point.z));
    }
    Ok(Vector2::new(
        intr.fx * point.x / point.z + intr.cx,
        intr.fy * point.y / point.z + intr.cy,
    ))
}

/// Inverse of [`project`] given a raw depth measurement in sensor units.
pub fn backproject(
    pixel: &Vector2<f64>,
    raw_depth: f64,
    intr: &CameraIntrinsics,
    range: &DepthRange,
) -> Result<Vector3<f64>, GeometryError> {
    let z = raw_depth / intr.depth_scale;
    if !(raw_depth > 0.0) || !range.contains(z) {
        return Err(GeometryError::InvalidDepth(z));
    }
    Ok(backproject_metric(pixel, z, intr))
}

pub(crate) fn backproject_metric(pixel: &Vector2<f64>, z: f64, intr: &CameraIntrinsics) -> Vector3<f64> {
    Vector3::new((pixel.x - intr.cx) * z / intr.fx, (pixel.y - intr.cy) * z / intr.fy, z)
}

/// Huber penalty evaluated on a squared residual.
///
/// Quadratic (`r²/2`) while `|r| <= delta`, then `delta·(|r| - delta/2)`.
pub fn huber(squared_residual: f64, delta: f64) -> f64 {
    if squared_residual <= delta * delta {
        0.5 * squared_residual
    } else {
        delta * (squared_residual.sqrt() - 0.5 * delta)
    }
}

/// IRLS weight matching [`huber`].
pub fn huber_weight(squared_residual: f64, delta: f64) -> f64 {
    if squared_residual <= delta * delta {
        1.0
    } else {
        delta / squared_residual.sqrt()
    }
}

/// Tangent-space coordinates of SE(3): rotation part first, then translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist(pub Vector6<f64>);

impl Twist {
    pub fn new(rotation: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self(Vector6::new(
            rotation.x,
            rotation.y,
            rotation.z,
            translation.x,
            translation.y,
            translation.z,
        ))
    }

    pub fn zero() -> Self {
        Self(Vector6::zeros())
    }

    pub fn rotation(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into_owned()
    }
}

/// Rigid transform. Frame poses are stored camera-to-world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Left Jacobian of SO(3), used to map twist translation to pose translation.
fn so3_left_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let w = skew(omega);
    if theta2 < 1e-10 {
        return Matrix3::identity() + 0.5 * w + w * w / 6.0;
    }
    let theta = theta2.sqrt();
    let a = (1.0 - theta.cos()) / theta2;
    let b = (theta - theta.sin()) / (theta2 * theta);
    Matrix3::identity() + a * w + b * w * w
}

fn so3_left_jacobian_inv(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let w = skew(omega);
    if theta2 < 1e-10 {
        return Matrix3::identity() - 0.5 * w + w * w / 12.0;
    }
    let theta = theta2.sqrt();
    let half = 0.5 * theta;
    let c = (1.0 - half * half.cos() / half.sin()) / theta2;
    Matrix3::identity() - 0.5 * w + c * w * w
}

fn so3_log(rotation: &Rotation3<f64>) -> Vector3<f64> {
    let m = rotation.matrix();
    // sin(θ)·axis from the antisymmetric part, cos(θ) from the trace
    let v = 0.5 * Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let sin = v.norm();
    let cos = 0.5 * (m.trace() - 1.0);
    if sin < 1e-12 && cos > 0.0 {
        return v;
    }
    if cos < -0.99 {
        // near π the antisymmetric part degenerates
        return rotation.scaled_axis();
    }
    let theta = sin.atan2(cos);
    v * (theta / sin)
}

impl Pose {
    pub fn identity() -> Self {
        Self { rotation: Rotation3::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation: q.to_rotation_matrix(), translation }
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&self.rotation)
    }

    pub fn exp(twist: &Twist) -> Self {
        let omega = twist.rotation();
        let rotation = Rotation3::from_scaled_axis(omega);
        let translation = so3_left_jacobian(&omega) * twist.translation();
        Self { rotation, translation }
    }

    /// Requires a rotation angle strictly below π.
    pub fn log(&self) -> Twist {
        let omega = so3_log(&self.rotation);
        let rho = so3_left_jacobian_inv(&omega) * self.translation;
        Twist::new(omega, rho)
    }

    pub fn inverse(&self) -> Self {
        let rotation = self.rotation.inverse();
        Self { rotation, translation: -(rotation * self.translation) }
    }

    /// `self ∘ other`; the rotation is re-orthonormalized after every product.
    pub fn compose(&self, other: &Pose) -> Self {
        let mut rotation = self.rotation * other.rotation;
        rotation.renormalize();
        Self { rotation, translation: self.rotation * other.translation + self.translation }
    }

    pub fn apply(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        so3_log(&self.rotation).norm()
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        let m = self.rotation.matrix();
        (m.transpose() * m - Matrix3::identity()).abs().max() < tol && (m.determinant() - 1.0).abs() < tol
    }
}

pub fn se3_exp(twist: &Twist) -> Pose {
    Pose::exp(twist)
}

pub fn se3_log(pose: &Pose) -> Twist {
    pose.log()
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn apply(pose: &Pose, point: &Vector3<f64>) -> Vector3<f64> {
    pose.apply(point)
}
