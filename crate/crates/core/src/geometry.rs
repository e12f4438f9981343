//! Rigid-body helpers shared by the kinematics, fitting and simulation code.
//!
//! Rotations are plain `Matrix3<f64>` values; all lengths are millimetres.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

/// Skew-symmetric matrix `v^×` such that `v^× a = v × a`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation of `angle` radians about `axis` (need not be normalized; zero axis gives identity).
pub fn rot(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let n = axis.norm();
    if n < 1e-15 || angle == 0.0 {
        return Matrix3::identity();
    }
    let k = skew(&(axis / n));
    let (s, c) = angle.sin_cos();
    Matrix3::identity() + k * s + k * k * (1.0 - c)
}

/// Exponential map from a rotation vector (axis times angle).
pub fn exp_so3(w: &Vector3<f64>) -> Matrix3<f64> {
    rot(w, w.norm())
}

/// Logarithm of a rotation matrix as a rotation vector with angle in `[0, π]`.
pub fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    // atan2 form stays accurate for tiny angles, where acos of the trace does not
    let axial = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]) * 0.5;
    let s = axial.norm();
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let angle = s.atan2(c);
    if angle < 1e-12 {
        return axial;
    }
    if angle > std::f64::consts::PI - 1e-6 {
        return Rotation3::from_matrix_unchecked(*r).scaled_axis();
    }
    axial * (angle / s)
}

/// Unsigned angle between two (not necessarily unit) vectors, in `[0, π]`.
pub fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Rotation taking unit vector `a` onto unit vector `b` along the shortest arc.
pub fn rotation_between(a: &Vector3<f64>, b: &Vector3<f64>) -> Matrix3<f64> {
    match Rotation3::rotation_between(a, b) {
        Some(r) => r.into_inner(),
        None => {
            // antiparallel: any axis orthogonal to a
            let ortho = if a.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            let axis = a.cross(&ortho).normalize();
            rot(&axis, std::f64::consts::PI)
        }
    }
}

/// Spherical interpolation between unit vectors at constant angular rate.
pub fn slerp_unit(a: &Vector3<f64>, b: &Vector3<f64>, t: f64) -> Vector3<f64> {
    let angle = angle_between(a, b);
    if angle < 1e-12 {
        return (a + (b - a) * t).normalize();
    }
    let axis = a.cross(b);
    if axis.norm() < 1e-12 {
        // antiparallel, rotate about any orthogonal axis
        let ortho = if a.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        return rot(&a.cross(&ortho), angle * t) * a;
    }
    rot(&axis, angle * t) * a
}

/// Rotation at fraction `t` of the way from `r0` to `r1`, interpolating the
/// relative rotation vector linearly.
pub fn interpolate_rotation(r0: &Matrix3<f64>, r1: &Matrix3<f64>, t: f64) -> Matrix3<f64> {
    r0 * exp_so3(&(log_so3(&(r0.transpose() * r1)) * t))
}

/// Circular arc from `start` through a via point to an end point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub center: Vector3<f64>,
    pub radius: f64,
    // in-plane unit vectors: `u` towards the start, `v` completing the sweep direction
    u: Vector3<f64>,
    v: Vector3<f64>,
    pub sweep: f64,
}

impl Arc {
    /// Circumscribed arc; `None` when the three points are (nearly) collinear.
    pub fn through(start: &Vector3<f64>, via: &Vector3<f64>, end: &Vector3<f64>) -> Option<Self> {
        let a = via - start;
        let b = end - start;
        let axb = a.cross(&b);
        let denom = 2.0 * axb.norm_squared();
        if denom < 1e-12 * a.norm_squared() * b.norm_squared() || denom == 0.0 {
            return None;
        }
        let offset = (b.cross(&axb) * a.norm_squared() + axb.cross(&a) * b.norm_squared()) / denom;
        let center = start + offset;
        let radius = offset.norm();
        let normal = axb.normalize();
        let u = -offset / radius;
        let v = normal.cross(&u);
        let angle_of = |p: &Vector3<f64>| {
            let d = p - center;
            d.dot(&v).atan2(d.dot(&u)).rem_euclid(std::f64::consts::TAU)
        };
        let sweep = angle_of(end);
        Some(Self { center, radius, u, v, sweep })
    }

    pub fn point(&self, t: f64) -> Vector3<f64> {
        let (s, c) = (self.sweep * t).sin_cos();
        self.center + (self.u * c + self.v * s) * self.radius
    }

    pub fn length(&self) -> f64 {
        self.radius * self.sweep
    }

    /// Distance from `p` to the arc (not the full circle).
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        let d = p - self.center;
        let normal = self.u.cross(&self.v);
        let inplane = d - normal * d.dot(&normal);
        let angle = inplane.dot(&self.v).atan2(inplane.dot(&self.u)).rem_euclid(std::f64::consts::TAU);
        if angle <= self.sweep {
            let h = d.dot(&normal);
            let r = inplane.norm() - self.radius;
            (h * h + r * r).sqrt()
        } else {
            (p - self.point(0.0)).norm().min((p - self.point(1.0)).norm())
        }
    }
}

/// Rigid transform: rotation `rotation` followed by translation `position` (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub position: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), position: Vector3::zeros() }
    }

    pub fn new(rotation: Matrix3<f64>, position: Vector3<f64>) -> Self {
        Self { rotation, position }
    }

    pub fn from_translation(position: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), position }
    }

    /// Pose from a position and a rotation vector (axis-angle product).
    pub fn from_position_rotvec(position: Vector3<f64>, rotvec: Vector3<f64>) -> Self {
        Self { rotation: exp_so3(&rotvec), position }
    }

    pub fn rotvec(&self) -> Vector3<f64> {
        log_so3(&self.rotation)
    }

    /// `self * other`
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            position: self.position + self.rotation * other.position,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, position: -(rt * self.position) }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.position
    }

    /// Tool z-axis expressed in the parent frame.
    pub fn z_axis(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }

    /// Largest deviation of `RᵀR` from identity plus `|det R − 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let e = self.rotation.transpose() * self.rotation - Matrix3::identity();
        e.abs().max() + (self.rotation.determinant() - 1.0).abs()
    }
}

/// Planar placement (x, y in mm, yaw in rad) lifted to a rigid transform with
/// zero z offset and zero roll/pitch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl PlanarPose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }

    pub fn lift(&self) -> Pose {
        Pose {
            rotation: rot(&Vector3::z(), self.yaw),
            position: Vector3::new(self.x, self.y, 0.0),
        }
    }
}
