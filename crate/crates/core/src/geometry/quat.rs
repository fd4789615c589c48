//! Hamilton quaternions for joint rotations.

use serde::{Deserialize, Serialize};

use super::vec3::{self, Mat3, Vec3};
use crate::error::{Error, Result};

/// A quaternion `w + xi + yj + zk`. Rotations use unit quaternions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let Some(a) = vec3::normalize(axis) else {
            return Self::IDENTITY;
        };
        let (s, c) = (angle / 2.0).sin_cos();
        Self::new(c, a[0] * s, a[1] * s, a[2] * s)
    }

    /// Rotation about the vertical axis.
    pub fn from_heading(heading: f64) -> Self {
        Self::from_axis_angle(vec3::UP, heading)
    }

    /// Shortest-arc rotation taking direction `from` onto direction `to`.
    ///
    /// Antiparallel inputs rotate by pi about a fixed axis perpendicular to `from`.
    pub fn from_to(from: Vec3, to: Vec3) -> Self {
        let (Some(a), Some(b)) = (vec3::normalize(from), vec3::normalize(to)) else {
            return Self::IDENTITY;
        };
        let d = vec3::dot(a, b);
        if d < -1.0 + 1e-12 {
            // any perpendicular works; pick the one least aligned with `a`
            let helper = if a[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
            let axis = vec3::cross(a, helper);
            return Self::from_axis_angle(axis, std::f64::consts::PI);
        }
        let c = vec3::cross(a, b);
        Self::new(1.0 + d, c[0], c[1], c[2]).normalized()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, o: &Quaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n < 1e-300 {
            return Self::IDENTITY;
        }
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self * rhs`.
    pub fn mul(&self, rhs: &Quaternion) -> Self {
        let (a, b) = (self, rhs);
        Self::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    /// Multiplicative inverse; equals the conjugate for unit quaternions.
    pub fn inverse(&self) -> Result<Self> {
        let n2 = self.dot(self);
        if n2.sqrt() < 1e-12 {
            return Err(Error::ZeroNorm(n2.sqrt()));
        }
        let c = self.conjugate();
        Ok(Self::new(c.w / n2, c.x / n2, c.y / n2, c.z / n2))
    }

    /// Rotates `v` by the sandwich product `q v q*` (assumes unit `q`).
    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let p = Quaternion::new(0.0, v[0], v[1], v[2]);
        let r = self.mul(&p).mul(&self.conjugate());
        [r.x, r.y, r.z]
    }

    /// Rotation matrix of a unit quaternion.
    pub fn to_rot(&self) -> Result<Mat3> {
        let n = self.norm();
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::NonUnit(n));
        }
        let Quaternion { w, x, y, z } = *self;
        Ok([
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ])
    }

    /// Unit quaternion from a proper rotation matrix (Shepperd's method).
    pub fn from_rot(m: &Mat3) -> Self {
        let tr = m[0][0] + m[1][1] + m[2][2];
        let q = if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            Self::new(0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s)
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            Self::new((m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s)
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            Self::new((m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s)
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            Self::new((m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s)
        };
        q.normalized()
    }

    /// Rotation angle in [0, pi] between two unit quaternions, sign-agnostic.
    pub fn angle_to(&self, other: &Quaternion) -> f64 {
        2.0 * self.dot(other).abs().min(1.0).acos()
    }
}

/// Spherical linear interpolation along the shortest arc.
///
/// Falls back to normalized linear interpolation when the inputs are
/// (anti)parallel to within 1e-6.
pub fn slerp(a: &Quaternion, b: &Quaternion, t: f64) -> Quaternion {
    let mut b = *b;
    let mut d = a.dot(&b);
    if d < 0.0 {
        b = b.neg();
        d = -d;
    }
    if t <= 0.0 {
        return *a;
    }
    if t >= 1.0 {
        return b;
    }
    if d > 1.0 - 1e-6 {
        return Quaternion::new(
            a.w + (b.w - a.w) * t,
            a.x + (b.x - a.x) * t,
            a.y + (b.y - a.y) * t,
            a.z + (b.z - a.z) * t,
        )
        .normalized();
    }
    let theta = d.min(1.0).acos();
    let s = theta.sin();
    let wa = ((1.0 - t) * theta).sin() / s;
    let wb = (t * theta).sin() / s;
    Quaternion::new(
        wa * a.w + wb * b.w,
        wa * a.x + wb * b.x,
        wa * a.y + wb * b.y,
        wa * a.z + wb * b.z,
    )
    .normalized()
}
