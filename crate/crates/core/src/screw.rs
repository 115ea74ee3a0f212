//! Quaternions, unit dual quaternions and screw-linear interpolation.
//!
//! A rigid transform with rotation `q` and translation `t` is stored as
//! `real = q`, `dual = ½ t q` (with `t` read as a pure quaternion). Products
//! compose like homogeneous matrices: `(a * b).transform_point(p)` equals
//! `a.transform_point(b.transform_point(p))`.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the unit constraints checked at construction.
pub const UNIT_TOLERANCE: f64 = 1e-9;
/// Products are renormalized only once drift exceeds this.
pub const RENORMALIZE_DRIFT: f64 = 1e-12;
/// Rotation angles below this are handled as pure translations.
pub const SMALL_ANGLE: f64 = 1e-8;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ScrewError {
    #[error("rotation quaternion is not unit (norm {0})")]
    NonUnitRotation(f64),

    #[error("dual quaternion violates the unit constraint (real norm {real_norm}, orthogonality {orthogonality:.3e})")]
    NonUnitDualQuaternion { real_norm: f64, orthogonality: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Self = Self { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };
    pub const ZERO: Self = Self { w: 0.0, x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn pure(v: &Vector3<f64>) -> Self {
        Self::new(0.0, v.x, v.y, v.z)
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn conj(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(&self, o: &Self) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl Mul for Quaternion {
    type Output = Self;

    fn mul(self, b: Self) -> Self {
        let a = self;
        Self::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

impl Add for Quaternion {
    type Output = Self;

    fn add(self, b: Self) -> Self {
        Self::new(self.w + b.w, self.x + b.x, self.y + b.y, self.z + b.z)
    }
}

impl Sub for Quaternion {
    type Output = Self;

    fn sub(self, b: Self) -> Self {
        Self::new(self.w - b.w, self.x - b.x, self.y - b.y, self.z - b.z)
    }
}

impl Neg for Quaternion {
    type Output = Self;

    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

/// Rotation quaternion with norm 1 within [`UNIT_TOLERANCE`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Quaternion", into = "Quaternion")]
pub struct UnitQuaternion(Quaternion);

impl UnitQuaternion {
    pub const IDENTITY: Self = Self(Quaternion::IDENTITY);

    pub fn try_new(q: Quaternion) -> Result<Self, ScrewError> {
        let n = q.norm();
        if (n - 1.0).abs() > UNIT_TOLERANCE || !n.is_finite() {
            return Err(ScrewError::NonUnitRotation(n));
        }
        Ok(Self(q))
    }

    /// Normalizes an arbitrary non-zero quaternion.
    pub fn normalize(q: Quaternion) -> Self {
        Self(q.scale(1.0 / q.norm()))
    }

    /// Rotation by `angle` radians about `axis` (normalized here).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let a = axis.normalize();
        let (s, c) = (angle / 2.0).sin_cos();
        Self(Quaternion::new(c, a.x * s, a.y * s, a.z * s))
    }

    pub fn quaternion(&self) -> Quaternion {
        self.0
    }

    pub fn conj(&self) -> Self {
        Self(self.0.conj())
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        (self.0 * Quaternion::pure(v) * self.0.conj()).vector()
    }

    /// Rotation angle in `[0, 2π)` and axis (x-axis when the angle is 0).
    pub fn angle_axis(&self) -> (f64, Vector3<f64>) {
        let v = self.0.vector();
        let s = v.norm();
        let angle = 2.0 * s.atan2(self.0.w);
        let axis = if s > 0.0 { v / s } else { Vector3::x() };
        (angle, axis)
    }

    /// Shortest angle between the rotations, in `[0, π]`.
    pub fn angle_to(&self, other: &Self) -> f64 {
        let d = self.0.dot(&other.0).abs().min(1.0);
        2.0 * d.acos()
    }
}

impl TryFrom<Quaternion> for UnitQuaternion {
    type Error = ScrewError;

    fn try_from(q: Quaternion) -> Result<Self, Self::Error> {
        Self::try_new(q)
    }
}

impl From<UnitQuaternion> for Quaternion {
    fn from(q: UnitQuaternion) -> Self {
        q.0
    }
}

/// Screw parameters of a rigid motion: rotation `angle` about the line
/// with direction `axis` and moment `moment`, with `pitch` translation along it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Screw {
    pub angle: f64,
    pub pitch: f64,
    pub axis: Vector3<f64>,
    pub moment: Vector3<f64>,
}

/// Rigid transform as a unit dual quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitDualQuaternion {
    real: Quaternion,
    dual: Quaternion,
}

impl Default for UnitDualQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl UnitDualQuaternion {
    pub const IDENTITY: Self = Self { real: Quaternion::IDENTITY, dual: Quaternion::ZERO };

    /// Validates `‖real‖ = 1` and `real·conj(dual) + dual·conj(real) = 0`.
    pub fn try_new(real: Quaternion, dual: Quaternion) -> Result<Self, ScrewError> {
        let (real_norm, orthogonality) = unit_defects(&real, &dual);
        if (real_norm - 1.0).abs() > UNIT_TOLERANCE || orthogonality > UNIT_TOLERANCE || !real_norm.is_finite() {
            return Err(ScrewError::NonUnitDualQuaternion { real_norm, orthogonality });
        }
        Ok(Self { real, dual })
    }

    /// Projects onto the unit dual quaternions.
    pub fn normalize(real: Quaternion, dual: Quaternion) -> Self {
        let n = real.norm();
        let r = real.scale(1.0 / n);
        let d = dual.scale(1.0 / n);
        let d = d - r.scale(r.dot(&d));
        Self { real: r, dual: d }
    }

    pub fn from_pose(translation: &Vector3<f64>, rotation: &UnitQuaternion) -> Self {
        let r = rotation.quaternion();
        Self { real: r, dual: (Quaternion::pure(translation) * r).scale(0.5) }
    }

    /// Checked variant of [`from_pose`](Self::from_pose) for raw quaternions.
    pub fn try_from_pose(translation: &Vector3<f64>, rotation: Quaternion) -> Result<Self, ScrewError> {
        Ok(Self::from_pose(translation, &UnitQuaternion::try_new(rotation)?))
    }

    pub fn from_translation(t: &Vector3<f64>) -> Self {
        Self::from_pose(t, &UnitQuaternion::IDENTITY)
    }

    pub fn from_rotation(q: &UnitQuaternion) -> Self {
        Self::from_pose(&Vector3::zeros(), q)
    }

    pub fn real(&self) -> Quaternion {
        self.real
    }

    pub fn dual(&self) -> Quaternion {
        self.dual
    }

    pub fn rotation(&self) -> UnitQuaternion {
        UnitQuaternion(self.real)
    }

    pub fn translation(&self) -> Vector3<f64> {
        (self.dual * self.real.conj()).scale(2.0).vector()
    }

    pub fn to_pose(&self) -> (Vector3<f64>, UnitQuaternion) {
        (self.translation(), self.rotation())
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation().rotate(&p.coords) + self.translation())
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation().rotate(v)
    }

    /// Conjugate; the inverse for unit elements.
    pub fn conj(&self) -> Self {
        Self { real: self.real.conj(), dual: self.dual.conj() }
    }

    pub fn inverse(&self) -> Self {
        self.conj()
    }

    /// Same transform, other sign (double cover).
    pub fn negated(&self) -> Self {
        Self { real: -self.real, dual: -self.dual }
    }

    /// Translation distance between two poses.
    pub fn translation_distance(&self, other: &Self) -> f64 {
        (self.translation() - other.translation()).norm()
    }

    /// True when both represent the same rigid transform within `tol`
    /// (componentwise, up to the global sign).
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let diff = |a: &Self, b: &Self| {
            let r = a.real - b.real;
            let d = a.dual - b.dual;
            [r.w, r.x, r.y, r.z, d.w, d.x, d.y, d.z].iter().fold(0.0f64, |m, v| m.max(v.abs()))
        };
        diff(self, other) <= tol || diff(self, &other.negated()) <= tol
    }

    /// Largest componentwise difference up to the global sign.
    pub fn distance(&self, other: &Self) -> f64 {
        let diff = |b: &Self| {
            let r = self.real - b.real;
            let d = self.dual - b.dual;
            [r.w, r.x, r.y, r.z, d.w, d.x, d.y, d.z].iter().fold(0.0f64, |m, v| m.max(v.abs()))
        };
        diff(other).min(diff(&other.negated()))
    }

    /// `|‖real‖ − 1|` and the orthogonality defect of the dual part.
    pub fn unit_drift(&self) -> f64 {
        let (n, o) = unit_defects(&self.real, &self.dual);
        (n - 1.0).abs().max(o)
    }

    /// Screw parameters, taking the representative with `real.w ≥ 0`.
    /// `None` for (near) pure translations, where the axis is undefined.
    pub fn screw(&self) -> Option<Screw> {
        let (r, d) = if self.real.w < 0.0 { (-self.real, -self.dual) } else { (self.real, self.dual) };
        let v = r.vector();
        let s = v.norm();
        let angle = 2.0 * s.atan2(r.w);
        if angle < SMALL_ANGLE {
            return None;
        }
        let half_sin = s;
        let half_cos = r.w;
        let axis = v / s;
        let pitch = -2.0 * d.w / half_sin;
        let moment = (d.vector() - axis * (0.5 * pitch * half_cos)) / half_sin;
        Some(Screw { angle, pitch, axis, moment })
    }

    pub fn from_screw(screw: &Screw) -> Self {
        let (s, c) = (screw.angle / 2.0).sin_cos();
        let real = Quaternion::new(c, screw.axis.x * s, screw.axis.y * s, screw.axis.z * s);
        let dv = screw.axis * (0.5 * screw.pitch * c) + screw.moment * s;
        let dual = Quaternion::new(-0.5 * screw.pitch * s, dv.x, dv.y, dv.z);
        Self { real, dual }
    }

    /// Screw-linear power `self^tau`: scales the screw angle and pitch by
    /// `tau` about the same axis. The representative with `real.w ≥ 0` is
    /// used, so the motion follows the shorter rotation.
    pub fn pow(&self, tau: f64) -> Self {
        if tau == 0.0 {
            return Self::IDENTITY;
        }
        if tau == 1.0 {
            return *self;
        }
        match self.screw() {
            Some(s) => Self::from_screw(&Screw { angle: s.angle * tau, pitch: s.pitch * tau, ..s }),
            None => {
                let base = if self.real.w < 0.0 { self.negated() } else { *self };
                let t = base.translation();
                let (angle, axis) = base.rotation().angle_axis();
                let rot = if angle == 0.0 {
                    UnitQuaternion::IDENTITY
                } else {
                    UnitQuaternion::from_axis_angle(&axis, angle * tau)
                };
                Self::from_pose(&(t * tau), &rot)
            }
        }
    }

    /// Screw-linear interpolation `from · (from* · to)^tau`.
    pub fn sclerp(from: &Self, to: &Self, tau: f64) -> Self {
        if tau <= 0.0 {
            return *from;
        }
        if tau >= 1.0 {
            return *to;
        }
        let mut rel = from.conj() * *to;
        if rel.real.w < 0.0 {
            rel = rel.negated();
        }
        *from * rel.pow(tau)
    }

    /// `[t, q]` waypoint view.
    pub fn to_waypoint(&self) -> Waypoint {
        let t = self.translation();
        Waypoint { t: [t.x, t.y, t.z], q: self.real.to_array() }
    }
}

fn unit_defects(real: &Quaternion, dual: &Quaternion) -> (f64, f64) {
    let cross = *real * dual.conj() + *dual * real.conj();
    (real.norm(), cross.norm())
}

impl Mul for UnitDualQuaternion {
    type Output = Self;

    fn mul(self, b: Self) -> Self {
        let real = self.real * b.real;
        let dual = self.real * b.dual + self.dual * b.real;
        let out = Self { real, dual };
        if out.unit_drift() > RENORMALIZE_DRIFT {
            Self::normalize(real, dual)
        } else {
            out
        }
    }
}

/// Serialized pose: position in meters and quaternion `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: [f64; 3],
    pub q: [f64; 4],
}

impl Waypoint {
    pub fn to_pose(&self) -> Result<UnitDualQuaternion, ScrewError> {
        UnitDualQuaternion::try_from_pose(&Vector3::from(self.t), Quaternion::from_array(self.q))
    }
}

impl From<UnitDualQuaternion> for Waypoint {
    fn from(x: UnitDualQuaternion) -> Self {
        x.to_waypoint()
    }
}

impl TryFrom<Waypoint> for UnitDualQuaternion {
    type Error = ScrewError;

    fn try_from(w: Waypoint) -> Result<Self, Self::Error> {
        w.to_pose()
    }
}
