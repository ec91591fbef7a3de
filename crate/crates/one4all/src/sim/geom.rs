//! 3D vector, quaternion, and pose math for the manipulator backend.
//!
//! Conventions: right-handed frames, quaternions stored as (w, x, y, z),
//! and the gripper/camera forward axis is +X in the end-effector frame.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Tolerance for treating a quaternion as unit length.
pub const UNIT_QUAT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[allow(clippy::should_implement_trait)]
impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        if n == 0.0 {
            Vec3::ZERO
        } else {
            self.scale(1.0 / n)
        }
    }

    /// Angle between two vectors in radians; 0 for degenerate inputs.
    pub fn angle_to(self, o: Vec3) -> f64 {
        let d = self.norm() * o.norm();
        if d == 0.0 {
            return 0.0;
        }
        (self.dot(o) / d).clamp(-1.0, 1.0).acos()
    }
}

/// Unit quaternion (w, x, y, z) representing a rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[allow(clippy::should_implement_trait)]
impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_unit(self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_QUAT_TOL
    }

    /// Renormalize to unit length. Identity for the zero quaternion.
    pub fn normalized(self) -> Quat {
        let n = self.norm();
        if n == 0.0 {
            return Quat::IDENTITY;
        }
        Quat::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        let a = axis.normalized();
        let (s, c) = (angle / 2.0).sin_cos();
        Quat::new(c, a.x * s, a.y * s, a.z * s)
    }

    /// Hamilton product: `self` applied after `other` when rotating vectors
    /// via `(self * other).rotate(v)`.
    pub fn mul(self, o: Quat) -> Quat {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    /// Rotate a vector by this quaternion.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        // q * (0, v) * q^-1 expanded for unit quaternions
        let u = Vec3::new(self.x, self.y, self.z);
        let uv = Vec3::new(
            u.y * v.z - u.z * v.y,
            u.z * v.x - u.x * v.z,
            u.x * v.y - u.y * v.x,
        );
        let uuv = Vec3::new(
            u.y * uv.z - u.z * uv.y,
            u.z * uv.x - u.x * uv.z,
            u.x * uv.y - u.y * uv.x,
        );
        v.add(uv.scale(2.0 * self.w)).add(uuv.scale(2.0))
    }

    /// Forward axis (+X of the rotated frame).
    pub fn forward(self) -> Vec3 {
        self.rotate(Vec3::new(1.0, 0.0, 0.0))
    }

    /// Rotation pointing the forward (+X) axis along `dir`.
    ///
    /// Built from yaw about Z then pitch about Y, so horizontal directions
    /// keep the frame level. Deterministic for all inputs; a vertical `dir`
    /// resolves yaw to 0.
    pub fn look_along(dir: Vec3) -> Quat {
        let d = dir.normalized();
        if d.norm() == 0.0 {
            return Quat::IDENTITY;
        }
        let yaw = d.y.atan2(d.x);
        let pitch = d.z.clamp(-1.0, 1.0).asin();
        let qz = Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), yaw);
        let qy = Quat::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), -pitch);
        qz.mul(qy).normalized()
    }
}

impl fmt::Display for Quat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6}, {:.6}, {:.6})", self.w, self.x, self.y, self.z)
    }
}

/// Position plus orientation in the arm base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose6d {
    pub position: Vec3,
    pub orientation: Quat,
}

impl Pose6d {
    pub fn new(position: Vec3, orientation: Quat) -> Self {
        Pose6d { position, orientation }
    }

    /// Parse the wire form `x,y,z,qw,qx,qy,qz` (seven comma-separated floats).
    pub fn parse(text: &str) -> Result<Pose6d, String> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        if parts.len() != 7 {
            return Err(format!("expected 7 comma-separated values, got {}", parts.len()));
        }
        let mut v = [0.0f64; 7];
        for (i, p) in parts.iter().enumerate() {
            v[i] = p
                .parse::<f64>()
                .map_err(|_| format!("component {} is not a number: {:?}", i + 1, p))?;
        }
        Ok(Pose6d::new(
            Vec3::new(v[0], v[1], v[2]),
            Quat::new(v[3], v[4], v[5], v[6]),
        ))
    }

    pub fn to_wire(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.position.x,
            self.position.y,
            self.position.z,
            self.orientation.w,
            self.orientation.x,
            self.orientation.y,
            self.orientation.z
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-9;

    fn assert_vec_close(a: Vec3, b: Vec3, tol: f64) {
        assert!(
            a.sub(b).norm() < tol,
            "vectors differ: {:?} vs {:?}",
            a,
            b
        );
    }

    /// Independent oracle: 3x3 rotation matrix from a unit quaternion.
    fn rot_matrix(q: Quat) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (q.w, q.x, q.y, q.z);
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    fn mat_mul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for (k, bk) in b.iter().enumerate() {
                    out[i][j] += a[i][k] * bk[j];
                }
            }
        }
        out
    }

    fn mat_apply(m: [[f64; 3]; 3], v: Vec3) -> Vec3 {
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    #[test]
    fn rotate_matches_matrix_oracle() {
        let cases = [
            Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), 0.7),
            Quat::from_axis_angle(Vec3::new(1.0, 2.0, -0.5), 2.1),
            Quat::from_axis_angle(Vec3::new(-1.0, 0.3, 0.9), -1.3),
        ];
        let v = Vec3::new(0.2, -1.4, 0.8);
        for q in cases {
            assert_vec_close(q.rotate(v), mat_apply(rot_matrix(q), v), EPS);
        }
    }

    #[test]
    fn composition_matches_matrix_product() {
        // Two successive relative 90-degree yaws compose to a 180-degree yaw.
        let yaw90 = Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), std::f64::consts::FRAC_PI_2);
        let composed = yaw90.mul(yaw90);
        let oracle = mat_mul(rot_matrix(yaw90), rot_matrix(yaw90));
        let v = Vec3::new(1.0, 0.0, 0.0);
        assert_vec_close(composed.rotate(v), mat_apply(oracle, v), EPS);
        assert_vec_close(composed.forward(), Vec3::new(-1.0, 0.0, 0.0), EPS);
    }

    #[test]
    fn look_along_points_forward_axis_at_direction() {
        let dirs = [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.3, -0.7, 0.2),
            Vec3::new(-0.5, 0.1, -0.8),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        // acos conditioning bottoms out around 1.5e-8 rad; 1e-7 is effectively
        // exact here.
        for d in dirs {
            let q = Quat::look_along(d);
            assert!(q.is_unit());
            let err = q.forward().angle_to(d);
            assert!(err < 1e-7, "look_along({:?}) off by {} rad", d, err);
        }
    }

    #[test]
    fn normalization_stays_within_tolerance_over_long_chains() {
        let step = Quat::from_axis_angle(Vec3::new(0.3, 1.0, -0.2), 0.123);
        let mut q = Quat::IDENTITY;
        for _ in 0..1000 {
            q = q.mul(step).normalized();
        }
        assert!(q.is_unit());
    }

    #[test]
    fn pose_wire_round_trip() {
        let p = Pose6d::new(
            Vec3::new(0.1, -0.2, 0.3),
            Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), 1.0),
        );
        let q = Pose6d::parse(&p.to_wire()).unwrap();
        assert!(p.position.sub(q.position).norm() < EPS);
        assert!((p.orientation.w - q.orientation.w).abs() < EPS);
    }

    #[test]
    fn pose_parse_rejects_malformed() {
        assert!(Pose6d::parse("1,2,3").is_err());
        assert!(Pose6d::parse("1,2,3,a,0,0,0").is_err());
    }
}
