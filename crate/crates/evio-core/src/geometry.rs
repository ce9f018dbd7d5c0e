//! Camera models, rigid-body poses and the Cayley rotation parameterization.
//!
//! Quaternions are Hamilton convention, scalar-first in all serialized and
//! debug forms. A `Pose` maps body-frame vectors into the world frame.

use nalgebra::{Matrix3, Matrix4x3, Quaternion, UnitQuaternion, Vector2, Vector3};

/// Pinhole intrinsics of a rectified, distortion-free camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    /// Projects a camera-frame point; `None` when the point is not strictly in
    /// front of the camera.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        if p.z <= 1e-12 {
            return None;
        }
        Some(Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    /// Unit-depth ray through pixel `(u, v)`: z component is exactly 1.
    #[inline]
    pub fn back_project(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= (self.width - 1) as f64 && v <= (self.height - 1) as f64
    }
}

/// Rectified stereo pair. The right camera sits `baseline_m` along the left
/// camera's +x axis, with identical intrinsics and aligned axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoRig {
    pub cam: CameraIntrinsics,
    pub baseline_m: f64,
}

impl StereoRig {
    /// Maps a left-camera point into the right camera frame.
    #[inline]
    pub fn left_to_right(&self, p_left: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(p_left.x - self.baseline_m, p_left.y, p_left.z)
    }

    /// Inverse depth (1/m) of a point with stereo disparity `d` pixels.
    #[inline]
    pub fn disparity_to_inverse_depth(&self, d: f64) -> f64 {
        d / (self.cam.fx * self.baseline_m)
    }

    /// Disparity in pixels of a point at inverse depth `rho` (1/m).
    #[inline]
    pub fn inverse_depth_to_disparity(&self, rho: f64) -> f64 {
        rho * self.cam.fx * self.baseline_m
    }
}

/// Rigid transform taking body-frame vectors to the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    #[inline]
    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: if `self` is T_a_b and `other` is T_b_c the result is
    /// T_a_c. The composed quaternion is renormalized.
    pub fn compose(&self, other: &Pose) -> Pose {
        let q = UnitQuaternion::new_normalize((self.rotation * other.rotation).into_inner());
        Pose {
            rotation: q,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let qi = self.rotation.inverse();
        Pose {
            rotation: qi,
            translation: -(qi * self.translation),
        }
    }
}

/// Rotation + translation increment solved for by the tracker: `c` is the
/// Cayley rotation vector, `t` a translation in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionParams {
    pub c: Vector3<f64>,
    pub t: Vector3<f64>,
}

impl MotionParams {
    pub fn zero() -> Self {
        Self {
            c: Vector3::zeros(),
            t: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        cayley_to_quaternion(&self.c)
    }

    pub fn as_pose(&self) -> Pose {
        Pose::new(self.rotation(), self.t)
    }
}

/// Cayley vector to unit quaternion: `(1, c) / |(1, c)|`.
///
/// Equivalent to R = (I - [c]x)^-1 (I + [c]x); the rotation angle is
/// `2*atan(|c|)`, so all c in R^3 map to rotations strictly below 180 deg.
pub fn cayley_to_quaternion(c: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(Quaternion::new(1.0, c.x, c.y, c.z))
}

pub fn cayley_to_rotation(c: &Vector3<f64>) -> Matrix3<f64> {
    cayley_to_quaternion(c).to_rotation_matrix().into_inner()
}

/// Inverse of [`cayley_to_quaternion`]. Fails only for 180-degree rotations,
/// where the scalar part vanishes.
pub fn quaternion_to_cayley(q: &UnitQuaternion<f64>) -> Option<Vector3<f64>> {
    let mut w = q.w;
    let mut v = q.imag();
    if w < 0.0 {
        w = -w;
        v = -v;
    }
    if w < 1e-12 {
        return None;
    }
    Some(v / w)
}

/// d(R(c) v)/dc_k for the Cayley rotation, columns k = 0..3.
///
/// Uses R(c) v = v + 2/(1+|c|^2) * (c x v + c x (c x v)).
pub fn cayley_rotate_jacobian(c: &Vector3<f64>, v: &Vector3<f64>) -> Matrix3<f64> {
    let s = 1.0 + c.norm_squared();
    let cv = c.cross(v);
    let a = cv + c.cross(&cv);
    let mut jac = Matrix3::zeros();
    for k in 0..3 {
        let mut e = Vector3::zeros();
        e[k] = 1.0;
        let da = e.cross(v) + e.cross(&cv) + c.cross(&e.cross(v));
        let col = (2.0 / s) * da - (4.0 * c[k] / (s * s)) * a;
        jac.set_column(k, &col);
    }
    jac
}

/// Left multiplication matrix: L(p) q = p ⊗ q on (w, x, y, z) coefficients.
pub fn quat_left_matrix(p: &Quaternion<f64>) -> nalgebra::Matrix4<f64> {
    let (w, x, y, z) = (p.w, p.i, p.j, p.k);
    nalgebra::Matrix4::new(
        w, -x, -y, -z, //
        x, w, -z, y, //
        y, z, w, -x, //
        z, -y, x, w,
    )
}

/// Right multiplication matrix: R(r) q = q ⊗ r on (w, x, y, z) coefficients.
pub fn quat_right_matrix(r: &Quaternion<f64>) -> nalgebra::Matrix4<f64> {
    let (w, x, y, z) = (r.w, r.i, r.j, r.k);
    nalgebra::Matrix4::new(
        w, -x, -y, -z, //
        x, w, z, -y, //
        y, -z, w, x, //
        z, y, -x, w,
    )
}

/// Derivative of the unit quaternion exp map q(u) = (cos(|u|/2), sin(|u|/2) û)
/// with respect to the rotation vector u, as a 4x3 matrix of (w, x, y, z) rows.
pub fn quat_exp_jacobian(u: &Vector3<f64>) -> Matrix4x3<f64> {
    let theta = u.norm();
    let mut jac = Matrix4x3::zeros();
    if theta < 1e-8 {
        // q ≈ (1 - |u|^2/8, u/2): d(w)/du ≈ -u/4, d(vec)/du ≈ I/2
        for k in 0..3 {
            jac[(0, k)] = -0.25 * u[k];
            jac[(k + 1, k)] = 0.5;
        }
        return jac;
    }
    let h = 0.5 * theta;
    let (sh, ch) = (h.sin(), h.cos());
    let uhat = u / theta;
    for k in 0..3 {
        jac[(0, k)] = -0.5 * sh * uhat[k];
        for r in 0..3 {
            let id = if r == k { 1.0 } else { 0.0 };
            jac[(r + 1, k)] =
                (sh / theta) * (id - uhat[r] * uhat[k]) + 0.5 * ch * uhat[r] * uhat[k];
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_unit_quat(rng: &mut impl Rng) -> UnitQuaternion<f64> {
        UnitQuaternion::from_scaled_axis(Vector3::new(
            rng.gen_range(-1.5..1.5),
            rng.gen_range(-1.5..1.5),
            rng.gen_range(-1.5..1.5),
        ))
    }

    #[test]
    fn cayley_matches_resolvent_form() {
        // Oracle: R = (I - [c]x)^-1 (I + [c]x), evaluated independently.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let c = Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let cx = Matrix3::new(0.0, -c.z, c.y, c.z, 0.0, -c.x, -c.y, c.x, 0.0);
            let oracle = (Matrix3::identity() - cx).try_inverse().unwrap()
                * (Matrix3::identity() + cx);
            let r = cayley_to_rotation(&c);
            assert_relative_eq!(r, oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn cayley_90_degrees_about_z() {
        let q = cayley_to_quaternion(&Vector3::new(0.0, 0.0, 1.0));
        assert_relative_eq!(q.angle(), std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        let v = q * Vector3::new(1.0, 0.0, 0.0);
        assert_relative_eq!(v, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn cayley_rotate_jacobian_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let eps = 1e-6;
        for _ in 0..100 {
            let c = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let v = Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let jac = cayley_rotate_jacobian(&c, &v);
            for k in 0..3 {
                let mut cp = c;
                let mut cm = c;
                cp[k] += eps;
                cm[k] -= eps;
                let fd = (cayley_to_rotation(&cp) * v - cayley_to_rotation(&cm) * v) / (2.0 * eps);
                assert_relative_eq!(jac.column(k).into_owned(), fd, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn quat_product_matrices_agree_with_products() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = random_unit_quat(&mut rng).into_inner();
            let q = random_unit_quat(&mut rng).into_inner();
            let prod = p * q;
            let via_l = quat_left_matrix(&p) * nalgebra::Vector4::new(q.w, q.i, q.j, q.k);
            let via_r = quat_right_matrix(&q) * nalgebra::Vector4::new(p.w, p.i, p.j, p.k);
            for (idx, val) in [prod.w, prod.i, prod.j, prod.k].iter().enumerate() {
                assert_relative_eq!(via_l[idx], *val, epsilon = 1e-12);
                assert_relative_eq!(via_r[idx], *val, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn quat_exp_jacobian_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let eps = 1e-7;
        for trial in 0..100 {
            let scale = if trial % 10 == 0 { 1e-9 } else { 1.0 };
            let u = Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ) * scale;
            let jac = quat_exp_jacobian(&u);
            for k in 0..3 {
                let mut up = u;
                let mut um = u;
                up[k] += eps;
                um[k] -= eps;
                let qp = UnitQuaternion::from_scaled_axis(up).into_inner();
                let qm = UnitQuaternion::from_scaled_axis(um).into_inner();
                let fd = [
                    (qp.w - qm.w) / (2.0 * eps),
                    (qp.i - qm.i) / (2.0 * eps),
                    (qp.j - qm.j) / (2.0 * eps),
                    (qp.k - qm.k) / (2.0 * eps),
                ];
                for r in 0..4 {
                    assert_relative_eq!(jac[(r, k)], fd[r], epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn stereo_disparity_round_trip() {
        let rig = StereoRig {
            cam: CameraIntrinsics {
                width: 640,
                height: 480,
                fx: 320.0,
                fy: 320.0,
                cx: 319.5,
                cy: 239.5,
            },
            baseline_m: 0.3,
        };
        // A point at 4 m projects with disparity fx*b/z in a rectified pair.
        let p = Vector3::new(0.5, -0.2, 4.0);
        let ul = rig.cam.project(&p).unwrap();
        let ur = rig.cam.project(&rig.left_to_right(&p)).unwrap();
        let d = ul.x - ur.x;
        assert_relative_eq!(d, 320.0 * 0.3 / 4.0, epsilon = 1e-12);
        assert_relative_eq!(ul.y, ur.y, epsilon = 1e-12);
        assert_relative_eq!(rig.disparity_to_inverse_depth(d), 0.25, epsilon = 1e-12);
        assert_relative_eq!(rig.inverse_depth_to_disparity(0.25), d, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn cayley_round_trip(cx in -3.0f64..3.0, cy in -3.0f64..3.0, cz in -3.0f64..3.0) {
            let c = Vector3::new(cx, cy, cz);
            let q = cayley_to_quaternion(&c);
            prop_assert!((q.norm() - 1.0).abs() < 1e-12);
            let back = quaternion_to_cayley(&q).unwrap();
            prop_assert!((back - c).norm() < 1e-9 * (1.0 + c.norm()));
            let angle = q.angle();
            prop_assert!((angle - 2.0 * c.norm().atan()).abs() < 1e-9);
        }

        #[test]
        fn pose_compose_inverse_round_trip(
            ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0,
            tx in -5.0f64..5.0, ty in -5.0f64..5.0, tz in -5.0f64..5.0,
            px in -5.0f64..5.0, py in -5.0f64..5.0, pz in -5.0f64..5.0,
        ) {
            let pose = Pose::new(
                UnitQuaternion::from_scaled_axis(Vector3::new(ax, ay, az)),
                Vector3::new(tx, ty, tz),
            );
            let p = Vector3::new(px, py, pz);
            let round = pose.inverse().transform(&pose.transform(&p));
            prop_assert!((round - p).norm() < 1e-9);
            let ident = pose.compose(&pose.inverse());
            prop_assert!(ident.translation.norm() < 1e-9);
            prop_assert!(ident.rotation.angle() < 1e-9);
            prop_assert!((pose.rotation.norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn pose_compose_matches_chained_transform(
            ax in -1.0f64..1.0, az in -1.0f64..1.0,
            bx in -1.0f64..1.0, bz in -1.0f64..1.0,
            px in -2.0f64..2.0, py in -2.0f64..2.0, pz in -2.0f64..2.0,
        ) {
            let a = Pose::new(
                UnitQuaternion::from_scaled_axis(Vector3::new(ax, 0.3, az)),
                Vector3::new(1.0, -2.0, 0.5),
            );
            let b = Pose::new(
                UnitQuaternion::from_scaled_axis(Vector3::new(bx, -0.2, bz)),
                Vector3::new(-0.4, 0.1, 2.0),
            );
            let p = Vector3::new(px, py, pz);
            let direct = a.transform(&b.transform(&p));
            let composed = a.compose(&b).transform(&p);
            prop_assert!((direct - composed).norm() < 1e-9);
        }
    }
}
