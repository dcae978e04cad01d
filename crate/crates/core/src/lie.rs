//! SO(3) and SE(3) groups with their exponential/logarithm maps and Jacobians.
//!
//! Tangent vectors of SE(3) are ordered `[angular; linear]`. Perturbations
//! follow the right convention, `X ⊕ δ = X · Exp(δ)`, except for
//! [`Pose::retract`], which uses the decoupled form `(R·Exp(δφ), p + R·δp)`
//! that the optimizer works in.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Matrix6, Rotation3, UnitQuaternion, Vector3, Vector6};

/// Below this rotation angle (rad) the maps switch to series expansions.
pub const SMALL_ANGLE: f64 = 1e-8;

/// The 3×3 skew-symmetric (hat) matrix of `v`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`]; reads the off-diagonal entries of the antisymmetric part.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// A 3D rotation stored as an orthonormal matrix with determinant +1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Wraps a matrix without checking orthonormality.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>) -> Self {
        Rotation(q.to_rotation_matrix().into_inner())
    }

    /// Rotation about the x axis.
    pub fn rot_x(angle: f64) -> Self {
        exp_so3(&Vector3::new(angle, 0.0, 0.0))
    }

    /// Rotation about the y axis.
    pub fn rot_y(angle: f64) -> Self {
        exp_so3(&Vector3::new(0.0, angle, 0.0))
    }

    /// Rotation about the z axis.
    pub fn rot_z(angle: f64) -> Self {
        exp_so3(&Vector3::new(0.0, 0.0, angle))
    }

    /// Fixed-axis roll/pitch/yaw as used by URDF: `Rz(yaw)·Ry(pitch)·Rx(roll)`.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::rot_z(yaw) * Self::rot_y(pitch) * Self::rot_x(roll)
    }

    /// Roll/pitch/yaw angles such that [`Rotation::from_rpy`] reproduces `self`.
    pub fn to_rpy(&self) -> Vector3<f64> {
        let m = &self.0;
        let pitch = (-m[(2, 0)]).atan2((m[(0, 0)].powi(2) + m[(1, 0)].powi(2)).sqrt());
        let roll = m[(2, 1)].atan2(m[(2, 2)]);
        let yaw = m[(1, 0)].atan2(m[(0, 0)]);
        Vector3::new(roll, pitch, yaw)
    }

    /// Heading of the rotated x axis projected on the world xy plane.
    pub fn yaw(&self) -> f64 {
        self.0[(1, 0)].atan2(self.0[(0, 0)])
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn log(&self) -> Vector3<f64> {
        log_so3(self)
    }

    /// Nearest unit quaternion; the conversion alone does not normalise
    /// when the matrix has drifted from orthonormal.
    pub fn to_quaternion(&self) -> UnitQuaternion<f64> {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.0));
        UnitQuaternion::new_normalize(q.into_inner())
    }

    /// Projects back onto SO(3) through a normalized quaternion.
    pub fn renormalized(&self) -> Self {
        Self::from_quaternion(&self.to_quaternion())
    }

    /// Largest deviation of `R·Rᵀ` from identity, used as a drift measure.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0 * self.0.transpose() - Matrix3::identity()).abs().max()
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for Rotation {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

impl Mul<&Vector3<f64>> for &Rotation {
    type Output = Vector3<f64>;
    fn mul(self, rhs: &Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// Rodrigues' formula.
pub fn exp_so3(omega: &Vector3<f64>) -> Rotation {
    let theta = omega.norm();
    let w = skew(omega);
    if theta < SMALL_ANGLE {
        return Rotation(Matrix3::identity() + w + 0.5 * w * w);
    }
    let half = 0.5 * theta;
    let a = theta.sin() / theta;
    let b = 2.0 * (half.sin() / theta).powi(2);
    Rotation(Matrix3::identity() + a * w + b * w * w)
}

/// Logarithm through the quaternion, which stays well conditioned at both
/// zero and π.
pub fn log_so3(r: &Rotation) -> Vector3<f64> {
    let q = r.to_quaternion();
    let (mut w, mut v) = (q.w, q.imag());
    if w < 0.0 {
        w = -w;
        v = -v;
    }
    let n = v.norm();
    if n < 0.5 * SMALL_ANGLE {
        // 2·atan2(n, w)/n ≈ 2/w·(1 − n²/(3w²))
        return v * (2.0 / w) * (1.0 - n * n / (3.0 * w * w));
    }
    let theta = 2.0 * n.atan2(w);
    v * (theta / n)
}

/// Coefficients `(1−cosθ)/θ²` and `(θ−sinθ)/θ³` shared by the SO(3) Jacobians.
fn jacobian_coeffs(theta: f64) -> (f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        return (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0);
    }
    let half = 0.5 * theta;
    let a = 2.0 * (half.sin() / theta).powi(2);
    let b = (theta - theta.sin()) / (theta * theta * theta);
    (a, b)
}

/// Right Jacobian: `Exp(ω+δ) ≈ Exp(ω)·Exp(Jr(ω)·δ)`.
pub fn right_jacobian_so3(omega: &Vector3<f64>) -> Matrix3<f64> {
    let (a, b) = jacobian_coeffs(omega.norm());
    let w = skew(omega);
    Matrix3::identity() - a * w + b * w * w
}

/// Left Jacobian, `Jl(ω) = Jr(−ω)`.
pub fn left_jacobian_so3(omega: &Vector3<f64>) -> Matrix3<f64> {
    right_jacobian_so3(&-omega)
}

fn inverse_jacobian_coeff(theta: f64) -> f64 {
    if theta < SMALL_ANGLE {
        return 1.0 / 12.0 + theta * theta / 720.0;
    }
    let half = 0.5 * theta;
    (1.0 - half * half.cos() / half.sin()) / (theta * theta)
}

pub fn right_jacobian_inv_so3(omega: &Vector3<f64>) -> Matrix3<f64> {
    let c = inverse_jacobian_coeff(omega.norm());
    let w = skew(omega);
    Matrix3::identity() + 0.5 * w + c * w * w
}

pub fn left_jacobian_inv_so3(omega: &Vector3<f64>) -> Matrix3<f64> {
    right_jacobian_inv_so3(&-omega)
}

/// An element of se(3), ordered `[angular; linear]`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Twist(pub Vector6<f64>);

impl Twist {
    pub fn new(angular: Vector3<f64>, linear: Vector3<f64>) -> Self {
        Twist(Vector6::new(
            angular.x, angular.y, angular.z, linear.x, linear.y, linear.z,
        ))
    }

    pub fn zero() -> Self {
        Twist(Vector6::zeros())
    }

    pub fn angular(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn linear(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn as_vector(&self) -> &Vector6<f64> {
        &self.0
    }

    pub fn scale(&self, s: f64) -> Twist {
        Twist(self.0 * s)
    }
}

/// A rigid transform in SE(3).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Pose::new(Rotation::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Pose::new(Rotation::identity(), t)
    }

    pub fn from_rotation(r: Rotation) -> Self {
        Pose::new(r, Vector3::zeros())
    }

    /// Planar pose: yaw about world z plus a 3D translation.
    pub fn from_yaw_translation(yaw: f64, t: Vector3<f64>) -> Self {
        Pose::new(Rotation::rot_z(yaw), t)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Pose::new(rt, -(rt.matrix() * self.translation))
    }

    /// `self⁻¹ · other`.
    pub fn between(&self, other: &Pose) -> Pose {
        self.inverse() * *other
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.matrix() * p + self.translation
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Adjoint for `[angular; linear]` twists: `T·Exp(ξ)·T⁻¹ = Exp(Ad_T·ξ)`.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let r = self.rotation.matrix();
        let mut ad = Matrix6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
        ad.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(skew(&self.translation) * r));
        ad
    }

    pub fn log(&self) -> Twist {
        log_se3(self)
    }

    /// Decoupled retraction `(R·Exp(δφ), p + R·δp)` with `δ = [δφ; δp]`.
    pub fn retract(&self, delta: &Vector6<f64>) -> Pose {
        let dphi = delta.fixed_rows::<3>(0).into_owned();
        let dp = delta.fixed_rows::<3>(3).into_owned();
        Pose::new(
            (self.rotation * exp_so3(&dphi)).renormalized(),
            self.translation + self.rotation.matrix() * dp,
        )
    }

    /// Inverse of [`Pose::retract`]: `[Log(Rᵀ·R'); Rᵀ·(p' − p)]`.
    pub fn local(&self, other: &Pose) -> Vector6<f64> {
        let rt = self.rotation.transpose();
        let dphi = log_so3(&(rt * other.rotation));
        let dp = rt.matrix() * (other.translation - self.translation);
        Vector6::new(dphi.x, dphi.y, dphi.z, dp.x, dp.y, dp.z)
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        Pose::new(
            self.rotation * rhs.rotation,
            self.rotation.matrix() * rhs.translation + self.translation,
        )
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.translation;
        let rpy = self.rotation.to_rpy();
        write!(
            f,
            "Pose(t=[{:.4}, {:.4}, {:.4}], rpy=[{:.4}, {:.4}, {:.4}])",
            t.x, t.y, t.z, rpy.x, rpy.y, rpy.z
        )
    }
}

pub fn exp_se3(xi: &Twist) -> Pose {
    let w = xi.angular();
    let v = xi.linear();
    Pose::new(exp_so3(&w), left_jacobian_so3(&w) * v)
}

pub fn log_se3(pose: &Pose) -> Twist {
    let w = log_so3(&pose.rotation);
    let v = left_jacobian_inv_so3(&w) * pose.translation;
    Twist::new(w, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn series_exp(omega: &Vector3<f64>, terms: usize) -> Matrix3<f64> {
        let a = skew(omega);
        let mut sum = Matrix3::identity();
        let mut term = Matrix3::identity();
        for n in 1..=terms {
            term = term * a / n as f64;
            sum += term;
        }
        sum
    }

    fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
        Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ) * scale
    }

    #[test]
    fn exp_zero_is_identity() {
        assert_eq!(exp_so3(&Vector3::zeros()), Rotation::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = exp_so3(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        assert_relative_eq!(r * Vector3::x(), Vector3::y(), epsilon = 1e-15);
        assert_relative_eq!(r * Vector3::y(), -Vector3::x(), epsilon = 1e-15);
    }

    #[test]
    fn exp_matches_power_series() {
        let w = Vector3::new(0.1, 0.2, 0.3);
        let oracle = series_exp(&w, 30);
        assert!((exp_so3(&w).matrix() - oracle).abs().max() < 1e-12);
    }

    #[test]
    fn log_identity_and_round_trip() {
        assert_eq!(log_so3(&Rotation::identity()), Vector3::zeros());
        let w = Vector3::new(0.3, -0.1, 0.2);
        assert_relative_eq!(log_so3(&exp_so3(&w)), w, epsilon = 1e-10);
    }

    #[test]
    fn log_near_pi() {
        let angle = PI - 1e-6;
        let r = exp_so3(&Vector3::new(angle, 0.0, 0.0));
        let w = log_so3(&r);
        assert!((w.norm() - angle).abs() < 1e-6);
        assert_relative_eq!(w.normalize(), Vector3::x(), epsilon = 1e-6);
        // exactly π stays finite
        let half_turn = exp_so3(&Vector3::new(0.0, PI, 0.0));
        let w = log_so3(&half_turn);
        assert!((w.norm() - PI).abs() < 1e-9);
        assert_relative_eq!(w.abs().normalize(), Vector3::y(), epsilon = 1e-9);
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        let w = Vector3::new(3e-9, -2e-9, 1e-9);
        let r = exp_so3(&w);
        assert_relative_eq!(log_so3(&r), w, epsilon = 1e-20);
        let w2 = Vector3::new(3e-8, -2e-8, 1e-8);
        assert_relative_eq!(log_so3(&exp_so3(&w2)), w2, epsilon = 1e-18);
    }

    #[test]
    fn se3_basic_cases() {
        assert_eq!(exp_se3(&Twist::zero()), Pose::identity());
        let p = exp_se3(&Twist::new(Vector3::zeros(), Vector3::new(1.0, 2.0, 3.0)));
        assert_eq!(p.rotation, Rotation::identity());
        assert_relative_eq!(p.translation, Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn se3_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let axis = random_vec(&mut rng, 1.0).normalize();
            let xi = Twist::new(axis * 0.7, random_vec(&mut rng, 2.0));
            let back = log_se3(&exp_se3(&xi));
            assert!((back.0 - xi.0).abs().max() < 1e-10);
        }
    }

    #[test]
    fn right_jacobian_identity_at_zero() {
        assert_eq!(right_jacobian_so3(&Vector3::zeros()), Matrix3::identity());
    }

    #[test]
    fn right_jacobian_finite_difference() {
        let w = Vector3::new(0.2, 0.1, -0.3);
        let jr = right_jacobian_so3(&w);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let d = random_vec(&mut rng, 1.0).normalize() * 1e-4;
            let lhs = log_so3(&(exp_so3(&w).inverse() * exp_so3(&(w + d))));
            assert!((lhs - jr * d).norm() <= 1e-6);
        }
    }

    #[test]
    fn right_jacobian_closed_form_quarter_turn() {
        let theta = FRAC_PI_2;
        let w = Vector3::new(theta, 0.0, 0.0);
        let a = (1.0 - theta.cos()) / (theta * theta);
        let b = (theta - theta.sin()) / (theta * theta * theta);
        let k = skew(&w);
        let oracle = Matrix3::identity() - a * k + b * k * k;
        assert!((right_jacobian_so3(&w) - oracle).abs().max() < 1e-12);
    }

    #[test]
    fn inverse_jacobians_invert() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let w = random_vec(&mut rng, 1.5);
            let p = right_jacobian_so3(&w) * right_jacobian_inv_so3(&w);
            assert!((p - Matrix3::identity()).abs().max() < 1e-12);
            let p = left_jacobian_so3(&w) * left_jacobian_inv_so3(&w);
            assert!((p - Matrix3::identity()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn same_axis_composition_doubles_log() {
        let w = Vector3::new(0.1, -0.4, 0.25);
        let r = exp_so3(&w) * exp_so3(&w);
        assert_relative_eq!(log_so3(&r), 2.0 * w, epsilon = 1e-12);
    }

    #[test]
    fn adjoint_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = exp_se3(&Twist::new(random_vec(&mut rng, 1.0), random_vec(&mut rng, 1.0)));
        let xi = Twist::new(random_vec(&mut rng, 0.5), random_vec(&mut rng, 0.5));
        let lhs = t * exp_se3(&xi) * t.inverse();
        let rhs = exp_se3(&Twist(t.adjoint() * xi.0));
        assert!((lhs.matrix() - rhs.matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn pose_inverse_and_associativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mk = |rng: &mut ChaCha8Rng| {
            exp_se3(&Twist::new(random_vec(rng, 1.0), random_vec(rng, 3.0)))
        };
        let (a, b, c) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let id = (a * a.inverse()).matrix() - Matrix4::identity();
        assert!(id.abs().max() < 1e-9);
        let lhs = ((a * b) * c).matrix();
        let rhs = (a * (b * c)).matrix();
        assert!((lhs - rhs).abs().max() < 1e-9);
    }

    #[test]
    fn retract_local_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = exp_se3(&Twist::new(random_vec(&mut rng, 1.0), random_vec(&mut rng, 3.0)));
        let d = Vector6::new(0.1, -0.2, 0.05, 0.3, -0.1, 0.2);
        assert!((x.local(&x.retract(&d)) - d).abs().max() < 1e-12);
    }

    #[test]
    fn rpy_round_trip() {
        let r = Rotation::from_rpy(0.1, -0.3, 2.0);
        let rpy = r.to_rpy();
        assert_relative_eq!(rpy, Vector3::new(0.1, -0.3, 2.0), epsilon = 1e-12);
        assert!((r.yaw() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn renormalization_bounds_drift() {
        let step = exp_so3(&Vector3::new(1e-3, 2e-3, -1.5e-3));
        let mut r = Rotation::identity();
        for i in 0..1_000_000 {
            r = r * step;
            if i % 1000 == 999 {
                r = r.renormalized();
            }
        }
        assert!(r.orthonormality_error() < 1e-12);
        assert!((r.matrix().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn renormalization_removes_scale_drift() {
        let r = Rotation::rot_z(1.9);
        let mut m = *r.matrix();
        m[(2, 2)] *= 1.0 - 2e-12;
        m.column_mut(0).scale_mut(1.0 + 3e-12);
        let fixed = Rotation::from_matrix_unchecked(m).renormalized();
        assert!(fixed.orthonormality_error() < 1e-15);
        assert!(log_so3(&(fixed.transpose() * r)).norm() < 1e-11);
    }

    #[test]
    fn long_products_stay_orthonormal() {
        let step = exp_so3(&Vector3::new(1e-3, -4e-4, 1.1e-3));
        let mut r = Rotation::identity();
        for _ in 0..100_000 {
            r = (r * step).renormalized();
        }
        assert!(r.orthonormality_error() < 1e-14);
    }
}
