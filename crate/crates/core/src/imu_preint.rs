//! IMU preintegration between keyframes.
//!
//! Samples are held constant over their interval and integrated exactly,
//! including the body rotation within the interval. The bias Jacobians and
//! the covariance follow the same exact per-sample map, so a first-order
//! bias correction differs from re-integration only at second order.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::factor_graph::{pose_of, Factor, Key, NoiseModel, Variable};
use crate::lie::{
    exp_so3, left_jacobian_so3, log_so3, right_jacobian_inv_so3, right_jacobian_so3, skew, Pose,
    Rotation,
};

pub type Matrix9 = SMatrix<f64, 9, 9>;
pub type Vector9 = SMatrix<f64, 9, 1>;

/// Standard gravity magnitude, m/s².
pub const GRAVITY: f64 = 9.81;

/// Diagonal added to the preintegrated covariance before whitening so that
/// noise-free configurations still yield a valid noise model.
pub const COVARIANCE_FLOOR: f64 = 1e-15;

/// Sub-intervals shorter than this are skipped when clipping samples to a
/// keyframe window.
const MIN_INTERVAL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// Angular velocity in the body frame, rad/s.
    pub gyro: Vector3<f64>,
    /// Specific force in the body frame, m/s².
    pub accel: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ImuBias {
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

impl ImuBias {
    pub fn new(gyro: Vector3<f64>, accel: Vector3<f64>) -> Self {
        ImuBias { gyro, accel }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// `[gyro; accel]`.
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.gyro.x,
            self.gyro.y,
            self.gyro.z,
            self.accel.x,
            self.accel.y,
            self.accel.z,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        ImuBias {
            gyro: v.fixed_rows::<3>(0).into_owned(),
            accel: v.fixed_rows::<3>(3).into_owned(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuNoiseParams {
    /// rad/s/√Hz
    pub gyro_density: f64,
    /// m/s²/√Hz
    pub accel_density: f64,
    /// rad/s²/√Hz
    pub gyro_bias_walk: f64,
    /// m/s³/√Hz
    pub accel_bias_walk: f64,
    /// World-frame gravity, m/s².
    pub gravity: Vector3<f64>,
}

impl Default for ImuNoiseParams {
    fn default() -> Self {
        ImuNoiseParams {
            gyro_density: 1.7e-4,
            accel_density: 2e-3,
            gyro_bias_walk: 1e-5,
            accel_bias_walk: 1e-4,
            gravity: Vector3::new(0.0, 0.0, -GRAVITY),
        }
    }
}

impl ImuNoiseParams {
    pub fn validate(&self) -> Result<()> {
        let d = [
            ("gyro_density", self.gyro_density),
            ("accel_density", self.accel_density),
            ("gyro_bias_walk", self.gyro_bias_walk),
            ("accel_bias_walk", self.accel_bias_walk),
        ];
        for (name, v) in d {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::validation(name, format!("{v} is not a finite density ≥ 0")));
            }
        }
        if self.gravity.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("gravity", "not finite"));
        }
        Ok(())
    }
}

/// Base state used by the IMU residual: pose and world-frame velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NavState {
    pub pose: Pose,
    pub velocity: Vector3<f64>,
}

impl NavState {
    pub fn new(pose: Pose, velocity: Vector3<f64>) -> Self {
        NavState { pose, velocity }
    }
}

// 6-point Gauss-Legendre rule on [0, 1]
pub(crate) const GL_NODES: [f64; 6] = [
    0.033_765_242_898_423_975,
    0.169_395_306_766_867_76,
    0.380_690_406_958_401_5,
    0.619_309_593_041_598_5,
    0.830_604_693_233_132_2,
    0.966_234_757_101_576,
];
pub(crate) const GL_WEIGHTS: [f64; 6] = [
    0.085_662_246_189_584_87,
    0.180_380_786_524_069_47,
    0.233_956_967_286_345_7,
    0.233_956_967_286_345_7,
    0.180_380_786_524_069_47,
    0.085_662_246_189_584_87,
];

/// Hold integrals for one sample with rotation increment `phi`.
struct HoldIntegrals {
    /// `∫₀¹ Exp(sφ) ds`
    jl: Matrix3<f64>,
    /// `∫₀¹ (1−s)·Exp(sφ) ds`
    p: Matrix3<f64>,
    /// `∂(jl·a)/∂φ`
    g: Matrix3<f64>,
    /// `∂(p·a)/∂φ`
    h: Matrix3<f64>,
}

fn hold_integrals(phi: &Vector3<f64>, a: &Vector3<f64>) -> HoldIntegrals {
    let ah = skew(a);
    let mut p = Matrix3::zeros();
    let mut g = Matrix3::zeros();
    let mut h = Matrix3::zeros();
    for (s, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
        let sphi = phi * *s;
        let e = *exp_so3(&sphi).matrix();
        p += e * ((1.0 - s) * w);
        // d/dφ [Exp(sφ)·a] = −s·Exp(sφ)·a^·Jr(sφ)
        let d = e * ah * right_jacobian_so3(&sphi) * (-s);
        g += d * w;
        h += d * ((1.0 - s) * w);
    }
    HoldIntegrals {
        jl: left_jacobian_so3(phi),
        p,
        g,
        h,
    }
}

/// Preintegrated relative motion between two keyframes, expressed in the
/// body frame of the first.
#[derive(Clone, Debug, PartialEq)]
pub struct PreintegratedImu {
    pub bias_lin: ImuBias,
    pub delta_r: Rotation,
    pub delta_v: Vector3<f64>,
    pub delta_p: Vector3<f64>,
    pub delta_t: f64,
    /// Covariance of `[δφ; δv; δp]`.
    pub covariance: Matrix9,
    pub d_r_d_bg: Matrix3<f64>,
    pub d_v_d_bg: Matrix3<f64>,
    pub d_v_d_ba: Matrix3<f64>,
    pub d_p_d_bg: Matrix3<f64>,
    pub d_p_d_ba: Matrix3<f64>,
    gyro_density: f64,
    accel_density: f64,
}

impl PreintegratedImu {
    /// The identity element at linearization point `bias`.
    pub fn new(bias: ImuBias, noise: &ImuNoiseParams) -> Self {
        PreintegratedImu {
            bias_lin: bias,
            delta_r: Rotation::identity(),
            delta_v: Vector3::zeros(),
            delta_p: Vector3::zeros(),
            delta_t: 0.0,
            covariance: Matrix9::zeros(),
            d_r_d_bg: Matrix3::zeros(),
            d_v_d_bg: Matrix3::zeros(),
            d_v_d_ba: Matrix3::zeros(),
            d_p_d_bg: Matrix3::zeros(),
            d_p_d_ba: Matrix3::zeros(),
            gyro_density: noise.gyro_density,
            accel_density: noise.accel_density,
        }
    }

    /// Integrates one sample held constant for `dt` seconds.
    pub fn integrate(&mut self, sample: &ImuSample, dt: f64) -> Result<()> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt = {dt} is not positive")));
        }
        let w = sample.gyro - self.bias_lin.gyro;
        let a = sample.accel - self.bias_lin.accel;
        let phi = w * dt;
        let hi = hold_integrals(&phi, &a);
        let dexp = exp_so3(&phi);
        let jr = right_jacobian_so3(&phi);
        let r = *self.delta_r.matrix();
        let u = hi.jl * a;
        let pw = hi.p * a;
        let dt2 = dt * dt;
        let dt3 = dt2 * dt;

        // bias Jacobians, each from the pre-update values
        let d_r_d_bg_old = self.d_r_d_bg;
        self.d_p_d_bg += self.d_v_d_bg * dt
            - r * skew(&pw) * d_r_d_bg_old * dt2
            - r * hi.h * dt3;
        self.d_p_d_ba += self.d_v_d_ba * dt - r * hi.p * dt2;
        self.d_v_d_bg += -r * skew(&u) * d_r_d_bg_old * dt - r * hi.g * dt2;
        self.d_v_d_ba += -r * hi.jl * dt;
        self.d_r_d_bg = dexp.matrix().transpose() * d_r_d_bg_old - jr * dt;

        let mut a_mat = Matrix9::identity();
        a_mat
            .fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&dexp.matrix().transpose());
        a_mat
            .fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(-r * skew(&u) * dt));
        a_mat
            .fixed_view_mut::<3, 3>(6, 0)
            .copy_from(&(-r * skew(&pw) * dt2));
        a_mat
            .fixed_view_mut::<3, 3>(6, 3)
            .copy_from(&(Matrix3::identity() * dt));
        let mut b_g = SMatrix::<f64, 9, 3>::zeros();
        b_g.fixed_view_mut::<3, 3>(0, 0).copy_from(&(jr * dt));
        b_g.fixed_view_mut::<3, 3>(3, 0).copy_from(&(r * hi.g * dt2));
        b_g.fixed_view_mut::<3, 3>(6, 0).copy_from(&(r * hi.h * dt3));
        let mut b_a = SMatrix::<f64, 9, 3>::zeros();
        b_a.fixed_view_mut::<3, 3>(3, 0).copy_from(&(r * hi.jl * dt));
        b_a.fixed_view_mut::<3, 3>(6, 0).copy_from(&(r * hi.p * dt2));
        // discrete white noise variance is density²/dt
        let qg = self.gyro_density * self.gyro_density / dt;
        let qa = self.accel_density * self.accel_density / dt;
        let cov = a_mat * self.covariance * a_mat.transpose()
            + b_g * b_g.transpose() * qg
            + b_a * b_a.transpose() * qa;
        self.covariance = (cov + cov.transpose()) * 0.5;

        self.delta_p += self.delta_v * dt + r * pw * dt2;
        self.delta_v += r * u * dt;
        self.delta_r = (self.delta_r * dexp).renormalized();
        self.delta_t += dt;
        Ok(())
    }

    /// Integrates the part of a sample stream that falls inside `[t0, t1]`.
    ///
    /// Each sample is held until the next sample's timestamp; the last sample
    /// is held until `t1`.
    pub fn integrate_window(&mut self, samples: &[ImuSample], t0: f64, t1: f64) -> Result<()> {
        for (i, s) in samples.iter().enumerate() {
            if s.t >= t1 {
                break;
            }
            let next = samples.get(i + 1).map_or(f64::INFINITY, |n| n.t);
            let start = s.t.max(t0);
            let end = next.min(t1);
            if end - start > MIN_INTERVAL {
                self.integrate(s, end - start)?;
            }
        }
        Ok(())
    }

    /// Deltas corrected to first order for `bias − bias_lin`.
    pub fn corrected_deltas(&self, bias: &ImuBias) -> (Rotation, Vector3<f64>, Vector3<f64>) {
        let dbg = bias.gyro - self.bias_lin.gyro;
        let dba = bias.accel - self.bias_lin.accel;
        let r = self.delta_r * exp_so3(&(self.d_r_d_bg * dbg));
        let v = self.delta_v + self.d_v_d_bg * dbg + self.d_v_d_ba * dba;
        let p = self.delta_p + self.d_p_d_bg * dbg + self.d_p_d_ba * dba;
        (r, v, p)
    }

    /// `[r_R; r_v; r_p]`, zero when `j` equals [`predict`](Self::predict)`(i)`.
    pub fn residual(
        &self,
        i: &NavState,
        j: &NavState,
        bias: &ImuBias,
        gravity: &Vector3<f64>,
    ) -> Vector9 {
        let (dr, dv, dp) = self.corrected_deltas(bias);
        let dt = self.delta_t;
        let rit = i.pose.rotation.transpose();
        let r_r = log_so3(&(dr.transpose() * rit * j.pose.rotation));
        let r_v = rit.matrix() * (j.velocity - i.velocity - gravity * dt) - dv;
        let r_p = rit.matrix()
            * (j.pose.translation - i.pose.translation - i.velocity * dt - gravity * (0.5 * dt * dt))
            - dp;
        let mut out = Vector9::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&r_r);
        out.fixed_rows_mut::<3>(3).copy_from(&r_v);
        out.fixed_rows_mut::<3>(6).copy_from(&r_p);
        out
    }

    /// Jacobians of [`residual`](Self::residual) with respect to pose `i`
    /// (6), velocity `i` (3), pose `j` (6), velocity `j` (3) and bias (6).
    pub fn residual_jacobians(
        &self,
        i: &NavState,
        j: &NavState,
        bias: &ImuBias,
        gravity: &Vector3<f64>,
    ) -> [DMatrix<f64>; 5] {
        let dt = self.delta_t;
        let dbg = bias.gyro - self.bias_lin.gyro;
        let (dr, _, _) = self.corrected_deltas(bias);
        let ri = *i.pose.rotation.matrix();
        let rj = *j.pose.rotation.matrix();
        let rit = ri.transpose();
        let e = dr.transpose() * i.pose.rotation.transpose() * j.pose.rotation;
        let r_r = log_so3(&e);
        let jr_inv = right_jacobian_inv_so3(&r_r);
        let x = rit * (j.velocity - i.velocity - gravity * dt);
        let y = rit
            * (j.pose.translation - i.pose.translation - i.velocity * dt - gravity * (0.5 * dt * dt));

        let mut jpi = DMatrix::zeros(9, 6);
        jpi.view_mut((0, 0), (3, 3))
            .copy_from(&(-jr_inv * rj.transpose() * ri));
        jpi.view_mut((3, 0), (3, 3)).copy_from(&skew(&x));
        jpi.view_mut((6, 0), (3, 3)).copy_from(&skew(&y));
        jpi.view_mut((6, 3), (3, 3))
            .copy_from(&(-Matrix3::identity()));

        let mut jvi = DMatrix::zeros(9, 3);
        jvi.view_mut((3, 0), (3, 3)).copy_from(&(-rit));
        jvi.view_mut((6, 0), (3, 3)).copy_from(&(-rit * dt));

        let mut jpj = DMatrix::zeros(9, 6);
        jpj.view_mut((0, 0), (3, 3)).copy_from(&jr_inv);
        jpj.view_mut((6, 3), (3, 3)).copy_from(&(rit * rj));

        let mut jvj = DMatrix::zeros(9, 3);
        jvj.view_mut((3, 0), (3, 3)).copy_from(&rit);

        let mut jb = DMatrix::zeros(9, 6);
        let c = self.d_r_d_bg * dbg;
        jb.view_mut((0, 0), (3, 3)).copy_from(
            &(-jr_inv * e.matrix().transpose() * right_jacobian_so3(&c) * self.d_r_d_bg),
        );
        jb.view_mut((3, 0), (3, 3)).copy_from(&(-self.d_v_d_bg));
        jb.view_mut((3, 3), (3, 3)).copy_from(&(-self.d_v_d_ba));
        jb.view_mut((6, 0), (3, 3)).copy_from(&(-self.d_p_d_bg));
        jb.view_mut((6, 3), (3, 3)).copy_from(&(-self.d_p_d_ba));

        [jpi, jvi, jpj, jvj, jb]
    }

    /// State at the end of the interval implied by the corrected deltas.
    pub fn predict(&self, i: &NavState, bias: &ImuBias, gravity: &Vector3<f64>) -> NavState {
        let (dr, dv, dp) = self.corrected_deltas(bias);
        let dt = self.delta_t;
        let ri = i.pose.rotation;
        let rotation = (ri * dr).renormalized();
        let velocity = i.velocity + gravity * dt + ri.matrix() * dv;
        let translation =
            i.pose.translation + i.velocity * dt + gravity * (0.5 * dt * dt) + ri.matrix() * dp;
        NavState::new(Pose::new(rotation, translation), velocity)
    }
}

/// Relative-motion factor over `[pose_i, vel_i, pose_j, vel_j, bias]`.
pub struct ImuFactor {
    keys: [Key; 5],
    preint: PreintegratedImu,
    gravity: Vector3<f64>,
    noise: NoiseModel,
}

impl ImuFactor {
    pub fn new(
        pose_i: Key,
        vel_i: Key,
        pose_j: Key,
        vel_j: Key,
        bias: Key,
        preint: PreintegratedImu,
        gravity: Vector3<f64>,
    ) -> Result<Self> {
        let cov = preint.covariance + Matrix9::identity() * COVARIANCE_FLOOR;
        let noise = NoiseModel::from_covariance(&DMatrix::from_column_slice(9, 9, cov.as_slice()))?;
        Ok(ImuFactor {
            keys: [pose_i, vel_i, pose_j, vel_j, bias],
            preint,
            gravity,
            noise,
        })
    }

    pub fn preintegrated(&self) -> &PreintegratedImu {
        &self.preint
    }

    fn states(&self, vars: &[&Variable]) -> Result<(NavState, NavState, ImuBias)> {
        let pi = pose_of(vars, 0, self.keys[0])?;
        let vi = velocity_of(vars[1], self.keys[1])?;
        let pj = pose_of(vars, 2, self.keys[2])?;
        let vj = velocity_of(vars[3], self.keys[3])?;
        let b = bias_of(vars[4], self.keys[4])?;
        Ok((NavState::new(*pi, vi), NavState::new(*pj, vj), b))
    }
}

pub(crate) fn velocity_of(var: &Variable, key: Key) -> Result<Vector3<f64>> {
    var.as_point().copied().ok_or(Error::VariableType {
        key,
        expected: "velocity 3-vector",
    })
}

pub(crate) fn bias_of(var: &Variable, key: Key) -> Result<ImuBias> {
    var.as_vector6()
        .map(ImuBias::from_vector)
        .ok_or(Error::VariableType {
            key,
            expected: "bias 6-vector",
        })
}

impl Factor for ImuFactor {
    fn keys(&self) -> &[Key] {
        &self.keys
    }

    fn dim(&self) -> usize {
        9
    }

    fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn error(&self, vars: &[&Variable]) -> Result<DVector<f64>> {
        let (i, j, b) = self.states(vars)?;
        let r = self.preint.residual(&i, &j, &b, &self.gravity);
        Ok(DVector::from_column_slice(r.as_slice()))
    }

    fn analytic_jacobians(&self, vars: &[&Variable]) -> Result<Option<Vec<DMatrix<f64>>>> {
        let (i, j, b) = self.states(vars)?;
        Ok(Some(
            self.preint
                .residual_jacobians(&i, &j, &b, &self.gravity)
                .to_vec(),
        ))
    }

    fn name(&self) -> &'static str {
        "imu"
    }
}

/// Random-walk factor `e = b_j − b_i` for a per-keyframe bias chain.
pub struct BiasWalkFactor {
    keys: [Key; 2],
    noise: NoiseModel,
}

impl BiasWalkFactor {
    pub fn new(bias_i: Key, bias_j: Key, dt: f64, noise: &ImuNoiseParams) -> Result<Self> {
        let sg = (noise.gyro_bias_walk * noise.gyro_bias_walk * dt).sqrt();
        let sa = (noise.accel_bias_walk * noise.accel_bias_walk * dt).sqrt();
        let floor = COVARIANCE_FLOOR.sqrt();
        let noise = NoiseModel::diagonal(&[
            sg.max(floor),
            sg.max(floor),
            sg.max(floor),
            sa.max(floor),
            sa.max(floor),
            sa.max(floor),
        ])?;
        Ok(BiasWalkFactor {
            keys: [bias_i, bias_j],
            noise,
        })
    }
}

impl Factor for BiasWalkFactor {
    fn keys(&self) -> &[Key] {
        &self.keys
    }

    fn dim(&self) -> usize {
        6
    }

    fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn error(&self, vars: &[&Variable]) -> Result<DVector<f64>> {
        let bi = bias_of(vars[0], self.keys[0])?.to_vector();
        let bj = bias_of(vars[1], self.keys[1])?.to_vector();
        Ok(DVector::from_column_slice((bj - bi).as_slice()))
    }

    fn analytic_jacobians(&self, _vars: &[&Variable]) -> Result<Option<Vec<DMatrix<f64>>>> {
        Ok(Some(vec![
            -DMatrix::identity(6, 6),
            DMatrix::identity(6, 6),
        ]))
    }

    fn name(&self) -> &'static str {
        "bias_walk"
    }
}
