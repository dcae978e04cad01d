//! Synthetic proprioceptive logs with exact ground truth.
//!
//! The true base state is propagated with the same zero-order-hold
//! recursion the preintegrator uses, from ideal IMU samples chosen so the
//! velocity tracks a smooth curve. With all noise disabled the logged IMU,
//! joint and contact streams are therefore exactly consistent with the
//! ground truth. Feet rest on footholds during stance and follow cycloids
//! during swing; joint angles come from closed-form inverse kinematics.

mod curve;
mod files;
mod gait;
mod ik;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::contact::ContactSample;
use crate::error::{Error, Result};
use crate::imu_preint::{ImuBias, ImuNoiseParams, ImuSample, NavState, PreintegratedImu};
use crate::io::KeyValues;
use crate::lie::{left_jacobian_inv_so3, log_so3, Pose, Rotation};
use crate::robot_model::{JointAngles, RobotModel};

pub use curve::{BaseCurve, CurveSample, Shape};
pub use files::{read_log, write_log, LOG_FILES};
pub use gait::{cycloid, swing_pose, Gait, GaitSchedule, LegState};
pub use ik::{BipedLeg, LegIk, QuadLeg};

/// Relative tolerance when checking that rates divide durations evenly.
const GRID_TOL: f64 = 1e-9;

const RNG_IMU: u64 = 1;
const RNG_JOINTS: u64 = 2;
const RNG_CONTACTS: u64 = 3;
const RNG_BIAS: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthNoise {
    /// Densities, bias walks and gravity used to corrupt the IMU stream.
    pub imu: ImuNoiseParams,
    /// Bias at `t = 0`.
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
    /// Whether the bias follows a random walk or stays constant.
    pub bias_random_walk: bool,
    /// Standard deviation of joint encoder noise, rad.
    pub joint_sigma: f64,
    /// Probability that any one contact sample is flipped.
    pub contact_flip_prob: f64,
}

impl Default for SynthNoise {
    fn default() -> Self {
        SynthNoise {
            imu: ImuNoiseParams::default(),
            gyro_bias: Vector3::new(2e-3, -1.5e-3, 1e-3),
            accel_bias: Vector3::new(2e-2, -1.5e-2, 1e-2),
            bias_random_walk: false,
            joint_sigma: 1e-3,
            contact_flip_prob: 0.0,
        }
    }
}

impl SynthNoise {
    /// Noise-free streams with zero bias.
    pub fn zero() -> Self {
        SynthNoise {
            imu: ImuNoiseParams {
                gyro_density: 0.0,
                accel_density: 0.0,
                gyro_bias_walk: 0.0,
                accel_bias_walk: 0.0,
                ..ImuNoiseParams::default()
            },
            gyro_bias: Vector3::zeros(),
            accel_bias: Vector3::zeros(),
            bias_random_walk: false,
            joint_sigma: 0.0,
            contact_flip_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.imu.validate()?;
        if !(self.joint_sigma >= 0.0 && self.joint_sigma.is_finite()) {
            return Err(Error::validation("noise.joint_sigma", "must be ≥ 0"));
        }
        if !(0.0..=1.0).contains(&self.contact_flip_prob) {
            return Err(Error::validation("noise.contact_flip_prob", "must be within [0, 1]"));
        }
        if !(self.gyro_bias.iter().chain(self.accel_bias.iter())).all(|x| x.is_finite()) {
            return Err(Error::validation("noise.gyro_bias", "bias must be finite"));
        }
        Ok(())
    }
}

/// Everything that determines a synthetic log.
#[derive(Clone, Debug, PartialEq)]
pub struct GaitSpec {
    /// Builtin model name or URDF path.
    pub robot: String,
    pub gait: Gait,
    pub shape: Shape,
    pub duration: f64,
    /// Gait cycle length, s.
    pub period: f64,
    /// Fraction of the cycle each foot spends in stance.
    pub duty_factor: f64,
    /// Average base advance per gait cycle, m.
    pub step_length: f64,
    pub step_height: f64,
    pub base_height: f64,
    pub imu_rate: f64,
    /// Ground-truth output rate.
    pub keyframe_rate: f64,
    pub seed: u64,
    pub noise: SynthNoise,
}

impl GaitSpec {
    pub fn quadruped_trot(shape: Shape) -> Self {
        GaitSpec {
            robot: "a1".into(),
            gait: Gait::Trot,
            shape,
            duration: 10.0,
            period: 0.5,
            duty_factor: 0.5,
            step_length: 0.15,
            step_height: 0.06,
            base_height: 0.28,
            imu_rate: 200.0,
            keyframe_rate: 50.0,
            seed: 0,
            noise: SynthNoise::default(),
        }
    }

    pub fn biped_walk(shape: Shape) -> Self {
        GaitSpec {
            robot: "humanoid".into(),
            gait: Gait::Biped,
            period: 1.0,
            duty_factor: 0.6,
            step_length: 0.2,
            step_height: 0.05,
            base_height: 0.66,
            keyframe_rate: 100.0,
            ..Self::quadruped_trot(shape)
        }
    }

    /// Defaults for a builtin robot name, quadruped otherwise.
    pub fn default_for(robot: &str) -> Self {
        let mut spec = if robot == "humanoid" {
            Self::biped_walk(Shape::Straight)
        } else {
            Self::quadruped_trot(Shape::Straight)
        };
        spec.robot = robot.to_string();
        spec
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, noise: SynthNoise) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    pub fn path_length(&self) -> f64 {
        self.step_length * self.duration / self.period
    }

    pub fn stance_duration(&self) -> f64 {
        self.duty_factor * self.period
    }

    pub fn swing_duration(&self) -> f64 {
        (1.0 - self.duty_factor) * self.period
    }

    /// IMU samples in the log; joint and contact streams have one more.
    pub fn sample_count(&self) -> usize {
        (self.duration * self.imu_rate).round() as usize
    }

    /// IMU samples per keyframe.
    pub fn keyframe_stride(&self) -> usize {
        (self.imu_rate / self.keyframe_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(field, format!("{v} is not > 0")))
            }
        };
        positive("duration", self.duration)?;
        positive("period", self.period)?;
        positive("base_height", self.base_height)?;
        positive("imu_rate", self.imu_rate)?;
        positive("keyframe_rate", self.keyframe_rate)?;
        if !(self.duty_factor > 0.0 && self.duty_factor < 1.0) {
            return Err(Error::validation(
                "duty_factor",
                format!("{} is not within (0, 1)", self.duty_factor),
            ));
        }
        for (field, v) in [("step_length", self.step_length), ("step_height", self.step_height)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(field, format!("{v} is not ≥ 0")));
            }
        }
        let samples = self.duration * self.imu_rate;
        if (samples - samples.round()).abs() > GRID_TOL * samples.max(1.0) || samples < 1.0 {
            return Err(Error::validation(
                "duration",
                "must be a positive whole number of IMU periods",
            ));
        }
        let stride = self.imu_rate / self.keyframe_rate;
        if (stride - stride.round()).abs() > GRID_TOL * stride || stride < 1.0 {
            return Err(Error::validation(
                "keyframe_rate",
                "must divide the IMU rate evenly",
            ));
        }
        if self.sample_count() % self.keyframe_stride() != 0 {
            return Err(Error::validation(
                "duration",
                "must be a whole number of keyframe periods",
            ));
        }
        self.shape.validate()?;
        self.noise.validate()
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new("gait spec");
        kv.set("robot", &self.robot);
        kv.set("gait", self.gait);
        kv.set("shape", self.shape);
        if let Shape::Turn { radius } = self.shape {
            kv.set("turn_radius", radius);
        }
        if let Shape::ZigZag { segments, angle } = self.shape {
            kv.set("zigzag_segments", segments);
            kv.set("zigzag_angle_deg", angle.to_degrees());
        }
        kv.set("duration", self.duration);
        kv.set("period", self.period);
        kv.set("duty_factor", self.duty_factor);
        kv.set("step_length", self.step_length);
        kv.set("step_height", self.step_height);
        kv.set("base_height", self.base_height);
        kv.set("imu_rate", self.imu_rate);
        kv.set("keyframe_rate", self.keyframe_rate);
        kv.set("seed", self.seed);
        let n = &self.noise;
        let v3 = |v: &Vector3<f64>| format!("{} {} {}", v.x, v.y, v.z);
        kv.set("noise.gyro_density", n.imu.gyro_density);
        kv.set("noise.accel_density", n.imu.accel_density);
        kv.set("noise.gyro_bias_walk", n.imu.gyro_bias_walk);
        kv.set("noise.accel_bias_walk", n.imu.accel_bias_walk);
        kv.set("noise.gravity", v3(&n.imu.gravity));
        kv.set("noise.gyro_bias", v3(&n.gyro_bias));
        kv.set("noise.accel_bias", v3(&n.accel_bias));
        kv.set("noise.bias_random_walk", n.bias_random_walk);
        kv.set("noise.joint_sigma", n.joint_sigma);
        kv.set("noise.contact_flip_prob", n.contact_flip_prob);
        kv
    }

    /// Reads a spec, starting from the defaults for its `robot`. Keys under
    /// `log.` are ignored; any other unknown key is rejected.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        const KNOWN: [&str; 25] = [
            "robot",
            "gait",
            "shape",
            "turn_radius",
            "zigzag_segments",
            "zigzag_angle_deg",
            "duration",
            "period",
            "duty_factor",
            "step_length",
            "step_height",
            "base_height",
            "imu_rate",
            "keyframe_rate",
            "seed",
            "noise.gyro_density",
            "noise.accel_density",
            "noise.gyro_bias_walk",
            "noise.accel_bias_walk",
            "noise.gravity",
            "noise.gyro_bias",
            "noise.accel_bias",
            "noise.bias_random_walk",
            "noise.joint_sigma",
            "noise.contact_flip_prob",
        ];
        if let Some(k) = kv
            .keys()
            .find(|k| !k.starts_with("log.") && !KNOWN.contains(k))
        {
            return Err(Error::validation(k, "unknown key"));
        }
        let robot: String = kv.get_or("robot", "a1".to_string())?;
        let mut s = GaitSpec::default_for(&robot);
        if let Some(g) = kv.get_str("gait") {
            s.gait = g.parse()?;
        }
        if let Some(sh) = kv.get_str("shape") {
            s.shape = sh.parse()?;
        }
        match &mut s.shape {
            Shape::Turn { radius } => *radius = kv.get_or("turn_radius", *radius)?,
            Shape::ZigZag { segments, angle } => {
                *segments = kv.get_or("zigzag_segments", *segments)?;
                *angle = kv
                    .get_or("zigzag_angle_deg", angle.to_degrees())?
                    .to_radians();
            }
            _ => {}
        }
        s.duration = kv.get_or("duration", s.duration)?;
        s.period = kv.get_or("period", s.period)?;
        s.duty_factor = kv.get_or("duty_factor", s.duty_factor)?;
        s.step_length = kv.get_or("step_length", s.step_length)?;
        s.step_height = kv.get_or("step_height", s.step_height)?;
        s.base_height = kv.get_or("base_height", s.base_height)?;
        s.imu_rate = kv.get_or("imu_rate", s.imu_rate)?;
        s.keyframe_rate = kv.get_or("keyframe_rate", s.keyframe_rate)?;
        s.seed = kv.get_or("seed", s.seed)?;
        let n = &mut s.noise;
        n.imu.gyro_density = kv.get_or("noise.gyro_density", n.imu.gyro_density)?;
        n.imu.accel_density = kv.get_or("noise.accel_density", n.imu.accel_density)?;
        n.imu.gyro_bias_walk = kv.get_or("noise.gyro_bias_walk", n.imu.gyro_bias_walk)?;
        n.imu.accel_bias_walk = kv.get_or("noise.accel_bias_walk", n.imu.accel_bias_walk)?;
        n.imu.gravity = kv.get_vec3("noise.gravity")?.unwrap_or(n.imu.gravity);
        n.gyro_bias = kv.get_vec3("noise.gyro_bias")?.unwrap_or(n.gyro_bias);
        n.accel_bias = kv.get_vec3("noise.accel_bias")?.unwrap_or(n.accel_bias);
        n.bias_random_walk = kv.get_or("noise.bias_random_walk", n.bias_random_walk)?;
        n.joint_sigma = kv.get_or("noise.joint_sigma", n.joint_sigma)?;
        n.contact_flip_prob = kv.get_or("noise.contact_flip_prob", n.contact_flip_prob)?;
        s.validate()?;
        Ok(s)
    }
}

/// True base state at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthState {
    pub t: f64,
    pub pose: Pose,
    pub velocity: Vector3<f64>,
}

/// In-memory only: full-rate truth that the file format does not carry.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTruth {
    /// One per joint/contact sample.
    pub base: Vec<NavState>,
    /// `feet[k][leg]`, world frame.
    pub feet: Vec<Vec<Pose>>,
    /// Exact joint angles before encoder noise.
    pub joints: Vec<JointAngles>,
    /// Noise-free IMU samples without bias.
    pub imu: Vec<ImuSample>,
    /// Bias in effect at each IMU sample.
    pub bias: Vec<ImuBias>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLog {
    pub spec: GaitSpec,
    pub joint_names: Vec<String>,
    pub imu: Vec<ImuSample>,
    pub joints: Vec<JointAngles>,
    pub contacts: Vec<ContactSample>,
    /// At the keyframe rate, from `t = 0` to `t = duration`.
    pub ground_truth: Vec<TruthState>,
    pub initial_velocity: Vector3<f64>,
    /// Bias at `t = 0`.
    pub initial_bias: ImuBias,
    pub dense: Option<DenseTruth>,
}

impl TrajectoryLog {
    pub fn duration(&self) -> f64 {
        self.spec.duration
    }

    pub fn ground_truth_poses(&self) -> Vec<crate::io::TimedPose> {
        self.ground_truth
            .iter()
            .map(|s| crate::io::TimedPose { t: s.t, pose: s.pose })
            .collect()
    }
}

fn gaussian3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Foot pose resting under the nominal foot position of `ik` for a base at
/// `base`, on the ground plane `z = 0` and aligned with the base yaw.
fn foothold(base: &Pose, ik: &LegIk) -> Pose {
    let yaw = base.rotation.yaw();
    let nom = ik.nominal_foot();
    let p = base.translation + Rotation::rot_z(yaw) * Vector3::new(nom.x, nom.y, 0.0);
    Pose::from_yaw_translation(yaw, Vector3::new(p.x, p.y, 0.0))
}

/// Synthesises a log for `spec` on `model`.
pub fn generate(spec: &GaitSpec, model: &RobotModel) -> Result<TrajectoryLog> {
    spec.validate()?;
    let legs = model.leg_count();
    let schedule = GaitSchedule::new(spec.gait, legs, spec.period, spec.duty_factor)?;
    let iks: Vec<LegIk> = (0..legs)
        .map(|i| LegIk::from_model(model, i))
        .collect::<Result<_>>()?;
    let curve = BaseCurve::new(spec.shape, spec.path_length(), spec.duration, spec.base_height)?;
    let n = spec.sample_count();
    let times: Vec<f64> = (0..=n).map(|k| k as f64 / spec.imu_rate).collect();
    let noise = &spec.noise;
    let gravity = noise.imu.gravity;

    // base truth through the preintegration recursion
    let c0 = curve.eval(0.0);
    let mut base = Vec::with_capacity(n + 1);
    base.push(NavState::new(
        Pose::from_yaw_translation(c0.yaw, c0.position),
        c0.velocity,
    ));
    let mut ideal = Vec::with_capacity(n);
    for k in 0..n {
        let x = base[k];
        let h = times[k + 1] - times[k];
        let next = curve.eval(times[k + 1]);
        let rt = x.pose.rotation.transpose();
        let phi = log_so3(&(rt * Rotation::rot_z(next.yaw)));
        let dv = rt * (next.velocity - x.velocity - gravity * h);
        let sample = ImuSample {
            t: times[k],
            gyro: phi / h,
            accel: left_jacobian_inv_so3(&phi) * dv / h,
        };
        let mut pre = PreintegratedImu::new(ImuBias::zero(), &noise.imu);
        pre.integrate(&sample, h)?;
        base.push(pre.predict(&x, &ImuBias::zero(), &gravity));
        ideal.push(sample);
    }

    // feet and joints
    let hold = |leg: usize, window: i64| {
        let tm = schedule.mid_stance(leg, window).clamp(0.0, spec.duration);
        let k = ((tm * spec.imu_rate).round() as usize).min(n);
        foothold(&base[k].pose, &iks[leg])
    };
    let joint_names: Vec<String> = model.joint_names().iter().map(|s| s.to_string()).collect();
    let mut feet = Vec::with_capacity(n + 1);
    let mut exact = Vec::with_capacity(n + 1);
    let mut contacts = Vec::with_capacity(n + 1);
    for (k, &t) in times.iter().enumerate() {
        let mut angles = JointAngles::new(t);
        let mut world_feet = Vec::with_capacity(legs);
        let mut flags = Vec::with_capacity(legs);
        for leg in 0..legs {
            let state = schedule.state(leg, t);
            let target = match state {
                LegState::Stance { window } => hold(leg, window),
                LegState::Swing { from, u } => {
                    swing_pose(&hold(leg, from), &hold(leg, from + 1), u, spec.step_height)
                }
            };
            let rel = base[k].pose.inverse() * target;
            let q = iks[leg]
                .solve(&rel)
                .ok_or(Error::Unreachable { leg, t })?;
            let chain = &model.legs[leg];
            for (j, qj) in chain.joints.iter().zip(&q) {
                angles.insert(j.name.clone(), *qj);
            }
            world_feet.push(base[k].pose * chain.forward_kinematics(&q));
            flags.push(matches!(state, LegState::Stance { .. }));
        }
        feet.push(world_feet);
        exact.push(angles);
        contacts.push(ContactSample { t, flags });
    }

    // sensor corruption
    let mut rng_imu = rng_stream(spec.seed, RNG_IMU);
    let mut rng_bias = rng_stream(spec.seed, RNG_BIAS);
    let mut bias = ImuBias::new(noise.gyro_bias, noise.accel_bias);
    let initial_bias = bias;
    let mut biases = Vec::with_capacity(n);
    let mut imu = Vec::with_capacity(n);
    for (k, s) in ideal.iter().enumerate() {
        let h = times[k + 1] - times[k];
        let sg = noise.imu.gyro_density / h.sqrt();
        let sa = noise.imu.accel_density / h.sqrt();
        imu.push(ImuSample {
            t: s.t,
            gyro: s.gyro + bias.gyro + gaussian3(&mut rng_imu) * sg,
            accel: s.accel + bias.accel + gaussian3(&mut rng_imu) * sa,
        });
        biases.push(bias);
        if noise.bias_random_walk {
            bias.gyro += gaussian3(&mut rng_bias) * (noise.imu.gyro_bias_walk * h.sqrt());
            bias.accel += gaussian3(&mut rng_bias) * (noise.imu.accel_bias_walk * h.sqrt());
        }
    }
    let mut rng_joints = rng_stream(spec.seed, RNG_JOINTS);
    let joints: Vec<JointAngles> = exact
        .iter()
        .map(|a| {
            let mut noisy = JointAngles::new(a.t);
            for (name, q) in &a.values {
                let e: f64 = rng_joints.sample(StandardNormal);
                noisy.insert(name.clone(), q + noise.joint_sigma * e);
            }
            noisy
        })
        .collect();
    if noise.contact_flip_prob > 0.0 {
        let mut rng_c = rng_stream(spec.seed, RNG_CONTACTS);
        for c in &mut contacts {
            for f in &mut c.flags {
                if rng_c.random_bool(noise.contact_flip_prob) {
                    *f = !*f;
                }
            }
        }
    }

    let stride = spec.keyframe_stride();
    let ground_truth = (0..=n)
        .step_by(stride)
        .map(|k| TruthState {
            t: times[k],
            pose: base[k].pose,
            velocity: base[k].velocity,
        })
        .collect();
    Ok(TrajectoryLog {
        spec: spec.clone(),
        joint_names,
        imu,
        joints,
        contacts,
        ground_truth,
        initial_velocity: base[0].velocity,
        initial_bias,
        dense: Some(DenseTruth {
            base,
            feet,
            joints: exact,
            imu: ideal,
            bias: biases,
        }),
    })
}
