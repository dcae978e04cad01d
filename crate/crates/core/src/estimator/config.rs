use std::fmt;
use std::str::FromStr;

use crate::contact::SegmentConfig;
use crate::error::{Error, Result};
use crate::factor_graph::LmConfig;
use crate::imu_preint::{ImuBias, ImuNoiseParams};
use crate::io::KeyValues;
use crate::robot_model::RobotModel;

use super::PriorSigmas;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// One link-pose variable and one FK factor per joint.
    Proposed,
    /// One lumped base-to-foot FK factor per leg.
    Baseline,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Proposed => "proposed",
            Mode::Baseline => "baseline",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Mode::Proposed),
            "baseline" => Ok(Mode::Baseline),
            _ => Err(Error::validation("mode", format!("`{s}` is not proposed|baseline"))),
        }
    }
}

/// Noise model of the lumped base-to-foot factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LumpedNoise {
    Isotropic { sigma_rot: f64, sigma_trans: f64 },
    /// Per-joint noise propagated through the chain at the measured angles.
    ChainComposed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub mode: Mode,
    pub keyframe_rate: f64,
    pub imu: ImuNoiseParams,
    pub fk_sigma_rot: f64,
    pub fk_sigma_trans: f64,
    pub lumped: LumpedNoise,
    pub contact_sigma: f64,
    /// Flat feet only.
    pub contact_sigma_rot: f64,
    pub prior: PriorSigmas,
    pub prior_bias: ImuBias,
    pub segment: SegmentConfig,
    /// Per-keyframe biases linked by random-walk factors instead of one
    /// shared bias.
    pub bias_chain: bool,
    /// Length in seconds of the first optimization stage; each later stage
    /// doubles it. Zero optimizes the full graph at once.
    pub horizon: f64,
    pub lm: LmConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            mode: Mode::Proposed,
            keyframe_rate: 50.0,
            imu: ImuNoiseParams::default(),
            fk_sigma_rot: 0.002,
            fk_sigma_trans: 0.001,
            lumped: LumpedNoise::Isotropic {
                sigma_rot: 0.004,
                sigma_trans: 0.003,
            },
            contact_sigma: 0.01,
            contact_sigma_rot: 0.05,
            prior: PriorSigmas::default(),
            prior_bias: ImuBias::zero(),
            segment: SegmentConfig::default(),
            bias_chain: false,
            horizon: 1.0,
            lm: LmConfig::default(),
        }
    }
}

const KNOWN: [&str; 28] = [
    "mode",
    "keyframe_rate",
    "imu.gyro_density",
    "imu.accel_density",
    "imu.gyro_bias_walk",
    "imu.accel_bias_walk",
    "imu.gravity",
    "fk.sigma_rot",
    "fk.sigma_trans",
    "baseline.noise",
    "baseline.sigma_rot",
    "baseline.sigma_trans",
    "contact.sigma",
    "contact.sigma_rot",
    "contact.debounce_on",
    "contact.debounce_off",
    "contact.min_phase_keyframes",
    "prior.pose_sigma",
    "prior.velocity_sigma",
    "prior.bias_sigma",
    "prior.gyro_bias",
    "prior.accel_bias",
    "bias_chain",
    "horizon",
    "lm.max_iterations",
    "lm.initial_lambda",
    "lm.rtol",
    "lm.xtol",
];

impl EstimatorConfig {
    /// Defaults with the keyframe rate chosen by robot class: 100 Hz for
    /// bipeds, 50 Hz otherwise.
    pub fn for_model(model: &RobotModel) -> Self {
        EstimatorConfig {
            keyframe_rate: if model.leg_count() == 2 { 100.0 } else { 50.0 },
            ..Default::default()
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(field, format!("must be positive, got {v}")))
            }
        };
        positive("keyframe_rate", self.keyframe_rate)?;
        self.imu.validate()?;
        positive("fk.sigma_rot", self.fk_sigma_rot)?;
        positive("fk.sigma_trans", self.fk_sigma_trans)?;
        if let LumpedNoise::Isotropic {
            sigma_rot,
            sigma_trans,
        } = self.lumped
        {
            positive("baseline.sigma_rot", sigma_rot)?;
            positive("baseline.sigma_trans", sigma_trans)?;
        }
        positive("contact.sigma", self.contact_sigma)?;
        positive("contact.sigma_rot", self.contact_sigma_rot)?;
        positive("prior.pose_sigma", self.prior.pose)?;
        positive("prior.velocity_sigma", self.prior.velocity)?;
        positive("prior.bias_sigma", self.prior.bias)?;
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::validation("horizon", format!("must be non-negative, got {}", self.horizon)));
        }
        if self.lm.max_iterations == 0 {
            return Err(Error::validation("lm.max_iterations", "must be at least 1"));
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new("estimator config");
        let v3 = |v: &nalgebra::Vector3<f64>| format!("{} {} {}", v.x, v.y, v.z);
        kv.set("mode", self.mode);
        kv.set("keyframe_rate", self.keyframe_rate);
        kv.set("imu.gyro_density", self.imu.gyro_density);
        kv.set("imu.accel_density", self.imu.accel_density);
        kv.set("imu.gyro_bias_walk", self.imu.gyro_bias_walk);
        kv.set("imu.accel_bias_walk", self.imu.accel_bias_walk);
        kv.set("imu.gravity", v3(&self.imu.gravity));
        kv.set("fk.sigma_rot", self.fk_sigma_rot);
        kv.set("fk.sigma_trans", self.fk_sigma_trans);
        match self.lumped {
            LumpedNoise::Isotropic {
                sigma_rot,
                sigma_trans,
            } => {
                kv.set("baseline.noise", "isotropic");
                kv.set("baseline.sigma_rot", sigma_rot);
                kv.set("baseline.sigma_trans", sigma_trans);
            }
            LumpedNoise::ChainComposed => kv.set("baseline.noise", "chain_composed"),
        }
        kv.set("contact.sigma", self.contact_sigma);
        kv.set("contact.sigma_rot", self.contact_sigma_rot);
        kv.set("contact.debounce_on", self.segment.debounce_on);
        kv.set("contact.debounce_off", self.segment.debounce_off);
        kv.set("contact.min_phase_keyframes", self.segment.min_phase_keyframes);
        kv.set("prior.pose_sigma", self.prior.pose);
        kv.set("prior.velocity_sigma", self.prior.velocity);
        kv.set("prior.bias_sigma", self.prior.bias);
        kv.set("prior.gyro_bias", v3(&self.prior_bias.gyro));
        kv.set("prior.accel_bias", v3(&self.prior_bias.accel));
        kv.set("bias_chain", self.bias_chain);
        kv.set("horizon", self.horizon);
        kv.set("lm.max_iterations", self.lm.max_iterations);
        kv.set("lm.initial_lambda", self.lm.initial_lambda);
        kv.set("lm.rtol", self.lm.rtol);
        kv.set("lm.xtol", self.lm.xtol);
        kv
    }

    /// Overlays the entries of `kv` on `self`. Unknown keys are rejected.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        if let Some(k) = kv.keys().find(|k| !KNOWN.contains(k)) {
            return Err(Error::validation(k, "unknown key"));
        }
        if let Some(m) = kv.get_str("mode") {
            self.mode = m.parse()?;
        }
        self.keyframe_rate = kv.get_or("keyframe_rate", self.keyframe_rate)?;
        let imu = &mut self.imu;
        imu.gyro_density = kv.get_or("imu.gyro_density", imu.gyro_density)?;
        imu.accel_density = kv.get_or("imu.accel_density", imu.accel_density)?;
        imu.gyro_bias_walk = kv.get_or("imu.gyro_bias_walk", imu.gyro_bias_walk)?;
        imu.accel_bias_walk = kv.get_or("imu.accel_bias_walk", imu.accel_bias_walk)?;
        imu.gravity = kv.get_vec3("imu.gravity")?.unwrap_or(imu.gravity);
        self.fk_sigma_rot = kv.get_or("fk.sigma_rot", self.fk_sigma_rot)?;
        self.fk_sigma_trans = kv.get_or("fk.sigma_trans", self.fk_sigma_trans)?;
        let (mut rot, mut trans) = match self.lumped {
            LumpedNoise::Isotropic {
                sigma_rot,
                sigma_trans,
            } => (sigma_rot, sigma_trans),
            LumpedNoise::ChainComposed => (0.004, 0.003),
        };
        rot = kv.get_or("baseline.sigma_rot", rot)?;
        trans = kv.get_or("baseline.sigma_trans", trans)?;
        let kind = match kv.get_str("baseline.noise") {
            Some(s) => s.to_string(),
            None if matches!(self.lumped, LumpedNoise::ChainComposed) => "chain_composed".into(),
            None => "isotropic".into(),
        };
        self.lumped = match kind.as_str() {
            "isotropic" => LumpedNoise::Isotropic {
                sigma_rot: rot,
                sigma_trans: trans,
            },
            "chain_composed" => LumpedNoise::ChainComposed,
            other => {
                return Err(Error::validation(
                    "baseline.noise",
                    format!("`{other}` is not isotropic|chain_composed"),
                ))
            }
        };
        self.contact_sigma = kv.get_or("contact.sigma", self.contact_sigma)?;
        self.contact_sigma_rot = kv.get_or("contact.sigma_rot", self.contact_sigma_rot)?;
        let seg = &mut self.segment;
        seg.debounce_on = kv.get_or("contact.debounce_on", seg.debounce_on)?;
        seg.debounce_off = kv.get_or("contact.debounce_off", seg.debounce_off)?;
        seg.min_phase_keyframes = kv.get_or("contact.min_phase_keyframes", seg.min_phase_keyframes)?;
        self.prior.pose = kv.get_or("prior.pose_sigma", self.prior.pose)?;
        self.prior.velocity = kv.get_or("prior.velocity_sigma", self.prior.velocity)?;
        self.prior.bias = kv.get_or("prior.bias_sigma", self.prior.bias)?;
        self.prior_bias.gyro = kv.get_vec3("prior.gyro_bias")?.unwrap_or(self.prior_bias.gyro);
        self.prior_bias.accel = kv.get_vec3("prior.accel_bias")?.unwrap_or(self.prior_bias.accel);
        self.bias_chain = kv.get_or("bias_chain", self.bias_chain)?;
        self.horizon = kv.get_or("horizon", self.horizon)?;
        self.lm.max_iterations = kv.get_or("lm.max_iterations", self.lm.max_iterations)?;
        self.lm.initial_lambda = kv.get_or("lm.initial_lambda", self.lm.initial_lambda)?;
        self.lm.rtol = kv.get_or("lm.rtol", self.lm.rtol)?;
        self.lm.xtol = kv.get_or("lm.xtol", self.lm.xtol)?;
        self.validate()
    }
}
