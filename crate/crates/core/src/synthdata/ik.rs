//! Closed-form inverse kinematics for the two supported leg layouts.
//!
//! Quadruped leg: abduction about x, then hip and knee about y, foot below
//! the knee. Solved by decoupling abduction from the sagittal 2-link problem;
//! the knee-backward branch is returned.
//!
//! Biped leg: hip yaw, roll, pitch about z, x, y meeting at one point, knee
//! and ankle pitch about y, ankle roll about x, sole below the ankle. Solved
//! from the hip-to-ankle vector expressed in the sole frame; the knee-forward
//! branch is returned.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::lie::{Pose, Rotation};
use crate::robot_model::{Joint, JointKind, RobotModel};

/// Slack on the law-of-cosines argument before declaring a target
/// unreachable.
const REACH_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadLeg {
    /// Abduction joint origin in the base frame.
    pub hip: Vector3<f64>,
    /// Lateral offset from the abduction axis to the hip pitch joint.
    pub offset: f64,
    pub thigh: f64,
    pub calf: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BipedLeg {
    /// Hip joint intersection in the base frame.
    pub hip: Vector3<f64>,
    pub thigh: f64,
    pub shank: f64,
    /// Ankle to sole along the sole z axis.
    pub sole: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LegIk {
    Quad(QuadLeg),
    Biped(BipedLeg),
}

fn axis_is(j: &Joint, axis: [f64; 3]) -> bool {
    j.kind == JointKind::Revolute && j.axis == axis && j.rpy == [0.0; 3]
}

fn fixed_z(j: &Joint) -> Option<f64> {
    (j.kind == JointKind::Fixed && j.rpy == [0.0; 3] && j.xyz[0] == 0.0 && j.xyz[1] == 0.0)
        .then_some(j.xyz[2])
}

impl LegIk {
    /// Recognises the leg layout from the source joints of `leg`.
    pub fn from_model(model: &RobotModel, leg: usize) -> Result<LegIk> {
        let chain = &model.legs[leg];
        let path = model.path_to(&chain.foot_link);
        let unsupported = || {
            Error::Model(format!(
                "leg `{}` does not match a layout with closed-form inverse kinematics",
                chain.foot_link
            ))
        };
        const X: [f64; 3] = [1.0, 0.0, 0.0];
        const Y: [f64; 3] = [0.0, 1.0, 0.0];
        const Z: [f64; 3] = [0.0, 0.0, 1.0];
        match path.as_slice() {
            [hip, thigh, calf, foot]
                if axis_is(hip, X)
                    && axis_is(thigh, Y)
                    && thigh.xyz[0] == 0.0
                    && thigh.xyz[2] == 0.0
                    && axis_is(calf, Y)
                    && calf.xyz[0] == 0.0
                    && calf.xyz[1] == 0.0
                    && hip.rpy == [0.0; 3] =>
            {
                let calf_len = -fixed_z(foot).ok_or_else(unsupported)?;
                Ok(LegIk::Quad(QuadLeg {
                    hip: Vector3::from(hip.xyz),
                    offset: thigh.xyz[1],
                    thigh: -calf.xyz[2],
                    calf: calf_len,
                }))
            }
            [yaw, roll, pitch, knee, ankle_pitch, ankle_roll, sole]
                if axis_is(yaw, Z)
                    && axis_is(roll, X)
                    && roll.xyz == [0.0; 3]
                    && axis_is(pitch, Y)
                    && pitch.xyz == [0.0; 3]
                    && axis_is(knee, Y)
                    && knee.xyz[0] == 0.0
                    && knee.xyz[1] == 0.0
                    && axis_is(ankle_pitch, Y)
                    && ankle_pitch.xyz[0] == 0.0
                    && ankle_pitch.xyz[1] == 0.0
                    && axis_is(ankle_roll, X)
                    && ankle_roll.xyz == [0.0; 3] =>
            {
                let sole_len = -fixed_z(sole).ok_or_else(unsupported)?;
                Ok(LegIk::Biped(BipedLeg {
                    hip: Vector3::from(yaw.xyz),
                    thigh: -knee.xyz[2],
                    shank: -ankle_pitch.xyz[2],
                    sole: sole_len,
                }))
            }
            _ => Err(unsupported()),
        }
    }

    /// Foot position in the base frame with the leg hanging straight, up to
    /// the vertical coordinate.
    pub fn nominal_foot(&self) -> Vector3<f64> {
        match self {
            LegIk::Quad(l) => l.hip + Vector3::new(0.0, l.offset, 0.0),
            LegIk::Biped(l) => l.hip,
        }
    }

    /// Joint angles in chain order placing the foot at `target` (base frame).
    /// Point-foot layouts use only the target translation.
    pub fn solve(&self, target: &Pose) -> Option<Vec<f64>> {
        match self {
            LegIk::Quad(l) => l.solve(&target.translation).map(|q| q.to_vec()),
            LegIk::Biped(l) => l.solve(target).map(|q| q.to_vec()),
        }
    }
}

fn acos_checked(c: f64) -> Option<f64> {
    if c.abs() > 1.0 + REACH_EPS || !c.is_finite() {
        return None;
    }
    Some(c.clamp(-1.0, 1.0).acos())
}

impl QuadLeg {
    pub fn solve(&self, foot: &Vector3<f64>) -> Option<[f64; 3]> {
        let v = foot - self.hip;
        let rho2 = v.y * v.y + v.z * v.z;
        let l2 = rho2 - self.offset * self.offset;
        if l2 < 0.0 {
            return None;
        }
        let l = l2.sqrt();
        let q1 = v.z.atan2(v.y) - (-l).atan2(self.offset);
        let (x, z) = (v.x, -l);
        let (a, b) = (self.thigh, self.calf);
        let q3 = -acos_checked((x * x + z * z - a * a - b * b) / (2.0 * a * b))?;
        let q2 = (-x).atan2(-z) - (b * q3.sin()).atan2(a + b * q3.cos());
        Some([wrap(q1), q2, q3])
    }
}

/// `Rz(a)·Rx(b)·Ry(c) = m` for `b` within (−π/2, π/2).
fn euler_zxy(m: &Matrix3<f64>) -> (f64, f64, f64) {
    let b = m[(2, 1)].clamp(-1.0, 1.0).asin();
    let a = (-m[(0, 1)]).atan2(m[(1, 1)]);
    let c = (-m[(2, 0)]).atan2(m[(2, 2)]);
    (a, b, c)
}

impl BipedLeg {
    pub fn solve(&self, sole: &Pose) -> Option<[f64; 6]> {
        let rf = sole.rotation;
        let ankle = sole.transform_point(&Vector3::new(0.0, 0.0, self.sole));
        let r = rf.transpose() * (self.hip - ankle);
        let (a, b) = (self.thigh, self.shank);
        let q4 = acos_checked((r.norm_squared() - a * a - b * b) / (2.0 * a * b))?;
        let q6 = r.y.atan2(r.z);
        let w = Vector3::new(r.x, 0.0, (r.y * r.y + r.z * r.z).sqrt());
        let u = Vector3::new(-a * q4.sin(), 0.0, a * q4.cos() + b);
        let q5 = u.x.atan2(u.z) - w.x.atan2(w.z);
        let hip_rot = rf * Rotation::rot_x(q6).transpose() * Rotation::rot_y(-(q4 + q5));
        let (q1, q2, q3) = euler_zxy(hip_rot.matrix());
        Some([q1, q2, q3, q4, wrap(q5), q6])
    }
}

fn wrap(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    a - two_pi * ((a + std::f64::consts::PI) / two_pi).floor()
}
