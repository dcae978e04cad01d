//! Periodic gait schedules and foot trajectories.
//!
//! Leg `i` is in stance while `frac(t/T + offset_i) < duty`. Stance window
//! `j` of a leg spans `[(j − offset)·T, (j − offset + duty)·T)`; the foot
//! rests on foothold `j` throughout and swings to foothold `j + 1` along a
//! cycloid.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::lie::{Pose, Rotation};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gait {
    /// Diagonal pairs alternate; four legs.
    Trot,
    /// One leg lifts at a time; four legs.
    Walk,
    /// Two legs alternate with double support.
    Biped,
    /// Every foot stays on its initial foothold.
    Stand,
}

impl Gait {
    pub fn name(&self) -> &'static str {
        match self {
            Gait::Trot => "trot",
            Gait::Walk => "walk",
            Gait::Biped => "biped",
            Gait::Stand => "stand",
        }
    }

    /// Phase offsets per leg, in model leg order.
    pub fn offsets(&self, legs: usize) -> Result<Vec<f64>> {
        let need = |n: usize| {
            if legs == n {
                Ok(())
            } else {
                Err(Error::validation(
                    "gait",
                    format!("{} needs {n} legs, model has {legs}", self.name()),
                ))
            }
        };
        match self {
            Gait::Trot => need(4).map(|_| vec![0.0, 0.5, 0.5, 0.0]),
            Gait::Walk => need(4).map(|_| vec![0.0, 0.5, 0.75, 0.25]),
            Gait::Biped => need(2).map(|_| vec![0.0, 0.5]),
            Gait::Stand => Ok(vec![0.0; legs]),
        }
    }
}

impl fmt::Display for Gait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Gait {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Gait::Trot, Gait::Walk, Gait::Biped, Gait::Stand]
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::validation("gait", format!("`{s}` is not trot|walk|biped|stand")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LegState {
    Stance { window: i64 },
    /// Moving from foothold `from` to `from + 1`; `u ∈ [0, 1)`.
    Swing { from: i64, u: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaitSchedule {
    pub period: f64,
    pub duty: f64,
    pub offsets: Vec<f64>,
    pub always_stance: bool,
}

impl GaitSchedule {
    pub fn new(gait: Gait, legs: usize, period: f64, duty: f64) -> Result<Self> {
        Ok(GaitSchedule {
            period,
            duty,
            offsets: gait.offsets(legs)?,
            always_stance: gait == Gait::Stand,
        })
    }

    pub fn state(&self, leg: usize, t: f64) -> LegState {
        if self.always_stance {
            return LegState::Stance { window: 0 };
        }
        let x = t / self.period + self.offsets[leg];
        let j = x.floor();
        let frac = x - j;
        if frac < self.duty {
            LegState::Stance { window: j as i64 }
        } else {
            LegState::Swing {
                from: j as i64,
                u: (frac - self.duty) / (1.0 - self.duty),
            }
        }
    }

    pub fn in_stance(&self, leg: usize, t: f64) -> bool {
        matches!(self.state(leg, t), LegState::Stance { .. })
    }

    /// Middle of stance window `window`.
    pub fn mid_stance(&self, leg: usize, window: i64) -> f64 {
        if self.always_stance {
            return 0.0;
        }
        (window as f64 - self.offsets[leg] + 0.5 * self.duty) * self.period
    }
}

/// Cycloid from `a` to `b`: horizontal fraction and normalised height, both
/// with zero velocity at the ends.
pub fn cycloid(u: f64) -> (f64, f64) {
    let th = TAU * u;
    ((th - th.sin()) / TAU, 0.5 * (1.0 - th.cos()))
}

/// Foot pose between two footholds; yaw is blended with the same profile
/// as the horizontal motion.
pub fn swing_pose(a: &Pose, b: &Pose, u: f64, height: f64) -> Pose {
    let (f, z) = cycloid(u);
    let p = a.translation + (b.translation - a.translation) * f + Vector3::z() * (height * z);
    let ya = a.rotation.yaw();
    let mut dy = b.rotation.yaw() - ya;
    dy -= TAU * ((dy + std::f64::consts::PI) / TAU).floor();
    Pose::new(Rotation::rot_z(ya + dy * f), p)
}
