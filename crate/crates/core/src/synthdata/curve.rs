//! Smooth planar base trajectories at constant height.
//!
//! Arc length follows a minimum-jerk profile over the whole duration, so the
//! base starts and ends at rest. Heading is a function of arc length; for
//! turning shapes the body yaw follows the heading.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::imu_preint::{GL_NODES, GL_WEIGHTS};

const XY_PANELS: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    /// Along +x, body yaw 0.
    Straight,
    /// Along the +x+y diagonal, body yaw 0.
    Diagonal,
    /// Constant-curvature left turn; body yaw follows the heading.
    Turn { radius: f64 },
    /// Equal segments at alternating headings `±angle` joined by smooth
    /// blends; body yaw follows the heading.
    ZigZag { segments: usize, angle: f64 },
}

impl Shape {
    pub fn name(&self) -> &'static str {
        match self {
            Shape::Straight => "straight",
            Shape::Diagonal => "diagonal",
            Shape::Turn { .. } => "turn",
            Shape::ZigZag { .. } => "zigzag",
        }
    }

    pub const DEFAULT_TURN_RADIUS: f64 = 1.5;
    pub const DEFAULT_ZIGZAG_SEGMENTS: usize = 4;
    pub const DEFAULT_ZIGZAG_ANGLE: f64 = PI / 6.0;

    /// The four evaluation shapes with default parameters.
    pub fn all() -> [Shape; 4] {
        [
            Shape::Straight,
            Shape::Diagonal,
            Shape::Turn {
                radius: Self::DEFAULT_TURN_RADIUS,
            },
            Shape::ZigZag {
                segments: Self::DEFAULT_ZIGZAG_SEGMENTS,
                angle: Self::DEFAULT_ZIGZAG_ANGLE,
            },
        ]
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Shape::Turn { radius } if !(radius > 0.0 && radius.is_finite()) => {
                Err(Error::validation("turn_radius", format!("{radius} is not > 0")))
            }
            Shape::ZigZag { segments: 0, .. } => {
                Err(Error::validation("zigzag_segments", "must be ≥ 1"))
            }
            Shape::ZigZag { angle, .. } if !(angle.abs() < PI / 2.0) => Err(Error::validation(
                "zigzag_angle_deg",
                format!("{} is not within (−90, 90)", angle.to_degrees()),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = Error;
    /// Shape name with default parameters.
    fn from_str(s: &str) -> Result<Self> {
        Shape::all()
            .into_iter()
            .find(|sh| sh.name() == s)
            .ok_or_else(|| {
                Error::validation("shape", format!("`{s}` is not straight|diagonal|turn|zigzag"))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveSample {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub yaw: f64,
    pub yaw_rate: f64,
    pub yaw_accel: f64,
}

#[derive(Clone, Debug)]
pub struct BaseCurve {
    shape: Shape,
    length: f64,
    duration: f64,
    height: f64,
    /// Zig-zag only: cumulative xy at panel boundaries.
    table: Vec<Vector2<f64>>,
}

/// `6u⁵ − 15u⁴ + 10u³` and its first two derivatives.
fn smootherstep(u: f64) -> (f64, f64, f64) {
    let u = u.clamp(0.0, 1.0);
    (
        u * u * u * (10.0 + u * (-15.0 + 6.0 * u)),
        30.0 * u * u * (1.0 - u) * (1.0 - u),
        60.0 * u * (1.0 - u) * (1.0 - 2.0 * u),
    )
}

impl BaseCurve {
    pub fn new(shape: Shape, length: f64, duration: f64, height: f64) -> Result<Self> {
        shape.validate()?;
        if !(length >= 0.0 && length.is_finite()) {
            return Err(Error::validation("step_length", "path length must be ≥ 0"));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::validation("duration", format!("{duration} is not > 0")));
        }
        let mut curve = BaseCurve {
            shape,
            length,
            duration,
            height,
            table: Vec::new(),
        };
        if matches!(shape, Shape::ZigZag { .. }) {
            let h = length / XY_PANELS as f64;
            let mut acc = Vector2::zeros();
            curve.table.push(acc);
            for i in 0..XY_PANELS {
                acc += curve.integrate_direction(i as f64 * h, (i + 1) as f64 * h);
                curve.table.push(acc);
            }
        }
        Ok(curve)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Arc length and its first two time derivatives.
    pub fn arc_length(&self, t: f64) -> (f64, f64, f64) {
        let tt = self.duration;
        let tau = (t / tt).clamp(0.0, 1.0);
        if t <= 0.0 || t >= tt {
            return (self.length * tau, 0.0, 0.0);
        }
        let l = self.length;
        let s = l * tau.powi(3) * (10.0 + tau * (-15.0 + 6.0 * tau));
        let sd = l * 30.0 * tau * tau * (1.0 - tau) * (1.0 - tau) / tt;
        let sdd = l * 60.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau) / (tt * tt);
        (s, sd, sdd)
    }

    /// Heading and its first two derivatives with respect to arc length.
    pub fn heading(&self, s: f64) -> (f64, f64, f64) {
        match self.shape {
            Shape::Straight => (0.0, 0.0, 0.0),
            Shape::Diagonal => (FRAC_PI_4, 0.0, 0.0),
            Shape::Turn { radius } => (s / radius, 1.0 / radius, 0.0),
            Shape::ZigZag { segments, angle } => {
                let seg_heading = |i: usize| if i % 2 == 0 { angle } else { -angle };
                if self.length == 0.0 {
                    return (angle, 0.0, 0.0);
                }
                let ls = self.length / segments as f64;
                let w = (0.3 * ls).min(0.4);
                let corner = (s / ls).round();
                let c = corner as usize;
                if c >= 1 && c < segments && (s - corner * ls).abs() < 0.5 * w {
                    let a = seg_heading(c - 1);
                    let d = seg_heading(c) - a;
                    let (q, dq, ddq) = smootherstep((s - corner * ls + 0.5 * w) / w);
                    (a + d * q, d * dq / w, d * ddq / (w * w))
                } else {
                    let seg = ((s / ls).floor().max(0.0) as usize).min(segments - 1);
                    (seg_heading(seg), 0.0, 0.0)
                }
            }
        }
    }

    fn follows_heading(&self) -> bool {
        matches!(self.shape, Shape::Turn { .. } | Shape::ZigZag { .. })
    }

    fn integrate_direction(&self, a: f64, b: f64) -> Vector2<f64> {
        let mut acc = Vector2::zeros();
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let psi = self.heading(a + (b - a) * x).0;
            acc += Vector2::new(psi.cos(), psi.sin()) * w;
        }
        acc * (b - a)
    }

    /// Planar position at arc length `s`.
    pub fn xy(&self, s: f64) -> Vector2<f64> {
        let s = s.clamp(0.0, self.length);
        match self.shape {
            Shape::Straight => Vector2::new(s, 0.0),
            Shape::Diagonal => Vector2::new(s, s) * FRAC_PI_4.cos(),
            Shape::Turn { radius } => {
                let th = s / radius;
                Vector2::new(radius * th.sin(), radius * (1.0 - th.cos()))
            }
            Shape::ZigZag { .. } => {
                if self.length == 0.0 {
                    return Vector2::zeros();
                }
                let h = self.length / XY_PANELS as f64;
                let i = ((s / h).floor() as usize).min(XY_PANELS - 1);
                self.table[i] + self.integrate_direction(i as f64 * h, s)
            }
        }
    }

    pub fn eval(&self, t: f64) -> CurveSample {
        let (s, sd, sdd) = self.arc_length(t);
        let (psi, dpsi, ddpsi) = self.heading(s);
        let dir = Vector3::new(psi.cos(), psi.sin(), 0.0);
        let nrm = Vector3::new(-psi.sin(), psi.cos(), 0.0);
        let xy = self.xy(s);
        let (yaw, yaw_rate, yaw_accel) = if self.follows_heading() {
            (psi, dpsi * sd, ddpsi * sd * sd + dpsi * sdd)
        } else {
            (0.0, 0.0, 0.0)
        };
        CurveSample {
            position: Vector3::new(xy.x, xy.y, self.height),
            velocity: dir * sd,
            acceleration: dir * sdd + nrm * (dpsi * sd * sd),
            yaw,
            yaw_rate,
            yaw_accel,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn zigzag() -> Shape {
        Shape::ZigZag {
            segments: 4,
            angle: PI / 6.0,
        }
    }

    #[test]
    fn straight_one_metre_ends_at_target() {
        let c = BaseCurve::new(Shape::Straight, 1.0, 5.0, 0.3).unwrap();
        let end = c.eval(5.0);
        assert_relative_eq!(end.position, Vector3::new(1.0, 0.0, 0.3), epsilon = 1e-12);
        assert_eq!(end.velocity, Vector3::zeros());
        assert_eq!(c.eval(0.0).velocity, Vector3::zeros());
    }

    #[test]
    fn zigzag_heading_at_segment_midpoints() {
        let c = BaseCurve::new(zigzag(), 4.0, 10.0, 0.3).unwrap();
        for i in 0..4 {
            let psi = c.heading(i as f64 + 0.5).0;
            let want = if i % 2 == 0 { PI / 6.0 } else { -PI / 6.0 };
            assert!((psi - want).abs() < 1e-6, "segment {i}: {psi}");
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for shape in Shape::all() {
            let c = BaseCurve::new(shape, 3.0, 10.0, 0.3).unwrap();
            for k in 1..50 {
                let t = k as f64 * 0.2;
                let (a, m, b) = (c.eval(t - h), c.eval(t), c.eval(t + h));
                let v = (b.position - a.position) / (2.0 * h);
                let acc = (b.velocity - a.velocity) / (2.0 * h);
                assert!((v - m.velocity).norm() < 1e-7, "{shape} v at {t}");
                assert!((acc - m.acceleration).norm() < 1e-6, "{shape} a at {t}");
                assert!(((b.yaw - a.yaw) / (2.0 * h) - m.yaw_rate).abs() < 1e-7);
                assert!(((b.yaw_rate - a.yaw_rate) / (2.0 * h) - m.yaw_accel).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn arc_length_is_unit_speed() {
        for shape in Shape::all() {
            let c = BaseCurve::new(shape, 3.0, 10.0, 0.3).unwrap();
            let mut len = 0.0;
            let mut prev = c.xy(0.0);
            for i in 1..=3000 {
                let p = c.xy(i as f64 * 1e-3);
                len += (p - prev).norm();
                prev = p;
            }
            assert!((len - 3.0).abs() < 1e-6, "{shape}: {len}");
        }
    }

    #[test]
    fn heading_is_c2_across_blends() {
        let c = BaseCurve::new(zigzag(), 4.0, 10.0, 0.3).unwrap();
        let w = 0.3;
        for corner in 1..4 {
            for edge in [-0.5 * w, 0.5 * w] {
                let s = corner as f64 + edge;
                let lo = c.heading(s - 1e-9);
                let hi = c.heading(s + 1e-9);
                assert!((lo.0 - hi.0).abs() < 1e-9);
                assert!((lo.1 - hi.1).abs() < 1e-6);
                assert!((lo.2 - hi.2).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(BaseCurve::new(Shape::Turn { radius: 0.0 }, 1.0, 1.0, 0.3).is_err());
        assert!(BaseCurve::new(Shape::Straight, 1.0, 0.0, 0.3).is_err());
        assert!("spiral".parse::<Shape>().is_err());
        assert_eq!("turn".parse::<Shape>().unwrap().name(), "turn");
    }
}
