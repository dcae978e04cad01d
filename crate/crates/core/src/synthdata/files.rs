//! Log directory layout: five whitespace-separated text files.
//!
//! `imu.txt`: `t wx wy wz ax ay az`; `joints.txt`: `t name:angle ...`;
//! `contacts.txt`: `t f1 .. fN` with 0/1 flags in leg order;
//! `groundtruth.txt`: `t x y z qx qy qz qw`; `meta.txt`: `key = value`.
//! Numbers are written with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::{GaitSpec, TrajectoryLog, TruthState};
use crate::contact::ContactSample;
use crate::error::{Error, Result};
use crate::imu_preint::{ImuBias, ImuSample};
use crate::io::{
    data_lines, fmt_f64, fmt_vec3, format_tum, parse_f64, parse_tum, read_text, write_text,
    KeyValues,
};
use crate::robot_model::JointAngles;

pub const LOG_FILES: [&str; 5] = [
    "imu.txt",
    "joints.txt",
    "contacts.txt",
    "groundtruth.txt",
    "meta.txt",
];

pub fn write_log(log: &TrajectoryLog, dir: &Path) -> Result<()> {
    let mut imu = String::new();
    for s in &log.imu {
        let _ = writeln!(imu, "{} {} {}", fmt_f64(s.t), fmt_vec3(&s.gyro), fmt_vec3(&s.accel));
    }
    let mut joints = String::new();
    for a in &log.joints {
        joints.push_str(&fmt_f64(a.t));
        for (name, q) in &a.values {
            let _ = write!(joints, " {name}:{}", fmt_f64(*q));
        }
        joints.push('\n');
    }
    let mut contacts = String::new();
    for c in &log.contacts {
        contacts.push_str(&fmt_f64(c.t));
        for f in &c.flags {
            contacts.push_str(if *f { " 1" } else { " 0" });
        }
        contacts.push('\n');
    }
    let mut meta = log.spec.to_key_values();
    meta.set("log.initial_velocity", fmt_vec3(&log.initial_velocity));
    meta.set("log.initial_gyro_bias", fmt_vec3(&log.initial_bias.gyro));
    meta.set("log.initial_accel_bias", fmt_vec3(&log.initial_bias.accel));
    meta.set("log.imu_samples", log.imu.len());
    write_text(&dir.join("imu.txt"), &imu)?;
    write_text(&dir.join("joints.txt"), &joints)?;
    write_text(&dir.join("contacts.txt"), &contacts)?;
    write_text(&dir.join("groundtruth.txt"), &format_tum(&log.ground_truth_poses()))?;
    write_text(&dir.join("meta.txt"), &meta.to_text())
}

fn parse_row(source: &str, line: usize, l: &str, cols: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = l
        .split_whitespace()
        .map(|t| parse_f64(source, line, t))
        .collect::<Result<_>>()?;
    if v.len() != cols {
        return Err(Error::parse(source, line, format!("expected {cols} columns, got {}", v.len())));
    }
    Ok(v)
}

fn check_increasing(source: &str, times: impl Iterator<Item = (usize, f64)>) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for (line, t) in times {
        if !(t > prev) {
            return Err(Error::parse(source, line, "timestamps must strictly increase"));
        }
        prev = t;
    }
    Ok(())
}

/// Ground-truth velocity is not stored; it is rebuilt by central differences
/// of the keyframe positions, with the logged initial velocity at `t = 0`.
pub fn read_log(dir: &Path) -> Result<TrajectoryLog> {
    let path = |f: &str| dir.join(f);
    let src = |f: &str| dir.join(f).display().to_string();

    let meta = KeyValues::load(&path("meta.txt"))?;
    let spec = GaitSpec::from_key_values(&meta)?;
    let initial_velocity = meta
        .get_vec3("log.initial_velocity")?
        .ok_or_else(|| Error::validation("log.initial_velocity", "missing"))?;
    let initial_bias = ImuBias::new(
        meta.get_vec3("log.initial_gyro_bias")?.unwrap_or_else(Vector3::zeros),
        meta.get_vec3("log.initial_accel_bias")?.unwrap_or_else(Vector3::zeros),
    );

    let s = src("imu.txt");
    let text = read_text(&path("imu.txt"))?;
    let mut imu = Vec::new();
    let mut lines = Vec::new();
    for (line, l) in data_lines(&text) {
        let v = parse_row(&s, line, l, 7)?;
        lines.push((line, v[0]));
        imu.push(ImuSample {
            t: v[0],
            gyro: Vector3::new(v[1], v[2], v[3]),
            accel: Vector3::new(v[4], v[5], v[6]),
        });
    }
    check_increasing(&s, lines.into_iter())?;
    if imu.is_empty() {
        return Err(Error::EmptyLog);
    }

    let s = src("joints.txt");
    let text = read_text(&path("joints.txt"))?;
    let mut joints = Vec::new();
    let mut joint_names: Vec<String> = Vec::new();
    let mut lines = Vec::new();
    for (line, l) in data_lines(&text) {
        let mut toks = l.split_whitespace();
        let t = parse_f64(&s, line, toks.next().unwrap_or_default())?;
        let mut a = JointAngles::new(t);
        for tok in toks {
            let (name, q) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse(&s, line, format!("expected name:angle, got `{tok}`")))?;
            a.insert(name, parse_f64(&s, line, q)?);
        }
        if joint_names.is_empty() {
            joint_names = a.values.keys().cloned().collect();
        }
        lines.push((line, t));
        joints.push(a);
    }
    check_increasing(&s, lines.into_iter())?;

    let s = src("contacts.txt");
    let text = read_text(&path("contacts.txt"))?;
    let mut contacts = Vec::new();
    let mut lines = Vec::new();
    let mut width = None;
    for (line, l) in data_lines(&text) {
        let mut toks = l.split_whitespace();
        let t = parse_f64(&s, line, toks.next().unwrap_or_default())?;
        let flags = toks
            .map(|f| match f {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::parse(&s, line, format!("contact flag `{other}` is not 0/1"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        if *width.get_or_insert(flags.len()) != flags.len() {
            return Err(Error::parse(&s, line, "inconsistent number of contact columns"));
        }
        lines.push((line, t));
        contacts.push(ContactSample { t, flags });
    }
    check_increasing(&s, lines.into_iter())?;

    let poses = parse_tum(&src("groundtruth.txt"), &read_text(&path("groundtruth.txt"))?)?;
    let ground_truth = poses
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let velocity = if i == 0 {
                initial_velocity
            } else {
                let a = &poses[i - 1];
                let b = poses.get(i + 1).unwrap_or(p);
                (b.pose.translation - a.pose.translation) / (b.t - a.t)
            };
            TruthState {
                t: p.t,
                pose: p.pose,
                velocity,
            }
        })
        .collect();

    Ok(TrajectoryLog {
        spec,
        joint_names,
        imu,
        joints,
        contacts,
        ground_truth,
        initial_velocity,
        initial_bias,
        dense: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot_model::RobotModel;
    use crate::synthdata::{generate, Shape};

    #[test]
    fn round_trip_is_exact_for_sensor_streams() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GaitSpec::quadruped_trot(Shape::Straight)
            .with_duration(2.0)
            .with_seed(3);
        let log = generate(&spec, &RobotModel::a1()).unwrap();
        write_log(&log, dir.path()).unwrap();
        for f in LOG_FILES {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let back = read_log(dir.path()).unwrap();
        assert_eq!(back.imu, log.imu);
        assert_eq!(back.joints, log.joints);
        assert_eq!(back.contacts, log.contacts);
        assert_eq!(back.spec, log.spec);
        assert_eq!(back.initial_velocity, log.initial_velocity);
        assert_eq!(back.initial_bias, log.initial_bias);
        for (a, b) in back.ground_truth.iter().zip(&log.ground_truth) {
            assert_eq!(a.t, b.t);
            assert!(a.pose.local(&b.pose).norm() < 1e-15);
            assert!((a.velocity - b.velocity).norm() < 1e-3);
        }
    }

    #[test]
    fn missing_file_names_its_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_log(dir.path()).unwrap_err();
        assert!(err.to_string().contains("meta.txt"), "{err}");
    }

    #[test]
    fn bad_contact_flag_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GaitSpec::quadruped_trot(Shape::Straight).with_duration(1.0);
        write_log(&generate(&spec, &RobotModel::a1()).unwrap(), dir.path()).unwrap();
        let p = dir.path().join("contacts.txt");
        let text = std::fs::read_to_string(&p).unwrap().replacen(" 1", " 2", 1);
        std::fs::write(&p, text).unwrap();
        assert!(matches!(read_log(dir.path()), Err(Error::Parse { line: 1, .. })));
    }
}
