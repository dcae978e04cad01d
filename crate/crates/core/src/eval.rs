//! Trajectory alignment and absolute/relative pose error.
//!
//! A legged estimator without exteroception cannot observe global x, y, z or
//! yaw, so estimates are aligned to the reference by a planar rigid
//! transform (yaw + xy translation) and each trajectory has its own mean
//! height removed before errors are measured.

use std::fmt::Write as _;

use nalgebra::{Matrix4, Vector3};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, KeyValues, TimedPose};
use crate::lie::{Pose, Rotation};

/// Below this planar spread the rotation of the alignment is undefined.
const DEGENERATE_SPREAD: f64 = 1e-18;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    /// RPE pair spacing, s.
    pub delta: f64,
    /// Measure translation error only instead of the 4×4 deviation.
    pub translation_only: bool,
    /// Largest timestamp offset accepted when pairing samples; defaults to
    /// half the median reference spacing.
    pub max_offset: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            delta: 1.0,
            translation_only: false,
            max_offset: None,
        }
    }
}

/// Planar gauge transform applied to the estimate, plus the height offset
/// removed by the per-trajectory mean subtraction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaugeTransform {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    /// Reference mean height minus estimate mean height.
    pub z: f64,
}

impl GaugeTransform {
    pub fn planar_pose(&self) -> Pose {
        Pose::from_yaw_translation(self.yaw, Vector3::new(self.x, self.y, 0.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignedPair {
    /// Matched reference samples with the mean height removed.
    pub reference: Vec<TimedPose>,
    /// Matched estimate samples, aligned, with the mean height removed.
    pub estimate: Vec<TimedPose>,
    pub transform: GaugeTransform,
    /// Estimate samples with no reference sample close enough in time.
    pub unmatched: usize,
}

/// Nearest-neighbour pairing within `max_offset`; each reference sample is
/// used at most once.
pub fn associate(
    reference: &[TimedPose],
    estimate: &[TimedPose],
    max_offset: f64,
) -> (Vec<(TimedPose, TimedPose)>, usize) {
    let mut pairs = Vec::new();
    let mut unmatched = 0;
    let mut used = vec![false; reference.len()];
    for e in estimate {
        let idx = reference.partition_point(|r| r.t < e.t);
        let best = [idx.checked_sub(1), Some(idx)]
            .into_iter()
            .flatten()
            .filter(|&i| i < reference.len() && !used[i])
            .min_by(|&a, &b| {
                (reference[a].t - e.t)
                    .abs()
                    .total_cmp(&(reference[b].t - e.t).abs())
            });
        match best {
            Some(i) if (reference[i].t - e.t).abs() <= max_offset => {
                used[i] = true;
                pairs.push((reference[i], *e));
            }
            _ => unmatched += 1,
        }
    }
    (pairs, unmatched)
}

fn median_spacing(traj: &[TimedPose]) -> f64 {
    let mut d: Vec<f64> = traj.windows(2).map(|w| w[1].t - w[0].t).collect();
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

/// Closed-form yaw and xy translation minimising the squared planar
/// distance between `R·e + t` and `r` over matched points.
pub fn planar_procrustes(reference: &[Vector3<f64>], estimate: &[Vector3<f64>]) -> (f64, f64, f64) {
    let n = reference.len() as f64;
    let cr = reference.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let ce = estimate.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let (mut dot, mut cross, mut spread) = (0.0, 0.0, 0.0);
    for (r, e) in reference.iter().zip(estimate) {
        let (rx, ry) = (r.x - cr.x, r.y - cr.y);
        let (ex, ey) = (e.x - ce.x, e.y - ce.y);
        dot += ex * rx + ey * ry;
        cross += ex * ry - ey * rx;
        spread += ex * ex + ey * ey;
    }
    let yaw = if spread < DEGENERATE_SPREAD { 0.0 } else { cross.atan2(dot) };
    let (s, c) = yaw.sin_cos();
    (cr.x - (c * ce.x - s * ce.y), cr.y - (s * ce.x + c * ce.y), yaw)
}

fn subtract_mean_z(traj: &mut [TimedPose]) -> f64 {
    let mean = traj.iter().map(|p| p.pose.translation.z).sum::<f64>() / traj.len() as f64;
    for p in traj.iter_mut() {
        p.pose.translation.z -= mean;
    }
    mean
}

pub fn align(reference: &[TimedPose], estimate: &[TimedPose], cfg: &EvalConfig) -> Result<AlignedPair> {
    let max_offset = cfg
        .max_offset
        .unwrap_or_else(|| 0.5 * median_spacing(reference));
    let (pairs, unmatched) = associate(reference, estimate, max_offset);
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "alignment needs ≥ 2 matched timestamps, got {}",
            pairs.len()
        )));
    }
    let rp: Vec<Vector3<f64>> = pairs.iter().map(|(r, _)| r.pose.translation).collect();
    let ep: Vec<Vector3<f64>> = pairs.iter().map(|(_, e)| e.pose.translation).collect();
    let (x, y, yaw) = planar_procrustes(&rp, &ep);
    let g = Pose::from_yaw_translation(yaw, Vector3::new(x, y, 0.0));
    let mut r: Vec<TimedPose> = pairs.iter().map(|(r, _)| *r).collect();
    let mut e: Vec<TimedPose> = pairs
        .iter()
        .map(|(_, e)| TimedPose {
            t: e.t,
            pose: g * e.pose,
        })
        .collect();
    let zr = subtract_mean_z(&mut r);
    let ze = subtract_mean_z(&mut e);
    Ok(AlignedPair {
        reference: r,
        estimate: e,
        transform: GaugeTransform { x, y, yaw, z: zr - ze },
        unmatched,
    })
}

/// `‖A − I‖_F` of a relative pose, or its translation norm.
pub fn deviation(relative: &Pose, translation_only: bool) -> f64 {
    if translation_only {
        relative.translation.norm()
    } else {
        (relative.matrix() - Matrix4::identity()).norm()
    }
}

/// `‖P⁻¹·P̂ − I‖_F` per matched sample.
pub fn ape(pair: &AlignedPair, translation_only: bool) -> Vec<f64> {
    pair.reference
        .iter()
        .zip(&pair.estimate)
        .map(|(r, e)| deviation(&r.pose.between(&e.pose), translation_only))
        .collect()
}

/// One relative pose error sample between times `t_i` and `t_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RpeSample {
    pub t_i: f64,
    pub t_j: f64,
    pub value: f64,
}

/// `‖(P_i⁻¹P_j)⁻¹(P̂_i⁻¹P̂_j) − I‖_F` for pairs `delta` seconds apart.
pub fn rpe(pair: &AlignedPair, delta: f64, translation_only: bool) -> Result<Vec<RpeSample>> {
    let r = &pair.reference;
    let e = &pair.estimate;
    let span = r.last().map_or(0.0, |l| l.t) - r.first().map_or(0.0, |f| f.t);
    if !(delta > 0.0) || span <= delta {
        return Err(Error::InvalidArgument(format!(
            "trajectory spans {span:.3} s, RPE needs more than {delta} s"
        )));
    }
    let tol = 0.5 * median_spacing(r);
    let mut out = Vec::new();
    for i in 0..r.len() {
        let target = r[i].t + delta;
        let k = r.partition_point(|p| p.t < target);
        let j = [k.checked_sub(1), Some(k)]
            .into_iter()
            .flatten()
            .filter(|&j| j < r.len() && j > i)
            .min_by(|&a, &b| (r[a].t - target).abs().total_cmp(&(r[b].t - target).abs()));
        let Some(j) = j else { continue };
        if (r[j].t - target).abs() > tol + 1e-12 {
            continue;
        }
        let rel_ref = r[i].pose.between(&r[j].pose);
        let rel_est = e[i].pose.between(&e[j].pose);
        out.push(RpeSample {
            t_i: r[i].t,
            t_j: r[j].t,
            value: deviation(&rel_ref.between(&rel_est), translation_only),
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stats {
    pub rmse: f64,
    pub mean: f64,
    pub max: f64,
    pub count: usize,
}

impl Stats {
    pub fn of(values: &[f64]) -> Stats {
        let n = values.len();
        if n == 0 {
            return Stats {
                rmse: 0.0,
                mean: 0.0,
                max: 0.0,
                count: 0,
            };
        }
        let sq = values.iter().map(|v| v * v).sum::<f64>() / n as f64;
        Stats {
            rmse: sq.sqrt(),
            mean: values.iter().sum::<f64>() / n as f64,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: n,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub ape_times: Vec<f64>,
    pub ape: Vec<f64>,
    pub rpe: Vec<RpeSample>,
    pub ape_stats: Stats,
    pub rpe_stats: Stats,
    pub transform: GaugeTransform,
    pub unmatched: usize,
    pub translation_only: bool,
    pub delta: f64,
}

impl MetricReport {
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new("metrics");
        kv.set("metric", if self.translation_only { "translation" } else { "frobenius" });
        kv.set("ape_rmse", fmt_f64(self.ape_stats.rmse));
        kv.set("ape_mean", fmt_f64(self.ape_stats.mean));
        kv.set("ape_max", fmt_f64(self.ape_stats.max));
        kv.set("ape_count", self.ape_stats.count);
        kv.set("rpe_delta", fmt_f64(self.delta));
        kv.set("rpe_rmse", fmt_f64(self.rpe_stats.rmse));
        kv.set("rpe_mean", fmt_f64(self.rpe_stats.mean));
        kv.set("rpe_max", fmt_f64(self.rpe_stats.max));
        kv.set("rpe_count", self.rpe_stats.count);
        kv.set("align_x", fmt_f64(self.transform.x));
        kv.set("align_y", fmt_f64(self.transform.y));
        kv.set("align_yaw", fmt_f64(self.transform.yaw));
        kv.set("align_z", fmt_f64(self.transform.z));
        kv.set("unmatched", self.unmatched);
        kv
    }

    /// `ape t value` and `rpe t_i t_j value` lines.
    pub fn series_text(&self) -> String {
        let mut s = String::from("# ape t value\n# rpe t_i t_j value\n");
        for (t, v) in self.ape_times.iter().zip(&self.ape) {
            let _ = writeln!(s, "ape {} {}", fmt_f64(*t), fmt_f64(*v));
        }
        for r in &self.rpe {
            let _ = writeln!(s, "rpe {} {} {}", fmt_f64(r.t_i), fmt_f64(r.t_j), fmt_f64(r.value));
        }
        s
    }
}

/// Aligns `estimate` to `reference` and computes both metrics.
pub fn evaluate(reference: &[TimedPose], estimate: &[TimedPose], cfg: &EvalConfig) -> Result<MetricReport> {
    let pair = align(reference, estimate, cfg)?;
    let ape_values = ape(&pair, cfg.translation_only);
    let rpe_values = rpe(&pair, cfg.delta, cfg.translation_only)?;
    let rv: Vec<f64> = rpe_values.iter().map(|r| r.value).collect();
    Ok(MetricReport {
        ape_times: pair.reference.iter().map(|p| p.t).collect(),
        ape_stats: Stats::of(&ape_values),
        rpe_stats: Stats::of(&rv),
        ape: ape_values,
        rpe: rpe_values,
        transform: pair.transform,
        unmatched: pair.unmatched,
        translation_only: cfg.translation_only,
        delta: cfg.delta,
    })
}

/// Applies a gauge offset `(x, y, z, yaw)` on the left of every pose.
pub fn apply_gauge(traj: &[TimedPose], offset: &Pose) -> Vec<TimedPose> {
    traj.iter()
        .map(|p| TimedPose {
            t: p.t,
            pose: *offset * p.pose,
        })
        .collect()
}

/// Rotation about z by `yaw`, for building gauge offsets.
pub fn yaw_offset(x: f64, y: f64, z: f64, yaw: f64) -> Pose {
    Pose::new(Rotation::rot_z(yaw), Vector3::new(x, y, z))
}
