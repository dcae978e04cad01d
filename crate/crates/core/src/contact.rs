//! Stance-phase segmentation of per-foot contact flags and the contact
//! landmark factor.
//!
//! A phase opens at the first sample of an in-contact run that reaches
//! `debounce_on` samples and closes at the last in-contact sample before an
//! off run that reaches `debounce_off` samples. Shorter runs of either kind
//! are absorbed. A phase covers the keyframes whose times fall inside its
//! closed time interval.

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::error::{Error, Result};
use crate::factor_graph::{point_of, pose_of, Factor, Key, NoiseModel, Variable};
use crate::lie::{log_se3, Pose};
use crate::robot_model::FootType;

/// Slack when testing keyframe times against phase bounds.
const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ContactSample {
    pub t: f64,
    pub flags: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ContactPhase {
    pub leg: usize,
    /// First keyframe index, inclusive.
    pub start: usize,
    /// Last keyframe index, inclusive.
    pub end: usize,
    pub landmark: usize,
}

impl ContactPhase {
    pub fn contains(&self, k: usize) -> bool {
        (self.start..=self.end).contains(&k)
    }

    pub fn keyframes(&self) -> usize {
        self.end - self.start + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegmentConfig {
    pub debounce_on: usize,
    pub debounce_off: usize,
    pub min_phase_keyframes: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            debounce_on: 2,
            debounce_off: 2,
            min_phase_keyframes: 2,
        }
    }
}

/// Debounced stance intervals `(t_open, t_close)` of one flag stream.
fn stance_intervals(times: &[f64], flags: &[bool], cfg: &SegmentConfig) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let n = flags.len();
    let mut open: Option<usize> = None;
    let mut last_on = 0;
    let mut i = 0;
    while i < n {
        let run_end = (i..n).find(|&j| flags[j] != flags[i]).unwrap_or(n);
        let len = run_end - i;
        if flags[i] {
            if open.is_none() && len >= cfg.debounce_on {
                open = Some(i);
            }
            last_on = run_end - 1;
        } else if let Some(o) = open {
            if len >= cfg.debounce_off {
                out.push((times[o], times[last_on]));
                open = None;
            }
        }
        i = run_end;
    }
    if let Some(o) = open {
        out.push((times[o], times[last_on]));
    }
    out
}

/// Phases per leg, with landmark ids numbered leg by leg in time order.
pub fn segment_phases(
    samples: &[ContactSample],
    keyframe_times: &[f64],
    cfg: &SegmentConfig,
) -> Result<Vec<Vec<ContactPhase>>> {
    let first = samples.first().ok_or(Error::EmptyContacts)?;
    let legs = first.flags.len();
    if let Some(s) = samples.iter().find(|s| s.flags.len() != legs) {
        return Err(Error::validation(
            "contacts",
            format!("sample at t={} has {} flags, expected {legs}", s.t, s.flags.len()),
        ));
    }
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let mut landmark = 0;
    let mut out = Vec::with_capacity(legs);
    for leg in 0..legs {
        let flags: Vec<bool> = samples.iter().map(|s| s.flags[leg]).collect();
        let mut phases = Vec::new();
        for (t0, t1) in stance_intervals(&times, &flags, cfg) {
            let start = keyframe_times.partition_point(|&t| t < t0 - TIME_EPS);
            let end_excl = keyframe_times.partition_point(|&t| t <= t1 + TIME_EPS);
            if end_excl <= start || end_excl - start < cfg.min_phase_keyframes.max(1) {
                continue;
            }
            phases.push(ContactPhase {
                leg,
                start,
                end: end_excl - 1,
                landmark,
            });
            landmark += 1;
        }
        out.push(phases);
    }
    Ok(out)
}

/// Point foot: `foot.t − c`. Flat foot: `Log(C⁻¹·foot)`.
pub fn contact_error_point(foot: &Pose, landmark: &nalgebra::Vector3<f64>) -> nalgebra::Vector3<f64> {
    foot.translation - landmark
}

pub fn contact_error_flat(foot: &Pose, landmark: &Pose) -> nalgebra::Vector6<f64> {
    *log_se3(&landmark.between(foot)).as_vector()
}

/// Ties a foot link pose to its stance-phase landmark.
pub struct ContactFactor {
    keys: [Key; 2],
    foot_type: FootType,
    noise: NoiseModel,
}

impl ContactFactor {
    pub fn new(foot: Key, landmark: Key, foot_type: FootType, noise: NoiseModel) -> Result<Self> {
        if noise.dim() != foot_type.residual_dim() {
            return Err(Error::InvalidArgument(format!(
                "{foot_type} contact needs a {}-dim noise model",
                foot_type.residual_dim()
            )));
        }
        Ok(ContactFactor {
            keys: [foot, landmark],
            foot_type,
            noise,
        })
    }
}

/// Σ_CP as a noise model: point sigma, plus rotation sigma for flat feet.
pub fn contact_noise(foot_type: FootType, sigma_point: f64, sigma_rot: f64) -> Result<NoiseModel> {
    match foot_type {
        FootType::Point => NoiseModel::isotropic(3, sigma_point),
        FootType::Flat => NoiseModel::diagonal(&[
            sigma_rot,
            sigma_rot,
            sigma_rot,
            sigma_point,
            sigma_point,
            sigma_point,
        ]),
    }
}

impl Factor for ContactFactor {
    fn keys(&self) -> &[Key] {
        &self.keys
    }

    fn dim(&self) -> usize {
        self.foot_type.residual_dim()
    }

    fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn error(&self, vars: &[&Variable]) -> Result<DVector<f64>> {
        let foot = pose_of(vars, 0, self.keys[0])?;
        match self.foot_type {
            FootType::Point => {
                let c = point_of(vars, 1, self.keys[1])?;
                Ok(DVector::from_column_slice(contact_error_point(foot, c).as_slice()))
            }
            FootType::Flat => {
                let c = pose_of(vars, 1, self.keys[1])?;
                Ok(DVector::from_column_slice(contact_error_flat(foot, c).as_slice()))
            }
        }
    }

    fn analytic_jacobians(&self, vars: &[&Variable]) -> Result<Option<Vec<DMatrix<f64>>>> {
        if self.foot_type == FootType::Flat {
            return Ok(None);
        }
        let foot = pose_of(vars, 0, self.keys[0])?;
        let mut jf = DMatrix::zeros(3, 6);
        jf.view_mut((0, 3), (3, 3)).copy_from(foot.rotation.matrix());
        let jc = DMatrix::from_column_slice(3, 3, (-Matrix3::<f64>::identity()).as_slice());
        Ok(Some(vec![jf, jc]))
    }

    fn name(&self) -> &'static str {
        "contact"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor_graph::{
        lm_optimize, numeric_jacobians, FactorGraph, LmConfig, PosePriorFactor, Values, FD_STEP,
    };
    use crate::lie::{exp_se3, Rotation, Twist};
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn stream(flags: &[bool], dt: f64) -> Vec<ContactSample> {
        flags
            .iter()
            .enumerate()
            .map(|(i, f)| ContactSample {
                t: i as f64 * dt,
                flags: vec![*f],
            })
            .collect()
    }

    fn keyframes(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn always_in_contact_is_one_phase() {
        let s = stream(&[true; 37], 0.005);
        let p = segment_phases(&s, &keyframes(10, 0.02), &SegmentConfig::default()).unwrap();
        assert_eq!(p[0].len(), 1);
        assert_eq!((p[0][0].start, p[0][0].end), (0, 9));
    }

    #[test]
    fn alternating_flags_are_suppressed() {
        let flags: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let s = stream(&flags, 0.005);
        let p = segment_phases(&s, &keyframes(25, 0.02), &SegmentConfig::default()).unwrap();
        assert!(p[0].is_empty());
    }

    #[test]
    fn empty_stream_is_an_error() {
        assert!(matches!(
            segment_phases(&[], &[0.0], &SegmentConfig::default()),
            Err(Error::EmptyContacts)
        ));
    }

    /// 0.3 s stance / 0.3 s swing, diagonal pairs offset by half a period.
    fn trot_schedule(duration: f64, rate: f64) -> Vec<ContactSample> {
        let n = (duration * rate).round() as usize + 1;
        (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                let flags = [0.0, 0.5, 0.5, 0.0]
                    .iter()
                    .map(|off| ((t / 0.6 + off).rem_euclid(1.0)) < 0.5)
                    .collect();
                ContactSample { t, flags }
            })
            .collect()
    }

    #[test]
    fn trot_schedule_gives_ten_phases_per_leg() {
        let s = trot_schedule(6.0, 200.0);
        let kf: Vec<f64> = (0..=300).map(|k| k as f64 / 50.0).collect();
        let p = segment_phases(&s, &kf, &SegmentConfig::default()).unwrap();
        for (leg, phases) in p.iter().enumerate() {
            assert_eq!(phases.len(), 10, "leg {leg}");
            for ph in phases {
                // every covered keyframe lies in a scheduled stance window
                for k in ph.start..=ph.end {
                    let off = [0.0, 0.5, 0.5, 0.0][leg];
                    assert!((kf[k] / 0.6 + off).rem_euclid(1.0) < 0.5 + 1e-9);
                }
            }
        }
        let ids: Vec<usize> = p.iter().flatten().map(|ph| ph.landmark).collect();
        assert_eq!(ids, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn short_phases_dropped() {
        // 3 on-samples span a single keyframe
        let mut flags = vec![false; 40];
        flags[10..13].iter_mut().for_each(|f| *f = true);
        let s = stream(&flags, 0.005);
        let p = segment_phases(&s, &keyframes(10, 0.02), &SegmentConfig::default()).unwrap();
        assert!(p[0].is_empty());
    }

    proptest! {
        #[test]
        fn isolated_flips_do_not_change_phases(
            seed_flips in proptest::collection::vec(0usize..600, 0..20)
        ) {
            let clean = trot_schedule(3.0, 200.0);
            let kf: Vec<f64> = (0..=150).map(|k| k as f64 / 50.0).collect();
            let base = segment_phases(&clean, &kf, &SegmentConfig::default()).unwrap();
            let mut noisy = clean.clone();
            let flags0: Vec<bool> = clean.iter().map(|s| s.flags[0]).collect();
            let mut flipped: Vec<usize> = Vec::new();
            for &i in &seed_flips {
                // keep flips isolated and away from schedule transitions
                if i < 2 || i + 2 >= flags0.len() {
                    continue;
                }
                let steady = (i - 2..=i + 2).all(|j| flags0[j] == flags0[i]);
                let isolated = flipped.iter().all(|&f| f.abs_diff(i) > 1);
                if steady && isolated {
                    noisy[i].flags[0] = !noisy[i].flags[0];
                    flipped.push(i);
                }
            }
            let jittered = segment_phases(&noisy, &kf, &SegmentConfig::default()).unwrap();
            prop_assert_eq!(base, jittered);
        }
    }

    #[test]
    fn point_contact_residuals() {
        let foot = Pose::from_translation(Vector3::new(1.0, 2.0, 0.01));
        let c = Vector3::new(1.0, 2.0, 0.0);
        assert!((contact_error_point(&foot, &c) - Vector3::new(0.0, 0.0, 0.01)).norm() < 1e-15);
        assert!(contact_error_point(&foot, &foot.translation).norm() == 0.0);
    }

    #[test]
    fn flat_contact_yaw_offset() {
        let c = Pose::from_translation(Vector3::new(0.3, 0.1, 0.0));
        let foot = Pose::new(Rotation::rot_z(0.1), c.translation);
        let e = contact_error_flat(&foot, &c);
        assert!((e[2] - 0.1).abs() < 1e-9);
        assert!(e.fixed_rows::<3>(3).norm() < 1e-12);
    }

    #[test]
    fn point_jacobians_match_finite_differences() {
        let f = ContactFactor::new(
            Key::link(0, 0, 3),
            Key::contact_point(5, 0, 0),
            FootType::Point,
            contact_noise(FootType::Point, 0.01, 0.05).unwrap(),
        )
        .unwrap();
        let foot = Variable::Pose(exp_se3(&Twist::new(
            Vector3::new(0.3, -0.2, 0.9),
            Vector3::new(1.0, 0.5, -0.1),
        )));
        let c = Variable::Point(Vector3::new(0.2, 0.1, 0.0));
        let a = f.analytic_jacobians(&[&foot, &c]).unwrap().unwrap();
        let n = numeric_jacobians(&f, &[&foot, &c], FD_STEP).unwrap();
        for (a, n) in a.iter().zip(&n) {
            assert!((a - n).abs().max() < 1e-7);
        }
    }

    #[test]
    fn stationary_foot_subgraph_zeroes_all_contact_residuals() {
        // foot poses anchored by priors that agree; landmark free
        let anchor = Vector3::new(0.4, -0.2, 0.0);
        let mut g = FactorGraph::new();
        let mut v = Values::new();
        let lm = Key::contact_point(4, 0, 0);
        for k in 0..5 {
            let key = Key::link(k, 0, 3);
            let foot = Pose::new(Rotation::rot_z(0.1 * k as f64), anchor);
            g.add(PosePriorFactor::new(key, foot, NoiseModel::isotropic(6, 1e-3).unwrap()));
            g.add(
                ContactFactor::new(
                    key,
                    lm,
                    FootType::Point,
                    contact_noise(FootType::Point, 0.01, 0.05).unwrap(),
                )
                .unwrap(),
            );
            v.insert(key, Variable::Pose(foot.retract(&nalgebra::Vector6::repeat(0.01))))
                .unwrap();
        }
        v.insert(lm, Variable::Point(Vector3::zeros())).unwrap();
        let (out, report) = lm_optimize(&g, &v, &LmConfig::default()).unwrap();
        assert!(report.converged());
        for f in g.iter().filter(|f| f.name() == "contact") {
            let vars = crate::factor_graph::factor_variables(f, &out).unwrap();
            assert!(f.error(&vars).unwrap().norm() < 1e-9);
        }
    }
}
