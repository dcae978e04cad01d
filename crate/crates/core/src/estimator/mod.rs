//! Batch proprioceptive state estimation.
//!
//! The graph holds one base pose and velocity per keyframe, a bias shared by
//! the trajectory (or a random-walk chain of per-keyframe biases), one
//! preintegrated IMU factor between consecutive keyframes and, for every leg
//! in a contact phase at a keyframe, a kinematic chain from the base to the
//! foot whose foot is tied to the phase's contact landmark.
//!
//! In [`Mode::Proposed`] the chain carries one link-pose variable per joint
//! and one FK factor per joint. In [`Mode::Baseline`] it is a single lumped
//! base-to-foot factor with a composite noise model.

mod config;
mod prior;

use std::fmt::Write as _;

use indexmap::IndexMap;
use nalgebra::{DVector, Vector3};

use crate::baseline::lumped_noise;
use crate::contact::{contact_noise, segment_phases, ContactFactor, ContactPhase};
use crate::error::{Error, Result};
use crate::factor_graph::{
    lm_optimize, ConvergenceReport, FactorGraph, Key, KeyKind, Values, Variable,
};
use crate::imu_preint::{BiasWalkFactor, ImuBias, ImuFactor, NavState, PreintegratedImu};
use crate::io::{format_tum, TimedPose};
use crate::lie::Pose;
use crate::robot_model::{fk_noise, FkFactor, FootType, JointAngles, RobotModel};
use crate::synthdata::TrajectoryLog;

pub use config::{EstimatorConfig, LumpedNoise, Mode};
pub use prior::{PriorSigmas, StatePriorFactor};

/// Keyframe times closer than this to a sample time are treated as equal.
const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobotState {
    pub t: f64,
    pub pose: Pose,
    /// World frame.
    pub velocity: Vector3<f64>,
    pub bias: ImuBias,
}

/// Estimated contact point. Point feet leave the rotation at identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Landmark {
    pub id: usize,
    pub leg: usize,
    pub start: usize,
    pub end: usize,
    pub pose: Pose,
}

#[derive(Clone, Debug)]
pub struct EstimatedTrajectory {
    pub mode: Mode,
    pub states: Vec<RobotState>,
    pub landmarks: Vec<Landmark>,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Growing-horizon stages run, the last over the full graph.
    pub stages: usize,
    /// LM attempts summed over all stages; `report` covers the last only.
    pub total_iterations: usize,
    pub report: ConvergenceReport,
    pub summary: GraphSummary,
    pub values: Values,
}

impl EstimatedTrajectory {
    pub fn poses(&self) -> Vec<TimedPose> {
        self.states
            .iter()
            .map(|s| TimedPose { t: s.t, pose: s.pose })
            .collect()
    }

    pub fn to_tum(&self) -> String {
        format_tum(&self.poses())
    }

    /// Key-value summary followed by the optimizer trace.
    pub fn report_text(&self) -> String {
        let mut s = String::new();
        let last = self.states.last().map(|s| s.bias).unwrap_or_default();
        let _ = writeln!(s, "mode = {}", self.mode);
        let _ = writeln!(s, "converged = {}", self.report.converged());
        let _ = writeln!(s, "termination = {}", self.report.termination.as_str());
        let _ = writeln!(s, "stages = {}", self.stages);
        let _ = writeln!(s, "iterations = {}", self.total_iterations);
        let _ = writeln!(s, "final_stage_iterations = {}", self.report.iterations());
        let _ = writeln!(s, "initial_objective = {:.16e}", self.initial_objective);
        let _ = writeln!(s, "final_objective = {:.16e}", self.final_objective);
        let _ = writeln!(s, "keyframes = {}", self.states.len());
        let _ = writeln!(s, "landmarks = {}", self.landmarks.len());
        let _ = writeln!(s, "gyro_bias = {:.16e} {:.16e} {:.16e}", last.gyro.x, last.gyro.y, last.gyro.z);
        let _ = writeln!(s, "accel_bias = {:.16e} {:.16e} {:.16e}", last.accel.x, last.accel.y, last.accel.z);
        for (name, n) in &self.summary.factors {
            let _ = writeln!(s, "factors.{name} = {n}");
        }
        for (name, n) in &self.summary.variables {
            let _ = writeln!(s, "variables.{name} = {n}");
        }
        s.push_str(&self.report.to_text());
        s
    }
}

/// Factor and variable counts by category, in first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GraphSummary {
    pub factors: IndexMap<&'static str, usize>,
    pub variables: IndexMap<&'static str, usize>,
}

impl GraphSummary {
    fn of(graph: &FactorGraph, values: &Values) -> Self {
        let mut s = GraphSummary::default();
        for f in graph.iter() {
            *s.factors.entry(f.name()).or_default() += 1;
        }
        for k in values.keys() {
            *s.variables.entry(kind_name(k.kind)).or_default() += 1;
        }
        s
    }

    pub fn factor_count(&self, name: &str) -> usize {
        self.factors.get(name).copied().unwrap_or(0)
    }

    pub fn variable_count(&self, kind: KeyKind) -> usize {
        self.variables.get(kind_name(kind)).copied().unwrap_or(0)
    }
}

fn kind_name(kind: KeyKind) -> &'static str {
    match kind {
        KeyKind::LinkPose => "link_pose",
        KeyKind::BasePose => "base_pose",
        KeyKind::BaseVelocity => "base_velocity",
        KeyKind::Bias => "bias",
        KeyKind::ContactPoint => "contact_point",
        KeyKind::Generic => "generic",
    }
}

/// A built graph with its initial guess and the bookkeeping needed to
/// assemble partial graphs and read results back out.
pub struct Problem {
    pub graph: FactorGraph,
    pub initial: Values,
    pub keyframe_times: Vec<f64>,
    /// Per leg, in time order.
    pub phases: Vec<Vec<ContactPhase>>,
    /// Measured angles per keyframe and leg, in chain order.
    pub angles: Vec<Vec<Vec<f64>>>,
    pub preintegrated: Vec<PreintegratedImu>,
    pub config: EstimatorConfig,
    pub prior: NavState,
    model: RobotModel,
    /// First keyframe of each landmark, indexed by landmark id.
    landmark_start: Vec<usize>,
}

impl Problem {
    pub fn summary(&self) -> GraphSummary {
        GraphSummary::of(&self.graph, &self.initial)
    }

    pub fn keyframes(&self) -> usize {
        self.keyframe_times.len()
    }

    /// Phase of `leg` active at keyframe `k`, if any.
    pub fn phase_at(&self, leg: usize, k: usize) -> Option<&ContactPhase> {
        self.phases[leg].iter().find(|p| p.contains(k))
    }

    pub fn bias_key(&self, k: usize) -> Key {
        if self.config.bias_chain {
            Key::bias(k)
        } else {
            Key::global_bias()
        }
    }

    /// Key of the foot pose of `leg` at keyframe `k`.
    pub fn foot_key(&self, k: usize, leg: usize) -> Key {
        Key::link(k, leg, self.model.legs[leg].len())
    }

    pub fn landmark_key(phase: &ContactPhase) -> Key {
        Key::contact_point(phase.end, phase.leg, phase.landmark)
    }

    /// Whether `key` belongs to the graph restricted to keyframes `< upto`.
    fn key_within(&self, key: &Key, upto: usize) -> bool {
        match key.kind {
            KeyKind::ContactPoint => self.landmark_start[key.depth as usize] < upto,
            _ => key.k == Key::GLOBAL || (key.k as usize) < upto,
        }
    }

    /// Factors over keyframes `< upto`.
    pub fn assemble(&self, upto: usize) -> Result<FactorGraph> {
        let cfg = &self.config;
        let mut graph = FactorGraph::new();
        graph.add(StatePriorFactor::new(
            Key::base_pose(0),
            Key::velocity(0),
            self.bias_key(0),
            self.prior,
            cfg.prior_bias,
            &cfg.prior,
        )?);
        for k in 0..upto.saturating_sub(1) {
            let pre = self.preintegrated[k].clone();
            let dt = pre.delta_t;
            graph.add(ImuFactor::new(
                Key::base_pose(k),
                Key::velocity(k),
                Key::base_pose(k + 1),
                Key::velocity(k + 1),
                self.bias_key(k),
                pre,
                cfg.imu.gravity,
            )?);
            if cfg.bias_chain {
                graph.add(BiasWalkFactor::new(Key::bias(k), Key::bias(k + 1), dt, &cfg.imu)?);
            }
        }
        let fk = fk_noise(cfg.fk_sigma_rot, cfg.fk_sigma_trans)?;
        for k in 0..upto {
            for (leg, chain) in self.model.legs.iter().enumerate() {
                let Some(phase) = self.phase_at(leg, k) else {
                    continue;
                };
                let q = &self.angles[k][leg];
                let foot = self.foot_key(k, leg);
                match cfg.mode {
                    Mode::Proposed => {
                        let mut parent = Key::base_pose(k);
                        for (d, joint) in chain.joints.iter().enumerate() {
                            let child = Key::link(k, leg, d + 1);
                            graph.add(FkFactor::per_joint(parent, child, joint, q[d], fk.clone()));
                            parent = child;
                        }
                    }
                    Mode::Baseline => {
                        let noise = lumped_noise(cfg, chain, q)?;
                        graph.add(FkFactor::lumped(Key::base_pose(k), foot, chain.forward_kinematics(q), noise));
                    }
                }
                let noise = contact_noise(chain.foot_type, cfg.contact_sigma, cfg.contact_sigma_rot)?;
                graph.add(ContactFactor::new(foot, Self::landmark_key(phase), chain.foot_type, noise)?);
            }
        }
        Ok(graph)
    }

    /// Dead-reckons every state from keyframe `first` on, starting from the
    /// state and bias at `first − 1` (or the prior mean when `first` is 0),
    /// then places links by FK and landmarks opened at or after `first`.
    pub fn dead_reckon(&self, values: &mut Values, first: usize) -> Result<()> {
        let cfg = &self.config;
        let n = self.keyframes();
        let (mut state, bias) = if first == 0 {
            (self.prior, cfg.prior_bias)
        } else {
            let b = ImuBias::from_vector(values.vector6(&self.bias_key(first - 1))?);
            let s = NavState::new(
                *values.pose(&Key::base_pose(first - 1))?,
                *values.point(&Key::velocity(first - 1))?,
            );
            (self.preintegrated[first - 1].predict(&s, &b, &cfg.imu.gravity), b)
        };
        if !cfg.bias_chain {
            if first == 0 {
                values.set(Key::global_bias(), Variable::Vector6(bias.to_vector()));
            }
        }
        for k in first..n {
            if k > first {
                state = self.preintegrated[k - 1].predict(&state, &bias, &cfg.imu.gravity);
            }
            values.set(Key::base_pose(k), Variable::Pose(state.pose));
            values.set(Key::velocity(k), Variable::Point(state.velocity));
            if cfg.bias_chain {
                values.set(Key::bias(k), Variable::Vector6(bias.to_vector()));
            }
            for (leg, chain) in self.model.legs.iter().enumerate() {
                let Some(phase) = self.phase_at(leg, k) else {
                    continue;
                };
                let links = chain.link_poses(&self.angles[k][leg]);
                let depths = match cfg.mode {
                    Mode::Proposed => 1..=links.len(),
                    Mode::Baseline => links.len()..=links.len(),
                };
                for d in depths {
                    values.set(Key::link(k, leg, d), Variable::Pose(state.pose * links[d - 1]));
                }
                if phase.start == k {
                    let foot = state.pose * links[links.len() - 1];
                    let lm = match chain.foot_type {
                        FootType::Point => Variable::Point(foot.translation),
                        FootType::Flat => Variable::Pose(foot),
                    };
                    values.set(Self::landmark_key(phase), lm);
                }
            }
        }
        Ok(())
    }

    /// Optimizes over a horizon that starts at `config.horizon` seconds and
    /// doubles until it covers the log. After each stage the remaining
    /// states are dead-reckoned again from the optimized state and bias, so
    /// every stage starts near its optimum. The returned report is that of
    /// the final, full-graph stage, alongside the stage count and the
    /// iteration count summed over stages.
    pub fn optimize(&self) -> Result<(Values, ConvergenceReport, usize, usize)> {
        let n = self.keyframes();
        let mut upto = if self.config.horizon > 0.0 {
            ((self.config.horizon * self.config.keyframe_rate).round() as usize).max(2)
        } else {
            n
        };
        let mut values = self.initial.clone();
        let mut stages = 0;
        let mut total = 0;
        loop {
            stages += 1;
            if upto >= n {
                let (v, report) = lm_optimize(&self.graph, &values, &self.config.lm)?;
                total += report.iterations();
                return Ok((v, report, stages, total));
            }
            let graph = self.assemble(upto)?;
            let mut sub = Values::new();
            for (k, v) in values.iter().filter(|(k, _)| self.key_within(k, upto)) {
                sub.insert(*k, v.clone())?;
            }
            let (opt, report) = lm_optimize(&graph, &sub, &self.config.lm)?;
            total += report.iterations();
            for (k, v) in opt.iter() {
                values.set(*k, v.clone());
            }
            self.dead_reckon(&mut values, upto)?;
            upto *= 2;
        }
    }
}

/// Mean of the first-state prior: the log's first ground-truth pose and its
/// recorded initial velocity.
pub fn prior_mean(log: &TrajectoryLog) -> Result<NavState> {
    let first = log.ground_truth.first().ok_or_else(|| {
        Error::validation("groundtruth", "the first-state prior needs an initial pose")
    })?;
    Ok(NavState::new(first.pose, log.initial_velocity))
}

/// Keyframe times from the first IMU sample to the last joint sample.
pub fn keyframe_times(log: &TrajectoryLog, rate: f64) -> Result<Vec<f64>> {
    let (Some(first), Some(last)) = (log.imu.first(), log.joints.last()) else {
        return Err(Error::EmptyLog);
    };
    let t0 = first.t;
    let n = ((last.t - t0) * rate + TIME_EPS).floor();
    if !(n >= 1.0) {
        return Err(Error::EmptyLog);
    }
    Ok((0..=n as usize).map(|k| t0 + k as f64 / rate).collect())
}

fn median_spacing(t: impl Iterator<Item = f64>) -> Option<f64> {
    let t: Vec<f64> = t.collect();
    let mut d: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    Some(d[d.len() / 2])
}

/// Joint sample nearest to `t`.
fn nearest_joints(joints: &[JointAngles], t: f64) -> &JointAngles {
    let i = joints.partition_point(|j| j.t < t);
    match (i.checked_sub(1), joints.get(i)) {
        (Some(a), Some(b)) if t - joints[a].t <= b.t - t => &joints[a],
        (_, Some(b)) => b,
        (Some(a), None) => &joints[a],
        (None, None) => unreachable!("joint stream checked non-empty"),
    }
}

fn check_inputs(log: &TrajectoryLog, model: &RobotModel, config: &EstimatorConfig) -> Result<()> {
    config.validate()?;
    if log.imu.is_empty() || log.joints.is_empty() || log.contacts.is_empty() {
        return Err(Error::EmptyLog);
    }
    if let Some(name) = model
        .joint_names()
        .into_iter()
        .find(|n| !log.joint_names.iter().any(|l| l == n))
    {
        return Err(Error::validation(
            "joints",
            format!("model joint `{name}` is missing from the log"),
        ));
    }
    if let Some(c) = log.contacts.iter().find(|c| c.flags.len() != model.leg_count()) {
        return Err(Error::validation(
            "contacts",
            format!(
                "sample at t={} has {} flags but the model has {} legs",
                c.t,
                c.flags.len(),
                model.leg_count()
            ),
        ));
    }
    if let Some(dt) = median_spacing(log.imu.iter().map(|s| s.t)) {
        if config.keyframe_rate > 1.0 / dt + TIME_EPS {
            return Err(Error::validation(
                "keyframe_rate",
                format!("{} Hz exceeds the IMU rate {} Hz", config.keyframe_rate, 1.0 / dt),
            ));
        }
    }
    Ok(())
}

/// Dead-reckoned keyframe states, FK link poses and first-keyframe landmarks.
pub fn initialize(log: &TrajectoryLog, model: &RobotModel, config: &EstimatorConfig) -> Result<Values> {
    Ok(build_graph(log, model, config)?.initial)
}

/// Assembles the factor graph and its initial values.
pub fn build_graph(log: &TrajectoryLog, model: &RobotModel, config: &EstimatorConfig) -> Result<Problem> {
    check_inputs(log, model, config)?;
    let times = keyframe_times(log, config.keyframe_rate)?;
    let phases = segment_phases(&log.contacts, &times, &config.segment)?;
    if phases.iter().all(Vec::is_empty) {
        return Err(Error::NoContacts);
    }
    let mut landmark_start = vec![0; phases.iter().map(Vec::len).sum()];
    for p in phases.iter().flatten() {
        landmark_start[p.landmark] = p.start;
    }
    let angles = times
        .iter()
        .map(|&t| {
            let j = nearest_joints(&log.joints, t);
            (0..model.leg_count())
                .map(|leg| model.leg_angles(leg, j))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let preintegrated = times
        .windows(2)
        .map(|w| {
            let mut p = PreintegratedImu::new(config.prior_bias, &config.imu);
            p.integrate_window(&log.imu, w[0], w[1])?;
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut problem = Problem {
        graph: FactorGraph::new(),
        initial: Values::new(),
        keyframe_times: times,
        phases,
        angles,
        preintegrated,
        config: config.clone(),
        prior: prior_mean(log)?,
        model: model.clone(),
        landmark_start,
    };
    let mut initial = Values::new();
    problem.dead_reckon(&mut initial, 0)?;
    problem.initial = initial;
    problem.graph = problem.assemble(problem.keyframes())?;
    Ok(problem)
}

/// Optimizes a built problem and reads out the trajectory.
pub fn solve(problem: &Problem) -> Result<EstimatedTrajectory> {
    let initial_objective = problem.graph.objective(&problem.initial)?;
    let (values, report, stages, total) = problem.optimize()?;
    let mut est = extract(problem, values, report)?;
    est.initial_objective = initial_objective;
    est.stages = stages;
    est.total_iterations = total;
    Ok(est)
}

fn extract(p: &Problem, values: Values, report: ConvergenceReport) -> Result<EstimatedTrajectory> {
    let states = p
        .keyframe_times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            Ok(RobotState {
                t,
                pose: *values.pose(&Key::base_pose(k))?,
                velocity: *values.point(&Key::velocity(k))?,
                bias: ImuBias::from_vector(values.vector6(&p.bias_key(k))?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut landmarks = Vec::new();
    for phase in p.phases.iter().flatten() {
        let key = Problem::landmark_key(phase);
        let pose = match values.get(&key) {
            Some(Variable::Pose(x)) => *x,
            Some(Variable::Point(c)) => Pose::from_translation(*c),
            _ => return Err(Error::MissingKey(key)),
        };
        landmarks.push(Landmark {
            id: phase.landmark,
            leg: phase.leg,
            start: phase.start,
            end: phase.end,
            pose,
        });
    }
    landmarks.sort_by_key(|l| l.id);
    Ok(EstimatedTrajectory {
        mode: p.config.mode,
        states,
        landmarks,
        initial_objective: report.initial_objective,
        final_objective: report.final_objective,
        stages: 1,
        total_iterations: report.iterations(),
        summary: GraphSummary::of(&p.graph, &values),
        report,
        values,
    })
}

/// Builds, initializes and optimizes. Non-convergence is not an error; it
/// is visible in the returned report.
pub fn estimate(log: &TrajectoryLog, model: &RobotModel, config: &EstimatorConfig) -> Result<EstimatedTrajectory> {
    solve(&build_graph(log, model, config)?)
}

/// Whitened residuals of every factor at `values`, grouped by factor name.
pub fn whitened_residuals(graph: &FactorGraph, values: &Values) -> Result<IndexMap<&'static str, Vec<DVector<f64>>>> {
    let mut out: IndexMap<&'static str, Vec<DVector<f64>>> = IndexMap::new();
    for f in graph.iter() {
        let vars = crate::factor_graph::factor_variables(f, values)?;
        let e = f.noise().whiten(&f.error(&vars)?);
        out.entry(f.name()).or_default().push(e);
    }
    Ok(out)
}
