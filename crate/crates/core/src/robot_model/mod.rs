//! Kinematic robot description: a tree of links joined by revolute and
//! fixed joints, reduced to one revolute chain per leg.
//!
//! Each chain joint maps its parent link frame to its child link frame by
//! `M·exp(S·q)`. Fixed joints never appear in a chain: those preceding a
//! revolute joint are folded into its `M`, and those after the last revolute
//! joint are folded in by conjugating the screw axis, so the last chain link
//! is always the foot.

mod urdf;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use nalgebra::{DVector, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::factor_graph::{pose_of, Factor, Key, NoiseModel, Variable};
use crate::lie::{exp_se3, log_se3, Pose, Twist};

pub use urdf::{parse_model, parse_model_with_warnings, ParseOptions};

const A1_URDF: &str = include_str!("../../assets/a1.urdf");
const HUMANOID_URDF: &str = include_str!("../../assets/humanoid.urdf");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FootType {
    /// Contact constrains the foot translation.
    Point,
    /// Contact constrains the full foot pose.
    Flat,
}

impl FootType {
    pub fn as_str(&self) -> &'static str {
        match self {
            FootType::Point => "point",
            FootType::Flat => "flat",
        }
    }

    /// Dimension of the contact residual.
    pub fn residual_dim(&self) -> usize {
        match self {
            FootType::Point => 3,
            FootType::Flat => 6,
        }
    }
}

impl FromStr for FootType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point" => Ok(FootType::Point),
            "flat" => Ok(FootType::Flat),
            other => Err(Error::validation("foot_type", format!("`{other}` is not point|flat"))),
        }
    }
}

impl fmt::Display for FootType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    Fixed,
}

/// A joint exactly as described in the source document.
#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    pub parent: String,
    pub child: String,
    /// Origin translation as written.
    pub xyz: [f64; 3],
    /// Origin fixed-axis roll, pitch, yaw as written.
    pub rpy: [f64; 3],
    /// Rotation axis as written; unused for fixed joints.
    pub axis: [f64; 3],
    /// Parent link frame to joint frame at `q = 0`.
    pub origin: Pose,
    /// `[unit axis; 0]` for revolute joints.
    pub screw: Option<Twist>,
}

impl Joint {
    pub fn origin_from(xyz: [f64; 3], rpy: [f64; 3]) -> Pose {
        Pose::new(
            crate::lie::Rotation::from_rpy(rpy[0], rpy[1], rpy[2]),
            Vector3::from(xyz),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub name: String,
    pub parent_joint: Option<String>,
}

/// One actuated joint of a leg chain after fixed-joint folding.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainJoint {
    pub name: String,
    pub parent_link: String,
    pub child_link: String,
    pub m: Pose,
    pub screw: Twist,
}

impl ChainJoint {
    pub fn transform(&self, q: f64) -> Pose {
        joint_transform(&self.m, &self.screw, q)
    }
}

/// `M·exp(S·q)`.
pub fn joint_transform(m: &Pose, screw: &Twist, q: f64) -> Pose {
    *m * exp_se3(&screw.scale(q))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LegChain {
    pub foot_link: String,
    pub foot_type: FootType,
    /// Base to foot.
    pub joints: Vec<ChainJoint>,
}

impl LegChain {
    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    /// Per-link poses relative to the base; the last entry is the foot.
    pub fn link_poses(&self, q: &[f64]) -> Vec<Pose> {
        let mut t = Pose::identity();
        self.joints
            .iter()
            .zip(q)
            .map(|(j, q)| {
                t = t * j.transform(*q);
                t
            })
            .collect()
    }

    /// Base-to-foot transform.
    pub fn forward_kinematics(&self, q: &[f64]) -> Pose {
        self.joints
            .iter()
            .zip(q)
            .fold(Pose::identity(), |t, (j, q)| t * j.transform(*q))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FootSpec {
    pub link: String,
    pub foot_type: FootType,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub base_link: String,
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
    pub legs: Vec<LegChain>,
}

/// Joint angles at one timestamp, keyed by joint name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct JointAngles {
    pub t: f64,
    pub values: IndexMap<String, f64>,
}

impl JointAngles {
    pub fn new(t: f64) -> Self {
        JointAngles {
            t,
            values: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, q: f64) {
        self.values.insert(name.into(), q);
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        self.values
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingJointAngle(name.to_string()))
    }
}

impl RobotModel {
    /// Validates the link/joint tree and extracts one chain per foot.
    pub fn assemble(
        name: String,
        links: Vec<Link>,
        joints: Vec<Joint>,
        feet: Vec<FootSpec>,
    ) -> Result<RobotModel> {
        let link_index: HashMap<&str, usize> = links
            .iter()
            .enumerate()
            .map(|(i, l)| (l.name.as_str(), i))
            .collect();
        if link_index.len() != links.len() {
            return Err(Error::Model("duplicate link name".into()));
        }
        let mut parent_of: HashMap<&str, &Joint> = HashMap::new();
        for j in &joints {
            for l in [&j.parent, &j.child] {
                if !link_index.contains_key(l.as_str()) {
                    return Err(Error::Model(format!(
                        "joint `{}` references undeclared link `{l}`",
                        j.name
                    )));
                }
            }
            if parent_of.insert(j.child.as_str(), j).is_some() {
                return Err(Error::Model(format!(
                    "link `{}` is the child of more than one joint (second: `{}`)",
                    j.child, j.name
                )));
            }
        }
        // walk up from every link; revisiting a link inside one walk is a cycle
        for l in &links {
            let mut seen = vec![l.name.as_str()];
            let mut cur = l.name.as_str();
            while let Some(j) = parent_of.get(cur) {
                if seen.contains(&j.parent.as_str()) {
                    return Err(Error::JointCycle(j.name.clone()));
                }
                seen.push(j.parent.as_str());
                cur = j.parent.as_str();
            }
        }
        let roots: Vec<&Link> = links
            .iter()
            .filter(|l| !parent_of.contains_key(l.name.as_str()))
            .collect();
        let base_link = match roots.as_slice() {
            [root] => root.name.clone(),
            [] => return Err(Error::Model("no root link".into())),
            _ => {
                let names: Vec<&str> = roots.iter().map(|l| l.name.as_str()).collect();
                return Err(Error::Model(format!(
                    "links do not form a single tree; roots: {}",
                    names.join(", ")
                )));
            }
        };
        let resolved_links: Vec<Link> = links
            .iter()
            .map(|l| Link {
                parent_joint: parent_of.get(l.name.as_str()).map(|j| j.name.clone()),
                name: l.name.clone(),
            })
            .collect();

        let mut legs = Vec::with_capacity(feet.len());
        for foot in &feet {
            if !link_index.contains_key(foot.link.as_str()) {
                return Err(Error::Model(format!("foot link `{}` not found", foot.link)));
            }
            let mut path = Vec::new();
            let mut cur = foot.link.as_str();
            while let Some(j) = parent_of.get(cur) {
                path.push(*j);
                cur = j.parent.as_str();
            }
            path.reverse();
            legs.push(fold_chain(&path, foot)?);
        }
        drop(parent_of);
        Ok(RobotModel {
            name,
            base_link,
            links: resolved_links,
            joints,
            legs,
        })
    }

    pub fn builtin(name: &str) -> Result<RobotModel> {
        match name {
            "a1" => parse_model(A1_URDF, &ParseOptions::default()),
            "humanoid" => parse_model(HUMANOID_URDF, &ParseOptions::default()),
            other => Err(Error::validation(
                "model",
                format!("unknown builtin model `{other}` (expected a1|humanoid)"),
            )),
        }
    }

    pub fn a1() -> RobotModel {
        Self::builtin("a1").expect("bundled model parses")
    }

    pub fn humanoid() -> RobotModel {
        Self::builtin("humanoid").expect("bundled model parses")
    }

    pub fn leg_count(&self) -> usize {
        self.legs.len()
    }

    /// Chain joint names, leg by leg from base to foot.
    pub fn joint_names(&self) -> Vec<&str> {
        self.legs
            .iter()
            .flat_map(|l| l.joints.iter().map(|j| j.name.as_str()))
            .collect()
    }

    pub fn feet(&self) -> Vec<FootSpec> {
        self.legs
            .iter()
            .map(|l| FootSpec {
                link: l.foot_link.clone(),
                foot_type: l.foot_type,
            })
            .collect()
    }

    /// Source joints from the base to `link`, fixed joints included.
    pub fn path_to(&self, link: &str) -> Vec<&Joint> {
        let mut path = Vec::new();
        let mut cur = link;
        while let Some(j) = self.joints.iter().find(|j| j.child == cur) {
            path.push(j);
            cur = &j.parent;
        }
        path.reverse();
        path
    }

    /// Angles of one leg's chain joints in chain order.
    pub fn leg_angles(&self, leg: usize, angles: &JointAngles) -> Result<Vec<f64>> {
        self.legs[leg]
            .joints
            .iter()
            .map(|j| angles.get(&j.name))
            .collect()
    }

    /// Base-to-foot transform of one leg.
    pub fn fk_chain(&self, leg: usize, angles: &JointAngles) -> Result<Pose> {
        let q = self.leg_angles(leg, angles)?;
        Ok(self.legs[leg].forward_kinematics(&q))
    }

    /// Canonical URDF-subset text; parsing it reproduces this model.
    pub fn to_urdf(&self) -> String {
        urdf::serialize(self)
    }
}

fn fold_chain(path: &[&Joint], foot: &FootSpec) -> Result<LegChain> {
    let mut joints: Vec<ChainJoint> = Vec::new();
    let mut pending = Pose::identity();
    let mut pending_parent: Option<&str> = None;
    for j in path {
        match (j.kind, &j.screw) {
            (JointKind::Revolute, Some(s)) => {
                joints.push(ChainJoint {
                    name: j.name.clone(),
                    parent_link: pending_parent.unwrap_or(&j.parent).to_string(),
                    child_link: j.child.clone(),
                    m: pending * j.origin,
                    screw: *s,
                });
                pending = Pose::identity();
                pending_parent = None;
            }
            _ => {
                if pending_parent.is_none() {
                    pending_parent = Some(&j.parent);
                }
                pending = pending * j.origin;
            }
        }
    }
    let Some(last) = joints.last_mut() else {
        return Err(Error::Model(format!(
            "chain to foot `{}` has no revolute joint",
            foot.link
        )));
    };
    if pending_parent.is_some() {
        // M·exp(S·q)·F = (M·F)·exp(Ad_{F⁻¹}·S·q)
        let s = pending.inverse().adjoint() * last.screw.as_vector();
        last.m = last.m * pending;
        last.screw = Twist(s);
        last.child_link = foot.link.clone();
    }
    Ok(LegChain {
        foot_link: foot.link.clone(),
        foot_type: foot.foot_type,
        joints,
    })
}

/// `Log(T_meas⁻¹·parent⁻¹·child)`: zero when `child = parent·T_meas`.
pub fn fk_factor_error(parent: &Pose, child: &Pose, measured: &Pose) -> Vector6<f64> {
    *log_se3(&(measured.inverse() * parent.between(child))).as_vector()
}

/// Kinematic constraint between two link poses given a measured relative
/// transform: one joint in the per-joint graph, a whole leg in the lumped
/// graph.
pub struct FkFactor {
    keys: [Key; 2],
    measured: Pose,
    noise: NoiseModel,
    name: &'static str,
}

impl FkFactor {
    /// Constraint across one joint at measured angle `q`.
    pub fn per_joint(parent: Key, child: Key, joint: &ChainJoint, q: f64, noise: NoiseModel) -> Self {
        FkFactor {
            keys: [parent, child],
            measured: joint.transform(q),
            noise,
            name: "fk",
        }
    }

    /// Constraint across a whole chain given its composed transform.
    pub fn lumped(base: Key, foot: Key, base_to_foot: Pose, noise: NoiseModel) -> Self {
        FkFactor {
            keys: [base, foot],
            measured: base_to_foot,
            noise,
            name: "fk_lumped",
        }
    }

    pub fn measured(&self) -> &Pose {
        &self.measured
    }
}

impl Factor for FkFactor {
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
        let p = pose_of(vars, 0, self.keys[0])?;
        let c = pose_of(vars, 1, self.keys[1])?;
        Ok(DVector::from_column_slice(
            fk_factor_error(p, c, &self.measured).as_slice(),
        ))
    }

    fn name(&self) -> &'static str {
        self.name
    }
}

/// Per-joint FK noise: isotropic rotational and translational sigmas.
pub fn fk_noise(sigma_rot: f64, sigma_trans: f64) -> Result<NoiseModel> {
    NoiseModel::diagonal(&[
        sigma_rot,
        sigma_rot,
        sigma_rot,
        sigma_trans,
        sigma_trans,
        sigma_trans,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor_graph::{lm_optimize, FactorGraph, LmConfig, PosePriorFactor, Values};
    use crate::lie::{exp_so3, Rotation};
    use nalgebra::Matrix4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    const TOY: &str = r#"<robot name="toy">
      <link name="base"/>
      <link name="tip"/>
      <joint name="j" type="revolute">
        <origin xyz="0 0 1" rpy="0 0 0"/>
        <parent link="base"/><child link="tip"/>
        <axis xyz="0 0 1"/>
      </joint>
    </robot>"#;

    fn toy_opts() -> ParseOptions {
        ParseOptions {
            foot_links: Some(vec!["tip".into()]),
            ..Default::default()
        }
    }

    #[test]
    fn toy_document_has_one_chain() {
        let m = parse_model(TOY, &toy_opts()).unwrap();
        assert_eq!(m.legs.len(), 1);
        assert_eq!(m.legs[0].len(), 1);
        assert_eq!(m.base_link, "base");
    }

    #[test]
    fn a1_has_four_three_joint_chains() {
        let m = RobotModel::a1();
        assert_eq!(m.legs.len(), 4);
        assert!(m.legs.iter().all(|l| l.len() == 3));
        assert!(m.legs.iter().all(|l| l.foot_type == FootType::Point));
        assert_eq!(m.joint_names().len(), 12);
    }

    #[test]
    fn humanoid_has_two_flat_six_joint_chains() {
        let m = RobotModel::humanoid();
        assert_eq!(m.legs.len(), 2);
        assert!(m.legs.iter().all(|l| l.len() == 6));
        assert!(m.legs.iter().all(|l| l.foot_type == FootType::Flat));
    }

    #[test]
    fn zero_angle_is_origin() {
        let m = parse_model(TOY, &toy_opts()).unwrap();
        let j = &m.legs[0].joints[0];
        assert_eq!(j.transform(0.0), j.m);
    }

    #[test]
    fn quarter_turn_about_z() {
        let s = Twist::new(Vector3::z(), Vector3::zeros());
        let t = joint_transform(&Pose::identity(), &s, FRAC_PI_2);
        assert!((Rotation::rot_z(FRAC_PI_2).transpose() * t.rotation).log().norm() < 1e-15);
        assert!(t.translation.norm() < 1e-15);
    }

    /// Homogeneous-matrix oracle: origin matrix times the Rodrigues rotation
    /// about the joint axis.
    fn matrix_oracle(j: &Joint, q: f64) -> Matrix4<f64> {
        let axis = Vector3::from(j.axis).normalize();
        let k = crate::lie::skew(&axis);
        let r = nalgebra::Matrix3::identity() + k * q.sin() + k * k * (1.0 - q.cos());
        let mut rot = Matrix4::identity();
        rot.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        j.origin.matrix() * rot
    }

    #[test]
    fn joint_transform_matches_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let xyz = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let rpy = [
                rng.random_range(-3.0..3.0),
                rng.random_range(-1.5..1.5),
                rng.random_range(-3.0..3.0),
            ];
            let axis = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
            let j = Joint {
                name: "j".into(),
                kind: JointKind::Revolute,
                parent: "a".into(),
                child: "b".into(),
                xyz,
                rpy,
                axis: [axis.x, axis.y, axis.z],
                origin: Joint::origin_from(xyz, rpy),
                screw: Some(Twist::new(axis, Vector3::zeros())),
            };
            let q = rng.random_range(-3.0..3.0);
            let t = joint_transform(&j.origin, &j.screw.unwrap(), q);
            assert!((t.matrix() - matrix_oracle(&j, q)).abs().max() < 1e-12);
        }
    }

    fn random_angles(m: &RobotModel, rng: &mut ChaCha8Rng) -> JointAngles {
        let mut a = JointAngles::new(0.0);
        for n in m.joint_names() {
            a.insert(n, rng.random_range(-1.5..1.5));
        }
        a
    }

    #[test]
    fn fk_chain_matches_source_joint_composition() {
        // composing the unfolded source joints, fixed ones included
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for m in [RobotModel::a1(), RobotModel::humanoid()] {
            for _ in 0..1000 {
                let a = random_angles(&m, &mut rng);
                for (leg, chain) in m.legs.iter().enumerate() {
                    let mut oracle = Matrix4::identity();
                    for j in m.path_to(&chain.foot_link) {
                        oracle *= match j.kind {
                            JointKind::Fixed => j.origin.matrix(),
                            JointKind::Revolute => matrix_oracle(j, a.get(&j.name).unwrap()),
                        };
                    }
                    let fk = m.fk_chain(leg, &a).unwrap();
                    assert!((fk.matrix() - oracle).abs().max() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_angles_compose_origins() {
        let m = RobotModel::a1();
        let mut a = JointAngles::new(0.0);
        for n in m.joint_names() {
            a.insert(n, 0.0);
        }
        let fk = m.fk_chain(0, &a).unwrap();
        let product = m.legs[0]
            .joints
            .iter()
            .fold(Pose::identity(), |t, j| t * j.m);
        assert!(product.local(&fk).norm() < 1e-15);
        assert!((fk.translation - Vector3::new(0.1805, 0.047 + 0.0838, -0.4)).norm() < 1e-12);
    }

    #[test]
    fn missing_angle_is_reported() {
        let m = RobotModel::a1();
        let a = JointAngles::new(0.0);
        assert!(matches!(m.fk_chain(0, &a), Err(Error::MissingJointAngle(_))));
    }

    #[test]
    fn fk_error_is_zero_when_consistent() {
        let m = RobotModel::a1();
        let j = &m.legs[1].joints[2];
        let parent = exp_se3(&Twist::new(Vector3::new(0.2, 0.1, -0.3), Vector3::new(1.0, 2.0, 0.3)));
        let child = parent * j.transform(0.7);
        assert!(fk_factor_error(&parent, &child, &j.transform(0.7)).norm() < 1e-12);
    }

    #[test]
    fn fk_error_translation_perturbation() {
        let m = RobotModel::a1();
        let j = &m.legs[0].joints[1];
        let parent = exp_se3(&Twist::new(Vector3::new(0.2, 0.1, -0.3), Vector3::new(1.0, 2.0, 0.3)));
        let mut child = parent * j.transform(0.4);
        let eps = 1e-3;
        child.translation += parent.rotation.matrix() * Vector3::new(eps, 0.0, 0.0);
        let e = fk_factor_error(&parent, &child, &j.transform(0.4));
        assert!(e.norm() >= eps / 2.0 && e.norm() <= 2.0 * eps);
    }

    #[test]
    fn fk_error_angle_offset_on_z_joint() {
        let s = Twist::new(Vector3::z(), Vector3::zeros());
        let parent = Pose::identity();
        let child = joint_transform(&Pose::identity(), &s, 0.3);
        let dq = 0.01;
        let e = fk_factor_error(&parent, &child, &joint_transform(&Pose::identity(), &s, 0.3 + dq));
        assert!((e[2] + dq).abs() < 1e-9);
    }

    #[test]
    fn solved_chain_subgraph_puts_foot_at_fk() {
        let m = RobotModel::a1();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_angles(&m, &mut rng);
        let leg = 2;
        let base = exp_se3(&Twist::new(Vector3::new(0.1, -0.2, 0.3), Vector3::new(0.5, 0.2, 0.3)));
        let mut g = FactorGraph::new();
        g.add(PosePriorFactor::new(
            Key::base_pose(0),
            base,
            NoiseModel::isotropic(6, 1e-4).unwrap(),
        ));
        let mut v = Values::new();
        v.insert(Key::base_pose(0), Variable::Pose(base)).unwrap();
        let q = m.leg_angles(leg, &a).unwrap();
        let mut parent = Key::base_pose(0);
        for (d, j) in m.legs[leg].joints.iter().enumerate() {
            let child = Key::link(0, leg, d + 1);
            g.add(FkFactor::per_joint(parent, child, j, q[d], fk_noise(0.002, 0.001).unwrap()));
            v.insert(child, Variable::Pose(Pose::identity())).unwrap();
            parent = child;
        }
        let (out, report) = lm_optimize(&g, &v, &LmConfig::default()).unwrap();
        assert!(report.converged());
        let foot = out.pose(&Key::link(0, leg, 3)).unwrap();
        let expected = base * m.fk_chain(leg, &a).unwrap();
        assert!(expected.local(foot).norm() < 1e-9);
    }

    #[test]
    fn trailing_fixed_fold_conjugates_screw() {
        let m = RobotModel::a1();
        let calf = &m.legs[0].joints[2];
        // the foot offset turns the pure rotation into a screw with linear part
        assert!(calf.screw.linear().norm() > 0.1);
        assert_eq!(calf.child_link, "FL_foot");
        let r = exp_so3(&Vector3::new(0.0, 0.4, 0.0));
        let foot = Vector3::new(0.0, 0.0, -0.2);
        let fk = calf.transform(0.4);
        assert!((fk.translation - (foot + r.matrix() * foot)).norm() < 1e-12);
    }
}
