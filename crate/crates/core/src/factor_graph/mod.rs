//! Nonlinear factor graphs over manifold-valued variables, solved in batch
//! with Levenberg-Marquardt.
//!
//! A [`FactorGraph`] holds factors; a [`Values`] holds the variables they
//! connect. [`linearize`] turns both into a whitened [`LinearSystem`] whose
//! column order follows the total order on [`Key`], and [`lm_optimize`] runs
//! the damped Gauss-Newton loop on top of it.

mod factors;
mod linear;
mod lm;
mod noise;
mod solve;

use std::fmt;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::lie::Pose;

pub use factors::{BetweenPoseFactor, LinearFactor, PosePriorFactor, VectorPriorFactor};
pub use linear::{linearize, FactorBlock, LinearSystem, Ordering, FD_STEP};
pub use lm::{lm_optimize, ConvergenceReport, IterationRecord, LmConfig, Termination};
pub use noise::NoiseModel;
pub use solve::{
    nullspace_dimension, singular_values, solve_normal_equations, LinearSolverKind,
    DENSE_THRESHOLD,
};

/// Variable category. The declaration order is part of the column ordering:
/// within a keyframe, link poses are eliminated before the base state and
/// contact points after it, which keeps Cholesky fill local.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeyKind {
    LinkPose,
    BasePose,
    BaseVelocity,
    Bias,
    ContactPoint,
    Generic,
}

/// Identifies one variable by kind, keyframe index, leg and chain depth.
///
/// Ordering is keyframe-major. Contact points are keyed by the last keyframe
/// of their stance phase and carry the landmark id in `depth`; the
/// trajectory-wide bias uses `k = u32::MAX` so it is eliminated last.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Key {
    pub k: u32,
    pub kind: KeyKind,
    pub leg: u16,
    pub depth: u32,
}

impl Key {
    pub const GLOBAL: u32 = u32::MAX;

    pub fn new(kind: KeyKind, k: u32, leg: u16, depth: u32) -> Self {
        Key {
            k,
            kind,
            leg,
            depth,
        }
    }

    pub fn base_pose(k: usize) -> Self {
        Key::new(KeyKind::BasePose, k as u32, 0, 0)
    }

    pub fn velocity(k: usize) -> Self {
        Key::new(KeyKind::BaseVelocity, k as u32, 0, 0)
    }

    /// Bias attached to keyframe `k` (per-keyframe bias chain).
    pub fn bias(k: usize) -> Self {
        Key::new(KeyKind::Bias, k as u32, 0, 0)
    }

    /// The single bias shared by the whole trajectory.
    pub fn global_bias() -> Self {
        Key::new(KeyKind::Bias, Self::GLOBAL, 0, 0)
    }

    /// Pose of the link at `depth` (1-based, counted from the base) on `leg`.
    pub fn link(k: usize, leg: usize, depth: usize) -> Self {
        Key::new(KeyKind::LinkPose, k as u32, leg as u16, depth as u32)
    }

    pub fn contact_point(last_keyframe: usize, leg: usize, landmark: usize) -> Self {
        Key::new(
            KeyKind::ContactPoint,
            last_keyframe as u32,
            leg as u16,
            landmark as u32,
        )
    }

    pub fn generic(i: usize) -> Self {
        Key::new(KeyKind::Generic, 0, 0, i as u32)
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = if self.k == Self::GLOBAL {
            "*".to_string()
        } else {
            self.k.to_string()
        };
        match self.kind {
            KeyKind::BasePose => write!(f, "X{k}"),
            KeyKind::BaseVelocity => write!(f, "V{k}"),
            KeyKind::Bias => write!(f, "B{k}"),
            KeyKind::LinkPose => write!(f, "L{k}:{}:{}", self.leg, self.depth),
            KeyKind::ContactPoint => write!(f, "C{}(leg {})", self.depth, self.leg),
            KeyKind::Generic => write!(f, "G{}", self.depth),
        }
    }
}

/// A manifold element stored in [`Values`].
#[derive(Clone, Debug, PartialEq)]
pub enum Variable {
    Pose(Pose),
    Point(Vector3<f64>),
    Vector6(Vector6<f64>),
    Vector(DVector<f64>),
}

impl Variable {
    pub fn tangent_dim(&self) -> usize {
        match self {
            Variable::Pose(_) | Variable::Vector6(_) => 6,
            Variable::Point(_) => 3,
            Variable::Vector(v) => v.len(),
        }
    }

    pub fn retract(&self, delta: &[f64]) -> Variable {
        match self {
            Variable::Pose(p) => Variable::Pose(p.retract(&Vector6::from_column_slice(delta))),
            Variable::Point(v) => Variable::Point(v + Vector3::from_column_slice(delta)),
            Variable::Vector6(v) => Variable::Vector6(v + Vector6::from_column_slice(delta)),
            Variable::Vector(v) => Variable::Vector(v + DVector::from_column_slice(delta)),
        }
    }

    pub fn as_pose(&self) -> Option<&Pose> {
        match self {
            Variable::Pose(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_point(&self) -> Option<&Vector3<f64>> {
        match self {
            Variable::Point(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_vector6(&self) -> Option<&Vector6<f64>> {
        match self {
            Variable::Vector6(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&DVector<f64>> {
        match self {
            Variable::Vector(v) => Some(v),
            _ => None,
        }
    }
}

/// Typed accessors for factor implementations.
pub fn pose_of<'a>(vars: &[&'a Variable], i: usize, key: Key) -> Result<&'a Pose> {
    vars[i].as_pose().ok_or(Error::VariableType {
        key,
        expected: "pose",
    })
}

pub fn point_of<'a>(vars: &[&'a Variable], i: usize, key: Key) -> Result<&'a Vector3<f64>> {
    vars[i].as_point().ok_or(Error::VariableType {
        key,
        expected: "3-vector",
    })
}

pub fn vector6_of<'a>(
    vars: &[&'a Variable],
    i: usize,
    key: Key,
) -> Result<&'a Vector6<f64>> {
    vars[i].as_vector6().ok_or(Error::VariableType {
        key,
        expected: "6-vector",
    })
}

/// Variable assignment keyed by [`Key`], preserving insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Values {
    map: IndexMap<Key, Variable>,
}

impl Values {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: Key, value: Variable) -> Result<()> {
        if self.map.contains_key(&key) {
            return Err(Error::DuplicateKey(key));
        }
        self.map.insert(key, value);
        Ok(())
    }

    /// Replaces an existing entry or inserts a new one.
    pub fn set(&mut self, key: Key, value: Variable) {
        self.map.insert(key, value);
    }

    pub fn get(&self, key: &Key) -> Option<&Variable> {
        self.map.get(key)
    }

    pub fn pose(&self, key: &Key) -> Result<&Pose> {
        let v = self.map.get(key).ok_or(Error::MissingKey(*key))?;
        v.as_pose().ok_or(Error::VariableType {
            key: *key,
            expected: "pose",
        })
    }

    pub fn point(&self, key: &Key) -> Result<&Vector3<f64>> {
        let v = self.map.get(key).ok_or(Error::MissingKey(*key))?;
        v.as_point().ok_or(Error::VariableType {
            key: *key,
            expected: "3-vector",
        })
    }

    pub fn vector6(&self, key: &Key) -> Result<&Vector6<f64>> {
        let v = self.map.get(key).ok_or(Error::MissingKey(*key))?;
        v.as_vector6().ok_or(Error::VariableType {
            key: *key,
            expected: "6-vector",
        })
    }

    pub fn contains(&self, key: &Key) -> bool {
        self.map.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &Key> {
        self.map.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Key, &Variable)> {
        self.map.iter()
    }

    /// Total tangent dimension.
    pub fn dim(&self) -> usize {
        self.map.values().map(Variable::tangent_dim).sum()
    }

    /// Applies a stacked tangent update laid out by `ordering`.
    pub fn retract(&self, ordering: &Ordering, delta: &DVector<f64>) -> Values {
        let mut out = self.clone();
        for (i, key) in ordering.keys().iter().enumerate() {
            let off = ordering.offset(i);
            let dim = ordering.dim(i);
            if let Some(v) = out.map.get_mut(key) {
                *v = v.retract(&delta.as_slice()[off..off + dim]);
            }
        }
        out
    }
}

/// One probabilistic constraint over an ordered set of variables.
///
/// `error` returns the unwhitened residual; the graph applies the noise
/// model. Factors without analytic Jacobians are differentiated by central
/// finite differences on the tangent space.
pub trait Factor: Send + Sync {
    fn keys(&self) -> &[Key];

    fn dim(&self) -> usize;

    fn noise(&self) -> &NoiseModel;

    fn error(&self, vars: &[&Variable]) -> Result<DVector<f64>>;

    /// Jacobians of `error` with respect to each key's tangent, if available.
    fn analytic_jacobians(&self, _vars: &[&Variable]) -> Result<Option<Vec<DMatrix<f64>>>> {
        Ok(None)
    }

    fn name(&self) -> &'static str;
}

/// Gathers the variables a factor touches, in the factor's key order.
pub fn factor_variables<'a>(factor: &dyn Factor, values: &'a Values) -> Result<Vec<&'a Variable>> {
    factor
        .keys()
        .iter()
        .map(|k| values.get(k).ok_or(Error::MissingKey(*k)))
        .collect()
}

/// Central-difference Jacobians of a factor's unwhitened error.
pub fn numeric_jacobians(
    factor: &dyn Factor,
    vars: &[&Variable],
    step: f64,
) -> Result<Vec<DMatrix<f64>>> {
    let mut out = Vec::with_capacity(vars.len());
    let mut work: Vec<Variable> = vars.iter().map(|v| (*v).clone()).collect();
    for i in 0..vars.len() {
        let dim = vars[i].tangent_dim();
        let mut jac = DMatrix::zeros(factor.dim(), dim);
        let mut delta = vec![0.0; dim];
        for c in 0..dim {
            delta[c] = step;
            work[i] = vars[i].retract(&delta);
            let plus = factor.error(&work.iter().collect::<Vec<_>>())?;
            delta[c] = -step;
            work[i] = vars[i].retract(&delta);
            let minus = factor.error(&work.iter().collect::<Vec<_>>())?;
            delta[c] = 0.0;
            jac.set_column(c, &((plus - minus) / (2.0 * step)));
        }
        work[i] = vars[i].clone();
        out.push(jac);
    }
    Ok(out)
}

/// Jacobians of a factor: analytic when implemented, numeric otherwise.
pub fn factor_jacobians(factor: &dyn Factor, vars: &[&Variable]) -> Result<Vec<DMatrix<f64>>> {
    match factor.analytic_jacobians(vars)? {
        Some(j) => Ok(j),
        None => numeric_jacobians(factor, vars, FD_STEP),
    }
}

/// Insertion-ordered collection of factors.
#[derive(Default)]
pub struct FactorGraph {
    factors: Vec<Box<dyn Factor>>,
}

impl FactorGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<F: Factor + 'static>(&mut self, factor: F) -> usize {
        self.factors.push(Box::new(factor));
        self.factors.len() - 1
    }

    pub fn add_boxed(&mut self, factor: Box<dyn Factor>) -> usize {
        self.factors.push(factor);
        self.factors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn factors(&self) -> &[Box<dyn Factor>] {
        &self.factors
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Factor> {
        self.factors.iter().map(|f| f.as_ref())
    }

    /// Number of factors whose [`Factor::name`] equals `name`.
    pub fn count_named(&self, name: &str) -> usize {
        self.iter().filter(|f| f.name() == name).count()
    }

    /// Sum of squared Mahalanobis norms of all factor errors.
    pub fn objective(&self, values: &Values) -> Result<f64> {
        let mut total = 0.0;
        for f in self.iter() {
            let vars = factor_variables(f, values)?;
            let e = f.error(&vars)?;
            total += f.noise().whiten(&e).norm_squared();
        }
        Ok(total)
    }

    /// Removes factors for which `keep` returns false.
    pub fn retain(&mut self, mut keep: impl FnMut(&dyn Factor) -> bool) {
        self.factors.retain(|f| keep(f.as_ref()));
    }
}
