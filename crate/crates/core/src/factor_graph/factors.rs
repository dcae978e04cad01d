use nalgebra::{DMatrix, DVector};

use super::{pose_of, Factor, Key, NoiseModel, Variable};
use crate::error::{Error, Result};
use crate::lie::{log_se3, right_jacobian_inv_so3, Pose};

fn vector_data(var: &Variable, key: Key) -> Result<DVector<f64>> {
    match var {
        Variable::Point(p) => Ok(DVector::from_column_slice(p.as_slice())),
        Variable::Vector6(v) => Ok(DVector::from_column_slice(v.as_slice())),
        Variable::Vector(v) => Ok(v.clone()),
        Variable::Pose(_) => Err(Error::VariableType {
            key,
            expected: "vector",
        }),
    }
}

/// Absolute prior on a pose: `e = local(prior, x)`.
pub struct PosePriorFactor {
    keys: [Key; 1],
    prior: Pose,
    noise: NoiseModel,
}

impl PosePriorFactor {
    pub fn new(key: Key, prior: Pose, noise: NoiseModel) -> Self {
        PosePriorFactor {
            keys: [key],
            prior,
            noise,
        }
    }
}

impl Factor for PosePriorFactor {
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
        let x = pose_of(vars, 0, self.keys[0])?;
        Ok(DVector::from_column_slice(self.prior.local(x).as_slice()))
    }

    fn analytic_jacobians(&self, vars: &[&Variable]) -> Result<Option<Vec<DMatrix<f64>>>> {
        let x = pose_of(vars, 0, self.keys[0])?;
        let e = self.prior.local(x);
        let ephi = e.fixed_rows::<3>(0).into_owned();
        let mut j = DMatrix::zeros(6, 6);
        j.view_mut((0, 0), (3, 3))
            .copy_from(&right_jacobian_inv_so3(&ephi));
        j.view_mut((3, 3), (3, 3))
            .copy_from(&(self.prior.rotation.transpose() * x.rotation).matrix().clone());
        Ok(Some(vec![j]))
    }

    fn name(&self) -> &'static str {
        "pose_prior"
    }
}

/// Prior on a vector-valued variable: `e = x − mean`.
pub struct VectorPriorFactor {
    keys: [Key; 1],
    mean: DVector<f64>,
    noise: NoiseModel,
}

impl VectorPriorFactor {
    pub fn new(key: Key, mean: DVector<f64>, noise: NoiseModel) -> Self {
        VectorPriorFactor {
            keys: [key],
            mean,
            noise,
        }
    }
}

impl Factor for VectorPriorFactor {
    fn keys(&self) -> &[Key] {
        &self.keys
    }

    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn error(&self, vars: &[&Variable]) -> Result<DVector<f64>> {
        let x = vector_data(vars[0], self.keys[0])?;
        if x.len() != self.mean.len() {
            return Err(Error::VariableType {
                key: self.keys[0],
                expected: "vector of the prior's length",
            });
        }
        Ok(x - &self.mean)
    }

    fn analytic_jacobians(&self, _vars: &[&Variable]) -> Result<Option<Vec<DMatrix<f64>>>> {
        let n = self.mean.len();
        Ok(Some(vec![DMatrix::identity(n, n)]))
    }

    fn name(&self) -> &'static str {
        "vector_prior"
    }
}

/// Relative pose measurement `z ≈ a⁻¹·b`, with `e = Log(z⁻¹·a⁻¹·b)`.
pub struct BetweenPoseFactor {
    keys: [Key; 2],
    measured: Pose,
    noise: NoiseModel,
}

impl BetweenPoseFactor {
    pub fn new(a: Key, b: Key, measured: Pose, noise: NoiseModel) -> Self {
        BetweenPoseFactor {
            keys: [a, b],
            measured,
            noise,
        }
    }
}

impl Factor for BetweenPoseFactor {
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
        let a = pose_of(vars, 0, self.keys[0])?;
        let b = pose_of(vars, 1, self.keys[1])?;
        let e = log_se3(&(self.measured.inverse() * a.between(b)));
        Ok(DVector::from_column_slice(e.as_vector().as_slice()))
    }

    fn name(&self) -> &'static str {
        "between_pose"
    }
}

/// Linear factor `e = Σ Aᵢ·xᵢ − b` over vector-valued variables.
pub struct LinearFactor {
    keys: Vec<Key>,
    a: Vec<DMatrix<f64>>,
    b: DVector<f64>,
    noise: NoiseModel,
}

impl LinearFactor {
    /// # Panics
    /// If the block shapes disagree with each other or with the noise model.
    pub fn new(keys: Vec<Key>, a: Vec<DMatrix<f64>>, b: DVector<f64>, noise: NoiseModel) -> Self {
        assert_eq!(keys.len(), a.len(), "one block per key");
        assert!(a.iter().all(|m| m.nrows() == b.len()), "block rows");
        assert_eq!(noise.dim(), b.len(), "noise dimension");
        LinearFactor { keys, a, b, noise }
    }
}

impl Factor for LinearFactor {
    fn keys(&self) -> &[Key] {
        &self.keys
    }

    fn dim(&self) -> usize {
        self.b.len()
    }

    fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn error(&self, vars: &[&Variable]) -> Result<DVector<f64>> {
        let mut e = -self.b.clone();
        for ((a, var), key) in self.a.iter().zip(vars).zip(&self.keys) {
            let x = vector_data(var, *key)?;
            if x.len() != a.ncols() {
                return Err(Error::VariableType {
                    key: *key,
                    expected: "vector matching the factor block",
                });
            }
            e += a * x;
        }
        Ok(e)
    }

    fn analytic_jacobians(&self, _vars: &[&Variable]) -> Result<Option<Vec<DMatrix<f64>>>> {
        Ok(Some(self.a.clone()))
    }

    fn name(&self) -> &'static str {
        "linear"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor_graph::{numeric_jacobians, FD_STEP};
    use crate::lie::{exp_se3, Twist};
    use nalgebra::Vector3;

    #[test]
    fn pose_prior_jacobian_matches_finite_differences() {
        let prior = exp_se3(&Twist::new(
            Vector3::new(0.3, -0.2, 0.5),
            Vector3::new(1.0, 2.0, -0.5),
        ));
        let x = exp_se3(&Twist::new(
            Vector3::new(-0.4, 0.1, 0.9),
            Vector3::new(0.2, -1.0, 0.3),
        ));
        let f = PosePriorFactor::new(Key::base_pose(0), prior, NoiseModel::isotropic(6, 1.0).unwrap());
        let v = Variable::Pose(x);
        let analytic = f.analytic_jacobians(&[&v]).unwrap().unwrap();
        let numeric = numeric_jacobians(&f, &[&v], FD_STEP).unwrap();
        assert!((&analytic[0] - &numeric[0]).abs().max() < 1e-6);
    }

    #[test]
    fn between_is_zero_at_measurement() {
        let a = exp_se3(&Twist::new(Vector3::new(0.1, 0.2, 0.3), Vector3::new(1.0, 0.0, 0.0)));
        let z = exp_se3(&Twist::new(Vector3::new(-0.2, 0.0, 0.1), Vector3::new(0.0, 0.5, 0.0)));
        let b = a * z;
        let f = BetweenPoseFactor::new(
            Key::base_pose(0),
            Key::base_pose(1),
            z,
            NoiseModel::isotropic(6, 1.0).unwrap(),
        );
        let e = f
            .error(&[&Variable::Pose(a), &Variable::Pose(b)])
            .unwrap();
        assert!(e.norm() < 1e-12);
    }

    #[test]
    fn linear_factor_rejects_pose() {
        let f = LinearFactor::new(
            vec![Key::generic(0)],
            vec![DMatrix::identity(6, 6)],
            DVector::zeros(6),
            NoiseModel::isotropic(6, 1.0).unwrap(),
        );
        assert!(f.error(&[&Variable::Pose(Pose::identity())]).is_err());
    }
}
