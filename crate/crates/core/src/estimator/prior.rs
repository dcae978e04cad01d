use nalgebra::{DMatrix, DVector, Vector3};

use crate::factor_graph::{pose_of, vector6_of, Factor, Key, NoiseModel, Variable};
use crate::imu_preint::{ImuBias, NavState};
use crate::lie::right_jacobian_inv_so3;
use crate::{Error, Result};

/// Prior on the first state: `[local(P₀, X); V − v₀; b − b₀]`, 15 rows.
pub struct StatePriorFactor {
    keys: [Key; 3],
    mean: NavState,
    bias: ImuBias,
    noise: NoiseModel,
}

impl StatePriorFactor {
    pub fn new(
        pose: Key,
        velocity: Key,
        bias_key: Key,
        mean: NavState,
        bias: ImuBias,
        sigmas: &PriorSigmas,
    ) -> Result<Self> {
        let mut s = [sigmas.pose; 15];
        s[6..9].fill(sigmas.velocity);
        s[9..].fill(sigmas.bias);
        Ok(StatePriorFactor {
            keys: [pose, velocity, bias_key],
            mean,
            bias,
            noise: NoiseModel::diagonal(&s)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorSigmas {
    /// Shared by the three rotation and three translation components.
    pub pose: f64,
    pub velocity: f64,
    pub bias: f64,
}

impl Default for PriorSigmas {
    fn default() -> Self {
        PriorSigmas {
            pose: 1e-4,
            velocity: 0.1,
            bias: 0.05,
        }
    }
}

fn velocity_of<'a>(vars: &[&'a Variable], i: usize, key: Key) -> Result<&'a Vector3<f64>> {
    vars[i].as_point().ok_or(Error::VariableType {
        key,
        expected: "velocity 3-vector",
    })
}

impl Factor for StatePriorFactor {
    fn keys(&self) -> &[Key] {
        &self.keys
    }

    fn dim(&self) -> usize {
        15
    }

    fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn error(&self, vars: &[&Variable]) -> Result<DVector<f64>> {
        let x = pose_of(vars, 0, self.keys[0])?;
        let v = velocity_of(vars, 1, self.keys[1])?;
        let b = vector6_of(vars, 2, self.keys[2])?;
        let mut e = DVector::zeros(15);
        e.rows_mut(0, 6).copy_from(&self.mean.pose.local(x));
        e.rows_mut(6, 3).copy_from(&(v - self.mean.velocity));
        e.rows_mut(9, 6).copy_from(&(b - self.bias.to_vector()));
        Ok(e)
    }

    fn analytic_jacobians(&self, vars: &[&Variable]) -> Result<Option<Vec<DMatrix<f64>>>> {
        let x = pose_of(vars, 0, self.keys[0])?;
        let e = self.mean.pose.local(x);
        let ephi = e.fixed_rows::<3>(0).into_owned();
        let mut jx = DMatrix::zeros(15, 6);
        jx.view_mut((0, 0), (3, 3))
            .copy_from(&right_jacobian_inv_so3(&ephi));
        jx.view_mut((3, 3), (3, 3))
            .copy_from((self.mean.pose.rotation.transpose() * x.rotation).matrix());
        let mut jv = DMatrix::zeros(15, 3);
        jv.view_mut((6, 0), (3, 3)).fill_with_identity();
        let mut jb = DMatrix::zeros(15, 6);
        jb.view_mut((9, 0), (6, 6)).fill_with_identity();
        Ok(Some(vec![jx, jv, jb]))
    }

    fn name(&self) -> &'static str {
        "state_prior"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor_graph::numeric_jacobians;
    use crate::lie::{Pose, Rotation};
    use nalgebra::Vector6;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_at_mean_and_jacobians_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut r = || rng.random_range(-1.0..1.0);
        let mean = NavState::new(
            Pose::new(Rotation::from_rpy(r(), r(), r()), Vector3::new(r(), r(), r())),
            Vector3::new(r(), r(), r()),
        );
        let bias = ImuBias::from_vector(&Vector6::from_fn(|_, _| 0.01));
        let f = StatePriorFactor::new(
            Key::base_pose(0),
            Key::velocity(0),
            Key::global_bias(),
            mean,
            bias,
            &PriorSigmas::default(),
        )
        .unwrap();
        let at_mean = [
            Variable::Pose(mean.pose),
            Variable::Point(mean.velocity),
            Variable::Vector6(bias.to_vector()),
        ];
        let refs: Vec<&Variable> = at_mean.iter().collect();
        assert_eq!(f.error(&refs).unwrap().norm(), 0.0);

        let d = Vector6::new(0.3, -0.2, 0.1, 0.5, 0.4, -0.3);
        let moved = [
            Variable::Pose(mean.pose.retract(&d)),
            Variable::Point(mean.velocity + Vector3::new(0.1, 0.2, 0.3)),
            Variable::Vector6(Vector6::from_fn(|i, _| i as f64 * 0.1)),
        ];
        let refs: Vec<&Variable> = moved.iter().collect();
        let a = f.analytic_jacobians(&refs).unwrap().unwrap();
        let n = numeric_jacobians(&f, &refs, 1e-6).unwrap();
        for (a, n) in a.iter().zip(&n) {
            assert!((a - n).amax() < 1e-6);
        }
    }
}
