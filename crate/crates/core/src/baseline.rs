//! The comparison estimator: the same pipeline with one lumped
//! base-to-foot FK factor per leg in contact and no intermediate links.

use nalgebra::{DMatrix, Matrix6, Vector6};

use crate::error::Result;
use crate::estimator::{estimate, EstimatedTrajectory, EstimatorConfig, LumpedNoise, Mode};
use crate::factor_graph::NoiseModel;
use crate::lie::Pose;
use crate::robot_model::{fk_factor_error, fk_noise, JointAngles, LegChain, RobotModel};
use crate::synthdata::TrajectoryLog;

/// Residual of the lumped factor: `Log(FK(q)⁻¹·X⁻¹·F)`.
pub fn baseline_fk_factor_error(
    base: &Pose,
    foot: &Pose,
    model: &RobotModel,
    leg: usize,
    angles: &JointAngles,
) -> Result<Vector6<f64>> {
    Ok(fk_factor_error(base, foot, &model.fk_chain(leg, angles)?))
}

/// Covariance of the composed base-to-foot error when every joint carries
/// an independent right perturbation `ξⱼ ~ N(0, diag(σ_rot², σ_trans²))`:
/// `Σ = Σⱼ Ad(Tⱼ⁻¹)·Σ_FK·Ad(Tⱼ⁻¹)ᵀ` with `Tⱼ` the chain after joint `j`.
pub fn chain_composed_covariance(chain: &LegChain, q: &[f64], sigma_rot: f64, sigma_trans: f64) -> Matrix6<f64> {
    let mut per_joint = Matrix6::zeros();
    for i in 0..3 {
        per_joint[(i, i)] = sigma_rot * sigma_rot;
        per_joint[(i + 3, i + 3)] = sigma_trans * sigma_trans;
    }
    let mut tail = Pose::identity();
    let mut cov = Matrix6::zeros();
    for (joint, &qj) in chain.joints.iter().zip(q).rev() {
        let ad = tail.inverse().adjoint();
        cov += ad * per_joint * ad.transpose();
        tail = joint.transform(qj) * tail;
    }
    cov
}

/// Noise model of one lumped factor under `config`.
pub fn lumped_noise(config: &EstimatorConfig, chain: &LegChain, q: &[f64]) -> Result<NoiseModel> {
    match config.lumped {
        LumpedNoise::Isotropic {
            sigma_rot,
            sigma_trans,
        } => fk_noise(sigma_rot, sigma_trans),
        LumpedNoise::ChainComposed => {
            let c = chain_composed_covariance(chain, q, config.fk_sigma_rot, config.fk_sigma_trans);
            NoiseModel::from_covariance(&DMatrix::from_column_slice(6, 6, c.as_slice()))
        }
    }
}

/// [`estimate`] with the mode forced to [`Mode::Baseline`].
pub fn estimate_baseline(
    log: &TrajectoryLog,
    model: &RobotModel,
    config: &EstimatorConfig,
) -> Result<EstimatedTrajectory> {
    estimate(log, model, &config.clone().with_mode(Mode::Baseline))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor_graph::{Factor, Key, Variable};
    use crate::lie::{exp_se3, Twist};
    use crate::robot_model::FkFactor;
    use nalgebra::Cholesky;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn angles(model: &RobotModel, leg: usize, q: &[f64]) -> JointAngles {
        let mut a = JointAngles::new(0.0);
        for (j, v) in model.legs[leg].joints.iter().zip(q) {
            a.insert(j.name.clone(), *v);
        }
        a
    }

    #[test]
    fn zero_at_exact_kinematics() {
        let model = RobotModel::a1();
        let q = [0.1, 0.7, -1.4];
        let a = angles(&model, 2, &q);
        let base = Pose::from_yaw_translation(0.3, nalgebra::Vector3::new(1.0, 2.0, 0.3));
        let foot = base * model.fk_chain(2, &a).unwrap();
        let e = baseline_fk_factor_error(&base, &foot, &model, 2, &a).unwrap();
        assert!(e.norm() < 1e-12);
    }

    #[test]
    fn zero_per_joint_residuals_imply_zero_lumped_residual() {
        let model = RobotModel::a1();
        let q = [-0.2, 0.9, -1.7];
        let chain = &model.legs[0];
        let base = Pose::from_yaw_translation(-1.0, nalgebra::Vector3::new(0.5, 0.0, 0.28));
        let links: Vec<Pose> = chain.link_poses(&q).iter().map(|l| base * *l).collect();
        let noise = fk_noise(0.002, 0.001).unwrap();
        let mut parent = base;
        for (j, (joint, link)) in chain.joints.iter().zip(&links).enumerate() {
            let f = FkFactor::per_joint(Key::generic(0), Key::generic(1), joint, q[j], noise.clone());
            let e = f.error(&[&Variable::Pose(parent), &Variable::Pose(*link)]).unwrap();
            assert!(e.norm() < 1e-12);
            parent = *link;
        }
        let e = baseline_fk_factor_error(&base, links.last().unwrap(), &model, 0, &angles(&model, 0, &q)).unwrap();
        assert!(e.norm() < 1e-12);
    }

    // Monte-Carlo oracle: sample per-joint perturbations, compose the chain
    // and measure the lumped error covariance directly.
    #[test]
    fn chain_composition_matches_sampled_covariance() {
        let model = RobotModel::a1();
        let chain = &model.legs[1];
        let q = [0.15, 0.8, -1.5];
        let (sr, st) = (0.002, 0.001);
        let predicted = chain_composed_covariance(chain, &q, sr, st);
        let nominal = chain.forward_kinematics(&q);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 40_000;
        let mut sampled = Matrix6::zeros();
        for _ in 0..n {
            let mut t = Pose::identity();
            for (joint, &qj) in chain.joints.iter().zip(&q) {
                let xi = Vector6::from_fn(|i, _| {
                    let s: f64 = rng.sample(StandardNormal);
                    s * if i < 3 { sr } else { st }
                });
                t = t * joint.transform(qj) * exp_se3(&Twist(xi));
            }
            let e = fk_factor_error(&Pose::identity(), &t, &nominal);
            sampled += e * e.transpose();
        }
        sampled /= n as f64;
        let rel = (sampled - predicted).norm() / predicted.norm();
        assert!(rel < 0.03, "relative difference {rel}");
    }

    #[test]
    fn composed_covariance_is_positive_definite_and_exceeds_one_joint() {
        let model = RobotModel::humanoid();
        let q = [0.1, -0.1, -0.4, 0.8, -0.4, 0.1];
        let c = chain_composed_covariance(&model.legs[0], &q, 0.002, 0.001);
        assert!(Cholesky::new(c).is_some());
        for i in 0..6 {
            let one = if i < 3 { 0.002f64.powi(2) } else { 0.001f64.powi(2) };
            assert!(c[(i, i)] > one);
        }
    }
}
