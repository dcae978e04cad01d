//! Runs both graph structures on the same logs, once with the isotropic
//! lumped covariance and once with the chain-composed one.

use legged_fg::estimator::{estimate, EstimatorConfig, LumpedNoise, Mode};
use legged_fg::eval::{evaluate, EvalConfig};
use legged_fg::robot_model::RobotModel;
use legged_fg::synthdata::{generate, GaitSpec, Shape};

fn main() -> legged_fg::Result<()> {
    let model = RobotModel::a1();
    println!("{:<10} {:<15} {:>12} {:>12} {:>8}", "shape", "baseline noise", "baseline", "proposed", "graph");
    for shape in Shape::all() {
        let spec = GaitSpec::quadruped_trot(shape).with_duration(5.0).with_seed(1);
        let log = generate(&spec, &model)?;
        let reference = log.ground_truth_poses();
        for (label, lumped) in [
            ("isotropic", EstimatorConfig::default().lumped),
            ("chain_composed", LumpedNoise::ChainComposed),
        ] {
            let mut ape = Vec::new();
            let mut sizes = Vec::new();
            for mode in [Mode::Baseline, Mode::Proposed] {
                let cfg = EstimatorConfig {
                    lumped,
                    ..EstimatorConfig::default().with_mode(mode)
                };
                let est = estimate(&log, &model, &cfg)?;
                ape.push(evaluate(&reference, &est.poses(), &EvalConfig::default())?.ape_stats.rmse);
                sizes.push(est.values.len());
            }
            println!(
                "{:<10} {:<15} {:>12.4e} {:>12.4e} {:>3}/{:<4}",
                shape.name(),
                label,
                ape[0],
                ape[1],
                sizes[0],
                sizes[1]
            );
        }
    }
    println!("graph: variables in the baseline / proposed graph");
    Ok(())
}
