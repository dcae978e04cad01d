//! Runs the per-joint estimator on a noisy 5 s turning trot and reports the
//! graph inventory, convergence and trajectory error.

use legged_fg::estimator::{estimate, EstimatorConfig};
use legged_fg::eval::{evaluate, EvalConfig};
use legged_fg::robot_model::RobotModel;
use legged_fg::synthdata::{generate, GaitSpec, Shape};

fn main() -> legged_fg::Result<()> {
    let model = RobotModel::a1();
    let spec = GaitSpec::quadruped_trot(Shape::Turn { radius: 1.5 })
        .with_duration(5.0)
        .with_seed(3);
    let log = generate(&spec, &model)?;
    let est = estimate(&log, &model, &EstimatorConfig::for_model(&model))?;
    print!("{}", est.report_text());
    let metrics = evaluate(&log.ground_truth_poses(), &est.poses(), &EvalConfig::default())?;
    println!("APE RMSE = {:.4e}", metrics.ape_stats.rmse);
    println!("RPE RMSE = {:.4e}", metrics.rpe_stats.rmse);
    println!("true bias: gyro {:?} accel {:?}", log.initial_bias.gyro.as_slice(), log.initial_bias.accel.as_slice());
    Ok(())
}
