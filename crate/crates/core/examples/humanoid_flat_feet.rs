//! Biped walk with flat feet: each stance phase is an SE(3) landmark and the
//! contact factor constrains the full sole pose.

use legged_fg::estimator::{estimate, EstimatorConfig};
use legged_fg::eval::{evaluate, EvalConfig};
use legged_fg::robot_model::RobotModel;
use legged_fg::synthdata::{generate, GaitSpec, Shape};

fn main() -> legged_fg::Result<()> {
    let model = RobotModel::humanoid();
    let spec = GaitSpec::biped_walk(Shape::Straight).with_duration(4.0).with_seed(2);
    let log = generate(&spec, &model)?;
    let cfg = EstimatorConfig::for_model(&model);
    let est = estimate(&log, &model, &cfg)?;
    println!("keyframe rate {} Hz, {} keyframes", cfg.keyframe_rate, est.states.len());
    println!("contact factors: {}", est.summary.factor_count("contact"));
    for l in est.landmarks.iter().take(4) {
        println!(
            "landmark {} (leg {}), keyframes {}..={}: {}",
            l.id, l.leg, l.start, l.end, l.pose
        );
    }
    let m = evaluate(&log.ground_truth_poses(), &est.poses(), &EvalConfig::default())?;
    println!("converged = {}, APE RMSE = {:.4e}", est.report.converged(), m.ape_stats.rmse);
    Ok(())
}
