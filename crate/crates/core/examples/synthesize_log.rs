//! Synthesizes a 10 s diagonal trot and writes it as a log directory.
//!
//! Usage: `cargo run --example synthesize_log [out_dir]`

use std::path::PathBuf;

use legged_fg::robot_model::RobotModel;
use legged_fg::synthdata::{generate, write_log, GaitSpec, Shape, LOG_FILES};

fn main() -> legged_fg::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("legged-fg-diagonal"));
    let model = RobotModel::a1();
    let spec = GaitSpec::quadruped_trot(Shape::Diagonal).with_seed(7);
    let log = generate(&spec, &model)?;
    write_log(&log, &out)?;
    println!("wrote {} with {}", out.display(), LOG_FILES.join(", "));
    println!("{} IMU samples, {} ground-truth poses", log.imu.len(), log.ground_truth.len());
    let last = log.ground_truth.last().expect("non-empty log");
    println!("final position {:?}", last.pose.translation.as_slice());
    print!("{}", spec.to_key_values().to_text());
    Ok(())
}
