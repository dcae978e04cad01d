//! APE and RPE on hand-built trajectories with known answers, and the gauge
//! invariance of the alignment.

use legged_fg::eval::{ape, apply_gauge, evaluate, yaw_offset, AlignedPair, EvalConfig, GaugeTransform};
use legged_fg::io::TimedPose;
use legged_fg::lie::{Pose, Rotation};
use nalgebra::Vector3;

fn main() -> legged_fg::Result<()> {
    let reference: Vec<TimedPose> = (0..=50)
        .map(|i| {
            let t = i as f64 * 0.1;
            let pose = Pose::new(
                Rotation::rot_z(0.3 * t),
                Vector3::new(t.cos() * 2.0, t.sin() * 2.0, 0.3 + 0.01 * t),
            );
            TimedPose { t, pose }
        })
        .collect();
    let cfg = EvalConfig::default();

    // Per-pose deviations on an already aligned pair.
    let mut moved = reference.clone();
    moved[10].pose.translation += Vector3::new(0.3, -0.4, 0.0);
    let theta = 0.2;
    moved[20].pose.rotation = moved[20].pose.rotation * Rotation::rot_z(theta);
    let pair = AlignedPair {
        reference: reference.clone(),
        estimate: moved,
        transform: GaugeTransform { x: 0.0, y: 0.0, yaw: 0.0, z: 0.0 },
        unmatched: 0,
    };
    let v = ape(&pair, false);
    println!("translation by 0.5 m: APE = {:.12} (expected 0.5)", v[10]);
    let expected = 2.0 * 2f64.sqrt() * (theta / 2.0).sin();
    println!("yaw by {theta} rad: APE = {:.12} (expected {expected:.12})", v[20]);

    let offset = yaw_offset(3.0, -1.0, 0.4, 1.2);
    let r = evaluate(&reference, &apply_gauge(&reference, &offset), &cfg)?;
    println!(
        "gauge offset (3, −1, 0.4, 1.2 rad): APE = {:.2e}, RPE = {:.2e}, recovered yaw = {:.6}",
        r.ape_stats.rmse, r.rpe_stats.rmse, r.transform.yaw
    );
    Ok(())
}
