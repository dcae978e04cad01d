//! Loads the bundled quadruped and humanoid models and prints their leg
//! chains and foot poses at a nominal configuration.

use legged_fg::robot_model::RobotModel;

fn main() -> legged_fg::Result<()> {
    for name in ["a1", "humanoid"] {
        let model = RobotModel::builtin(name)?;
        println!("{} (base link {}), {} legs", model.name, model.base_link, model.leg_count());
        for leg in &model.legs {
            let q: Vec<f64> = match leg.len() {
                3 => vec![0.0, 0.8, -1.6],
                n => (0..n).map(|i| if i == 3 { 0.6 } else { 0.0 }).collect(),
            };
            let names: Vec<&str> = leg.joints.iter().map(|j| j.name.as_str()).collect();
            let foot = leg.forward_kinematics(&q);
            println!("  {} [{}]: {}", leg.foot_link, leg.foot_type, names.join(" → "));
            println!("    foot at q = {q:?}: {foot}");
        }
    }
    Ok(())
}
