//! Segments the contact flags of a short trot into stance phases, each of
//! which becomes one contact-point landmark in the factor graph.

use legged_fg::contact::{segment_phases, SegmentConfig};
use legged_fg::robot_model::RobotModel;
use legged_fg::synthdata::{generate, GaitSpec, Shape};

fn main() -> legged_fg::Result<()> {
    let model = RobotModel::a1();
    let spec = GaitSpec::quadruped_trot(Shape::Straight).with_duration(2.0);
    let log = generate(&spec, &model)?;
    let keyframes: Vec<f64> = (0..=100).map(|k| k as f64 * 0.02).collect();
    let phases = segment_phases(&log.contacts, &keyframes, &SegmentConfig::default())?;
    for (leg, p) in phases.iter().enumerate() {
        println!("leg {leg} ({}):", model.legs[leg].foot_link);
        for ph in p {
            println!(
                "  landmark {:>2}: keyframes {:>3}..={:<3} ({:.2} s to {:.2} s)",
                ph.landmark, ph.start, ph.end, keyframes[ph.start], keyframes[ph.end]
            );
        }
    }
    Ok(())
}
