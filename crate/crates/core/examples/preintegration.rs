//! Preintegrates a 1 s IMU stream and compares the prediction with a
//! fine-step integration of the same motion.

use legged_fg::imu_preint::{ImuBias, ImuNoiseParams, ImuSample, NavState, PreintegratedImu};
use legged_fg::lie::{exp_so3, Pose};
use nalgebra::Vector3;

fn sample(t: f64) -> ImuSample {
    ImuSample {
        t,
        gyro: Vector3::new(0.2 * (3.0 * t).sin(), 0.1, 0.5 * t),
        accel: Vector3::new(1.0 + (2.0 * t).cos(), -0.3, 9.81),
    }
}

/// Holds each 10 ms sample over 100 substeps, each substep using the
/// midpoint rotation.
fn fine_integration(samples: &[ImuSample], dt: f64, gravity: &Vector3<f64>) -> NavState {
    let h = dt / 100.0;
    let mut x = NavState::new(Pose::identity(), Vector3::zeros());
    for s in samples {
        let half = exp_so3(&(s.gyro * (0.5 * h)));
        let full = exp_so3(&(s.gyro * h));
        for _ in 0..100 {
            let a = (x.pose.rotation * half) * s.accel + gravity;
            x.pose.translation += x.velocity * h + 0.5 * a * h * h;
            x.velocity += a * h;
            x.pose.rotation = x.pose.rotation * full;
        }
    }
    x
}

fn main() -> legged_fg::Result<()> {
    let noise = ImuNoiseParams::default();
    let dt = 0.01;
    let samples: Vec<ImuSample> = (0..100).map(|i| sample(i as f64 * dt)).collect();
    let mut pim = PreintegratedImu::new(ImuBias::zero(), &noise);
    pim.integrate_window(&samples, 0.0, 1.0)?;
    println!("Δt = {}", pim.delta_t);
    println!("ΔR·Log = {:?}", pim.delta_r.log().as_slice());
    println!("Δv = {:?}", pim.delta_v.as_slice());
    println!("Δp = {:?}", pim.delta_p.as_slice());

    let start = NavState::new(Pose::identity(), Vector3::zeros());
    let predicted = pim.predict(&start, &ImuBias::zero(), &noise.gravity);
    let truth = fine_integration(&samples, dt, &noise.gravity);
    println!(
        "prediction vs 1e-4 s substeps of the held samples: |Δp| = {:.2e} m, |Δv| = {:.2e} m/s",
        (predicted.pose.translation - truth.pose.translation).norm(),
        (predicted.velocity - truth.velocity).norm()
    );
    println!("√diag(Σ) = {:?}", pim.covariance.diagonal().map(f64::sqrt).as_slice());
    Ok(())
}
