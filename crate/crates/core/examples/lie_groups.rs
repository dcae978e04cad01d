//! Exponential and logarithm maps on SO(3) and SE(3), adjoints and the
//! decoupled retraction used by the optimizer.

use legged_fg::lie::{exp_se3, exp_so3, log_se3, log_so3, right_jacobian_so3, Pose, Rotation, Twist};
use nalgebra::{Vector3, Vector6};

fn main() {
    let omega = Vector3::new(0.3, -0.2, 1.1);
    let r = exp_so3(&omega);
    println!("Exp(ω) for ω = {:?}", omega.as_slice());
    println!("  Log(Exp(ω)) = {:?}", log_so3(&r).as_slice());
    println!("  orthonormality error = {:.2e}", r.orthonormality_error());

    // First-order check of the right Jacobian.
    let d = Vector3::new(1e-6, 0.0, -2e-6);
    let lhs = exp_so3(&(omega + d));
    let rhs = r * exp_so3(&(right_jacobian_so3(&omega) * d));
    println!("  |Exp(ω+δ) − Exp(ω)·Exp(Jr·δ)| = {:.2e}", (lhs.matrix() - rhs.matrix()).norm());

    let xi = Twist::new(Vector3::new(0.1, 0.2, -0.4), Vector3::new(1.0, -0.5, 0.25));
    let t = exp_se3(&xi);
    println!("Exp(ξ) = {t}");
    println!("  Log(Exp(ξ)) = {:?}", log_se3(&t).as_vector().as_slice());

    let a = Pose::new(Rotation::from_rpy(0.1, -0.3, 0.7), Vector3::new(1.0, 2.0, 0.5));
    let ad = a.adjoint();
    let lhs = a * exp_se3(&xi) * a.inverse();
    let rhs = exp_se3(&Twist(ad * xi.as_vector()));
    println!("  A·Exp(ξ)·A⁻¹ vs Exp(Ad(A)·ξ): {:.2e}", (lhs.matrix() - rhs.matrix()).norm());

    let delta = Vector6::new(0.01, -0.02, 0.03, 0.1, 0.0, -0.1);
    let moved = a.retract(&delta);
    println!("retract then local recovers δ: {:?}", a.local(&moved).as_slice());
}
