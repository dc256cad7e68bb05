//! Motion-only pose refinement: Gauss-Newton on Huber-weighted
//! reprojection errors with chi-square outlier gating between rounds.
//!
//! `cargo run --release --example pose_optimization`

use dynavo::dynamic::Observation;
use dynavo::geometry::{project, se3_exp};
use dynavo::tracker::{optimize_pose, OptimizerParams};
use dynavo::{CameraIntrinsics, Pose, Twist};
use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let intr = CameraIntrinsics::tum_freiburg3();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let truth = se3_exp(&Twist::new(Vector3::new(0.05, -0.02, 0.03), Vector3::new(0.2, 0.1, -0.1)));

    let mut observations = Vec::new();
    while observations.len() < 300 {
        let local = Vector3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.0..1.0), rng.random_range(1.0..5.0));
        let Ok(pixel) = project(&local, &intr) else { continue };
        if !intr.contains(&pixel) {
            continue;
        }
        let noise = Vector2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        observations.push(Observation { pixel: pixel + noise, world: truth.apply(&local) });
    }
    // a fifth of the matches are wrong, as if they sat on a moving object
    for o in observations.iter_mut().take(60) {
        o.pixel += Vector2::new(rng.random_range(15.0..40.0), rng.random_range(-40.0..-15.0));
    }

    // 5 cm and 3 degrees away from the truth
    let offset = se3_exp(&Twist::new(Vector3::new(0.0, 3f64.to_radians(), 0.0), Vector3::new(0.03, 0.04, 0.0)));
    let initial: Pose = truth.compose(&offset);
    let est = optimize_pose(&observations, &initial, &intr, &OptimizerParams::default()).expect("optimization");
    println!("round costs {:?}", est.round_costs.iter().map(|c| format!("{c:.1}")).collect::<Vec<_>>());
    println!("inliers {}/{}, outliers caught {}", est.inlier_count(), observations.len(), est.inliers[..60].iter().filter(|&&i| !i).count());
    let error = truth.inverse().compose(&est.pose);
    println!(
        "start error {:.1} mm / {:.2} deg, final error {:.2} mm / {:.3} deg",
        offset.translation.norm() * 1e3,
        offset.angle().to_degrees(),
        error.translation.norm() * 1e3,
        error.angle().to_degrees()
    );
}
