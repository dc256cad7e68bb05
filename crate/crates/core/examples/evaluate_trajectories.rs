//! Trajectory metrics: timestamp association, rigid Umeyama alignment,
//! ATE RMSE and per-second relative pose error, plus TUM file round trip.
//!
//! `cargo run --release --example evaluate_trajectories`

use dynavo::evaluation::{align_umeyama, associate_trajectories, ate_rmse, evaluate, rpe, Trajectory};
use dynavo::geometry::se3_exp;
use dynavo::{Pose, Twist};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() {
    // a 10 s circle at 30 Hz
    let truth: Vec<(f64, Pose)> = (0..300)
        .map(|i| {
            let t = i as f64 / 30.0;
            let a = t * std::f64::consts::TAU / 10.0;
            (t, se3_exp(&Twist::new(Vector3::new(0.0, a, 0.0), Vector3::new(a.cos(), 0.1 * a.sin(), a.sin()))))
        })
        .collect();

    // the estimate lives in another frame, drifts slowly and has jitter;
    // its timestamps are offset by 5 ms
    let frame_offset = se3_exp(&Twist::new(Vector3::new(0.1, -0.3, 0.2), Vector3::new(2.0, -1.0, 0.5)));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let jitter = Normal::new(0.0, 0.005).unwrap();
    let estimate: Vec<(f64, Pose)> = truth
        .iter()
        .map(|(t, p)| {
            let drift = se3_exp(&Twist::new(Vector3::zeros(), Vector3::new(0.002 * t, 0.0, 0.0)));
            let noise = Vector3::from_fn(|_, _| jitter.sample(&mut rng));
            let noisy = Pose::new(p.rotation, p.translation + noise);
            (t + 0.005, frame_offset.compose(&drift.compose(&noisy)))
        })
        .collect();

    let gt = Trajectory::new(truth).unwrap();
    let est = Trajectory::new(estimate).unwrap();
    let pairs = associate_trajectories(&est, &gt, 0.02).unwrap();
    let alignment = align_umeyama(&pairs).unwrap();
    let back = alignment.compose(&frame_offset);
    println!("{} pairs; alignment undoes the frame offset to {:.2e} m", pairs.len(), back.translation.norm());
    println!("ATE unaligned {:.4} m, aligned {:.4} m", ate_rmse(&pairs, &Pose::identity()), ate_rmse(&pairs, &alignment));
    let (trans, rot) = rpe(&pairs, 1.0).unwrap();
    println!("RPE {trans:.4} m/s, {rot:.4} deg/s");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("estimate.txt");
    est.write_tum(&path).unwrap();
    let reread = Trajectory::read_tum(&path).unwrap();
    println!("metrics after a TUM file round trip: {}", evaluate(&reread, &gt, 0.02, 1.0).unwrap());
}
