//! Score depth clusters by the mean robust reprojection error of their
//! matched landmarks and flag the ones that stand out as dynamic.
//!
//! Landmarks come from the previous frame, placed in the world with the
//! true pose; the current pose is also the true one, so only the mover can
//! produce large errors.
//!
//! `cargo run --release --example dynamic_clusters`

use dynavo::clustering::cluster_depth;
use dynavo::dataset::{SceneConfig, SyntheticScene};
use dynavo::dynamic::{classify, compute_cluster_errors, ClusterState, DetectionPolicy, Observation};
use dynavo::features::{detect_and_describe, match_by_projection, DetectorConfig, FeatureGrid, ProjectedPoint};
use dynavo::geometry::{backproject, project};
use dynavo::DepthRange;

fn main() {
    let scene = SyntheticScene::new(SceneConfig { frames: 60, ..SceneConfig::benchmark() }).expect("scene");
    let (prev, cur) = (scene.render(40), scene.render(41));
    let (intr, range) = (scene.intrinsics, DepthRange::default());
    let config = DetectorConfig::default();
    let fp = detect_and_describe(&image::imageops::grayscale(&prev.rgb), &config);
    let fc = detect_and_describe(&image::imageops::grayscale(&cur.rgb), &config);

    let mut landmarks = Vec::new();
    for f in &fp {
        let raw = prev.depth.get_pixel(f.pixel.x.round() as u32, f.pixel.y.round() as u32)[0] as f64;
        if let Ok(local) = backproject(&f.pixel, raw, &intr, &range) {
            landmarks.push((f.descriptor, prev.pose.apply(&local)));
        }
    }
    // guided matching: search around each landmark's predicted projection
    let to_camera = cur.pose.inverse();
    let projected: Vec<(ProjectedPoint, usize)> = landmarks
        .iter()
        .enumerate()
        .filter_map(|(i, (descriptor, world))| {
            let pixel = project(&to_camera.apply(world), &intr).ok().filter(|p| intr.contains(p))?;
            Some((ProjectedPoint { pixel, descriptor: *descriptor }, i))
        })
        .collect();
    let points: Vec<ProjectedPoint> = projected.iter().map(|p| p.0.clone()).collect();
    let grid = FeatureGrid::new(&fc, intr.width, intr.height, 16.0);
    let observations: Vec<Observation> = match_by_projection(&points, &fc, &grid, 15.0, 64, 0.8, &vec![false; fc.len()])
        .iter()
        .map(|m| Observation { pixel: fc[m.target].pixel, world: landmarks[projected[m.query].1].1 })
        .collect();

    let cmap = cluster_depth(&cur.depth, &intr, &range, 24, 4, 42).expect("clustering");
    let errors = compute_cluster_errors(&observations, &cur.pose, &cmap, &intr, 2.0);
    let result = classify(&errors.verdicts, &DetectionPolicy::default());
    println!(
        "{} observations, mean cluster error {:.2}, threshold {:.2}",
        observations.len(),
        result.mean_error,
        result.threshold
    );
    for v in &result.verdicts {
        let on_mover = observations
            .iter()
            .filter(|o| cmap.cluster_of(&o.pixel).ok().flatten() == Some(v.cluster_id))
            .filter(|o| cur.is_dynamic_at(&scene, &o.pixel))
            .count();
        let mark = if v.state == ClusterState::Dynamic { "  <- dynamic" } else { "" };
        println!("cluster {:>2}: m={:>3} r={:>7.2} on mover={:>3} {}{mark}", v.cluster_id, v.m, v.r, on_mover, v.state);
    }
}
