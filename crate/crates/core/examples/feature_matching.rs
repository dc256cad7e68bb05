//! Detect corners in two synthetic frames, match them by descriptor and
//! check each match against the renderer's ground truth.
//!
//! `cargo run --release --example feature_matching`

use dynavo::dataset::{SceneConfig, SyntheticScene};
use dynavo::features::{detect_and_describe, match_features, DetectorConfig};
use dynavo::geometry::{backproject, project};
use dynavo::DepthRange;

fn main() {
    let scene = SyntheticScene::new(SceneConfig { frames: 10, ..SceneConfig::benchmark() }).expect("scene");
    let (a, b) = (scene.render(0), scene.render(5));
    let config = DetectorConfig::default();
    let fa = detect_and_describe(&image::imageops::grayscale(&a.rgb), &config);
    let fb = detect_and_describe(&image::imageops::grayscale(&b.rgb), &config);
    println!("{} and {} features", fa.len(), fb.len());
    let per_level = (0..config.levels).map(|l| fa.iter().filter(|f| f.octave as usize == l).count());
    println!("per pyramid level: {:?}", per_level.collect::<Vec<_>>());

    let da: Vec<_> = fa.iter().map(|f| f.descriptor).collect();
    let db: Vec<_> = fb.iter().map(|f| f.descriptor).collect();
    let matches = match_features(&da, &db, 64, 0.8);

    // a static match is correct when frame a's 3D point reprojects onto it
    let (mut correct, mut wrong, mut mover) = (0, 0, 0);
    for m in &matches {
        let (p, q) = (&fa[m.query], &fb[m.target]);
        if a.is_dynamic_at(&scene, &p.pixel) {
            mover += 1;
            continue;
        }
        let raw = a.depth.get_pixel(p.pixel.x.round() as u32, p.pixel.y.round() as u32)[0];
        let Ok(local) = backproject(&p.pixel, raw as f64, &scene.intrinsics, &DepthRange::default()) else { continue };
        let world = a.pose.apply(&local);
        let Ok(predicted) = project(&b.pose.inverse().apply(&world), &scene.intrinsics) else { continue };
        if (predicted - q.pixel).norm() < 3.0 {
            correct += 1;
        } else {
            wrong += 1;
        }
    }
    println!("{} matches: {correct} static correct, {wrong} static wrong, {mover} on the mover", matches.len());
}
