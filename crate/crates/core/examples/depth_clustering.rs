//! Segment a depth image into N clusters with K-Means++ over back-projected
//! points and show how the moving object separates from the background.
//!
//! `cargo run --release --example depth_clustering [clusters]`

use std::time::Instant;

use dynavo::clustering::cluster_depth;
use dynavo::dataset::{SceneConfig, SyntheticScene};
use dynavo::DepthRange;
use nalgebra::Vector2;

fn main() {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(24);
    let scene = SyntheticScene::new(SceneConfig { frames: 60, ..SceneConfig::benchmark() }).expect("scene");
    let frame = scene.render(40);

    let start = Instant::now();
    let cmap = cluster_depth(&frame.depth, &scene.intrinsics, &DepthRange::default(), n, 4, 42).expect("clustering");
    println!("{n} clusters in {:.1} ms", start.elapsed().as_secs_f64() * 1e3);
    let trace = &cmap.objective_trace;
    println!("objective {:.1} -> {:.1} over {} iterations", trace[0], trace[trace.len() - 1], trace.len());

    // mover share of every cluster, from the renderer's object ids
    let (cols, rows) = cmap.grid_dims();
    let mut mover = vec![0usize; n];
    for row in 0..rows {
        for col in 0..cols {
            let Some(label) = cmap.label_at_sample(col, row) else { continue };
            let pixel = Vector2::new((col as u32 * cmap.stride) as f64, (row as u32 * cmap.stride) as f64);
            if frame.is_dynamic_at(&scene, &pixel) {
                mover[label] += 1;
            }
        }
    }
    println!("cluster  samples  mean depth  mover share");
    for j in 0..n {
        let share = mover[j] as f64 / cmap.counts[j].max(1) as f64;
        println!("{j:>7}  {:>7}  {:>9.2}m  {:>10.2}", cmap.counts[j], cmap.centroids[j].z, share);
    }
}
