//! Track the reference dynamic sequence with and without the geometry
//! module and compare trajectory error and per-feature detection quality.
//!
//! Detection is scored two ways against the renderer's labels: over judged
//! features (those in clusters that had enough matches to receive a
//! verdict) and over the features matched to the map in stage 1.
//!
//! `cargo run --release --example synthetic_benchmark [frames] [seed]`

use std::sync::Arc;
use std::time::Instant;

use dynavo::dataset::{SceneConfig, SyntheticScene};
use dynavo::evaluation::{evaluate, Confusion, Trajectory, DEFAULT_MAX_DT, DEFAULT_RPE_DELTA};
use dynavo::tracker::{Tracker, TrackerConfig};

struct Outcome {
    trajectory: Trajectory,
    judged: Confusion,
    matched: Confusion,
    keyframes: usize,
    rejected: usize,
    coverage: f64,
}

fn run(scene: &SyntheticScene, geometry: bool) -> Outcome {
    let config = TrackerConfig { geometry, ..TrackerConfig::default() };
    let mut tracker = Tracker::new(scene.intrinsics, config, None);
    let (mut judged, mut matched, mut coverage) = (Confusion::default(), Confusion::default(), 0.0);
    let mut frames = 0;
    for frame in scene.frames() {
        let result = tracker
            .process(frame.index as u64, frame.timestamp, Arc::new(frame.rgb.clone()), Arc::new(frame.depth.clone()))
            .unwrap_or_else(|e| panic!("frame {}: {e}", frame.index));
        for f in result.judged_features() {
            judged.add(f.is_dynamic(), frame.is_dynamic_at(scene, &f.pixel));
        }
        for &fi in &result.stage1_features {
            let f = &result.features[fi];
            matched.add(f.is_dynamic(), frame.is_dynamic_at(scene, &f.pixel));
        }
        coverage += frame.mover_coverage(scene);
        frames += 1;
    }
    Outcome {
        trajectory: Trajectory::new(tracker.trajectory().to_vec()).unwrap(),
        judged,
        matched,
        keyframes: tracker.map().keyframe_count(),
        rejected: tracker.dynamic_rejected(),
        coverage: coverage / frames.max(1) as f64,
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let frames = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(42);
    let scene = SyntheticScene::new(SceneConfig { frames, seed, ..SceneConfig::benchmark() }).expect("scene");
    let gt = scene.ground_truth();
    for (name, geometry) in [("baseline", false), ("geometry", true)] {
        let start = Instant::now();
        let out = run(&scene, geometry);
        let mut report = evaluate(&out.trajectory, &gt, DEFAULT_MAX_DT, DEFAULT_RPE_DELTA).expect("evaluation");
        report.keyframes = out.keyframes;
        report.dynamic_rejected = out.rejected;
        println!("{name:>9}: {report}");
        if geometry {
            println!("{:>9}  mean mover coverage {:.3}", "", out.coverage);
            for (label, c) in [("judged", &out.judged), ("matched", &out.matched)] {
                println!("{:>9}  {label:<8} precision={:.3} recall={:.3} ({c:?})", "", c.precision(), c.recall());
            }
        }
        println!("{:>9}  {:.1} s", "", start.elapsed().as_secs_f64());
    }
}
