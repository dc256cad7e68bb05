//! Keyframe-only semantic filtering: a class mask from disk marks the
//! keyframe's features on movable objects dynamic and removes their map
//! points. A second application changes nothing.
//!
//! `cargo run --release --example semantic_filtering`

use std::sync::Arc;

use dynavo::dataset::{SceneConfig, SyntheticScene};
use dynavo::features::DetectorConfig;
use dynavo::map::Map;
use dynavo::semantic::{filter_keyframe, movable_mask, DirectoryProvider, MaskProvider, MovableClassSet};
use dynavo::tracker::{insert_keyframe, Frame};
use dynavo::DepthRange;

fn main() {
    let scene = SyntheticScene::new(SceneConfig { frames: 30, ..SceneConfig::benchmark() }).expect("scene");
    let rendered = scene.render(20);

    // the renderer writes masks where a segmentation network would
    let dir = tempfile::tempdir().expect("temp dir");
    rendered.mask.save(dir.path().join(dynavo::semantic::mask_file_name(rendered.timestamp))).expect("mask");
    let provider = DirectoryProvider::new(dir.path());

    let rgb = Arc::new(rendered.rgb.clone());
    let frame = Frame::new(
        0,
        rendered.timestamp,
        rgb.clone(),
        Arc::new(rendered.depth.clone()),
        &DetectorConfig::default(),
        &scene.intrinsics,
        &DepthRange::default(),
    );
    let mut map = Map::new();
    let (kf, created) = insert_keyframe(&mut map, &frame, &rendered.pose, &[], 0, &scene.intrinsics);
    println!("keyframe {kf}: {} features, {created} map points", frame.features.len());

    let classes = MovableClassSet::default();
    let mask = provider.provide(kf, rendered.timestamp, &rgb).expect("mask available");
    let movable = movable_mask(&mask, &classes);
    println!("movable pixels after {} px dilation: {}", classes.dilation_radius, movable.count());

    let first = filter_keyframe(&mut map, kf, &movable);
    println!("first pass:  {first:?}");
    let second = filter_keyframe(&mut map, kf, &movable);
    println!("second pass: {second:?}");
    map.audit().expect("map stays consistent");
    let left_on_mover = map.points().filter(|p| rendered.is_dynamic_at(&scene, &frame.features[p.observations[0].1].pixel)).count();
    println!("{} points remain, {left_on_mover} of them on the mover", map.point_count());
}
