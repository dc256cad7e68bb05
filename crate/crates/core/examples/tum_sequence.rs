//! Run the full pipeline on a TUM-layout directory and score it.
//!
//! With no argument a short synthetic sequence (with masks) is written to
//! a temporary directory first. Pass a TUM RGB-D sequence such as
//! `rgbd_dataset_freiburg3_walking_xyz` and, optionally, a directory of
//! per-timestamp class masks.
//!
//! `cargo run --release --example tum_sequence [sequence_dir] [mask_dir]`

use std::path::PathBuf;

use dynavo::app::cmd_run;
use dynavo::config::PipelineConfig;
use dynavo::dataset::{write_tum_sequence, SceneConfig, SyntheticScene};

fn main() {
    let mut args = std::env::args().skip(1).map(PathBuf::from);
    let scratch = tempfile::tempdir().expect("temp dir");
    let (dataset, masks) = match args.next() {
        Some(dir) => (dir, args.next()),
        None => {
            let scene = SyntheticScene::new(SceneConfig { frames: 90, ..SceneConfig::benchmark() }).expect("scene");
            let dir = scratch.path().join("sequence");
            write_tum_sequence(&scene, &dir).expect("write sequence");
            (dir.clone(), Some(dir.join("masks")))
        }
    };
    println!("sequence {}", dataset.display());

    let base = PipelineConfig { dataset, out: scratch.path().join("full"), ..PipelineConfig::default() };
    let arms = [
        ("both modules", PipelineConfig { masks: masks.clone(), semantic: masks.is_some(), ..base.clone() }),
        ("geometry only", PipelineConfig { semantic: false, ..base.clone() }),
        ("baseline", PipelineConfig { semantic: false, geometry: false, ..base.clone() }),
    ];
    for (name, mut config) in arms {
        config.out = scratch.path().join(name.replace(' ', "_"));
        match cmd_run(&config) {
            Ok(summary) => {
                println!("{name:>13}: {}", summary.metrics);
                if let Some(s) = summary.semantic {
                    println!("{:>13}  {} keyframes filtered, {} map points removed", "", s.filtered_keyframes, s.points_deleted);
                }
            }
            Err(e) => println!("{name:>13}: failed: {e}"),
        }
    }
}
