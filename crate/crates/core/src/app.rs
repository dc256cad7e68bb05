//! The `dynavo` command line: `run`, `eval` and `synth`.
//!
//! Exit codes follow sysexits where one fits: 64 bad configuration, 65
//! unparseable input, 66 missing input, 73 unwritable output. A run that
//! loses track for longer than `max_lost` frames exits with 2 after
//! writing the partial trajectory.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Parser;
use thiserror::Error;

use crate::config::{Cli, Command, ConfigError, EvalArgs, MaskSource, PipelineConfig, SynthArgs};
use crate::dataset::{load_tum_with_masks, write_tum_sequence, DatasetError, SceneConfig, SyntheticScene};
use crate::evaluation::{evaluate, EvalError, MetricsReport, Trajectory, DEFAULT_RPE_DELTA};
use crate::semantic::{DirectoryProvider, MaskProvider, RemoteProvider};
use crate::dynamic::write_debug_dump;
use crate::tracker::{SemanticSettings, SemanticStats, Tracker};

pub const EXIT_LOST: u8 = 2;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_DATAERR: u8 = 65;
pub const EXIT_NOINPUT: u8 = 66;
pub const EXIT_CANTCREAT: u8 = 73;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid input: {0}")]
    Data(String),
    #[error("missing input: {0}")]
    NoInput(String),
    #[error("cannot write output: {0}")]
    CantCreate(String),
    #[error("tracking lost for {lost} consecutive frames at frame {frame}")]
    Lost { frame: usize, lost: usize },
}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => EXIT_USAGE,
            AppError::Data(_) => EXIT_DATAERR,
            AppError::NoInput(_) => EXIT_NOINPUT,
            AppError::CantCreate(_) => EXIT_CANTCREAT,
            AppError::Lost { .. } => EXIT_LOST,
        }
    }

    /// Errors while reading a dataset or scene.
    fn reading(e: DatasetError) -> Self {
        match e {
            DatasetError::MissingIndex(_) | DatasetError::Io { .. } => AppError::NoInput(e.to_string()),
            _ => AppError::Data(e.to_string()),
        }
    }

    fn writing(path: &Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |e| AppError::CantCreate(format!("{}: {e}", path.display()))
    }
}

/// What a completed (or abandoned) run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out: PathBuf,
    /// NaN errors when the dataset has no ground truth.
    pub metrics: MetricsReport,
    pub frames: usize,
    pub tracked: usize,
    pub semantic: Option<SemanticStats>,
}

fn provider(config: &PipelineConfig) -> Option<Arc<dyn MaskProvider>> {
    match config.mask_source() {
        MaskSource::Directory(dir) => Some(Arc::new(DirectoryProvider::new(dir))),
        MaskSource::Remote(url) => Some(Arc::new(RemoteProvider::new(&url))),
        MaskSource::Off => None,
    }
}

/// Track every associated frame of `config.dataset` and write
/// `trajectory.txt`, `metrics.txt`, `timing.csv` and optionally
/// `clusters.txt` into `config.out`.
pub fn cmd_run(config: &PipelineConfig) -> Result<RunSummary, AppError> {
    config.validate()?;
    let index = load_tum_with_masks(&config.dataset, config.max_dt, config.masks.as_deref()).map_err(AppError::reading)?;
    std::fs::create_dir_all(&config.out).map_err(AppError::writing(&config.out))?;

    let semantic = provider(config).map(|provider| SemanticSettings {
        provider,
        classes: config.movable_classes(),
        mode: config.mode.into(),
    });
    let mut tracker = Tracker::new(index.intrinsics, config.tracker_config(), semantic);
    let mut timing = String::from("frame,detect_ms,cluster_ms,dyndetect_ms,track_ms,total_ms\n");
    let mut clusters = b"# frame cluster matches mean_error state\n".to_vec();
    let (mut lost, mut tracked) = (0, 0);
    let mut abandoned = None;
    for i in 0..index.len() {
        let (rgb, depth) = index.load_frame(i).map_err(AppError::reading)?;
        match tracker.process(i as u64, index.records[i].timestamp, Arc::new(rgb), Arc::new(depth)) {
            Ok(result) => {
                lost = 0;
                tracked += 1;
                let t = &result.timing;
                let _ = writeln!(
                    timing,
                    "{i},{:.3},{:.3},{:.3},{:.3},{:.3}",
                    t.detect_ms, t.cluster_ms, t.dyndetect_ms, t.track_ms, t.total_ms
                );
                if let (true, Some(c)) = (config.dump_clusters, &result.classification) {
                    write_debug_dump(&mut clusters, result.frame_id, &c.verdicts).expect("writing to memory");
                }
            }
            Err(e) => {
                lost += 1;
                log::warn!("frame {i}: {e}");
                if lost > config.max_lost {
                    abandoned = Some(AppError::Lost { frame: i, lost });
                    break;
                }
            }
        }
    }
    tracker.finish();

    let estimate = Trajectory::new(tracker.trajectory().to_vec()).expect("tracker timestamps increase");
    let mut metrics = match &index.ground_truth {
        Some(gt) if !estimate.is_empty() => match evaluate(&estimate, gt, config.max_dt, DEFAULT_RPE_DELTA) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("evaluation skipped: {e}");
                unscored()
            }
        },
        _ => unscored(),
    };
    metrics.frames = estimate.len();
    metrics.keyframes = tracker.map().keyframe_count();
    metrics.dynamic_rejected = tracker.dynamic_rejected();

    let write = |name: &str, bytes: &[u8]| {
        let p = config.out.join(name);
        std::fs::write(&p, bytes).map_err(AppError::writing(&p))
    };
    write("trajectory.txt", estimate.to_tum_string().as_bytes())?;
    write("metrics.txt", format!("{metrics}\n").as_bytes())?;
    write("timing.csv", timing.as_bytes())?;
    if config.dump_clusters {
        write("clusters.txt", &clusters)?;
    }
    if let Some(e) = abandoned {
        return Err(e);
    }
    Ok(RunSummary {
        out: config.out.clone(),
        metrics,
        frames: index.len(),
        tracked,
        semantic: tracker.semantic_stats(),
    })
}

fn unscored() -> MetricsReport {
    MetricsReport {
        ate_rmse_m: f64::NAN,
        rpe_trans_mps: f64::NAN,
        rpe_rot_dps: f64::NAN,
        frames: 0,
        keyframes: 0,
        dynamic_rejected: 0,
    }
}

fn read_trajectory(path: &Path) -> Result<Trajectory, AppError> {
    if !path.exists() {
        return Err(AppError::NoInput(path.display().to_string()));
    }
    Trajectory::read_tum(path).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))
}

/// Score an estimated trajectory file against a ground-truth file.
pub fn cmd_eval(args: &EvalArgs) -> Result<MetricsReport, AppError> {
    let est = read_trajectory(&args.estimate)?;
    let gt = read_trajectory(&args.truth)?;
    evaluate(&est, &gt, args.max_dt, args.delta).map_err(|e: EvalError| AppError::Data(e.to_string()))
}

/// Render a scene to a TUM-layout directory.
pub fn cmd_synth(args: &SynthArgs) -> Result<SyntheticScene, AppError> {
    let mut scene = match &args.scene {
        Some(path) if !path.exists() => return Err(AppError::NoInput(path.display().to_string())),
        Some(path) => SceneConfig::load(path).map_err(AppError::reading)?,
        None => SceneConfig::benchmark(),
    };
    if let Some(n) = args.frames {
        scene.frames = n;
    }
    if let Some(s) = args.seed {
        scene.seed = s;
    }
    let scene = SyntheticScene::new(scene).map_err(|e| AppError::Data(e.to_string()))?;
    write_tum_sequence(&scene, &args.out).map_err(|e| AppError::CantCreate(e.to_string()))?;
    Ok(scene)
}

/// Parse `args` (including the program name), dispatch and return the
/// process exit code.
pub fn run_cli<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let outcome = match &cli.command {
        Command::Run(a) => a.resolve().map_err(AppError::from).and_then(|c| cmd_run(&c)).map(|s| {
            println!("{}", s.metrics);
            log::info!("tracked {}/{} frames, outputs in {}", s.tracked, s.frames, s.out.display());
        }),
        Command::Eval(a) => cmd_eval(a).map(|m| println!("{m}")),
        Command::Synth(a) => cmd_synth(a).map(|s| {
            log::info!("wrote {} frames to {}", s.config.frames, a.out.display());
        }),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("dynavo: {e}");
            e.exit_code()
        }
    }
}
