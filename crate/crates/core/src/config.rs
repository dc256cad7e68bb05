//! Pipeline configuration: a flat `key=value` file overridden by
//! `DYNAVO_*` environment variables, overridden by command-line flags.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::dynamic::DetectionPolicy;
use crate::semantic::MovableClassSet;
use crate::tracker::{SemanticMode, TrackerConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{path}:{line}: {message}")]
    File { path: PathBuf, line: usize, message: String },
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Sync,
    Async,
}

impl From<Mode> for SemanticMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Sync => SemanticMode::Sync,
            Mode::Async => SemanticMode::Async,
        }
    }
}

/// Where keyframe masks come from. Exactly one source is configured.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MaskSource {
    Directory(PathBuf),
    Remote(String),
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub masks: Option<PathBuf>,
    pub segment_url: Option<String>,
    pub clusters: usize,
    pub stride: u32,
    pub lambda: f64,
    pub tau_abs: f64,
    pub min_matches: usize,
    pub huber_delta: f64,
    pub classes: BTreeSet<u8>,
    pub dilation: u32,
    pub mode: Mode,
    pub seed: u64,
    pub semantic: bool,
    pub geometry: bool,
    /// rgb/depth association tolerance, seconds.
    pub max_dt: f64,
    /// Consecutive untracked frames after which the run is abandoned.
    pub max_lost: usize,
    pub dump_clusters: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let tracker = TrackerConfig::default();
        Self {
            dataset: PathBuf::new(),
            out: PathBuf::from("out"),
            masks: None,
            segment_url: None,
            clusters: tracker.clusters,
            stride: tracker.stride,
            lambda: tracker.policy.lambda,
            tau_abs: tracker.policy.tau_abs,
            min_matches: tracker.policy.min_matches,
            huber_delta: tracker.optimizer.huber_delta,
            classes: MovableClassSet::default().classes,
            dilation: MovableClassSet::default().dilation_radius,
            mode: Mode::Sync,
            seed: tracker.seed,
            semantic: true,
            geometry: true,
            max_dt: 0.02,
            max_lost: 30,
            dump_clusters: false,
        }
    }
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "on" | "yes" => Ok(true),
        "0" | "false" | "off" | "no" => Ok(false),
        _ => Err(format!("expected a boolean, got '{v}'")),
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| e.to_string())
}

impl PipelineConfig {
    /// Apply one `key=value` setting. Keys use the long flag names; `_`
    /// and `-` are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key.trim().replace('_', "-").as_str() {
            "dataset" => self.dataset = v.into(),
            "out" => self.out = v.into(),
            "masks" => self.masks = (!v.is_empty()).then(|| v.into()),
            "segment-url" => self.segment_url = (!v.is_empty()).then(|| v.to_string()),
            "clusters" => self.clusters = parse_num(v)?,
            "stride" => self.stride = parse_num(v)?,
            "lambda" => self.lambda = parse_num(v)?,
            "tau-abs" => self.tau_abs = parse_num(v)?,
            "min-matches" => self.min_matches = parse_num(v)?,
            "huber-delta" => self.huber_delta = parse_num(v)?,
            "classes" => self.classes = MovableClassSet::parse_classes(v)?,
            "dilation" => self.dilation = parse_num(v)?,
            "mode" => self.mode = Mode::from_str(v, true)?,
            "seed" => self.seed = parse_num(v)?,
            "semantic" => self.semantic = parse_bool(v)?,
            "geometry" => self.geometry = parse_bool(v)?,
            "max-dt" => self.max_dt = parse_num(v)?,
            "max-lost" => self.max_lost = parse_num(v)?,
            "dump-clusters" => self.dump_clusters = parse_bool(v)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Apply a `key=value` file; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.to_path_buf(), message: e.to_string() })?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError::File { path: path.to_path_buf(), line: i + 1, message };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key=value".into()))?;
            self.set(k, v).map_err(err)?;
        }
        Ok(())
    }

    /// Render as a file that `apply_file` reads back to the same config.
    pub fn to_file_string(&self) -> String {
        let classes: Vec<String> = self.classes.iter().map(u8::to_string).collect();
        let mut out = format!("dataset={}\nout={}\n", self.dataset.display(), self.out.display());
        if let Some(m) = &self.masks {
            out += &format!("masks={}\n", m.display());
        }
        if let Some(u) = &self.segment_url {
            out += &format!("segment-url={u}\n");
        }
        out += &format!(
            "clusters={}\nstride={}\nlambda={}\ntau-abs={}\nmin-matches={}\nhuber-delta={}\nclasses={}\ndilation={}\n\
             mode={}\nseed={}\nsemantic={}\ngeometry={}\nmax-dt={}\nmax-lost={}\ndump-clusters={}\n",
            self.clusters,
            self.stride,
            self.lambda,
            self.tau_abs,
            self.min_matches,
            self.huber_delta,
            classes.join(","),
            self.dilation,
            if self.mode == Mode::Sync { "sync" } else { "async" },
            self.seed,
            self.semantic,
            self.geometry,
            self.max_dt,
            self.max_lost,
            self.dump_clusters,
        );
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        let sources = [self.masks.is_some(), self.segment_url.is_some(), !self.semantic];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return bad("configure exactly one of --masks, --segment-url or --no-semantic");
        }
        if self.clusters == 0 {
            return bad("--clusters must be at least 1");
        }
        if self.stride == 0 {
            return bad("--stride must be at least 1");
        }
        if !(self.lambda > 0.0 && self.tau_abs >= 0.0 && self.huber_delta > 0.0 && self.max_dt > 0.0) {
            return bad("lambda, huber-delta and max-dt must be positive, tau-abs non-negative");
        }
        if self.dataset.as_os_str().is_empty() {
            return bad("no dataset directory given");
        }
        Ok(())
    }

    pub fn mask_source(&self) -> MaskSource {
        match (&self.masks, &self.segment_url) {
            (Some(d), _) => MaskSource::Directory(d.clone()),
            (None, Some(u)) => MaskSource::Remote(u.clone()),
            (None, None) => MaskSource::Off,
        }
    }

    pub fn movable_classes(&self) -> MovableClassSet {
        MovableClassSet { classes: self.classes.clone(), dilation_radius: self.dilation }
    }

    pub fn tracker_config(&self) -> TrackerConfig {
        let mut t = TrackerConfig {
            clusters: self.clusters,
            stride: self.stride,
            seed: self.seed,
            geometry: self.geometry,
            policy: DetectionPolicy { lambda: self.lambda, tau_abs: self.tau_abs, min_matches: self.min_matches },
            ..TrackerConfig::default()
        };
        t.optimizer.huber_delta = self.huber_delta;
        t
    }
}

#[derive(Debug, Parser)]
#[command(name = "dynavo", version, about = "RGB-D visual odometry that rejects features on moving objects")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track a TUM-layout sequence and write trajectory, metrics and timings.
    Run(RunArgs),
    /// Score an estimated trajectory against ground truth.
    Eval(EvalArgs),
    /// Render a synthetic sequence in TUM layout from a scene file.
    Synth(SynthArgs),
}

/// Every option also reads `DYNAVO_<NAME>` from the environment; a flag
/// beats the environment, which beats `--config`.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// Sequence directory with rgb.txt and depth.txt.
    #[arg(env = "DYNAVO_DATASET")]
    pub dataset: Option<PathBuf>,
    /// key=value configuration file.
    #[arg(long, env = "DYNAVO_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "DYNAVO_OUT")]
    pub out: Option<PathBuf>,
    /// Directory of per-timestamp label images.
    #[arg(long, env = "DYNAVO_MASKS")]
    pub masks: Option<PathBuf>,
    /// Segmentation service base URL; images are posted to `<url>/segment`.
    #[arg(long, env = "DYNAVO_SEGMENT_URL")]
    pub segment_url: Option<String>,
    #[arg(long, env = "DYNAVO_CLUSTERS")]
    pub clusters: Option<usize>,
    #[arg(long, env = "DYNAVO_STRIDE")]
    pub stride: Option<u32>,
    #[arg(long, env = "DYNAVO_LAMBDA")]
    pub lambda: Option<f64>,
    #[arg(long, env = "DYNAVO_TAU_ABS")]
    pub tau_abs: Option<f64>,
    #[arg(long, env = "DYNAVO_MIN_MATCHES")]
    pub min_matches: Option<usize>,
    #[arg(long, env = "DYNAVO_HUBER_DELTA")]
    pub huber_delta: Option<f64>,
    /// Comma-separated movable class names or indices.
    #[arg(long, env = "DYNAVO_CLASSES")]
    pub classes: Option<String>,
    /// Mask dilation radius, pixels.
    #[arg(long, env = "DYNAVO_DILATION")]
    pub dilation: Option<u32>,
    #[arg(long, value_enum, env = "DYNAVO_MODE")]
    pub mode: Option<Mode>,
    #[arg(long, env = "DYNAVO_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "DYNAVO_NO_SEMANTIC")]
    pub no_semantic: bool,
    #[arg(long, env = "DYNAVO_NO_GEOMETRY")]
    pub no_geometry: bool,
    #[arg(long, env = "DYNAVO_MAX_DT")]
    pub max_dt: Option<f64>,
    #[arg(long, env = "DYNAVO_MAX_LOST")]
    pub max_lost: Option<usize>,
    /// Also write per-frame cluster verdicts to clusters.txt.
    #[arg(long, env = "DYNAVO_DUMP_CLUSTERS")]
    pub dump_clusters: bool,
}

impl RunArgs {
    /// Defaults, then the file, then environment and flags.
    pub fn resolve(&self) -> Result<PipelineConfig, ConfigError> {
        let mut c = PipelineConfig::default();
        if let Some(path) = &self.config {
            c.apply_file(path)?;
        }
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    c.$field = v.clone().into();
                }
            )*};
        }
        take!(dataset, out, clusters, stride, lambda, tau_abs, min_matches, huber_delta, dilation, mode, seed, max_dt, max_lost);
        if let Some(m) = &self.masks {
            c.masks = Some(m.clone());
        }
        if let Some(u) = &self.segment_url {
            c.segment_url = Some(u.clone());
        }
        if let Some(list) = &self.classes {
            c.classes = MovableClassSet::parse_classes(list).map_err(ConfigError::Invalid)?;
        }
        if self.no_semantic {
            c.semantic = false;
        }
        if self.no_geometry {
            c.geometry = false;
        }
        if self.dump_clusters {
            c.dump_clusters = true;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Estimated trajectory, TUM format.
    pub estimate: PathBuf,
    /// Ground-truth trajectory, TUM format.
    pub truth: PathBuf,
    #[arg(long, default_value_t = 0.02)]
    pub max_dt: f64,
    /// RPE window, seconds.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene description (TOML). The benchmark scene is used when omitted.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the scene's frame count.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Overrides the scene's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}
