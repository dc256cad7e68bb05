//! TUM RGB-D sequence loading and a ray-cast synthetic scene generator that
//! writes the same layout with full ground truth.
//!
//! Synthetic scenes are rooms of planar quads tiled with a checker of random
//! grays; every interior cell vertex is a landmark. Rigid movers are
//! textured boxes following a time-parameterized translation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, RgbImage};
use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{associate_timestamps, format_tum_line, EvalError, Trajectory};
use crate::geometry::{project, CameraIntrinsics, Pose};
use crate::semantic::{mask_file_name, PERSON};
use crate::DepthImage;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing index file {0}")]
    MissingIndex(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("no rgb/depth pairs within {0} s")]
    NoPairs(f64),
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("ground truth: {0}")]
    GroundTruth(#[from] EvalError),
    #[error("invalid scene: {0}")]
    Scene(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

/// Object-id image: 0 = nothing hit, otherwise scene object index + 1.
pub type ObjectImage = ImageBuffer<Luma<u16>, Vec<u16>>;

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub timestamp: f64,
    pub rgb: PathBuf,
    pub depth_timestamp: f64,
    pub depth: PathBuf,
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct SequenceIndex {
    pub root: PathBuf,
    pub records: Vec<SequenceRecord>,
    pub intrinsics: CameraIntrinsics,
    pub ground_truth: Option<Trajectory>,
}

/// Parse a `timestamp path` index file.
fn read_index(path: &Path) -> Result<Vec<(f64, String)>, DatasetError> {
    if !path.exists() {
        return Err(DatasetError::MissingIndex(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse = |message: String| DatasetError::Parse { path: path.to_path_buf(), line: i + 1, message };
        let mut it = line.split_whitespace();
        let t: f64 = it
            .next()
            .unwrap()
            .parse()
            .map_err(|e| parse(format!("timestamp: {e}")))?;
        let file = it.next().ok_or_else(|| parse("missing file name".into()))?;
        if let Some(&(prev, _)) = out.last() {
            if !(t > prev) {
                return Err(parse(format!("timestamp {t} not after {prev}")));
            }
        }
        out.push((t, file.to_string()));
    }
    Ok(out)
}

/// Optional `camera.txt` of `key=value` lines; missing keys keep the
/// freiburg3 defaults.
pub fn read_calibration(path: &Path) -> Result<CameraIntrinsics, DatasetError> {
    let mut intr = CameraIntrinsics::tum_freiburg3();
    if !path.exists() {
        return Ok(intr);
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse = |message: String| DatasetError::Parse { path: path.to_path_buf(), line: i + 1, message };
        let (k, v) = line.split_once('=').ok_or_else(|| parse("expected key=value".into()))?;
        let v = v.trim();
        let num = || v.parse::<f64>().map_err(|e| parse(format!("{k}: {e}")));
        match k.trim() {
            "fx" => intr.fx = num()?,
            "fy" => intr.fy = num()?,
            "cx" => intr.cx = num()?,
            "cy" => intr.cy = num()?,
            "width" => intr.width = v.parse().map_err(|e| parse(format!("width: {e}")))?,
            "height" => intr.height = v.parse().map_err(|e| parse(format!("height: {e}")))?,
            "depth_scale" => intr.depth_scale = num()?,
            other => return Err(parse(format!("unknown key '{other}'"))),
        }
    }
    intr.validate().map_err(|e| DatasetError::Parse { path: path.to_path_buf(), line: 0, message: e.to_string() })?;
    Ok(intr)
}

pub fn write_calibration(path: &Path, intr: &CameraIntrinsics) -> std::io::Result<()> {
    std::fs::write(
        path,
        format!(
            "fx={}\nfy={}\ncx={}\ncy={}\nwidth={}\nheight={}\ndepth_scale={}\n",
            intr.fx, intr.fy, intr.cx, intr.cy, intr.width, intr.height, intr.depth_scale
        ),
    )
}

pub fn load_tum(dir: &Path, max_dt: f64) -> Result<SequenceIndex, DatasetError> {
    load_tum_with_masks(dir, max_dt, None)
}

/// Index a TUM-layout directory. Masks, when a directory is given, are
/// attached by rgb timestamp if the file exists.
pub fn load_tum_with_masks(dir: &Path, max_dt: f64, masks: Option<&Path>) -> Result<SequenceIndex, DatasetError> {
    let rgb = read_index(&dir.join("rgb.txt"))?;
    let depth = read_index(&dir.join("depth.txt"))?;
    let ta: Vec<f64> = rgb.iter().map(|r| r.0).collect();
    let tb: Vec<f64> = depth.iter().map(|d| d.0).collect();
    let pairs = associate_timestamps(&ta, &tb, max_dt);
    if pairs.is_empty() {
        return Err(DatasetError::NoPairs(max_dt));
    }
    let mut records = Vec::with_capacity(pairs.len());
    for (i, j) in pairs {
        let rgb_path = dir.join(&rgb[i].1);
        let depth_path = dir.join(&depth[j].1);
        for p in [&rgb_path, &depth_path] {
            if !p.exists() {
                return Err(DatasetError::Io {
                    path: p.clone(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "listed file is missing"),
                });
            }
        }
        let mask = masks.map(|m| m.join(mask_file_name(rgb[i].0))).filter(|p| p.exists());
        records.push(SequenceRecord {
            timestamp: rgb[i].0,
            rgb: rgb_path,
            depth_timestamp: depth[j].0,
            depth: depth_path,
            mask,
        });
    }
    let gt_path = dir.join("groundtruth.txt");
    let ground_truth = gt_path.exists().then(|| Trajectory::read_tum(&gt_path)).transpose()?;
    Ok(SequenceIndex {
        root: dir.to_path_buf(),
        records,
        intrinsics: read_calibration(&dir.join("camera.txt"))?,
        ground_truth,
    })
}

pub fn read_rgb(path: &Path) -> Result<RgbImage, DatasetError> {
    let img = image::open(path).map_err(|e| DatasetError::Image { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(img.into_rgb8())
}

/// 16-bit single-channel depth; other formats are rejected.
pub fn read_depth(path: &Path) -> Result<DepthImage, DatasetError> {
    let img = image::open(path).map_err(|e| DatasetError::Image { path: path.to_path_buf(), message: e.to_string() })?;
    match img {
        image::DynamicImage::ImageLuma16(d) => Ok(d),
        other => Err(DatasetError::Image {
            path: path.to_path_buf(),
            message: format!("expected 16-bit single-channel depth, got {:?}", other.color()),
        }),
    }
}

impl SequenceIndex {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn load_frame(&self, i: usize) -> Result<(RgbImage, DepthImage), DatasetError> {
        let r = &self.records[i];
        let rgb = read_rgb(&r.rgb)?;
        let depth = read_depth(&r.depth)?;
        if rgb.dimensions() != depth.dimensions() {
            return Err(DatasetError::Image {
                path: r.depth.clone(),
                message: format!("depth is {:?}, rgb is {:?}", depth.dimensions(), rgb.dimensions()),
            });
        }
        Ok((rgb, depth))
    }
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn default_cell() -> f64 {
    0.15
}

/// A planar rectangle `origin + s·u + t·v`, `s, t ∈ [0, 1]`; `u ⊥ v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSpec {
    pub origin: [f64; 3],
    pub u: [f64; 3],
    pub v: [f64; 3],
    #[serde(default = "default_cell")]
    pub cell: f64,
}

/// Axis-aligned textured box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub center: [f64; 3],
    pub size: [f64; 3],
    #[serde(default = "default_cell")]
    pub cell: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MoverPath {
    Linear { start: [f64; 3], velocity: [f64; 3] },
    /// Back and forth between two points at constant speed (m/s).
    Shuttle { from: [f64; 3], to: [f64; 3], speed: f64 },
    /// `center + amplitude · sin(2π t / period + phase)`.
    Oscillate {
        center: [f64; 3],
        amplitude: [f64; 3],
        period: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl MoverPath {
    pub fn position(&self, t: f64) -> Vector3<f64> {
        match self {
            MoverPath::Shuttle { from, to, speed } => {
                let (a, b) = (v3(*from), v3(*to));
                let length = (b - a).norm();
                if length == 0.0 {
                    return a;
                }
                // triangle wave over one round trip
                let s = (speed * t).rem_euclid(2.0 * length);
                a + (b - a) * (if s <= length { s } else { 2.0 * length - s } / length)
            }
            MoverPath::Linear { start, velocity } => v3(*start) + t * v3(*velocity),
            MoverPath::Oscillate { center, amplitude, period, phase } => {
                v3(*center) + (std::f64::consts::TAU * t / period + phase).sin() * v3(*amplitude)
            }
        }
    }
}

fn person() -> u8 {
    PERSON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoverSpec {
    /// Box dimensions, centred on the path position.
    pub size: [f64; 3],
    #[serde(default = "default_cell")]
    pub cell: f64,
    /// Semantic class painted into the masks.
    #[serde(default = "person")]
    pub class: u8,
    pub path: MoverPath,
}

/// Camera-to-world trajectory; the camera looks along +z, y points down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CameraPath {
    Static {
        #[serde(default)]
        position: [f64; 3],
    },
    Linear { start: [f64; 3], velocity: [f64; 3] },
    /// Circle of `radius` about `center` in the horizontal plane, looking at
    /// the centre; angle `phase + angular_speed · t`, zero behind the centre
    /// on the −z side.
    Orbit {
        center: [f64; 3],
        radius: f64,
        angular_speed: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Per-axis sinusoidal translation plus a yaw oscillation.
    Sway {
        #[serde(default)]
        center: [f64; 3],
        amplitude: [f64; 3],
        period: [f64; 3],
        #[serde(default)]
        yaw_amplitude: f64,
        #[serde(default = "default_yaw_period")]
        yaw_period: f64,
    },
}

fn default_yaw_period() -> f64 {
    5.0
}

fn look_at(position: Vector3<f64>, target: Vector3<f64>) -> Pose {
    let z = (target - position).normalize();
    let x = Vector3::y().cross(&z).normalize();
    let y = z.cross(&x);
    Pose::new(Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z])), position)
}

impl CameraPath {
    pub fn pose(&self, t: f64) -> Pose {
        use std::f64::consts::TAU;
        match self {
            CameraPath::Static { position } => Pose::new(Rotation3::identity(), v3(*position)),
            CameraPath::Linear { start, velocity } => Pose::new(Rotation3::identity(), v3(*start) + t * v3(*velocity)),
            CameraPath::Orbit { center, radius, angular_speed, phase } => {
                let theta = phase + angular_speed * t;
                let c = v3(*center);
                look_at(c + *radius * Vector3::new(theta.sin(), 0.0, -theta.cos()), c)
            }
            CameraPath::Sway { center, amplitude, period, yaw_amplitude, yaw_period } => {
                let offset = Vector3::from_fn(|i, _| amplitude[i] * (TAU * t / period[i]).sin());
                let yaw = yaw_amplitude * (TAU * t / yaw_period).sin();
                Pose::new(Rotation3::from_axis_angle(&Vector3::y_axis(), yaw), v3(*center) + offset)
            }
        }
    }
}

fn default_seed() -> u64 {
    42
}
fn default_frames() -> usize {
    200
}
fn default_rate() -> f64 {
    30.0
}
fn default_start() -> f64 {
    1000.0
}
fn default_pixel_noise() -> f64 {
    0.2
}
fn default_depth_noise() -> f64 {
    0.01
}
fn yes() -> bool {
    true
}
fn default_camera() -> CameraPath {
    CameraPath::Static { position: [0.0; 3] }
}

/// Scene description as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default = "default_rate")]
    pub rate: f64,
    #[serde(default = "default_start")]
    pub start_time: f64,
    /// Standard deviation of the per-pixel sampling jitter, pixels.
    #[serde(default = "default_pixel_noise")]
    pub pixel_noise: f64,
    /// Depth noise standard deviation is `depth_noise · z²`.
    #[serde(default = "default_depth_noise")]
    pub depth_noise: f64,
    #[serde(default)]
    pub intrinsics: Option<CameraIntrinsics>,
    #[serde(default = "default_camera")]
    pub camera: CameraPath,
    /// Include the default furnished room.
    #[serde(default = "yes")]
    pub room: bool,
    #[serde(default)]
    pub surfaces: Vec<QuadSpec>,
    #[serde(default)]
    pub boxes: Vec<BoxSpec>,
    #[serde(default)]
    pub movers: Vec<MoverSpec>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

impl SceneConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, DatasetError> {
        toml::from_str(s).map_err(|e| DatasetError::Scene(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Self::from_toml_str(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene serializes")
    }

    /// The reference dynamic sequence: a hand-held camera swaying in the
    /// furnished room while a person-sized box walks across the view.
    pub fn benchmark() -> Self {
        Self {
            camera: CameraPath::Sway {
                center: [0.0; 3],
                amplitude: [0.12, 0.06, 0.1],
                period: [4.0, 3.0, 5.0],
                yaw_amplitude: 0.05,
                yaw_period: 6.0,
            },
            movers: vec![MoverSpec {
                size: [1.0, 1.7, 0.4],
                cell: 0.08,
                class: PERSON,
                path: MoverPath::Shuttle { from: [-0.7, 0.6, 2.3], to: [0.7, 0.6, 2.3], speed: 1.2 },
            }],
            ..Self::default()
        }
    }
}

fn furnished_room() -> (Vec<QuadSpec>, Vec<BoxSpec>) {
    let q = |origin, u, v, cell| QuadSpec { origin, u, v, cell };
    let walls = vec![
        q([-2.5, -1.5, 3.5], [5.0, 0.0, 0.0], [0.0, 3.0, 0.0], 0.14),
        q([-2.5, 1.5, -1.0], [5.0, 0.0, 0.0], [0.0, 0.0, 4.5], 0.16),
        q([-2.5, -1.5, -1.0], [5.0, 0.0, 0.0], [0.0, 0.0, 4.5], 0.16),
        q([-2.5, -1.5, -1.0], [0.0, 0.0, 4.5], [0.0, 3.0, 0.0], 0.15),
        q([2.5, -1.5, -1.0], [0.0, 0.0, 4.5], [0.0, 3.0, 0.0], 0.15),
    ];
    // one near box so that depth varies across the static structure
    let b = |center, size, cell| BoxSpec { center, size, cell };
    let boxes = vec![b([-1.5, 0.9, 2.9], [0.8, 1.2, 0.6], 0.1), b([0.9, 0.6, 1.4], [0.8, 1.2, 0.6], 0.07)];
    (walls, boxes)
}

#[derive(Debug, Clone)]
struct Quad {
    origin: Vector3<f64>,
    eu: Vector3<f64>,
    ev: Vector3<f64>,
    normal: Vector3<f64>,
    lu: f64,
    lv: f64,
    cell: f64,
}

impl Quad {
    fn new(origin: Vector3<f64>, u: Vector3<f64>, v: Vector3<f64>, cell: f64) -> Result<Self, DatasetError> {
        let (lu, lv) = (u.norm(), v.norm());
        if !(lu > 0.0 && lv > 0.0 && cell > 0.0) || u.dot(&v).abs() > 1e-9 * lu * lv {
            return Err(DatasetError::Scene("quads need orthogonal non-zero edges and a positive cell".into()));
        }
        let (eu, ev) = (u / lu, v / lv);
        Ok(Self { origin, eu, ev, normal: eu.cross(&ev), lu, lv, cell })
    }

    /// Ray parameter and texture cell of the hit, if nearer than `limit`.
    fn intersect(&self, o: &Vector3<f64>, dir: &Vector3<f64>, limit: f64) -> Option<(f64, (i64, i64), (f64, f64))> {
        let denom = self.normal.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let s = self.normal.dot(&(self.origin - o)) / denom;
        if s <= 1e-6 || s >= limit {
            return None;
        }
        let rel = o + s * dir - self.origin;
        let (a, b) = (rel.dot(&self.eu), rel.dot(&self.ev));
        if a < 0.0 || b < 0.0 || a > self.lu || b > self.lv {
            return None;
        }
        let (ca, cb) = ((a / self.cell).floor(), (b / self.cell).floor());
        Some((s, (ca as i64, cb as i64), (a / self.cell - ca, b / self.cell - cb)))
    }

    fn corners(&self) -> [Vector3<f64>; 4] {
        let (u, v) = (self.eu * self.lu, self.ev * self.lv);
        [self.origin, self.origin + u, self.origin + v, self.origin + u + v]
    }

    /// Interior vertex counts along each edge.
    fn vertex_counts(&self) -> (usize, usize) {
        let n = |l: f64| ((l / self.cell) - 1e-9).ceil().max(1.0) as usize - 1;
        (n(self.lu), n(self.lv))
    }
}

fn box_quads(size: [f64; 3], cell: f64) -> Result<Vec<Quad>, DatasetError> {
    let h = v3(size) / 2.0;
    let (ex, ey, ez) = (Vector3::x() * size[0], Vector3::y() * size[1], Vector3::z() * size[2]);
    let lo = -h;
    [
        (lo, ex, ey),
        (lo + ez, ex, ey),
        (lo, ez, ey),
        (lo + ex, ez, ey),
        (lo, ex, ez),
        (lo + ey, ex, ez),
    ]
    .into_iter()
    .map(|(o, u, v)| Quad::new(o, u, v, cell))
    .collect()
}

#[derive(Debug, Clone)]
struct Object {
    quads: Vec<Quad>,
    path: Option<MoverPath>,
    class: u8,
}

impl Object {
    fn offset(&self, t: f64) -> Vector3<f64> {
        self.path.as_ref().map_or_else(Vector3::zeros, |p| p.position(t))
    }
}

/// A ray hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Camera-frame depth (z), meters.
    pub depth: f64,
    /// Scene object index.
    pub object: usize,
    pub quad: usize,
    /// Texture cell on the quad.
    pub cell: (i64, i64),
    /// Position inside the cell, each coordinate in `[0, 1]`.
    pub within: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    /// `object << 40 | quad << 32 | i << 16 | j`.
    pub id: u64,
    pub object: usize,
    pub position: Vector3<f64>,
}

pub fn landmark_id(object: usize, quad: usize, i: usize, j: usize) -> u64 {
    ((object as u64) << 40) | ((quad as u64) << 32) | ((i as u64) << 16) | j as u64
}

/// Gray-level span of the in-cell ramp along each cell axis.
const RAMP: f64 = 60.0;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// A built scene ready for ray casting.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub intrinsics: CameraIntrinsics,
    objects: Vec<Object>,
}

impl SyntheticScene {
    pub fn new(config: SceneConfig) -> Result<Self, DatasetError> {
        let intrinsics = config.intrinsics.unwrap_or_else(CameraIntrinsics::tum_freiburg3);
        intrinsics.validate().map_err(|e| DatasetError::Scene(e.to_string()))?;
        if !(config.rate > 0.0) || config.pixel_noise < 0.0 || config.depth_noise < 0.0 {
            return Err(DatasetError::Scene("rate must be positive and noise non-negative".into()));
        }
        let mut objects = Vec::new();
        let (mut surfaces, mut boxes) = if config.room { furnished_room() } else { (Vec::new(), Vec::new()) };
        surfaces.extend(config.surfaces.iter().cloned());
        boxes.extend(config.boxes.iter().cloned());
        for s in &surfaces {
            objects.push(Object { quads: vec![Quad::new(v3(s.origin), v3(s.u), v3(s.v), s.cell)?], path: None, class: 0 });
        }
        for b in &boxes {
            let mut quads = box_quads(b.size, b.cell)?;
            for q in &mut quads {
                q.origin += v3(b.center);
            }
            objects.push(Object { quads, path: None, class: 0 });
        }
        for m in &config.movers {
            if m.class as usize >= crate::semantic::VOC_CLASSES.len() {
                return Err(DatasetError::Scene(format!("mover class {} out of range", m.class)));
            }
            objects.push(Object { quads: box_quads(m.size, m.cell)?, path: Some(m.path.clone()), class: m.class });
        }
        if objects.len() >= u16::MAX as usize {
            return Err(DatasetError::Scene("too many objects".into()));
        }
        Ok(Self { config, intrinsics, objects })
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn is_mover(&self, object: usize) -> bool {
        self.objects.get(object).is_some_and(|o| o.path.is_some())
    }

    pub fn object_class(&self, object: usize) -> u8 {
        self.objects[object].class
    }

    /// Time since the first frame.
    pub fn time_of(&self, index: usize) -> f64 {
        index as f64 / self.config.rate
    }

    pub fn timestamp_of(&self, index: usize) -> f64 {
        // the value written to disk, so in-memory and file runs agree
        format!("{:.6}", self.config.start_time + self.time_of(index)).parse().unwrap()
    }

    pub fn camera_pose(&self, t: f64) -> Pose {
        self.config.camera.pose(t)
    }

    fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, offsets: &[Vector3<f64>]) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (oi, obj) in self.objects.iter().enumerate() {
            let o = origin - offsets[oi];
            for (qi, q) in obj.quads.iter().enumerate() {
                if let Some((depth, cell, within)) = q.intersect(&o, dir, best.map_or(f64::INFINITY, |b| b.depth)) {
                    best = Some(Hit { depth, object: oi, quad: qi, cell, within });
                }
            }
        }
        best
    }

    fn offsets(&self, t: f64) -> Vec<Vector3<f64>> {
        self.objects.iter().map(|o| o.offset(t)).collect()
    }

    /// Exact, noise-free hit through a pixel at time `t`.
    pub fn raycast(&self, t: f64, pixel: &Vector2<f64>) -> Option<Hit> {
        let pose = self.camera_pose(t);
        self.raycast_with(&pose, &self.offsets(t), pixel)
    }

    fn raycast_with(&self, pose: &Pose, offsets: &[Vector3<f64>], pixel: &Vector2<f64>) -> Option<Hit> {
        let k = &self.intrinsics;
        // unit-z ray, so the ray parameter is the camera depth
        let d = Vector3::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy, 1.0);
        self.cast(&pose.translation, &(pose.rotation * d), offsets)
    }

    /// Cell base gray plus a random linear ramp across the cell. The ramp is
    /// too gentle to create corners but makes vertex neighborhoods distinct.
    fn shade(&self, hit: &Hit) -> f64 {
        let h = splitmix(
            self.config.seed
                ^ splitmix(
                    ((hit.object as u64) << 48)
                        ^ ((hit.quad as u64) << 40)
                        ^ ((hit.cell.0 as u64 & 0xFFFFF) << 20)
                        ^ (hit.cell.1 as u64 & 0xFFFFF),
                ),
        );
        let base = 40.0 + (h & 0xFF) as f64 * (175.0 / 255.0);
        let ramp = |bits: u64| ((bits & 0xFF) as f64 / 255.0 - 0.5) * 2.0 * RAMP;
        let (gu, gv) = (ramp(h >> 8), ramp(h >> 16));
        (base + gu * (hit.within.0 - 0.5) + gv * (hit.within.1 - 0.5)).clamp(0.0, 255.0)
    }

    /// All landmarks (interior texture vertices) at time `t`.
    pub fn landmarks(&self, t: f64) -> Vec<Landmark> {
        let mut out = Vec::new();
        for (oi, obj) in self.objects.iter().enumerate() {
            let off = obj.offset(t);
            for (qi, q) in obj.quads.iter().enumerate() {
                let (nu, nv) = q.vertex_counts();
                for i in 1..=nu {
                    for j in 1..=nv {
                        let position = off + q.origin + (i as f64 * q.cell) * q.eu + (j as f64 * q.cell) * q.ev;
                        out.push(Landmark { id: landmark_id(oi, qi, i, j), object: oi, position });
                    }
                }
            }
        }
        out
    }

    /// Landmarks projecting inside the image and not occluded at time `t`.
    pub fn visible_landmarks(&self, t: f64) -> Vec<(Landmark, Vector2<f64>)> {
        let caster = FrameCaster::new(self, t);
        let t_cw = caster.pose.inverse();
        self.landmarks(t)
            .into_iter()
            .filter_map(|lm| {
                let c = t_cw.apply(&lm.position);
                let px = project(&c, &self.intrinsics).ok()?;
                if !self.intrinsics.contains(&px) {
                    return None;
                }
                let hit = caster.cast(&px)?;
                (hit.object == lm.object && (hit.depth - c.z).abs() < 1e-6 * c.z.max(1.0)).then_some((lm, px))
            })
            .collect()
    }

    /// Render frame `index`. Deterministic in `(scene, index)`.
    ///
    /// Depth and object ids come from the pixel-center ray. Pixels whose
    /// 4-neighbors see a different texture cell are colored by averaging four
    /// subsamples whose positions carry Gaussian jitter of `pixel_noise` px;
    /// cell interiors are flat.
    pub fn render(&self, index: usize) -> SyntheticFrame {
        let t = self.time_of(index);
        let caster = FrameCaster::new(self, t);
        let k = &self.intrinsics;
        let (w, h) = (k.width as usize, k.height as usize);
        let row_rng = |pass: u64, y: usize| {
            ChaCha8Rng::seed_from_u64(splitmix(self.config.seed ^ splitmix((pass << 60) ^ ((index as u64) << 20) ^ y as u64)))
        };

        let mut hits: Vec<Option<Hit>> = vec![None; w * h];
        let mut depth = vec![0u16; w * h];
        let mut objects = vec![0u16; w * h];
        let unit = Normal::new(0.0, 1.0).unwrap();
        for y in 0..h {
            let mut rng = row_rng(0, y);
            for x in 0..w {
                let n: f64 = unit.sample(&mut rng);
                let Some(hit) = caster.cast(&Vector2::new(x as f64, y as f64)) else { continue };
                let i = y * w + x;
                hits[i] = Some(hit);
                objects[i] = hit.object as u16 + 1;
                let z = hit.depth + n * self.config.depth_noise * hit.depth * hit.depth;
                let raw = (z * k.depth_scale).round();
                depth[i] = if raw >= 1.0 && raw <= u16::MAX as f64 { raw as u16 } else { 0 };
            }
        }

        let key = |h: &Option<Hit>| h.map(|h| (h.object, h.quad, h.cell));
        let shade = |h: Option<Hit>| h.map_or(0.0, |h| self.shade(&h));
        let jitter = Normal::new(0.0, self.config.pixel_noise).unwrap();
        let mut rgb = vec![0u8; w * h * 3];
        for y in 0..h {
            let mut rng = row_rng(1, y);
            for x in 0..w {
                let i = y * w + x;
                let own = key(&hits[i]);
                let edge = (x > 0 && key(&hits[i - 1]) != own)
                    || (x + 1 < w && key(&hits[i + 1]) != own)
                    || (y > 0 && key(&hits[i - w]) != own)
                    || (y + 1 < h && key(&hits[i + w]) != own);
                let g = if edge {
                    let mut sum = 0.0;
                    for (dx, dy) in [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)] {
                        let (jx, jy): (f64, f64) = (jitter.sample(&mut rng), jitter.sample(&mut rng));
                        sum += shade(caster.cast(&Vector2::new(x as f64 + dx + jx, y as f64 + dy + jy)));
                    }
                    (sum / 4.0).round() as u8
                } else {
                    shade(hits[i]).round() as u8
                };
                rgb[3 * i..3 * i + 3].copy_from_slice(&[g, g, g]);
            }
        }

        let objects = ObjectImage::from_raw(w as u32, h as u32, objects).unwrap();
        let mask = GrayImage::from_fn(w as u32, h as u32, |x, y| {
            let o = objects.get_pixel(x, y)[0];
            Luma([if o == 0 { 0 } else { self.objects[o as usize - 1].class }])
        });
        let dynamic_landmarks = self
            .visible_landmarks(t)
            .into_iter()
            .filter(|(lm, _)| self.is_mover(lm.object))
            .map(|(lm, _)| lm.id)
            .collect();
        SyntheticFrame {
            index,
            timestamp: self.timestamp_of(index),
            pose: caster.pose,
            rgb: RgbImage::from_raw(w as u32, h as u32, rgb).unwrap(),
            depth: DepthImage::from_raw(w as u32, h as u32, depth).unwrap(),
            objects,
            mask,
            dynamic_landmarks,
        }
    }

    pub fn frames(&self) -> impl Iterator<Item = SyntheticFrame> + '_ {
        (0..self.config.frames).map(|i| self.render(i))
    }

    pub fn ground_truth(&self) -> Trajectory {
        Trajectory::new((0..self.config.frames).map(|i| (self.timestamp_of(i), self.camera_pose(self.time_of(i)))).collect())
            .expect("timestamps increase")
    }
}

/// Ray caster for one instant, culling quads by their screen-space bounds.
struct FrameCaster<'a> {
    scene: &'a SyntheticScene,
    pose: Pose,
    offsets: Vec<Vector3<f64>>,
    /// `(object, quad, [x0, x1, y0, y1])`
    candidates: Vec<(usize, usize, [f64; 4])>,
}

impl<'a> FrameCaster<'a> {
    /// Slack for rounding and subsample jitter, in pixels.
    const MARGIN: f64 = 4.0;

    fn new(scene: &'a SyntheticScene, t: f64) -> Self {
        let pose = scene.camera_pose(t);
        let offsets = scene.offsets(t);
        let t_cw = pose.inverse();
        let k = &scene.intrinsics;
        let everywhere = [f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY];
        let mut candidates = Vec::new();
        for (oi, obj) in scene.objects.iter().enumerate() {
            for (qi, q) in obj.quads.iter().enumerate() {
                let cam = q.corners().map(|c| t_cw.apply(&(c + offsets[oi])));
                if cam.iter().all(|c| c.z <= 1e-6) {
                    continue;
                }
                // a quad crossing the image plane can project anywhere
                let bounds = if cam.iter().any(|c| c.z <= 1e-3) {
                    everywhere
                } else {
                    let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
                    for c in &cam {
                        let (u, v) = (k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy);
                        b = [b[0].min(u), b[1].max(u), b[2].min(v), b[3].max(v)];
                    }
                    [b[0] - Self::MARGIN, b[1] + Self::MARGIN, b[2] - Self::MARGIN, b[3] + Self::MARGIN]
                };
                if bounds[1] < -Self::MARGIN
                    || bounds[0] > k.width as f64 + Self::MARGIN
                    || bounds[3] < -Self::MARGIN
                    || bounds[2] > k.height as f64 + Self::MARGIN
                {
                    continue;
                }
                candidates.push((oi, qi, bounds));
            }
        }
        Self { scene, pose, offsets, candidates }
    }

    fn cast(&self, pixel: &Vector2<f64>) -> Option<Hit> {
        let k = &self.scene.intrinsics;
        let d = self.pose.rotation * Vector3::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy, 1.0);
        let mut best: Option<Hit> = None;
        for &(oi, qi, [x0, x1, y0, y1]) in &self.candidates {
            if pixel.x < x0 || pixel.x > x1 || pixel.y < y0 || pixel.y > y1 {
                continue;
            }
            let o = self.pose.translation - self.offsets[oi];
            let q = &self.scene.objects[oi].quads[qi];
            if let Some((depth, cell, within)) = q.intersect(&o, &d, best.map_or(f64::INFINITY, |b| b.depth)) {
                best = Some(Hit { depth, object: oi, quad: qi, cell, within });
            }
        }
        best
    }
}

/// One rendered frame with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticFrame {
    pub index: usize,
    pub timestamp: f64,
    /// Ground-truth camera-to-world pose.
    pub pose: Pose,
    pub rgb: RgbImage,
    pub depth: DepthImage,
    pub objects: ObjectImage,
    /// Class-index mask.
    pub mask: GrayImage,
    /// Ids of the visible landmarks that belong to movers.
    pub dynamic_landmarks: Vec<u64>,
}

impl SyntheticFrame {
    /// Whether the pixel nearest to `pixel` shows a mover.
    pub fn is_dynamic_at(&self, scene: &SyntheticScene, pixel: &Vector2<f64>) -> bool {
        let (x, y) = (pixel.x.round(), pixel.y.round());
        if x < 0.0 || y < 0.0 || x >= self.objects.width() as f64 || y >= self.objects.height() as f64 {
            return false;
        }
        let o = self.objects.get_pixel(x as u32, y as u32)[0];
        o > 0 && scene.is_mover(o as usize - 1)
    }

    /// Fraction of pixels showing a mover.
    pub fn mover_coverage(&self, scene: &SyntheticScene) -> f64 {
        let n = self.objects.pixels().filter(|p| p[0] > 0 && scene.is_mover(p[0] as usize - 1)).count();
        n as f64 / (self.objects.width() * self.objects.height()) as f64
    }
}

/// Build the scene and expose its lazily rendered frames.
pub fn generate_synthetic(mut config: SceneConfig, frame_count: usize, rate: f64, seed: u64) -> Result<SyntheticScene, DatasetError> {
    config.frames = frame_count;
    config.rate = rate;
    config.seed = seed;
    SyntheticScene::new(config)
}

fn save_png<P, C>(img: &ImageBuffer<P, C>, path: &Path) -> Result<(), DatasetError>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(source) => DatasetError::Io { path: path.to_path_buf(), source },
        other => DatasetError::Image { path: path.to_path_buf(), message: other.to_string() },
    })
}

/// Write the sequence in TUM layout: `rgb/`, `depth/`, `masks/`, the index
/// files, `groundtruth.txt`, `camera.txt`, `scene.toml` and the
/// `dynamic_labels.txt` sidecar (`timestamp id...` per frame).
pub fn write_tum_sequence(scene: &SyntheticScene, dir: &Path) -> Result<(), DatasetError> {
    for sub in ["", "rgb", "depth", "masks"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(io_err(&p))?;
    }
    let mut rgb_txt = String::from("# color images\n# timestamp filename\n");
    let mut depth_txt = String::from("# depth maps\n# timestamp filename\n");
    let mut gt_txt = String::from("# ground truth trajectory\n# timestamp tx ty tz qx qy qz qw\n");
    let mut labels = String::from("# moving landmark ids per frame\n# timestamp id...\n");
    for frame in scene.frames() {
        let name = mask_file_name(frame.timestamp);
        save_png(&frame.rgb, &dir.join("rgb").join(&name))?;
        save_png(&frame.depth, &dir.join("depth").join(&name))?;
        save_png(&frame.mask, &dir.join("masks").join(&name))?;
        let _ = writeln!(rgb_txt, "{:.6} rgb/{name}", frame.timestamp);
        let _ = writeln!(depth_txt, "{:.6} depth/{name}", frame.timestamp);
        let _ = writeln!(gt_txt, "{}", format_tum_line(frame.timestamp, &frame.pose));
        let _ = write!(labels, "{:.6}", frame.timestamp);
        for id in &frame.dynamic_landmarks {
            let _ = write!(labels, " {id}");
        }
        labels.push('\n');
    }
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(io_err(&p))
    };
    write("rgb.txt", &rgb_txt)?;
    write("depth.txt", &depth_txt)?;
    write("groundtruth.txt", &gt_txt)?;
    write("dynamic_labels.txt", &labels)?;
    write("scene.toml", &scene.config.to_toml_string())?;
    let p = dir.join("camera.txt");
    write_calibration(&p, &scene.intrinsics).map_err(io_err(&p))?;
    Ok(())
}

/// Parse a `dynamic_labels.txt` sidecar.
pub fn read_dynamic_labels(path: &Path) -> Result<Vec<(f64, Vec<u64>)>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse = |message: String| DatasetError::Parse { path: path.to_path_buf(), line: i + 1, message };
        let mut it = line.split_whitespace();
        let t: f64 = it.next().unwrap().parse().map_err(|e| parse(format!("{e}")))?;
        let ids = it.map(|s| s.parse::<u64>().map_err(|e| parse(format!("{e}")))).collect::<Result<_, _>>()?;
        out.push((t, ids));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::backproject_metric;
    use rand::Rng;

    fn quiet(config: SceneConfig) -> SceneConfig {
        SceneConfig { pixel_noise: 0.0, depth_noise: 0.0, ..config }
    }

    fn small(frames: usize) -> SceneConfig {
        SceneConfig {
            frames,
            intrinsics: Some(CameraIntrinsics::new(267.7, 269.6, 160.05, 123.8, 320, 240, 5000.0).unwrap()),
            ..SceneConfig::default()
        }
    }

    #[test]
    fn scene_toml_round_trip() {
        let cfg = SceneConfig::benchmark();
        let text = cfg.to_toml_string();
        assert_eq!(SceneConfig::from_toml_str(&text).unwrap(), cfg);
        let parsed = SceneConfig::from_toml_str(
            r#"
            frames = 3
            camera = { type = "orbit", center = [0.0, 0.0, 2.5], radius = 1.0, angular_speed = 0.2 }
            [[movers]]
            size = [0.5, 1.0, 0.3]
            path = { type = "linear", start = [0.0, 0.5, 2.0], velocity = [0.6, 0.0, 0.0] }
            "#,
        )
        .unwrap();
        assert_eq!(parsed.movers[0].class, PERSON);
        assert!(SceneConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn static_scene_frames_agree_up_to_noise() {
        let scene = SyntheticScene::new(small(2)).unwrap();
        let a = scene.render(0);
        let b = scene.render(1);
        assert_eq!(a.pose, Pose::identity());
        assert_eq!(b.pose, Pose::identity());
        let quiet = SyntheticScene::new(quiet(small(2))).unwrap();
        let clean = quiet.render(0).rgb;
        assert_eq!(clean, quiet.render(1).rgb);
        // color noise lives on texture edges, which are not flat in the clean frame
        let (w, h) = clean.dimensions();
        for (x, y, p) in a.rgb.enumerate_pixels() {
            if p != b.rgb.get_pixel(x, y) {
                let flat = (x.saturating_sub(1)..=(x + 1).min(w - 1))
                    .all(|nx| (y.saturating_sub(1)..=(y + 1).min(h - 1)).all(|ny| clean.get_pixel(nx, ny) == clean.get_pixel(x, y)));
                assert!(!flat, "noise at flat pixel ({x}, {y})");
            }
        }
        assert_eq!(quiet.render(0).depth, quiet.render(1).depth);
        assert!(a.dynamic_landmarks.is_empty());
    }

    #[test]
    fn rendering_is_deterministic() {
        let scene = SyntheticScene::new(small(1)).unwrap();
        let (a, b) = (scene.render(0), scene.render(0));
        assert_eq!(a.rgb, b.rgb);
        assert_eq!(a.depth, b.depth);
    }

    #[test]
    fn orbit_follows_the_circle() {
        let cfg = SceneConfig {
            camera: CameraPath::Orbit { center: [0.0, 0.0, 2.5], radius: 1.5, angular_speed: 0.3, phase: 0.1 },
            ..small(50)
        };
        let scene = SyntheticScene::new(cfg).unwrap();
        for (i, (_, pose)) in scene.ground_truth().samples().iter().enumerate() {
            let theta = 0.1 + 0.3 * i as f64 / 30.0;
            let expected = Vector3::new(1.5 * theta.sin(), 0.0, 2.5 - 1.5 * theta.cos());
            assert!((pose.translation - expected).norm() < 1e-12);
            let forward = pose.rotation * Vector3::z();
            assert!((forward - (Vector3::new(0.0, 0.0, 2.5) - expected).normalize()).norm() < 1e-12);
            assert!(pose.is_orthonormal(1e-12));
        }
    }

    #[test]
    fn culled_casting_matches_exhaustive_casting() {
        let scene = SyntheticScene::new(SceneConfig::benchmark()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for frame in [0usize, 70, 150] {
            let t = scene.time_of(frame);
            let caster = FrameCaster::new(&scene, t);
            assert!(caster.candidates.len() < scene.objects.iter().map(|o| o.quads.len()).sum::<usize>());
            for _ in 0..2000 {
                let px = Vector2::new(rng.random_range(-2.0..642.0), rng.random_range(-2.0..482.0));
                assert_eq!(caster.cast(&px), scene.raycast(t, &px), "frame {frame} pixel {px:?}");
            }
        }
    }

    #[test]
    fn exact_depth_backprojects_onto_landmarks() {
        let cfg = SceneConfig { camera: CameraPath::Static { position: [0.1, -0.2, 0.3] }, ..SceneConfig::benchmark() };
        let scene = SyntheticScene::new(cfg).unwrap();
        let t = 1.0;
        let pose = scene.camera_pose(t);
        let visible = scene.visible_landmarks(t);
        assert!(visible.len() > 300);
        for (lm, px) in visible {
            let hit = scene.raycast(t, &px).unwrap();
            let world = pose.apply(&backproject_metric(&px, hit.depth, &scene.intrinsics));
            assert!((world - lm.position).norm() < 1e-6);
        }
    }

    #[test]
    fn moving_landmarks_are_exactly_the_movers() {
        let cfg = SceneConfig {
            movers: vec![MoverSpec {
                size: [0.8, 1.2, 0.3],
                cell: 0.08,
                class: PERSON,
                path: MoverPath::Linear { start: [-0.3, 0.5, 2.0], velocity: [0.6, 0.0, 0.0] },
            }],
            ..small(3)
        };
        let scene = SyntheticScene::new(cfg).unwrap();
        for i in 0..3 {
            let f = scene.render(i);
            let t = scene.time_of(i);
            let expected: Vec<u64> = scene
                .visible_landmarks(t)
                .into_iter()
                .filter(|(lm, _)| lm.object == scene.object_count() - 1)
                .map(|(lm, _)| lm.id)
                .collect();
            assert!(!expected.is_empty());
            assert_eq!(f.dynamic_landmarks, expected);
            assert!(f.mask.pixels().any(|p| p[0] == PERSON));
        }
    }

    #[test]
    fn tum_layout_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let scene = SyntheticScene::new(small(3)).unwrap();
        write_tum_sequence(&scene, dir.path()).unwrap();
        let idx = load_tum_with_masks(dir.path(), 0.02, Some(&dir.path().join("masks"))).unwrap();
        assert_eq!(idx.len(), 3);
        assert_eq!(idx.intrinsics, scene.intrinsics);
        assert!(idx.records.iter().all(|r| r.mask.is_some()));
        let (rgb, depth) = idx.load_frame(1).unwrap();
        let frame = scene.render(1);
        assert_eq!(rgb, frame.rgb);
        assert_eq!(depth, frame.depth);
        assert_eq!(idx.ground_truth.unwrap(), scene.ground_truth().clone());
        let labels = read_dynamic_labels(&dir.path().join("dynamic_labels.txt")).unwrap();
        assert_eq!(labels.len(), 3);
        assert!(labels.iter().all(|(_, ids)| ids.is_empty()));
    }

    #[test]
    fn loader_association_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        assert!(matches!(load_tum(d, 0.02), Err(DatasetError::MissingIndex(_))));
        std::fs::create_dir_all(d.join("rgb")).unwrap();
        std::fs::create_dir_all(d.join("depth")).unwrap();
        for name in ["rgb/1.png", "rgb/2.png", "depth/1.png", "depth/2.png"] {
            std::fs::write(d.join(name), b"").unwrap();
        }
        std::fs::write(d.join("rgb.txt"), "# c\n1.000000 rgb/1.png\n2.000000 rgb/2.png\n").unwrap();
        std::fs::write(d.join("depth.txt"), "1.000000 depth/1.png\n2.050000 depth/2.png\n").unwrap();
        let idx = load_tum(d, 0.02).unwrap();
        assert_eq!(idx.len(), 1);
        assert_eq!(idx.records[0].timestamp, 1.0);
        assert_eq!(idx.intrinsics, CameraIntrinsics::tum_freiburg3());
        std::fs::write(d.join("depth.txt"), "5.0 depth/1.png\n").unwrap();
        assert!(matches!(load_tum(d, 0.02), Err(DatasetError::NoPairs(_))));
    }

    #[test]
    fn eight_bit_depth_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        GrayImage::new(4, 4).save(&p).unwrap();
        assert!(read_depth(&p).is_err());
        let ok = dir.path().join("d16.png");
        DepthImage::from_pixel(4, 4, Luma([5000])).save(&ok).unwrap();
        assert_eq!(read_depth(&ok).unwrap().get_pixel(0, 0)[0], 5000);
    }

    #[test]
    fn benchmark_mover_covers_a_fifth_to_a_third() {
        let scene = SyntheticScene::new(SceneConfig::benchmark()).unwrap();
        let cov: Vec<f64> = [40, 100, 160].iter().map(|&i| scene.render(i).mover_coverage(&scene)).collect();
        for c in cov {
            assert!((0.15..=0.35).contains(&c), "{c}");
        }
    }
}
