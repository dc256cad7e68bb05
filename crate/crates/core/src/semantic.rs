//! Keyframe semantic masks: where they come from, which classes count as
//! movable, and how keyframes and map points are purged of them.
//!
//! Masks are 8-bit class-index PNGs (grayscale or paletted) with the 21
//! VOC-style classes, 0 = background. Segmentation itself happens outside
//! this crate: masks are read from a directory keyed by timestamp or
//! fetched from an HTTP service that answers `POST /segment`.

use std::collections::BTreeSet;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::time::Duration;

use image::{GrayImage, RgbImage};
use thiserror::Error;

use crate::map::{KeyFrameId, Map};

/// Classes of the 20-class VOC labelling (plus background at 0).
pub const VOC_CLASSES: [&str; 21] = [
    "background",
    "aeroplane",
    "bicycle",
    "bird",
    "boat",
    "bottle",
    "bus",
    "car",
    "cat",
    "chair",
    "cow",
    "diningtable",
    "dog",
    "horse",
    "motorbike",
    "person",
    "pottedplant",
    "sheep",
    "sofa",
    "train",
    "tvmonitor",
];

pub const PERSON: u8 = 15;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("no mask file at {0}")]
    Missing(PathBuf),
    #[error("mask i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("mask decode: {0}")]
    Decode(String),
    #[error("segmentation service: {0}")]
    Network(String),
    #[error("segmentation protocol: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticMask {
    pub labels: GrayImage,
    pub class_count: u8,
}

impl SemanticMask {
    pub fn new(labels: GrayImage, class_count: u8) -> Result<Self, MaskError> {
        if let Some(bad) = labels.pixels().find(|p| p[0] >= class_count) {
            return Err(MaskError::Decode(format!("label {} exceeds class count {}", bad[0], class_count)));
        }
        Ok(Self { labels, class_count })
    }

    pub fn dimensions(&self) -> (u32, u32) {
        self.labels.dimensions()
    }

    /// Decode an 8-bit grayscale or paletted PNG without palette expansion.
    pub fn decode_png(bytes: &[u8], class_count: u8) -> Result<Self, MaskError> {
        let mut decoder = png::Decoder::new(Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::IDENTITY);
        let mut reader = decoder.read_info().map_err(|e| MaskError::Decode(e.to_string()))?;
        let (color, depth) = reader.output_color_type();
        if depth != png::BitDepth::Eight || !matches!(color, png::ColorType::Grayscale | png::ColorType::Indexed) {
            return Err(MaskError::Decode(format!("expected 8-bit single channel, got {color:?}/{depth:?}")));
        }
        let size = reader.output_buffer_size().ok_or_else(|| MaskError::Decode("image too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(|e| MaskError::Decode(e.to_string()))?;
        buf.truncate(info.buffer_size());
        let labels = GrayImage::from_raw(info.width, info.height, buf)
            .ok_or_else(|| MaskError::Decode("truncated image data".into()))?;
        Self::new(labels, class_count)
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, MaskError> {
        let mut out = Vec::new();
        self.labels
            .write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png)
            .map_err(|e| MaskError::Decode(e.to_string()))?;
        Ok(out)
    }

    pub fn load(path: &Path, class_count: u8) -> Result<Self, MaskError> {
        if !path.exists() {
            return Err(MaskError::Missing(path.to_path_buf()));
        }
        Self::decode_png(&std::fs::read(path)?, class_count)
    }

    pub fn save(&self, path: &Path) -> Result<(), MaskError> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }
}

/// File name of the mask belonging to a frame timestamp.
pub fn mask_file_name(timestamp: f64) -> String {
    format!("{timestamp:.6}.png")
}

/// Source of per-keyframe segmentation masks.
pub trait MaskProvider: Send + Sync {
    fn provide(&self, keyframe: KeyFrameId, timestamp: f64, rgb: &RgbImage) -> Result<SemanticMask, MaskError>;
}

/// Masks stored as `<dir>/<timestamp with 6 decimals>.png`.
#[derive(Debug, Clone)]
pub struct DirectoryProvider {
    pub dir: PathBuf,
    pub class_count: u8,
}

impl DirectoryProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), class_count: VOC_CLASSES.len() as u8 }
    }
}

impl MaskProvider for DirectoryProvider {
    fn provide(&self, _keyframe: KeyFrameId, timestamp: f64, _rgb: &RgbImage) -> Result<SemanticMask, MaskError> {
        SemanticMask::load(&self.dir.join(mask_file_name(timestamp)), self.class_count)
    }
}

/// Segmentation service: the RGB frame is POSTed as a PNG to
/// `<endpoint>/segment`, the response body is the mask PNG.
#[derive(Debug, Clone)]
pub struct RemoteProvider {
    pub url: String,
    pub timeout: Duration,
    pub class_count: u8,
    agent: ureq::Agent,
}

impl RemoteProvider {
    pub fn new(endpoint: &str) -> Self {
        let base = endpoint.trim_end_matches('/');
        let url = if base.ends_with("/segment") { base.to_string() } else { format!("{base}/segment") };
        let timeout = Duration::from_secs(5);
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self { url, timeout, class_count: VOC_CLASSES.len() as u8, agent }
    }
}

impl MaskProvider for RemoteProvider {
    fn provide(&self, _keyframe: KeyFrameId, _timestamp: f64, rgb: &RgbImage) -> Result<SemanticMask, MaskError> {
        let mut body = Vec::new();
        rgb.write_to(&mut Cursor::new(&mut body), image::ImageFormat::Png)
            .map_err(|e| MaskError::Protocol(e.to_string()))?;
        let mut response = self
            .agent
            .post(&self.url)
            .header("Content-Type", "image/png")
            .header("Accept", "image/png")
            .send(&body[..])
            .map_err(|e| MaskError::Network(e.to_string()))?;
        let bytes = response.body_mut().read_to_vec().map_err(|e| MaskError::Network(e.to_string()))?;
        let mask = SemanticMask::decode_png(&bytes, self.class_count).map_err(|e| MaskError::Protocol(e.to_string()))?;
        if mask.dimensions() != rgb.dimensions() {
            return Err(MaskError::Protocol(format!(
                "mask is {:?}, frame is {:?}",
                mask.dimensions(),
                rgb.dimensions()
            )));
        }
        Ok(mask)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MovableClassSet {
    pub classes: BTreeSet<u8>,
    pub dilation_radius: u32,
}

impl Default for MovableClassSet {
    /// People, vehicles and animals.
    fn default() -> Self {
        let names = [
            "person",
            "car",
            "bicycle",
            "bus",
            "motorbike",
            "boat",
            "aeroplane",
            "train",
            "bird",
            "cat",
            "cow",
            "dog",
            "horse",
            "sheep",
        ];
        let classes = names
            .iter()
            .map(|n| VOC_CLASSES.iter().position(|c| c == n).unwrap() as u8)
            .collect();
        Self { classes, dilation_radius: 3 }
    }
}

impl MovableClassSet {
    /// Parse a comma-separated list of class names or indices.
    pub fn parse_classes(list: &str) -> Result<BTreeSet<u8>, String> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<u8>()
                    .ok()
                    .filter(|&i| (i as usize) < VOC_CLASSES.len())
                    .or_else(|| VOC_CLASSES.iter().position(|c| *c == s).map(|i| i as u8))
                    .ok_or_else(|| format!("unknown class '{s}'"))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![false; (width * height) as usize] }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.data[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.data[(y * self.width + x) as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// Mask value at the pixel nearest to sub-pixel coordinates.
    pub fn at(&self, x: f64, y: f64) -> bool {
        let (xi, yi) = (x.round(), y.round());
        xi >= 0.0 && yi >= 0.0 && self.get(xi as u32, yi as u32)
    }
}

/// Offsets of the disk structuring element: `dx² + dy² ≤ r(r+1)`, i.e. every
/// pixel whose centre lies within `r + ½` of the origin.
pub fn disk_offsets(radius: u32) -> Vec<(i32, i32)> {
    let r = radius as i32;
    let limit = r * (r + 1);
    (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= limit)
        .collect()
}

/// Pixels whose class is movable, dilated by a disk of `dilation_radius`.
pub fn movable_mask(mask: &SemanticMask, classes: &MovableClassSet) -> BinaryMask {
    let (w, h) = mask.dimensions();
    let mut seeds = BinaryMask::new(w, h);
    for (x, y, p) in mask.labels.enumerate_pixels() {
        if classes.classes.contains(&p[0]) {
            seeds.set(x, y, true);
        }
    }
    if classes.dilation_radius == 0 {
        return seeds;
    }
    // separable row spans of the disk
    let r = classes.dilation_radius as i32;
    let spans: Vec<(i32, i32)> = (-r..=r)
        .map(|dy| (dy, (0..=r).rev().find(|dx| dx * dx + dy * dy <= r * (r + 1)).unwrap_or(0)))
        .collect();
    let mut out = BinaryMask::new(w, h);
    for y in 0..h as i32 {
        for x in 0..w as i32 {
            if !seeds.get(x as u32, y as u32) {
                continue;
            }
            for &(dy, half) in &spans {
                let ny = y + dy;
                if ny < 0 || ny >= h as i32 {
                    continue;
                }
                for nx in (x - half).max(0)..=(x + half).min(w as i32 - 1) {
                    out.set(nx as u32, ny as u32, true);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterCounts {
    pub features_marked: usize,
    pub observations_removed: usize,
    pub points_deleted: usize,
}

/// Mark keyframe features inside the movable mask dynamic and detach them
/// from the map; points left without observations are deleted.
pub fn filter_keyframe(map: &mut Map, keyframe: KeyFrameId, movable: &BinaryMask) -> FilterCounts {
    let mut counts = FilterCounts::default();
    let Some(kf) = map.keyframe_mut(keyframe) else { return counts };
    let mut detach = Vec::new();
    for (i, f) in kf.features.iter_mut().enumerate() {
        if movable.at(f.pixel.x, f.pixel.y) {
            if f.mark_dynamic() {
                counts.features_marked += 1;
            }
            if kf.points[i].is_some() {
                detach.push(i);
            }
        }
    }
    kf.semantic_filtered = true;
    for i in detach {
        let (removed, deleted) = map.remove_observation(keyframe, i);
        counts.observations_removed += removed as usize;
        counts.points_deleted += deleted as usize;
    }
    counts
}
