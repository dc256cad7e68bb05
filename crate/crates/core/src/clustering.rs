//! K-Means segmentation of depth images into regions of nearby 3D points.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{backproject, CameraIntrinsics, DepthRange};
use crate::DepthImage;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("degenerate depth image: {valid} valid samples for {clusters} clusters")]
    Degenerate { valid: usize, clusters: usize },
    #[error("cluster count and stride must be at least 1")]
    InvalidParameters,
    #[error("pixel ({0}, {1}) is outside the image")]
    OutOfBounds(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    /// Stop once no centroid moves more than this (meters).
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self { tolerance: 1e-3, max_iterations: 25 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vector3<f64>>,
    pub counts: Vec<usize>,
    /// Within-cluster sum of squared distances after every assignment step.
    pub objective_trace: Vec<f64>,
}

fn nearest(point: &Vector3<f64>, centroids: &[Vector3<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = (point - c).norm_squared();
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Seeded k-means++ initialisation followed by Lloyd iterations.
/// Empty clusters keep their previous centroid.
pub fn kmeans(points: &[Vector3<f64>], k: usize, seed: u64, params: &KMeansParams) -> Result<KMeansResult, ClusterError> {
    if k == 0 {
        return Err(ClusterError::InvalidParameters);
    }
    if points.len() < k {
        return Err(ClusterError::Degenerate { valid: points.len(), clusters: k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| (p - centroids[0]).norm_squared()).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[next];
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min((p - c).norm_squared());
        }
        centroids.push(c);
    }

    let mut labels = vec![0usize; points.len()];
    let mut counts = vec![0usize; k];
    let mut trace = Vec::new();
    for _ in 0..params.max_iterations.max(1) {
        let mut objective = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(p, &centroids);
            labels[i] = j;
            objective += d;
        }
        trace.push(objective);

        let mut sums = vec![Vector3::zeros(); k];
        counts.iter_mut().for_each(|c| *c = 0);
        for (p, &j) in points.iter().zip(&labels) {
            sums[j] += p;
            counts[j] += 1;
        }
        let mut shift: f64 = 0.0;
        for j in 0..k {
            if counts[j] > 0 {
                let c = sums[j] / counts[j] as f64;
                shift = shift.max((c - centroids[j]).norm());
                centroids[j] = c;
            }
        }
        if shift < params.tolerance {
            break;
        }
    }
    // final assignment against the final centroids
    let mut objective = 0.0;
    counts.iter_mut().for_each(|c| *c = 0);
    for (i, p) in points.iter().enumerate() {
        let (j, d) = nearest(p, &centroids);
        labels[i] = j;
        counts[j] += 1;
        objective += d;
    }
    trace.push(objective);
    Ok(KMeansResult { labels, centroids, counts, objective_trace: trace })
}

/// Per-pixel cluster labels on a regular sampling grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMap {
    pub width: u32,
    pub height: u32,
    pub stride: u32,
    grid_cols: usize,
    grid_rows: usize,
    /// Label of every grid sample; `None` where depth was invalid.
    pub labels: Vec<Option<usize>>,
    pub centroids: Vec<Vector3<f64>>,
    pub counts: Vec<usize>,
    pub objective_trace: Vec<f64>,
}

impl ClusterMap {
    pub fn cluster_count(&self) -> usize {
        self.centroids.len()
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.grid_cols, self.grid_rows)
    }

    /// Label at grid sample `(col, row)`, i.e. pixel `(col·stride, row·stride)`.
    pub fn label_at_sample(&self, col: usize, row: usize) -> Option<usize> {
        if col >= self.grid_cols || row >= self.grid_rows {
            return None;
        }
        self.labels[row * self.grid_cols + col]
    }

    /// Cluster of the nearest valid sample within `stride` pixels.
    /// Ties resolve to the earliest sample in raster order.
    pub fn cluster_of(&self, pixel: &Vector2<f64>) -> Result<Option<usize>, ClusterError> {
        if !(pixel.x >= 0.0 && pixel.y >= 0.0 && pixel.x < self.width as f64 && pixel.y < self.height as f64) {
            return Err(ClusterError::OutOfBounds(pixel.x, pixel.y));
        }
        let s = self.stride as f64;
        let radius2 = s * s;
        let col_lo = ((pixel.x - s) / s).ceil().max(0.0) as usize;
        let row_lo = ((pixel.y - s) / s).ceil().max(0.0) as usize;
        let col_hi = ((pixel.x + s) / s).floor() as usize;
        let row_hi = ((pixel.y + s) / s).floor() as usize;
        let mut best: Option<(f64, usize)> = None;
        for row in row_lo..=row_hi.min(self.grid_rows.saturating_sub(1)) {
            for col in col_lo..=col_hi.min(self.grid_cols.saturating_sub(1)) {
                let Some(label) = self.labels[row * self.grid_cols + col] else { continue };
                let d = (col as f64 * s - pixel.x).powi(2) + (row as f64 * s - pixel.y).powi(2);
                if d <= radius2 && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, label));
                }
            }
        }
        Ok(best.map(|(_, l)| l))
    }
}

/// Back-project every `stride`-th pixel with valid depth and partition the
/// points into `clusters` groups.
pub fn cluster_depth(
    depth: &DepthImage,
    intr: &CameraIntrinsics,
    range: &DepthRange,
    clusters: usize,
    stride: u32,
    seed: u64,
) -> Result<ClusterMap, ClusterError> {
    cluster_depth_with(depth, intr, range, clusters, stride, seed, &KMeansParams::default())
}

pub fn cluster_depth_with(
    depth: &DepthImage,
    intr: &CameraIntrinsics,
    range: &DepthRange,
    clusters: usize,
    stride: u32,
    seed: u64,
    params: &KMeansParams,
) -> Result<ClusterMap, ClusterError> {
    if clusters == 0 || stride == 0 {
        return Err(ClusterError::InvalidParameters);
    }
    let (w, h) = depth.dimensions();
    let cols = w.div_ceil(stride) as usize;
    let rows = h.div_ceil(stride) as usize;
    let mut points = Vec::with_capacity(cols * rows);
    let mut slots = Vec::with_capacity(cols * rows);
    for row in 0..rows {
        for col in 0..cols {
            let (x, y) = (col as u32 * stride, row as u32 * stride);
            let raw = depth.get_pixel(x, y)[0] as f64;
            if let Ok(p) = backproject(&Vector2::new(x as f64, y as f64), raw, intr, range) {
                points.push(p);
                slots.push(row * cols + col);
            }
        }
    }
    let result = kmeans(&points, clusters, seed, params)?;
    let mut labels = vec![None; cols * rows];
    for (&slot, &label) in slots.iter().zip(&result.labels) {
        labels[slot] = Some(label);
    }
    Ok(ClusterMap {
        width: w,
        height: h,
        stride,
        grid_cols: cols,
        grid_rows: rows,
        labels,
        centroids: result.centroids,
        counts: result.counts,
        objective_trace: result.objective_trace,
    })
}
