//! Sparse corner features: FAST-9 segment test (plus a saddle test for
//! X-junctions) on a scale pyramid, 256-bit box-smoothed intensity-comparison
//! descriptors and Hamming matching.

use image::GrayImage;
use nalgebra::Vector2;

/// 256-bit binary descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Descriptor(pub [u64; 4]);

impl Descriptor {
    pub const BITS: u32 = 256;

    pub fn hamming(&self, other: &Descriptor) -> u32 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a ^ b).count_ones()).sum()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    pub fn flip_bit(&mut self, i: usize) {
        self.0[i / 64] ^= 1 << (i % 64);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureStatus {
    #[default]
    Unknown,
    Static,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    /// Position in full-resolution pixel coordinates.
    pub pixel: Vector2<f64>,
    /// Pyramid level the corner was found on.
    pub octave: u8,
    pub response: f32,
    pub descriptor: Descriptor,
    /// Metric depth from the aligned depth image, if valid.
    pub depth: Option<f64>,
    pub cluster_id: Option<usize>,
    pub status: FeatureStatus,
}

impl Feature {
    pub fn new(pixel: Vector2<f64>, descriptor: Descriptor) -> Self {
        Self {
            pixel,
            octave: 0,
            response: 0.0,
            descriptor,
            depth: None,
            cluster_id: None,
            status: FeatureStatus::Unknown,
        }
    }

    pub fn is_dynamic(&self) -> bool {
        self.status == FeatureStatus::Dynamic
    }

    /// Statuses only ever move towards dynamic.
    pub fn mark_dynamic(&mut self) -> bool {
        let changed = self.status != FeatureStatus::Dynamic;
        self.status = FeatureStatus::Dynamic;
        changed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub levels: usize,
    pub scale_factor: f64,
    /// Segment-test intensity threshold.
    pub threshold: u8,
    /// Bucketing cell size in full-resolution pixels.
    pub grid: u32,
    pub per_cell_cap: usize,
    pub max_features: usize,
    /// Minimum distance between two kept corners, full-resolution pixels.
    pub min_separation: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            levels: 8,
            scale_factor: 1.2,
            threshold: 20,
            grid: 32,
            per_cell_cap: 5,
            max_features: 1000,
            min_separation: 3.0,
        }
    }
}

// Bresenham circle of radius 3, clockwise from 12 o'clock.
const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

const ARC: u32 = 9;
const PATCH_RADIUS: i32 = 13;
const BOX_RADIUS: i32 = 2;
/// Corners closer than this to a level's border get no descriptor.
pub const BORDER: i32 = PATCH_RADIUS + BOX_RADIUS + 2;

const fn build_pattern() -> [[i8; 4]; 256] {
    let mut out = [[0i8; 4]; 256];
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    let span = (2 * PATCH_RADIUS + 1) as u64;
    let mut i = 0;
    while i < 256 {
        let mut j = 0;
        while j < 4 {
            // xorshift64*
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            let r = state.wrapping_mul(0x2545_F491_4F6C_DD1D) >> 33;
            out[i][j] = ((r % span) as i32 - PATCH_RADIUS) as i8;
            j += 1;
        }
        i += 1;
    }
    out
}

/// Point pairs `(x1, y1, x2, y2)` compared by the descriptor.
pub const PATTERN: [[i8; 4]; 256] = build_pattern();

fn has_arc(mask: u32) -> bool {
    if mask.count_ones() < ARC {
        return false;
    }
    let doubled = mask | (mask << 16);
    let mut run = 0;
    for i in 0..32 {
        if doubled >> i & 1 == 1 {
            run += 1;
            if run >= ARC {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

/// Saddle test on the ring: all samples clear of the ring mean by more than
/// `t`, forming exactly four alternating bright/dark runs of length ≥ 2.
/// This catches X-junctions (checkerboard vertices) that no 9-arc covers.
fn saddle_score(ring: &[i32; 16], t: i32) -> Option<i32> {
    // every run of length ≥ 2 contains an even index
    let even = ring.iter().step_by(2);
    let (lo, hi) = even.fold((i32::MAX, i32::MIN), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    if hi - lo <= 2 * t {
        return None;
    }
    let sum: i32 = ring.iter().sum();
    let mut bright = 0u32;
    for (k, &p) in ring.iter().enumerate() {
        let d = 16 * p - sum;
        if d.abs() <= 16 * t {
            return None;
        }
        if d > 0 {
            bright |= 1 << k;
        }
    }
    let rotated = (bright >> 1) | ((bright & 1) << 15);
    let transitions = (bright ^ rotated).count_ones();
    if transitions != 4 {
        return None;
    }
    // shortest run: rotate so a run starts at index 0, then measure
    let start = (0..16).find(|&k| (bright >> k & 1) != (bright >> ((k + 15) % 16) & 1))?;
    let mut run = 0;
    let mut shortest = 16;
    for i in 0..16 {
        let k = (start + i) % 16;
        let prev = (start + i + 15) % 16;
        if i > 0 && (bright >> k & 1) != (bright >> prev & 1) {
            shortest = shortest.min(run);
            run = 0;
        }
        run += 1;
    }
    shortest = shortest.min(run);
    if shortest < 2 {
        return None;
    }
    // ChESS-style response: opposite-quadrant sums minus point asymmetry,
    // so the maximum sits on the junction itself.
    let sum_response: i32 = (0..4)
        .map(|n| ((ring[n] + ring[n + 8]) - (ring[n + 4] + ring[n + 12])).abs())
        .sum();
    let diff_response: i32 = (0..8).map(|n| (ring[n] - ring[n + 8]).abs()).sum();
    Some((sum_response - diff_response).max(1))
}

/// Corner score at `(x, y)`, or `None` if neither the 9-arc segment test
/// nor the saddle test passes. `(x, y)` must be at least 3 pixels from
/// every border.
pub fn corner_score(img: &GrayImage, x: u32, y: u32, threshold: u8) -> Option<f32> {
    let w = img.width() as usize;
    let raw = img.as_raw();
    let at = |k: usize| {
        let (dx, dy) = CIRCLE[k];
        raw[(y as i32 + dy) as usize * w + (x as i32 + dx) as usize] as i32
    };
    let c = raw[y as usize * w + x as usize] as i32;
    let t = threshold as i32;
    let mut ring = [0i32; 16];
    let (mut lo, mut hi) = (i32::MAX, i32::MIN);
    for k in (0..16).step_by(2) {
        ring[k] = at(k);
        lo = lo.min(ring[k]);
        hi = hi.max(ring[k]);
    }
    // flat neighbourhoods fail both tests
    if hi - lo <= 2 * t && hi <= c + t && lo >= c - t {
        return None;
    }
    for k in (1..16).step_by(2) {
        ring[k] = at(k);
    }
    let saddle = saddle_score(&ring, t);
    // Any 9-arc covers at least two of the compass points.
    let mut bright_compass = 0;
    let mut dark_compass = 0;
    for k in [0, 4, 8, 12] {
        bright_compass += (ring[k] > c + t) as u32;
        dark_compass += (ring[k] < c - t) as u32;
    }
    if bright_compass < 2 && dark_compass < 2 {
        return saddle.map(|s| s as f32);
    }
    let mut bright = 0u32;
    let mut dark = 0u32;
    let mut bright_sum = 0i32;
    let mut dark_sum = 0i32;
    for (k, &p) in ring.iter().enumerate() {
        if p > c + t {
            bright |= 1 << k;
            bright_sum += p - c - t;
        } else if p < c - t {
            dark |= 1 << k;
            dark_sum += c - p - t;
        }
    }
    let segment = match (has_arc(bright), has_arc(dark)) {
        (true, true) => Some(bright_sum.max(dark_sum)),
        (true, false) => Some(bright_sum),
        (false, true) => Some(dark_sum),
        (false, false) => None,
    };
    match (segment, saddle) {
        (Some(a), Some(b)) => Some(a.max(b) as f32),
        (a, b) => a.or(b).map(|s| s as f32),
    }
}

/// Segment-test corners after 3×3 non-maximum suppression: `(x, y, score)`.
pub fn fast_corners(img: &GrayImage, threshold: u8, border: u32) -> Vec<(u32, u32, f32)> {
    let (w, h) = img.dimensions();
    let border = border.max(3);
    if w <= 2 * border || h <= 2 * border {
        return Vec::new();
    }
    let mut scores = vec![0f32; (w * h) as usize];
    let mut candidates = Vec::new();
    for y in border..h - border {
        for x in border..w - border {
            if let Some(s) = corner_score(img, x, y, threshold) {
                scores[(y * w + x) as usize] = s;
                candidates.push((x, y));
            }
        }
    }
    candidates
        .into_iter()
        .filter_map(|(x, y)| {
            let s = scores[(y * w + x) as usize];
            for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let n = scores[((y as i32 + dy) as u32 * w + (x as i32 + dx) as u32) as usize];
                    // ties resolved towards the earlier raster position
                    if n > s || (n == s && (dy < 0 || (dy == 0 && dx < 0))) {
                        return None;
                    }
                }
            }
            Some((x, y, s))
        })
        .collect()
}

struct Integral {
    width: usize,
    sums: Vec<u32>,
}

impl Integral {
    fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let stride = w + 1;
        let mut sums = vec![0u32; stride * (h + 1)];
        let raw = img.as_raw();
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += raw[y * w + x] as u32;
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { width: stride, sums }
    }

    fn box_sum(&self, x: i32, y: i32) -> u32 {
        let x0 = (x - BOX_RADIUS) as usize;
        let y0 = (y - BOX_RADIUS) as usize;
        let x1 = (x + BOX_RADIUS + 1) as usize;
        let y1 = (y + BOX_RADIUS + 1) as usize;
        let s = &self.sums;
        s[y1 * self.width + x1] + s[y0 * self.width + x0] - s[y0 * self.width + x1] - s[y1 * self.width + x0]
    }
}

fn describe_at(integral: &Integral, x: i32, y: i32) -> Descriptor {
    let mut d = Descriptor::default();
    for (i, p) in PATTERN.iter().enumerate() {
        let a = integral.box_sum(x + p[0] as i32, y + p[1] as i32);
        let b = integral.box_sum(x + p[2] as i32, y + p[3] as i32);
        if a < b {
            d.set_bit(i);
        }
    }
    d
}

/// Descriptor of the patch centred at `(x, y)`; `None` too close to the border.
pub fn describe(img: &GrayImage, x: u32, y: u32) -> Option<Descriptor> {
    let (w, h) = img.dimensions();
    let (x, y) = (x as i32, y as i32);
    if x < BORDER || y < BORDER || x >= w as i32 - BORDER || y >= h as i32 - BORDER {
        return None;
    }
    Some(describe_at(&Integral::new(img), x, y))
}

/// Bilinear downsampling of `img` to `w × h`, pixel centres aligned.
fn downsample(img: &GrayImage, w: u32, h: u32) -> GrayImage {
    let (sw, sh) = img.dimensions();
    let (sx, sy) = (sw as f32 / w as f32, sh as f32 / h as f32);
    let raw = img.as_raw();
    let src = |x: usize, y: usize| raw[y * sw as usize + x] as f32;
    let cols: Vec<(usize, usize, f32)> = (0..w)
        .map(|x| {
            let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f32);
            let x0 = fx.floor() as usize;
            (x0, (x0 + 1).min(sw as usize - 1), fx - x0 as f32)
        })
        .collect();
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f32);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh as usize - 1);
        let ay = fy - y0 as f32;
        for &(x0, x1, ax) in &cols {
            let top = src(x0, y0) * (1.0 - ax) + src(x1, y0) * ax;
            let bottom = src(x0, y1) * (1.0 - ax) + src(x1, y1) * ax;
            out.push((top * (1.0 - ay) + bottom * ay + 0.5) as u8);
        }
    }
    GrayImage::from_raw(w, h, out).unwrap()
}

pub fn build_pyramid(img: &GrayImage, levels: usize, scale_factor: f64) -> Vec<(GrayImage, f64)> {
    let mut out: Vec<(GrayImage, f64)> = Vec::with_capacity(levels);
    out.push((img.clone(), 1.0));
    for level in 1..levels {
        let scale = scale_factor.powi(level as i32);
        let w = (img.width() as f64 / scale).round() as u32;
        let h = (img.height() as f64 / scale).round() as u32;
        if w < 2 * BORDER as u32 + 1 || h < 2 * BORDER as u32 + 1 {
            break;
        }
        // each level from the previous one keeps the filter footprint small
        let previous = &out[level - 1].0;
        out.push((downsample(previous, w, h), scale));
    }
    out
}

/// Detect corners on every pyramid level, bucket them on a grid and attach
/// descriptors. Output is sorted by decreasing response and is a pure
/// function of the image and configuration.
pub fn detect_and_describe(img: &GrayImage, config: &DetectorConfig) -> Vec<Feature> {
    let pyramid = build_pyramid(img, config.levels.max(1), config.scale_factor);
    let mut candidates: Vec<(Feature, i32, i32)> = Vec::new();
    for (level, (layer, scale)) in pyramid.iter().enumerate() {
        let corners = fast_corners(layer, config.threshold, BORDER as u32);
        if corners.is_empty() {
            continue;
        }
        for (x, y, score) in corners {
            let full = |v: u32| (v as f64 + 0.5) * scale - 0.5;
            let mut f = Feature::new(Vector2::new(full(x), full(y)), Descriptor::default());
            f.octave = level as u8;
            f.response = score;
            candidates.push((f, x as i32, y as i32));
        }
    }

    // finer levels claim grid slots first, strongest first within a level
    candidates.sort_by(|(a, ..), (b, ..)| {
        a.octave
            .cmp(&b.octave)
            .then(b.response.total_cmp(&a.response))
            .then(a.pixel.y.total_cmp(&b.pixel.y))
            .then(a.pixel.x.total_cmp(&b.pixel.x))
    });

    let grid = config.grid.max(1) as f64;
    let cols = (img.width() as f64 / grid).ceil() as usize;
    let rows = (img.height() as f64 / grid).ceil() as usize;
    let mut per_cell = vec![0usize; cols * rows];
    let mut kept_in_cell: Vec<Vec<Vector2<f64>>> = vec![Vec::new(); cols * rows];
    let sep2 = config.min_separation * config.min_separation;
    let mut kept: Vec<(Feature, i32, i32)> = Vec::new();
    for (f, lx, ly) in candidates {
        if kept.len() >= config.max_features {
            break;
        }
        let cx = ((f.pixel.x / grid) as usize).min(cols - 1);
        let cy = ((f.pixel.y / grid) as usize).min(rows - 1);
        let cell = cy * cols + cx;
        if per_cell[cell] >= config.per_cell_cap {
            continue;
        }
        let crowded = (cy.saturating_sub(1)..=(cy + 1).min(rows - 1)).any(|ny| {
            (cx.saturating_sub(1)..=(cx + 1).min(cols - 1))
                .any(|nx| kept_in_cell[ny * cols + nx].iter().any(|p| (p - f.pixel).norm_squared() < sep2))
        });
        if crowded {
            continue;
        }
        per_cell[cell] += 1;
        kept_in_cell[cell].push(f.pixel);
        kept.push((f, lx, ly));
    }
    let mut integrals: Vec<Option<Integral>> = (0..pyramid.len()).map(|_| None).collect();
    let mut out: Vec<Feature> = kept
        .into_iter()
        .map(|(mut f, lx, ly)| {
            let level = f.octave as usize;
            let integral = integrals[level].get_or_insert_with(|| Integral::new(&pyramid[level].0));
            f.descriptor = describe_at(integral, lx, ly);
            f
        })
        .collect();
    out.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then(a.octave.cmp(&b.octave))
            .then(a.pixel.y.total_cmp(&b.pixel.y))
            .then(a.pixel.x.total_cmp(&b.pixel.x))
    });
    out
}

/// A descriptor correspondence between a query and a candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub query: usize,
    pub target: usize,
    pub distance: u32,
}

fn best_two<I: Iterator<Item = (usize, u32)>>(iter: I) -> Option<(usize, u32, Option<u32>)> {
    let mut best: Option<(usize, u32)> = None;
    let mut second: Option<u32> = None;
    for (i, d) in iter {
        match best {
            None => best = Some((i, d)),
            Some((_, bd)) if d < bd => {
                second = Some(bd);
                best = Some((i, d));
            }
            Some(_) => {
                if second.is_none_or(|s| d < s) {
                    second = Some(d);
                }
            }
        }
    }
    best.map(|(i, d)| (i, d, second))
}

fn passes_ratio(best: u32, second: Option<u32>, ratio: f64) -> bool {
    second.is_none_or(|s| best as f64 <= ratio * s as f64)
}

/// Brute-force Hamming matching with distance threshold, ratio test and
/// cross-check. Ties go to the lowest index. Result sorted by query index.
pub fn match_features(
    query: &[Descriptor],
    candidates: &[Descriptor],
    max_distance: u32,
    ratio: f64,
) -> Vec<Match> {
    if query.is_empty() || candidates.is_empty() {
        return Vec::new();
    }
    let distances: Vec<u32> = query
        .iter()
        .flat_map(|q| candidates.iter().map(move |c| q.hamming(c)))
        .collect();
    let n = candidates.len();
    let reverse_best: Vec<usize> = (0..n)
        .map(|c| best_two((0..query.len()).map(|q| (q, distances[q * n + c]))).unwrap().0)
        .collect();
    let mut out = Vec::new();
    for q in 0..query.len() {
        let (target, distance, second) = best_two((0..n).map(|c| (c, distances[q * n + c]))).unwrap();
        if distance > max_distance || !passes_ratio(distance, second, ratio) {
            continue;
        }
        if reverse_best[target] != q {
            continue;
        }
        out.push(Match { query: q, target, distance });
    }
    out
}

/// Spatial hash over feature positions for windowed searches.
pub struct FeatureGrid {
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
}

impl FeatureGrid {
    pub fn new(features: &[Feature], width: u32, height: u32, cell: f64) -> Self {
        let cols = (width as f64 / cell).ceil() as usize + 1;
        let rows = (height as f64 / cell).ceil() as usize + 1;
        let mut buckets = vec![Vec::new(); cols * rows];
        for (i, f) in features.iter().enumerate() {
            let cx = ((f.pixel.x / cell).max(0.0) as usize).min(cols - 1);
            let cy = ((f.pixel.y / cell).max(0.0) as usize).min(rows - 1);
            buckets[cy * cols + cx].push(i);
        }
        Self { cell, cols, rows, buckets }
    }

    /// Indices of features within `radius` of `center`, ascending.
    pub fn within(&self, features: &[Feature], center: &Vector2<f64>, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let lo_x = ((center.x - radius) / self.cell).floor().max(0.0) as usize;
        let lo_y = ((center.y - radius) / self.cell).floor().max(0.0) as usize;
        let hi_x = (((center.x + radius) / self.cell).floor().max(0.0) as usize).min(self.cols - 1);
        let hi_y = (((center.y + radius) / self.cell).floor().max(0.0) as usize).min(self.rows - 1);
        let mut out = Vec::new();
        for cy in lo_y..=hi_y {
            for cx in lo_x..=hi_x {
                for &i in &self.buckets[cy * self.cols + cx] {
                    if (features[i].pixel - center).norm_squared() <= r2 {
                        out.push(i);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// A landmark prediction for guided matching.
#[derive(Debug, Clone, Copy)]
pub struct ProjectedPoint {
    pub pixel: Vector2<f64>,
    pub descriptor: Descriptor,
}

/// Match predicted landmark projections against features inside a search
/// window. `Match::query` indexes `points`, `Match::target` indexes
/// `features`. Features with `excluded[i]` set are skipped. One-to-one:
/// conflicts keep the lower distance (then the lower point index).
pub fn match_by_projection(
    points: &[ProjectedPoint],
    features: &[Feature],
    grid: &FeatureGrid,
    radius: f64,
    max_distance: u32,
    ratio: f64,
    excluded: &[bool],
) -> Vec<Match> {
    let mut proposals: Vec<Match> = points
        .iter()
        .enumerate()
        .filter_map(|(pi, p)| {
            let window = grid.within(features, &p.pixel, radius);
            let (target, distance, second) = best_two(
                window
                    .into_iter()
                    .filter(|&fi| !excluded.get(fi).copied().unwrap_or(false))
                    .map(|fi| (fi, p.descriptor.hamming(&features[fi].descriptor))),
            )?;
            (distance <= max_distance && passes_ratio(distance, second, ratio))
                .then_some(Match { query: pi, target, distance })
        })
        .collect();
    proposals.sort_by_key(|m| (m.distance, m.query));
    let mut taken = vec![false; features.len()];
    let mut out: Vec<Match> = proposals
        .into_iter()
        .filter(|m| !std::mem::replace(&mut taken[m.target], true))
        .collect();
    out.sort_by_key(|m| m.query);
    out
}
