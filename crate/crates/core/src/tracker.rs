//! Two-stage frame tracking against a static-only keyframe map.
//!
//! Stage 1 matches the frame against the reference keyframe's map points
//! from a constant-velocity guess and optimizes the pose. The depth image is
//! then clustered and clusters whose reprojection error under the stage-1
//! pose stands out are marked dynamic. Stage 2 matches the remaining
//! features against the local map and refines the pose.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Instant;

use image::RgbImage;
use nalgebra::{Matrix2x6, Matrix3, Matrix6, Vector2, Vector3, Vector6};
use thiserror::Error;

use crate::clustering::{cluster_depth, ClusterMap};
use crate::dynamic::{
    classify, compute_cluster_errors, mark_features, Classification, ClusterState, DetectionPolicy, Observation,
};
use crate::features::{
    detect_and_describe, match_by_projection, match_features, DetectorConfig, Feature, FeatureGrid, FeatureStatus,
    ProjectedPoint,
};
use crate::geometry::{backproject_metric, huber, huber_weight, project, CameraIntrinsics, DepthRange, Pose, Twist};
use crate::map::{KeyFrameId, Map, MapPointId};
use crate::semantic::{filter_keyframe, movable_mask, BinaryMask, MaskError, MaskProvider, MovableClassSet};
use crate::DepthImage;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("{found} matches, at least {required} needed")]
    TooFewMatches { found: usize, required: usize },
    #[error("tracking lost ({inliers} inliers)")]
    Lost { inliers: usize },
    #[error("first frame has no valid depth features")]
    EmptyBootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerParams {
    pub rounds: usize,
    pub iterations: usize,
    /// Squared-residual inlier gate between rounds.
    pub chi2: f64,
    pub huber_delta: f64,
    pub min_matches: usize,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self { rounds: 4, iterations: 10, chi2: 5.991, huber_delta: 2.0, min_matches: 6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    /// Camera-to-world.
    pub pose: Pose,
    pub inliers: Vec<bool>,
    /// Robust cost over the final active set.
    pub cost: f64,
    /// Cost at the end of each round.
    pub round_costs: Vec<f64>,
    /// A round could not lower the cost despite a non-zero gradient.
    pub stalled: bool,
}

impl PoseEstimate {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// Reprojection residual `u − π(T_cw · P)`.
pub fn reprojection_residual(
    world_to_camera: &Pose,
    obs: &Observation,
    intr: &CameraIntrinsics,
) -> Option<Vector2<f64>> {
    project(&world_to_camera.apply(&obs.world), intr).ok().map(|p| obs.pixel - p)
}

/// Jacobian of [`reprojection_residual`] with respect to a left
/// perturbation `exp(ξ) · T_cw`, rotation block first.
pub fn reprojection_jacobian(
    world_to_camera: &Pose,
    world: &Vector3<f64>,
    intr: &CameraIntrinsics,
) -> Option<Matrix2x6<f64>> {
    let p = world_to_camera.apply(world);
    if p.z <= 0.0 {
        return None;
    }
    let iz = 1.0 / p.z;
    let proj = nalgebra::Matrix2x3::new(
        intr.fx * iz,
        0.0,
        -intr.fx * p.x * iz * iz,
        0.0,
        intr.fy * iz,
        -intr.fy * p.y * iz * iz,
    );
    let skew = Matrix3::new(0.0, -p.z, p.y, p.z, 0.0, -p.x, -p.y, p.x, 0.0);
    let mut dp = nalgebra::Matrix3x6::zeros();
    dp.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew));
    dp.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    Some(-(proj * dp))
}

fn robust_cost(t_cw: &Pose, obs: &[Observation], active: &[usize], intr: &CameraIntrinsics, delta: f64) -> f64 {
    let mut cost = 0.0;
    for &i in active {
        match reprojection_residual(t_cw, &obs[i], intr) {
            Some(e) => cost += huber(e.norm_squared(), delta),
            None => return f64::INFINITY,
        }
    }
    cost
}

fn gate(t_cw: &Pose, obs: &[Observation], intr: &CameraIntrinsics, chi2: f64) -> Vec<bool> {
    obs.iter()
        .map(|o| {
            o.world.iter().all(|v| v.is_finite())
                && reprojection_residual(t_cw, o, intr).is_some_and(|e| e.norm_squared() <= chi2)
        })
        .collect()
}

/// Motion-only Gauss-Newton on the camera pose, landmarks fixed. Each round
/// runs IRLS iterations over the active set with a backtracking step that
/// never increases the robust cost; between rounds the active set is re-gated
/// at `chi2`.
pub fn optimize_pose(
    obs: &[Observation],
    initial: &Pose,
    intr: &CameraIntrinsics,
    params: &OptimizerParams,
) -> Result<PoseEstimate, TrackError> {
    if obs.len() < params.min_matches {
        return Err(TrackError::TooFewMatches { found: obs.len(), required: params.min_matches });
    }
    let delta = params.huber_delta;
    let mut t_cw = initial.inverse();
    // the first round starts from every match in front of the camera
    let mut inliers: Vec<bool> = obs
        .iter()
        .map(|o| o.world.iter().all(|v| v.is_finite()) && reprojection_residual(&t_cw, o, intr).is_some())
        .collect();
    let mut round_costs = Vec::with_capacity(params.rounds);
    let mut stalled = false;
    let mut cost = 0.0;
    for _ in 0..params.rounds {
        let active: Vec<usize> = (0..obs.len()).filter(|&i| inliers[i]).collect();
        if active.len() < params.min_matches {
            break;
        }
        cost = robust_cost(&t_cw, obs, &active, intr, delta);
        let start = cost;
        let mut gradient_norm = 0.0;
        for _ in 0..params.iterations {
            let mut h = Matrix6::<f64>::zeros();
            let mut g = Vector6::<f64>::zeros();
            for &i in &active {
                let (Some(e), Some(j)) =
                    (reprojection_residual(&t_cw, &obs[i], intr), reprojection_jacobian(&t_cw, &obs[i].world, intr))
                else {
                    continue;
                };
                let w = huber_weight(e.norm_squared(), delta);
                h += w * j.transpose() * j;
                g += w * j.transpose() * e;
            }
            gradient_norm = g.norm();
            let Some(chol) = h.cholesky() else { break };
            let mut step = -chol.solve(&g);
            if step.norm() < 1e-15 {
                break;
            }
            let mut improved = false;
            for _ in 0..10 {
                let candidate = Pose::exp(&Twist(step)).compose(&t_cw);
                let c = robust_cost(&candidate, obs, &active, intr, delta);
                if c < cost {
                    t_cw = candidate;
                    cost = c;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if cost >= start && gradient_norm > 1e-6 * active.len() as f64 {
            log::debug!("pose optimization stalled at cost {cost:.6}");
            stalled = true;
        }
        round_costs.push(cost);
        inliers = gate(&t_cw, obs, intr, params.chi2);
    }
    Ok(PoseEstimate { pose: t_cw.inverse(), inliers, cost, round_costs, stalled })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrackStats {
    pub matches_stage1: usize,
    pub matches_stage2: usize,
    pub inliers: usize,
    pub dynamic_rejected: usize,
    pub frames_since_keyframe: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyframePolicy {
    pub max_interval: usize,
    /// Fraction of the reference keyframe's tracked points.
    pub tracked_ratio: f64,
    pub min_inliers: usize,
}

impl Default for KeyframePolicy {
    fn default() -> Self {
        Self { max_interval: 20, tracked_ratio: 0.9, min_inliers: 50 }
    }
}

pub fn select_keyframe(stats: &TrackStats, reference_tracked: usize, policy: &KeyframePolicy) -> bool {
    let due = stats.frames_since_keyframe >= policy.max_interval
        || (stats.inliers as f64) < policy.tracked_ratio * reference_tracked as f64;
    due && stats.inliers >= policy.min_inliers
}

/// Map points of `reference` and of its covisible keyframes.
pub fn local_map(map: &Map, reference: KeyFrameId, min_shared: usize) -> BTreeSet<MapPointId> {
    map.local_map(reference, min_shared)
}

/// A tracked (or to-be-tracked) RGB-D frame.
#[derive(Debug, Clone)]
pub struct Frame {
    pub id: u64,
    pub timestamp: f64,
    pub rgb: Arc<RgbImage>,
    pub depth: Arc<DepthImage>,
    pub features: Vec<Feature>,
    pub pose: Option<Pose>,
    pub cluster_map: Option<ClusterMap>,
}

impl Frame {
    /// Detect features and attach their depths.
    pub fn new(
        id: u64,
        timestamp: f64,
        rgb: Arc<RgbImage>,
        depth: Arc<DepthImage>,
        detector: &DetectorConfig,
        intr: &CameraIntrinsics,
        range: &DepthRange,
    ) -> Self {
        let gray = image::imageops::grayscale(&*rgb);
        let mut features = detect_and_describe(&gray, detector);
        let (w, h) = depth.dimensions();
        for f in &mut features {
            let (x, y) = (f.pixel.x.round(), f.pixel.y.round());
            if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
                continue;
            }
            let z = depth.get_pixel(x as u32, y as u32)[0] as f64 / intr.depth_scale;
            if z > 0.0 && range.contains(z) {
                f.depth = Some(z);
            }
        }
        Self { id, timestamp, rgb, depth, features, pose: None, cluster_map: None }
    }
}

/// Register `frame` as a keyframe. `associations` pairs stage-2 inlier
/// feature indices with their map points. Non-dynamic features with valid
/// depth and no association spawn new points. Returns the keyframe and the
/// number of new points.
pub fn insert_keyframe(
    map: &mut Map,
    frame: &Frame,
    pose: &Pose,
    associations: &[(usize, MapPointId)],
    tracked_points: usize,
    intr: &CameraIntrinsics,
) -> (KeyFrameId, usize) {
    let kf = map.add_keyframe(
        frame.id,
        frame.timestamp,
        *pose,
        frame.features.clone(),
        Some(frame.rgb.clone()),
        Some(frame.depth.clone()),
        tracked_points,
    );
    for &(fi, pid) in associations {
        map.add_observation(pid, kf, fi);
    }
    let mut created = 0;
    for (fi, f) in frame.features.iter().enumerate() {
        if f.is_dynamic() || map.keyframe(kf).unwrap().points[fi].is_some() {
            continue;
        }
        let Some(z) = f.depth else { continue };
        let world = pose.apply(&backproject_metric(&f.pixel, z, intr));
        if map.add_point(world, kf, fi).is_some() {
            created += 1;
        }
    }
    (kf, created)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemanticMode {
    Sync,
    Async,
}

#[derive(Clone)]
pub struct SemanticSettings {
    pub provider: Arc<dyn MaskProvider>,
    pub classes: MovableClassSet,
    pub mode: SemanticMode,
}

impl std::fmt::Debug for SemanticSettings {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SemanticSettings").field("classes", &self.classes).field("mode", &self.mode).finish()
    }
}

#[derive(Debug, Clone)]
struct MaskJob {
    keyframe: KeyFrameId,
    timestamp: f64,
    rgb: Arc<RgbImage>,
    attempt: u8,
}

type MaskOutcome = (MaskJob, Result<BinaryMask, MaskError>);

fn run_job(provider: &dyn MaskProvider, classes: &MovableClassSet, job: &MaskJob) -> Result<BinaryMask, MaskError> {
    provider.provide(job.keyframe, job.timestamp, &job.rgb).map(|m| movable_mask(&m, classes))
}

/// Counters of the semantic stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SemanticStats {
    pub filtered_keyframes: usize,
    pub skipped_keyframes: usize,
    pub features_marked: usize,
    pub points_deleted: usize,
}

/// Mask retrieval and keyframe filtering. A keyframe whose mask is
/// unavailable is retried once at the next poll, then skipped. Filtering
/// always runs on the tracking thread, between frames.
struct SemanticStage {
    settings: SemanticSettings,
    retries: Vec<MaskJob>,
    worker: Option<(Sender<MaskJob>, Receiver<MaskOutcome>, JoinHandle<()>)>,
    in_flight: usize,
    stats: SemanticStats,
}

impl SemanticStage {
    fn new(settings: SemanticSettings) -> Self {
        let worker = (settings.mode == SemanticMode::Async).then(|| {
            let (job_tx, job_rx) = channel::<MaskJob>();
            let (out_tx, out_rx) = channel::<MaskOutcome>();
            let provider = settings.provider.clone();
            let classes = settings.classes.clone();
            let handle = std::thread::spawn(move || {
                for job in job_rx {
                    let result = run_job(provider.as_ref(), &classes, &job);
                    if out_tx.send((job, result)).is_err() {
                        break;
                    }
                }
            });
            (job_tx, out_rx, handle)
        });
        Self { settings, retries: Vec::new(), worker, in_flight: 0, stats: SemanticStats::default() }
    }

    fn submit(&mut self, map: &mut Map, job: MaskJob) {
        match &self.worker {
            Some((tx, _, _)) => {
                if tx.send(job).is_ok() {
                    self.in_flight += 1;
                }
            }
            None => {
                let result = run_job(self.settings.provider.as_ref(), &self.settings.classes, &job);
                self.apply(map, job, result);
            }
        }
    }

    fn apply(&mut self, map: &mut Map, job: MaskJob, result: Result<BinaryMask, MaskError>) {
        match result {
            Ok(mask) => {
                let c = filter_keyframe(map, job.keyframe, &mask);
                self.stats.filtered_keyframes += 1;
                self.stats.features_marked += c.features_marked;
                self.stats.points_deleted += c.points_deleted;
            }
            Err(e) if job.attempt == 0 => {
                log::debug!("mask for keyframe {} unavailable ({e}), will retry", job.keyframe);
                self.retries.push(MaskJob { attempt: 1, ..job });
            }
            Err(e) => {
                log::warn!("mask for keyframe {} unavailable after retry ({e}); keyframe left unfiltered", job.keyframe);
                self.stats.skipped_keyframes += 1;
            }
        }
    }

    fn poll(&mut self, map: &mut Map) {
        let mut done = Vec::new();
        if let Some((_, rx, _)) = &self.worker {
            while let Ok(outcome) = rx.try_recv() {
                done.push(outcome);
            }
        }
        self.in_flight -= done.len();
        for (job, result) in done {
            self.apply(map, job, result);
        }
        for job in std::mem::take(&mut self.retries) {
            self.submit(map, job);
        }
    }

    /// Wait for outstanding jobs, including their retries.
    fn drain(&mut self, map: &mut Map) {
        loop {
            if self.in_flight > 0 {
                let outcome = self.worker.as_ref().and_then(|(_, rx, _)| rx.recv().ok());
                match outcome {
                    Some((job, result)) => {
                        self.in_flight -= 1;
                        self.apply(map, job, result);
                    }
                    None => self.in_flight = 0,
                }
            } else if !self.retries.is_empty() {
                for job in std::mem::take(&mut self.retries) {
                    self.submit(map, job);
                }
            } else {
                break;
            }
        }
    }
}

impl Drop for SemanticStage {
    fn drop(&mut self) {
        if let Some((tx, rx, handle)) = self.worker.take() {
            drop(tx);
            drop(rx);
            let _ = handle.join();
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrackerConfig {
    pub detector: DetectorConfig,
    pub optimizer: OptimizerParams,
    pub keyframes: KeyframePolicy,
    pub policy: DetectionPolicy,
    pub range: DepthRange,
    /// K-Means cluster count.
    pub clusters: usize,
    /// Depth sampling stride for clustering.
    pub stride: u32,
    pub seed: u64,
    pub geometry: bool,
    pub max_hamming: u32,
    pub ratio: f64,
    /// Stage-1 search radius around the predicted projection, pixels.
    pub stage1_radius: f64,
    pub stage2_radius: f64,
    pub covisibility_min: usize,
    pub lost_threshold: usize,
    /// Dynamic-cluster hits after which a map point is deleted.
    pub cull_hits: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            detector: DetectorConfig::default(),
            optimizer: OptimizerParams::default(),
            keyframes: KeyframePolicy::default(),
            policy: DetectionPolicy::default(),
            range: DepthRange::default(),
            clusters: 24,
            stride: 4,
            seed: 42,
            geometry: true,
            max_hamming: 64,
            ratio: 0.8,
            stage1_radius: 15.0,
            stage2_radius: 6.0,
            covisibility_min: 15,
            lost_threshold: 15,
            cull_hits: 2,
        }
    }
}

/// Wall-clock breakdown of one frame, milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FrameTiming {
    pub detect_ms: f64,
    pub cluster_ms: f64,
    pub dyndetect_ms: f64,
    pub track_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone)]
pub struct FrameResult {
    pub frame_id: u64,
    pub timestamp: f64,
    pub pose: Pose,
    pub stats: TrackStats,
    pub timing: FrameTiming,
    pub keyframe: Option<KeyFrameId>,
    pub classification: Option<Classification>,
    /// Feature indices matched to map points in stage 1.
    pub stage1_features: Vec<usize>,
    /// Features with their final statuses.
    pub features: Vec<Feature>,
}

impl FrameResult {
    /// Features whose cluster received a Static or Dynamic verdict this
    /// frame. Clusters below the match minimum are never judged, so their
    /// features carry no detection decision.
    pub fn judged_features(&self) -> impl Iterator<Item = &Feature> + '_ {
        let judged: BTreeSet<usize> = self
            .classification
            .iter()
            .flat_map(|c| c.verdicts.iter())
            .filter(|v| matches!(v.state, ClusterState::Static | ClusterState::Dynamic))
            .map(|v| v.cluster_id)
            .collect();
        self.features.iter().filter(move |f| f.cluster_id.is_some_and(|c| judged.contains(&c)))
    }
}

/// The tracking worker: owns the map and the estimated trajectory.
pub struct Tracker {
    intr: CameraIntrinsics,
    config: TrackerConfig,
    map: Map,
    semantic: Option<SemanticStage>,
    trajectory: Vec<(f64, Pose)>,
    previous: Option<Pose>,
    velocity: Pose,
    last_keyframe: Option<KeyFrameId>,
    frames_since_keyframe: usize,
    last_points: Vec<MapPointId>,
    dynamic_rejected: usize,
}

impl Tracker {
    pub fn new(intr: CameraIntrinsics, config: TrackerConfig, semantic: Option<SemanticSettings>) -> Self {
        Self {
            intr,
            config,
            map: Map::new(),
            semantic: semantic.map(SemanticStage::new),
            trajectory: Vec::new(),
            previous: None,
            velocity: Pose::identity(),
            last_keyframe: None,
            frames_since_keyframe: 0,
            last_points: Vec::new(),
            dynamic_rejected: 0,
        }
    }

    pub fn map(&self) -> &Map {
        &self.map
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn trajectory(&self) -> &[(f64, Pose)] {
        &self.trajectory
    }

    pub fn dynamic_rejected(&self) -> usize {
        self.dynamic_rejected
    }

    pub fn semantic_stats(&self) -> Option<SemanticStats> {
        self.semantic.as_ref().map(|s| s.stats)
    }

    /// Apply outstanding semantic results.
    pub fn finish(&mut self) {
        if let Some(s) = &mut self.semantic {
            s.drain(&mut self.map);
        }
    }

    pub fn process(
        &mut self,
        id: u64,
        timestamp: f64,
        rgb: Arc<RgbImage>,
        depth: Arc<DepthImage>,
    ) -> Result<FrameResult, TrackError> {
        let start = Instant::now();
        if let Some(s) = &mut self.semantic {
            s.poll(&mut self.map);
        }
        let t = Instant::now();
        let frame = Frame::new(id, timestamp, rgb, depth, &self.config.detector, &self.intr, &self.config.range);
        let detect_ms = ms(t);
        let mut result = self.track_frame(frame)?;
        result.timing.detect_ms = detect_ms;
        result.timing.total_ms = ms(start);
        result.timing.track_ms =
            (result.timing.total_ms - detect_ms - result.timing.cluster_ms - result.timing.dyndetect_ms).max(0.0);
        Ok(result)
    }

    fn bootstrap(&mut self, mut frame: Frame) -> Result<FrameResult, TrackError> {
        let pose = Pose::identity();
        for f in &mut frame.features {
            f.status = FeatureStatus::Static;
        }
        let valid = frame.features.iter().filter(|f| f.depth.is_some()).count();
        if valid < self.config.optimizer.min_matches {
            return Err(TrackError::EmptyBootstrap);
        }
        let (kf, created) = insert_keyframe(&mut self.map, &frame, &pose, &[], valid, &self.intr);
        self.after_keyframe(kf, &frame);
        self.last_points = self.map.keyframe(kf).unwrap().associated_points().collect();
        self.previous = Some(pose);
        self.trajectory.push((frame.timestamp, pose));
        let stats = TrackStats { inliers: created, ..Default::default() };
        Ok(FrameResult {
            frame_id: frame.id,
            timestamp: frame.timestamp,
            pose,
            stats,
            timing: FrameTiming::default(),
            keyframe: Some(kf),
            classification: None,
            stage1_features: Vec::new(),
            features: frame.features,
        })
    }

    fn after_keyframe(&mut self, kf: KeyFrameId, frame: &Frame) {
        self.last_keyframe = Some(kf);
        self.frames_since_keyframe = 0;
        if let Some(s) = &mut self.semantic {
            let job = MaskJob { keyframe: kf, timestamp: frame.timestamp, rgb: frame.rgb.clone(), attempt: 0 };
            s.submit(&mut self.map, job);
        }
    }

    /// Keyframe sharing the most points with the previous frame.
    fn reference_keyframe(&self) -> KeyFrameId {
        let mut votes: BTreeMap<KeyFrameId, usize> = BTreeMap::new();
        for pid in &self.last_points {
            if let Some(p) = self.map.point(*pid) {
                for &(k, _) in &p.observations {
                    *votes.entry(k).or_insert(0) += 1;
                }
            }
        }
        votes
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(k, _)| k)
            .or(self.last_keyframe)
            .expect("tracker initialized")
    }

    fn project_points(&self, ids: &[MapPointId], pose: &Pose) -> (Vec<ProjectedPoint>, Vec<MapPointId>) {
        let t_cw = pose.inverse();
        let mut projected = Vec::new();
        let mut kept = Vec::new();
        for &id in ids {
            let Some(p) = self.map.point(id) else { continue };
            let c = t_cw.apply(&p.position);
            if c.z < self.config.range.min {
                continue;
            }
            let Ok(px) = project(&c, &self.intr) else { continue };
            if !self.intr.contains(&px) {
                continue;
            }
            projected.push(ProjectedPoint { pixel: px, descriptor: p.descriptor });
            kept.push(id);
        }
        (projected, kept)
    }

    fn observations(&self, frame: &Frame, pairs: &[(usize, MapPointId)]) -> Vec<Observation> {
        pairs
            .iter()
            .map(|&(fi, pid)| Observation { pixel: frame.features[fi].pixel, world: self.map.point(pid).unwrap().position })
            .collect()
    }

    /// Guided matching of `ids` into the frame; `(feature, point)` pairs.
    fn guided(
        &self,
        frame: &Frame,
        grid: &FeatureGrid,
        ids: &[MapPointId],
        pose: &Pose,
        radius: f64,
        excluded: &[bool],
    ) -> Vec<(usize, MapPointId)> {
        let (projected, kept) = self.project_points(ids, pose);
        match_by_projection(
            &projected,
            &frame.features,
            grid,
            radius,
            self.config.max_hamming,
            self.config.ratio,
            excluded,
        )
        .into_iter()
        .map(|m| (m.target, kept[m.query]))
        .collect()
    }

    /// Brute-force descriptor matching against every map point.
    fn relocalize(&self, frame: &Frame, excluded: &[bool], guess: &Pose) -> Option<(PoseEstimate, Vec<(usize, MapPointId)>)> {
        let ids: Vec<MapPointId> = self.map.points().map(|p| p.id).collect();
        let descs: Vec<_> = self.map.points().map(|p| p.descriptor).collect();
        let candidates: Vec<usize> = (0..frame.features.len()).filter(|&i| !excluded[i]).collect();
        let query: Vec<_> = candidates.iter().map(|&i| frame.features[i].descriptor).collect();
        let pairs: Vec<(usize, MapPointId)> = match_features(&query, &descs, self.config.max_hamming, self.config.ratio)
            .into_iter()
            .map(|m| (candidates[m.query], ids[m.target]))
            .collect();
        let obs = self.observations(frame, &pairs);
        let est = optimize_pose(&obs, guess, &self.intr, &self.config.optimizer).ok()?;
        (est.inlier_count() >= self.config.lost_threshold).then_some((est, pairs))
    }

    /// Track one frame with detected features.
    pub fn track_frame(&mut self, mut frame: Frame) -> Result<FrameResult, TrackError> {
        if self.map.is_empty() {
            return self.bootstrap(frame);
        }
        let mut timing = FrameTiming::default();
        let previous = self.previous.expect("tracker initialized");
        let predicted = previous.compose(&self.velocity);
        let grid = FeatureGrid::new(&frame.features, self.intr.width, self.intr.height, 16.0);
        let none_excluded = vec![false; frame.features.len()];

        // stage 1: reference keyframe
        let reference = self.reference_keyframe();
        let ref_points: Vec<MapPointId> = self.map.keyframe(reference).unwrap().associated_points().collect();
        let mut stage1 = self.guided(&frame, &grid, &ref_points, &predicted, self.config.stage1_radius, &none_excluded);
        if stage1.len() < 3 * self.config.lost_threshold {
            let wide =
                self.guided(&frame, &grid, &ref_points, &predicted, 4.0 * self.config.stage1_radius, &none_excluded);
            if wide.len() > stage1.len() {
                stage1 = wide;
            }
        }
        let obs1 = self.observations(&frame, &stage1);
        let stage1_pose = match optimize_pose(&obs1, &predicted, &self.intr, &self.config.optimizer) {
            Ok(est) if est.inlier_count() >= self.config.optimizer.min_matches => est.pose,
            _ => predicted,
        };

        // geometry module
        let mut dynamic_rejected = 0;
        let mut classification = None;
        if self.config.geometry {
            let t = Instant::now();
            let seed = self.config.seed.wrapping_add(frame.id);
            let cmap = cluster_depth(&frame.depth, &self.intr, &self.config.range, self.config.clusters, self.config.stride, seed);
            timing.cluster_ms = ms(t);
            let t = Instant::now();
            match cmap {
                Ok(cmap) => {
                    for f in &mut frame.features {
                        f.cluster_id = cmap.cluster_of(&f.pixel).ok().flatten();
                    }
                    let errors = compute_cluster_errors(&obs1, &stage1_pose, &cmap, &self.intr, self.config.optimizer.huber_delta);
                    let c = classify(&errors.verdicts, &self.config.policy);
                    dynamic_rejected = mark_features(&mut frame.features, &c.verdicts);
                    classification = Some(c);
                    frame.cluster_map = Some(cmap);
                }
                Err(e) => log::debug!("frame {}: clustering skipped ({e})", frame.id),
            }
            for &(fi, pid) in &stage1 {
                if !frame.features[fi].is_dynamic() {
                    continue;
                }
                let Some(p) = self.map.point_mut(pid) else { continue };
                p.dynamic_hits += 1;
                if p.dynamic_hits >= self.config.cull_hits {
                    self.map.delete_point(pid);
                }
            }
            timing.dyndetect_ms = ms(t);
        }
        for f in &mut frame.features {
            if f.status == FeatureStatus::Unknown {
                f.status = FeatureStatus::Static;
            }
        }
        let excluded: Vec<bool> = frame.features.iter().map(Feature::is_dynamic).collect();

        // stage 2: local map
        let local: Vec<MapPointId> = local_map(&self.map, reference, self.config.covisibility_min).into_iter().collect();
        let stage2 = self.guided(&frame, &grid, &local, &stage1_pose, self.config.stage2_radius, &excluded);
        let obs2 = self.observations(&frame, &stage2);
        let mut outcome = optimize_pose(&obs2, &stage1_pose, &self.intr, &self.config.optimizer)
            .ok()
            .filter(|e| e.inlier_count() >= self.config.lost_threshold)
            .map(|e| (e, stage2.clone()));
        if outcome.is_none() {
            log::warn!("frame {}: stage 2 failed with {} matches, relocalizing", frame.id, stage2.len());
            outcome = self.relocalize(&frame, &excluded, &previous);
        }
        let Some((estimate, pairs)) = outcome else {
            return Err(TrackError::Lost { inliers: 0 });
        };

        let pose = estimate.pose;
        frame.pose = Some(pose);
        self.velocity = previous.inverse().compose(&pose);
        self.previous = Some(pose);
        self.trajectory.push((frame.timestamp, pose));
        self.dynamic_rejected += dynamic_rejected;
        self.frames_since_keyframe += 1;
        let associations: Vec<(usize, MapPointId)> =
            pairs.iter().zip(&estimate.inliers).filter(|(_, &ok)| ok).map(|(&p, _)| p).collect();
        let stats = TrackStats {
            matches_stage1: stage1.len(),
            matches_stage2: pairs.len(),
            inliers: associations.len(),
            dynamic_rejected,
            frames_since_keyframe: self.frames_since_keyframe,
        };
        self.last_points = associations.iter().map(|&(_, p)| p).collect();

        let reference_tracked = self.map.keyframe(reference).map_or(0, |k| k.tracked_points);
        let mut keyframe = None;
        if select_keyframe(&stats, reference_tracked, &self.config.keyframes) {
            let (kf, _) = insert_keyframe(&mut self.map, &frame, &pose, &associations, stats.inliers, &self.intr);
            self.after_keyframe(kf, &frame);
            keyframe = Some(kf);
        }
        Ok(FrameResult {
            frame_id: frame.id,
            timestamp: frame.timestamp,
            pose,
            stats,
            timing,
            keyframe,
            classification,
            stage1_features: stage1.iter().map(|&(fi, _)| fi).collect(),
            features: frame.features,
        })
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}
