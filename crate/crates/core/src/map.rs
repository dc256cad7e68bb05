//! Keyframe database and static landmark map.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use image::RgbImage;
use nalgebra::Vector3;
use thiserror::Error;

use crate::features::{Descriptor, Feature};
use crate::geometry::Pose;
use crate::DepthImage;

pub type KeyFrameId = u64;
pub type MapPointId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointStatus {
    Static,
    Removed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapPoint {
    pub id: MapPointId,
    pub position: Vector3<f64>,
    pub descriptor: Descriptor,
    /// `(keyframe, feature index)` pairs.
    pub observations: Vec<(KeyFrameId, usize)>,
    pub status: PointStatus,
    /// Frames in which this point's match fell in a dynamic cluster.
    pub dynamic_hits: u32,
}

#[derive(Debug, Clone)]
pub struct KeyFrame {
    pub id: KeyFrameId,
    pub frame_id: u64,
    pub timestamp: f64,
    /// Camera-to-world, frozen at insertion.
    pub pose: Pose,
    pub features: Vec<Feature>,
    /// Map point associated with each feature.
    pub points: Vec<Option<MapPointId>>,
    pub rgb: Option<Arc<RgbImage>>,
    pub depth: Option<Arc<DepthImage>>,
    pub semantic_filtered: bool,
    /// Inliers of the frame when it was tracked.
    pub tracked_points: usize,
}

impl KeyFrame {
    pub fn associated_points(&self) -> impl Iterator<Item = MapPointId> + '_ {
        self.points.iter().flatten().copied()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("map point {0} is static but has no observations")]
    Orphan(MapPointId),
    #[error("keyframe {0} feature {1} references missing map point {2}")]
    Dangling(KeyFrameId, usize, MapPointId),
    #[error("map point {0} observation ({1}, {2}) is not reciprocated")]
    Unreciprocated(MapPointId, KeyFrameId, usize),
    #[error("map point {0} has a non-finite position")]
    NonFinite(MapPointId),
}

#[derive(Debug, Default, Clone)]
pub struct Map {
    keyframes: BTreeMap<KeyFrameId, KeyFrame>,
    points: BTreeMap<MapPointId, MapPoint>,
    next_keyframe: KeyFrameId,
    next_point: MapPointId,
}

impl Map {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    pub fn keyframe_count(&self) -> usize {
        self.keyframes.len()
    }

    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    pub fn keyframe(&self, id: KeyFrameId) -> Option<&KeyFrame> {
        self.keyframes.get(&id)
    }

    pub fn keyframe_mut(&mut self, id: KeyFrameId) -> Option<&mut KeyFrame> {
        self.keyframes.get_mut(&id)
    }

    pub fn keyframes(&self) -> impl Iterator<Item = &KeyFrame> {
        self.keyframes.values()
    }

    pub fn point(&self, id: MapPointId) -> Option<&MapPoint> {
        self.points.get(&id)
    }

    pub fn point_mut(&mut self, id: MapPointId) -> Option<&mut MapPoint> {
        self.points.get_mut(&id)
    }

    pub fn points(&self) -> impl Iterator<Item = &MapPoint> {
        self.points.values()
    }

    /// Register a keyframe with no associations; returns its id.
    #[allow(clippy::too_many_arguments)]
    pub fn add_keyframe(
        &mut self,
        frame_id: u64,
        timestamp: f64,
        pose: Pose,
        features: Vec<Feature>,
        rgb: Option<Arc<RgbImage>>,
        depth: Option<Arc<DepthImage>>,
        tracked_points: usize,
    ) -> KeyFrameId {
        let id = self.next_keyframe;
        self.next_keyframe += 1;
        let n = features.len();
        self.keyframes.insert(
            id,
            KeyFrame {
                id,
                frame_id,
                timestamp,
                pose,
                features,
                points: vec![None; n],
                rgb,
                depth,
                semantic_filtered: false,
                tracked_points,
            },
        );
        id
    }

    /// Create a point observed by `(keyframe, feature)`.
    pub fn add_point(&mut self, position: Vector3<f64>, keyframe: KeyFrameId, feature: usize) -> Option<MapPointId> {
        let kf = self.keyframes.get_mut(&keyframe)?;
        if kf.points.get(feature)?.is_some() {
            return None;
        }
        let id = self.next_point;
        self.next_point += 1;
        kf.points[feature] = Some(id);
        let descriptor = kf.features[feature].descriptor;
        self.points.insert(
            id,
            MapPoint {
                id,
                position,
                descriptor,
                observations: vec![(keyframe, feature)],
                status: PointStatus::Static,
                dynamic_hits: 0,
            },
        );
        Some(id)
    }

    /// Associate an existing point with `(keyframe, feature)`.
    pub fn add_observation(&mut self, point: MapPointId, keyframe: KeyFrameId, feature: usize) -> bool {
        let Some(kf) = self.keyframes.get_mut(&keyframe) else { return false };
        let Some(p) = self.points.get_mut(&point) else { return false };
        match kf.points.get(feature) {
            Some(None) => {}
            _ => return false,
        }
        if p.observations.iter().any(|&(k, _)| k == keyframe) {
            return false;
        }
        kf.points[feature] = Some(point);
        p.observations.push((keyframe, feature));
        true
    }

    /// Drop the association at `(keyframe, feature)`. A point left without
    /// observations is deleted. Returns `(removed, point_deleted)`.
    pub fn remove_observation(&mut self, keyframe: KeyFrameId, feature: usize) -> (bool, bool) {
        let Some(kf) = self.keyframes.get_mut(&keyframe) else { return (false, false) };
        let Some(Some(pid)) = kf.points.get(feature).copied() else { return (false, false) };
        kf.points[feature] = None;
        let Some(p) = self.points.get_mut(&pid) else { return (true, false) };
        p.observations.retain(|&(k, f)| !(k == keyframe && f == feature));
        if p.observations.is_empty() {
            self.points.remove(&pid);
            return (true, true);
        }
        (true, false)
    }

    /// Remove a point and every association to it.
    pub fn delete_point(&mut self, id: MapPointId) -> bool {
        let Some(p) = self.points.remove(&id) else { return false };
        for (k, f) in p.observations {
            if let Some(kf) = self.keyframes.get_mut(&k) {
                if kf.points.get(f).copied().flatten() == Some(id) {
                    kf.points[f] = None;
                }
            }
        }
        true
    }

    /// Number of map points each other keyframe shares with `keyframe`.
    pub fn covisibility(&self, keyframe: KeyFrameId) -> BTreeMap<KeyFrameId, usize> {
        let mut shared = BTreeMap::new();
        let Some(kf) = self.keyframes.get(&keyframe) else { return shared };
        for pid in kf.associated_points() {
            if let Some(p) = self.points.get(&pid) {
                for &(k, _) in &p.observations {
                    if k != keyframe {
                        *shared.entry(k).or_insert(0) += 1;
                    }
                }
            }
        }
        shared
    }

    /// Points of `reference` plus those of keyframes sharing at least
    /// `min_shared` points with it.
    pub fn local_map(&self, reference: KeyFrameId, min_shared: usize) -> BTreeSet<MapPointId> {
        let mut out = BTreeSet::new();
        let Some(kf) = self.keyframes.get(&reference) else { return out };
        out.extend(kf.associated_points());
        for (k, n) in self.covisibility(reference) {
            if n >= min_shared {
                if let Some(other) = self.keyframes.get(&k) {
                    out.extend(other.associated_points());
                }
            }
        }
        out
    }

    /// Verify the two-way consistency of points and keyframe associations.
    pub fn audit(&self) -> Result<(), AuditError> {
        for p in self.points.values() {
            if !p.position.iter().all(|v| v.is_finite()) {
                return Err(AuditError::NonFinite(p.id));
            }
            if p.status == PointStatus::Static && p.observations.is_empty() {
                return Err(AuditError::Orphan(p.id));
            }
            for &(k, f) in &p.observations {
                let ok = self.keyframes.get(&k).and_then(|kf| kf.points.get(f).copied().flatten()) == Some(p.id);
                if !ok {
                    return Err(AuditError::Unreciprocated(p.id, k, f));
                }
            }
        }
        for kf in self.keyframes.values() {
            for (f, pid) in kf.points.iter().enumerate() {
                if let Some(pid) = pid {
                    match self.points.get(pid) {
                        Some(p) if p.status == PointStatus::Static => {}
                        _ => return Err(AuditError::Dangling(kf.id, f, *pid)),
                    }
                }
            }
        }
        Ok(())
    }
}
