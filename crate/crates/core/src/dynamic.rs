//! Cluster-wise dynamic object detection from reprojection errors.
//!
//! For every depth cluster `j` with `m` matched features,
//! `r_j = (1/m) Σ huber(‖u_i − π(T_wc⁻¹ P_i)‖²)`. Clusters whose error is
//! large relative to the mean over clusters are marked dynamic and their
//! features are kept out of pose estimation and mapping.

use std::fmt;
use std::io::{self, Write};

use nalgebra::{Vector2, Vector3};

use crate::clustering::ClusterMap;
use crate::features::Feature;
use crate::geometry::{huber, project, CameraIntrinsics, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClusterState {
    /// Not classified yet.
    #[default]
    Unset,
    Static,
    Dynamic,
    /// Too few matches to judge.
    Unknown,
}

impl fmt::Display for ClusterState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClusterState::Unset => "unset",
            ClusterState::Static => "static",
            ClusterState::Dynamic => "dynamic",
            ClusterState::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterVerdict {
    pub cluster_id: usize,
    /// Average robust reprojection error.
    pub r: f64,
    /// Matched features that contributed to `r`.
    pub m: usize,
    pub state: ClusterState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionPolicy {
    /// Relative multiplier on the mean cluster error.
    pub lambda: f64,
    /// Absolute error floor.
    pub tau_abs: f64,
    pub min_matches: usize,
}

impl Default for DetectionPolicy {
    fn default() -> Self {
        Self { lambda: 2.0, tau_abs: huber(9.0, 2.0), min_matches: 5 }
    }
}

/// A matched feature: observed pixel and the world position of its landmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub pixel: Vector2<f64>,
    pub world: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterErrors {
    pub verdicts: Vec<ClusterVerdict>,
    /// Terms skipped because the landmark fell behind the camera.
    pub behind_camera: usize,
    /// Observations without a cluster assignment.
    pub unassigned: usize,
}

/// Per-cluster average Huber reprojection error under camera pose `pose`
/// (camera-to-world). States are left [`ClusterState::Unset`].
pub fn compute_cluster_errors(
    observations: &[Observation],
    pose: &Pose,
    cmap: &ClusterMap,
    intr: &CameraIntrinsics,
    delta: f64,
) -> ClusterErrors {
    let n = cmap.cluster_count();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    let mut behind_camera = 0;
    let mut unassigned = 0;
    let world_to_camera = pose.inverse();
    for obs in observations {
        let Ok(Some(cluster)) = cmap.cluster_of(&obs.pixel) else {
            unassigned += 1;
            continue;
        };
        let Ok(predicted) = project(&world_to_camera.apply(&obs.world), intr) else {
            log::debug!("landmark behind camera skipped in cluster {cluster}");
            behind_camera += 1;
            continue;
        };
        sums[cluster] += huber((obs.pixel - predicted).norm_squared(), delta);
        counts[cluster] += 1;
    }
    let verdicts = (0..n)
        .map(|j| ClusterVerdict {
            cluster_id: j,
            r: if counts[j] > 0 { sums[j] / counts[j] as f64 } else { 0.0 },
            m: counts[j],
            state: ClusterState::Unset,
        })
        .collect();
    ClusterErrors { verdicts, behind_camera, unassigned }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub verdicts: Vec<ClusterVerdict>,
    /// Mean error over eligible clusters.
    pub mean_error: f64,
    pub threshold: f64,
    /// No cluster had enough matches; geometric rejection must be skipped.
    pub skip_rejection: bool,
    /// Every eligible cluster crossed the threshold and all were reset.
    pub safeguard_applied: bool,
}

impl Classification {
    pub fn dynamic_clusters(&self) -> impl Iterator<Item = usize> + '_ {
        self.verdicts.iter().filter(|v| v.state == ClusterState::Dynamic).map(|v| v.cluster_id)
    }
}

/// A cluster is dynamic iff `m ≥ min_matches` and
/// `r > max(tau_abs, lambda · mean_r)`. If that would mark every eligible
/// cluster, none is marked.
pub fn classify(verdicts: &[ClusterVerdict], policy: &DetectionPolicy) -> Classification {
    let eligible = |v: &ClusterVerdict| v.m >= policy.min_matches;
    let n_eligible = verdicts.iter().filter(|v| eligible(v)).count();
    if n_eligible == 0 {
        return Classification {
            verdicts: verdicts.iter().map(|v| ClusterVerdict { state: ClusterState::Unknown, ..*v }).collect(),
            mean_error: 0.0,
            threshold: f64::INFINITY,
            skip_rejection: true,
            safeguard_applied: false,
        };
    }
    // sorted summation keeps the mean independent of cluster order
    let mut eligible_r: Vec<f64> = verdicts.iter().filter(|v| eligible(v)).map(|v| v.r).collect();
    eligible_r.sort_by(f64::total_cmp);
    let mean_error = eligible_r.iter().sum::<f64>() / n_eligible as f64;
    let threshold = policy.tau_abs.max(policy.lambda * mean_error);
    let n_dynamic = verdicts.iter().filter(|v| eligible(v) && v.r > threshold).count();
    let safeguard_applied = n_dynamic == n_eligible;
    let verdicts = verdicts
        .iter()
        .map(|v| {
            let state = if !eligible(v) {
                ClusterState::Unknown
            } else if v.r > threshold && !safeguard_applied {
                ClusterState::Dynamic
            } else {
                ClusterState::Static
            };
            ClusterVerdict { state, ..*v }
        })
        .collect();
    Classification { verdicts, mean_error, threshold, skip_rejection: false, safeguard_applied }
}

/// Mark every feature whose cluster is dynamic. Returns how many changed.
pub fn mark_features(features: &mut [Feature], verdicts: &[ClusterVerdict]) -> usize {
    let mut marked = 0;
    for f in features.iter_mut() {
        let Some(c) = f.cluster_id else { continue };
        if verdicts.iter().any(|v| v.cluster_id == c && v.state == ClusterState::Dynamic) && f.mark_dynamic() {
            marked += 1;
        }
    }
    marked
}

/// One line per cluster: `frame_id cluster_id m r state`.
pub fn write_debug_dump<W: Write>(out: &mut W, frame_id: u64, verdicts: &[ClusterVerdict]) -> io::Result<()> {
    for v in verdicts {
        writeln!(out, "{} {} {} {:.6} {}", frame_id, v.cluster_id, v.m, v.r, v.state)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::cluster_depth;
    use crate::features::{Descriptor, FeatureStatus};
    use crate::geometry::DepthRange;
    use crate::DepthImage;
    use image::Luma;

    fn verdict(id: usize, r: f64, m: usize) -> ClusterVerdict {
        ClusterVerdict { cluster_id: id, r, m, state: ClusterState::Unset }
    }

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(525.0, 525.0, 319.5, 239.5, 640, 480, 5000.0).unwrap()
    }

    /// Two depth bands (left 1.5 m, right 3 m) → two clusters.
    fn two_band_map() -> ClusterMap {
        let depth = DepthImage::from_fn(640, 480, |x, _| Luma([if x < 320 { 7500 } else { 15000 }]));
        cluster_depth(&depth, &intr(), &DepthRange::default(), 2, 4, 42).unwrap()
    }

    fn observations(cmap: &ClusterMap, pose: &Pose, shift_left: f64) -> (Vec<Observation>, usize) {
        let k = intr();
        let mut obs = Vec::new();
        let mut left_cluster = 0;
        for i in 0..20 {
            let left = i < 10;
            let px = Vector2::new(if left { 100.0 + 10.0 * i as f64 } else { 400.0 + 10.0 * i as f64 }, 200.0);
            let z = if left { 1.5 } else { 3.0 };
            let cam = crate::geometry::backproject_metric(&px, z, &k);
            let world = pose.apply(&cam);
            if left {
                left_cluster = cmap.cluster_of(&px).unwrap().unwrap();
            }
            let observed = if left { px + Vector2::new(shift_left, 0.0) } else { px };
            obs.push(Observation { pixel: observed, world });
        }
        (obs, left_cluster)
    }

    #[test]
    fn exact_reprojection_gives_zero_error() {
        let cmap = two_band_map();
        let pose = Pose::exp(&crate::Twist::new(Vector3::new(0.01, 0.02, -0.01), Vector3::new(0.1, 0.0, 0.2)));
        let (obs, _) = observations(&cmap, &pose, 0.0);
        let e = compute_cluster_errors(&obs, &pose, &cmap, &intr(), 2.0);
        assert!(e.verdicts.iter().all(|v| v.r.abs() < 1e-12));
        assert_eq!(e.verdicts.iter().map(|v| v.m).sum::<usize>(), 20);
    }

    #[test]
    fn displaced_cluster_error() {
        let cmap = two_band_map();
        let pose = Pose::identity();
        let (obs, left) = observations(&cmap, &pose, 5.0);
        let e = compute_cluster_errors(&obs, &pose, &cmap, &intr(), 2.0);
        // oracle: per-point sum, 10 points at 5 px each
        let expected: f64 = (0..10).map(|_| 2.0 * (5.0 - 1.0)).sum::<f64>() / 10.0;
        assert_eq!(expected, 8.0);
        assert!((e.verdicts[left].r - expected).abs() < 1e-9);
        assert!(e.verdicts[1 - left].r.abs() < 1e-9);
    }

    #[test]
    fn empty_cluster_reports_zero() {
        let cmap = two_band_map();
        let e = compute_cluster_errors(&[], &Pose::identity(), &cmap, &intr(), 2.0);
        assert!(e.verdicts.iter().all(|v| v.r == 0.0 && v.m == 0));
    }

    #[test]
    fn landmarks_behind_camera_are_skipped() {
        let cmap = two_band_map();
        let obs = [Observation { pixel: Vector2::new(100.0, 100.0), world: Vector3::new(0.0, 0.0, -2.0) }];
        let e = compute_cluster_errors(&obs, &Pose::identity(), &cmap, &intr(), 2.0);
        assert_eq!(e.behind_camera, 1);
        assert!(e.verdicts.iter().all(|v| v.m == 0));
    }

    #[test]
    fn classification_examples() {
        let p = DetectionPolicy { lambda: 2.0, tau_abs: 0.5, min_matches: 5 };
        let all_zero: Vec<_> = (0..4).map(|i| verdict(i, 0.0, 10)).collect();
        assert!(classify(&all_zero, &p).verdicts.iter().all(|v| v.state == ClusterState::Static));

        let vs = vec![verdict(0, 0.1, 10), verdict(1, 0.1, 10), verdict(2, 0.1, 10), verdict(3, 2.0, 10)];
        let c = classify(&vs, &p);
        // oracle: mean 0.575, threshold max(0.5, 1.15)
        assert!((c.mean_error - 0.575).abs() < 1e-12);
        assert!((c.threshold - 1.15).abs() < 1e-12);
        assert_eq!(c.dynamic_clusters().collect::<Vec<_>>(), vec![3]);

        let single = vec![verdict(0, 50.0, 10), verdict(1, 9.0, 2)];
        let c = classify(&single, &p);
        assert_eq!(c.verdicts[0].state, ClusterState::Static);
        assert_eq!(c.verdicts[1].state, ClusterState::Unknown);
    }

    #[test]
    fn no_eligible_cluster_skips_rejection() {
        let c = classify(&[verdict(0, 3.0, 1), verdict(1, 0.0, 0)], &DetectionPolicy::default());
        assert!(c.skip_rejection);
        assert!(c.verdicts.iter().all(|v| v.state == ClusterState::Unknown));
    }

    #[test]
    fn all_dynamic_resets_to_static() {
        // lambda < 1 puts every equal-error cluster above the threshold
        let p = DetectionPolicy { lambda: 0.5, tau_abs: 0.0, min_matches: 1 };
        let vs = vec![verdict(0, 5.0, 3), verdict(1, 5.0, 3)];
        let c = classify(&vs, &p);
        assert!(c.safeguard_applied);
        assert!(c.verdicts.iter().all(|v| v.state == ClusterState::Static));
    }

    #[test]
    fn marking_follows_cluster_state() {
        let mut feats: Vec<Feature> = (0..30)
            .map(|i| {
                let mut f = Feature::new(Vector2::new(i as f64, 0.0), Descriptor::default());
                f.cluster_id = match i % 3 {
                    0 => Some(0),
                    1 => Some(1),
                    _ => None,
                };
                f
            })
            .collect();
        let none_dynamic = vec![
            ClusterVerdict { state: ClusterState::Static, ..verdict(0, 0.0, 5) },
            ClusterVerdict { state: ClusterState::Static, ..verdict(1, 0.0, 5) },
        ];
        assert_eq!(mark_features(&mut feats, &none_dynamic), 0);
        let mut vs = none_dynamic.clone();
        vs[1].state = ClusterState::Dynamic;
        assert_eq!(mark_features(&mut feats, &vs), 10);
        for (i, f) in feats.iter().enumerate() {
            let expect = if i % 3 == 1 { FeatureStatus::Dynamic } else { FeatureStatus::Unknown };
            assert_eq!(f.status, expect);
        }
        // marking again changes nothing
        assert_eq!(mark_features(&mut feats, &vs), 0);
    }

    #[test]
    fn debug_dump_format() {
        let mut out = Vec::new();
        let vs = [ClusterVerdict { state: ClusterState::Dynamic, ..verdict(3, 8.0, 10) }];
        write_debug_dump(&mut out, 17, &vs).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "17 3 10 8.000000 dynamic\n");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn classify_is_order_invariant(rs in prop::collection::vec((0.0f64..20.0, 0usize..12), 1..24), rot in 0usize..24) {
                let vs: Vec<_> = rs.iter().enumerate().map(|(i, &(r, m))| verdict(i, r, m)).collect();
                let p = DetectionPolicy::default();
                let base = classify(&vs, &p);
                let mut rotated = vs.clone();
                let k = rot % rotated.len();
                rotated.rotate_left(k);
                let again = classify(&rotated, &p);
                for v in &again.verdicts {
                    let b = base.verdicts.iter().find(|b| b.cluster_id == v.cluster_id).unwrap();
                    prop_assert_eq!(b.state, v.state);
                }
            }

            #[test]
            fn zero_error_cluster_is_never_dynamic(rs in prop::collection::vec(0.0f64..20.0, 1..24)) {
                let mut vs: Vec<_> = rs.iter().enumerate().map(|(i, &r)| verdict(i, r, 10)).collect();
                vs.push(verdict(rs.len(), 0.0, 10));
                let c = classify(&vs, &DetectionPolicy::default());
                prop_assert_ne!(c.verdicts.last().unwrap().state, ClusterState::Dynamic);
                for v in &c.verdicts {
                    if v.state == ClusterState::Dynamic {
                        prop_assert!(v.r > c.threshold);
                    }
                }
            }

            #[test]
            fn quadratic_branch_scales_with_square(scale in 0.1f64..1.0) {
                let cmap = two_band_map();
                let pose = Pose::identity();
                let (obs, left) = observations(&cmap, &pose, 1.8);
                let (scaled, _) = observations(&cmap, &pose, 1.8 * scale);
                let a = compute_cluster_errors(&obs, &pose, &cmap, &intr(), 2.0).verdicts[left].r;
                let b = compute_cluster_errors(&scaled, &pose, &cmap, &intr(), 2.0).verdicts[left].r;
                prop_assert!((b - scale * scale * a).abs() < 1e-9);
            }
        }
    }
}
