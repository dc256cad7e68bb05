//! Trajectory files, timestamp association, rigid alignment and the ATE/RPE
//! error metrics.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::geometry::Pose;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("timestamps must be strictly increasing (at {0:.6})")]
    NotIncreasing(f64),
    #[error("no timestamp pairs within {0} s")]
    NoPairs(f64),
    #[error("degenerate configuration for alignment: {0}")]
    Degenerate(String),
    #[error("no relative-pose pairs {0} s apart")]
    NoRelativePairs(f64),
}

/// Timestamped camera-to-world poses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    samples: Vec<(f64, Pose)>,
}

impl Trajectory {
    pub fn new(samples: Vec<(f64, Pose)>) -> Result<Self, EvalError> {
        if let Some(w) = samples.windows(2).find(|w| !(w[1].0 > w[0].0)) {
            return Err(EvalError::NotIncreasing(w[1].0));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(f64, Pose)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.0).collect()
    }

    /// Parse `timestamp tx ty tz qx qy qz qw` lines; `#` starts a comment.
    pub fn parse_tum(text: &str) -> Result<Self, EvalError> {
        let mut samples = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| EvalError::Parse { line: i + 1, message };
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| err(format!("'{t}': {e}"))))
                .collect::<Result<_, _>>()?;
            if v.len() != 8 {
                return Err(err(format!("expected 8 fields, found {}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(err("non-finite value".into()));
            }
            let q = Quaternion::new(v[7], v[4], v[5], v[6]);
            if q.norm() < 1e-9 {
                return Err(err("zero quaternion".into()));
            }
            let pose = Pose::from_quaternion(UnitQuaternion::from_quaternion(q), Vector3::new(v[1], v[2], v[3]));
            samples.push((v[0], pose));
        }
        Self::new(samples)
    }

    pub fn read_tum(path: &Path) -> Result<Self, EvalError> {
        Self::parse_tum(&std::fs::read_to_string(path)?)
    }

    pub fn to_tum_string(&self) -> String {
        let mut out = String::new();
        for (t, p) in &self.samples {
            out.push_str(&format_tum_line(*t, p));
            out.push('\n');
        }
        out
    }

    pub fn write_tum(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_tum_string())
    }
}

pub fn format_tum_line(t: f64, pose: &Pose) -> String {
    let q = pose.quaternion();
    let tr = pose.translation;
    format!(
        "{:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
        t, tr.x, tr.y, tr.z, q.i, q.j, q.k, q.w
    )
}

/// Greedy one-to-one pairing: candidate pairs within `max_dt` are taken in
/// order of increasing time difference. Result sorted by first index.
pub fn associate_timestamps(a: &[f64], b: &[f64], max_dt: f64) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    for (i, &ta) in a.iter().enumerate() {
        // b is sorted, so only a window needs scanning
        let lo = b.partition_point(|&tb| tb < ta - max_dt);
        for (j, &tb) in b.iter().enumerate().skip(lo) {
            if tb > ta + max_dt {
                break;
            }
            candidates.push(((ta - tb).abs(), ta + tb, i, j));
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)).then((x.2, x.3).cmp(&(y.2, y.3))));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut out = Vec::new();
    for (_, _, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            out.push((i, j));
        }
    }
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosePair {
    /// Ground-truth timestamp.
    pub timestamp: f64,
    pub estimate: Pose,
    pub truth: Pose,
}

pub fn associate_trajectories(est: &Trajectory, gt: &Trajectory, max_dt: f64) -> Result<Vec<PosePair>, EvalError> {
    let pairs = associate_timestamps(&est.timestamps(), &gt.timestamps(), max_dt);
    if pairs.is_empty() {
        return Err(EvalError::NoPairs(max_dt));
    }
    Ok(pairs
        .into_iter()
        .map(|(i, j)| PosePair { timestamp: gt.samples[j].0, estimate: est.samples[i].1, truth: gt.samples[j].1 })
        .collect())
}

/// Least-squares rigid transform `A` minimizing `Σ‖A·est − gt‖²` over
/// positions, scale fixed to one.
pub fn align_umeyama(pairs: &[PosePair]) -> Result<Pose, EvalError> {
    if pairs.len() < 3 {
        return Err(EvalError::Degenerate(format!("{} pairs", pairs.len())));
    }
    let n = pairs.len() as f64;
    let mu_e = pairs.iter().map(|p| p.estimate.translation).sum::<Vector3<f64>>() / n;
    let mu_g = pairs.iter().map(|p| p.truth.translation).sum::<Vector3<f64>>() / n;
    let mut sigma = Matrix3::zeros();
    let mut spread = 0.0;
    for p in pairs {
        let e = p.estimate.translation - mu_e;
        sigma += (p.truth.translation - mu_g) * e.transpose();
        spread += e.norm_squared();
    }
    sigma /= n;
    let svd = sigma.svd(true, true);
    let mut s = svd.singular_values;
    s.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if s[1] <= 1e-12 * s[0].max(spread / n) || spread / n < 1e-24 {
        return Err(EvalError::Degenerate("positions are collinear or coincident".into()));
    }
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        // reflection: flip the axis of the smallest singular value
        let k = (0..3).min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b])).unwrap();
        d[(k, k)] = -1.0;
    }
    let r = u * d * v_t;
    let rotation = nalgebra::Rotation3::from_matrix_unchecked(r);
    Ok(Pose::new(rotation, mu_g - rotation * mu_e))
}

/// Umeyama alignment, or the centroid-matching translation when the
/// estimated positions are degenerate.
pub fn align_or_translate(pairs: &[PosePair]) -> Result<Pose, EvalError> {
    match align_umeyama(pairs) {
        Err(EvalError::Degenerate(_)) if !pairs.is_empty() => {
            let n = pairs.len() as f64;
            let mu_e = pairs.iter().map(|p| p.estimate.translation).sum::<Vector3<f64>>() / n;
            let mu_g = pairs.iter().map(|p| p.truth.translation).sum::<Vector3<f64>>() / n;
            Ok(Pose::new(nalgebra::Rotation3::identity(), mu_g - mu_e))
        }
        other => other,
    }
}

pub fn ate_rmse(pairs: &[PosePair], alignment: &Pose) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let sum: f64 = pairs
        .iter()
        .map(|p| (alignment.apply(&p.estimate.translation) - p.truth.translation).norm_squared())
        .sum();
    (sum / pairs.len() as f64).sqrt()
}

/// Translational (m/s) and rotational (deg/s) RMSE of the relative-pose
/// error over `delta` seconds; partners are the nearest sample to `t + delta`
/// within `delta / 2`.
pub fn rpe(pairs: &[PosePair], delta: f64) -> Result<(f64, f64), EvalError> {
    let times: Vec<f64> = pairs.iter().map(|p| p.timestamp).collect();
    let mut trans = 0.0;
    let mut rot = 0.0;
    let mut count = 0usize;
    for (i, pi) in pairs.iter().enumerate() {
        let target = pi.timestamp + delta;
        let k = times.partition_point(|&t| t < target);
        let j = [k.checked_sub(1), Some(k)]
            .into_iter()
            .flatten()
            .filter(|&j| j < pairs.len() && j > i)
            .min_by(|&a, &b| (times[a] - target).abs().total_cmp(&(times[b] - target).abs()));
        let Some(j) = j else { continue };
        if (times[j] - target).abs() > delta / 2.0 {
            continue;
        }
        let pj = &pairs[j];
        let gt_rel = pi.truth.inverse().compose(&pj.truth);
        let est_rel = pi.estimate.inverse().compose(&pj.estimate);
        let e = gt_rel.inverse().compose(&est_rel);
        trans += (e.translation.norm() / delta).powi(2);
        rot += (e.angle().to_degrees() / delta).powi(2);
        count += 1;
    }
    if count == 0 {
        return Err(EvalError::NoRelativePairs(delta));
    }
    Ok(((trans / count as f64).sqrt(), (rot / count as f64).sqrt()))
}

/// The machine-readable metrics block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub ate_rmse_m: f64,
    pub rpe_trans_mps: f64,
    pub rpe_rot_dps: f64,
    pub frames: usize,
    pub keyframes: usize,
    pub dynamic_rejected: usize,
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ate_rmse_m={:.6} rpe_trans_mps={:.6} rpe_rot_dps={:.6} frames={} keyframes={} dynamic_rejected={}",
            self.ate_rmse_m, self.rpe_trans_mps, self.rpe_rot_dps, self.frames, self.keyframes, self.dynamic_rejected
        )
    }
}

impl FromStr for MetricsReport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut r = MetricsReport {
            ate_rmse_m: f64::NAN,
            rpe_trans_mps: f64::NAN,
            rpe_rot_dps: f64::NAN,
            frames: 0,
            keyframes: 0,
            dynamic_rejected: 0,
        };
        for token in s.split_whitespace() {
            let (k, v) = token.split_once('=').ok_or_else(|| format!("malformed token '{token}'"))?;
            let bad = |e: &dyn fmt::Display| format!("{k}: {e}");
            match k {
                "ate_rmse_m" => r.ate_rmse_m = v.parse().map_err(|e| bad(&e))?,
                "rpe_trans_mps" => r.rpe_trans_mps = v.parse().map_err(|e| bad(&e))?,
                "rpe_rot_dps" => r.rpe_rot_dps = v.parse().map_err(|e| bad(&e))?,
                "frames" => r.frames = v.parse().map_err(|e| bad(&e))?,
                "keyframes" => r.keyframes = v.parse().map_err(|e| bad(&e))?,
                "dynamic_rejected" => r.dynamic_rejected = v.parse().map_err(|e| bad(&e))?,
                _ => return Err(format!("unknown key '{k}'")),
            }
        }
        Ok(r)
    }
}

/// Binary classification tally, positive = dynamic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    /// 1 when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    /// 1 when there were no positives.
    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }
}

pub const DEFAULT_MAX_DT: f64 = 0.02;
pub const DEFAULT_RPE_DELTA: f64 = 1.0;

/// Associate, align and score `est` against `gt`. RPE is NaN when the
/// trajectory is shorter than the RPE window.
pub fn evaluate(est: &Trajectory, gt: &Trajectory, max_dt: f64, delta: f64) -> Result<MetricsReport, EvalError> {
    let pairs = associate_trajectories(est, gt, max_dt)?;
    let alignment = align_or_translate(&pairs)?;
    let (rpe_trans_mps, rpe_rot_dps) = rpe(&pairs, delta).unwrap_or((f64::NAN, f64::NAN));
    Ok(MetricsReport {
        ate_rmse_m: ate_rmse(&pairs, &alignment),
        rpe_trans_mps,
        rpe_rot_dps,
        frames: pairs.len(),
        keyframes: 0,
        dynamic_rejected: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Twist;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn at(x: f64, y: f64, z: f64) -> Pose {
        Pose::new(Rotation3::identity(), Vector3::new(x, y, z))
    }

    fn pairs_of(est: &[Pose], gt: &[Pose]) -> Vec<PosePair> {
        est.iter()
            .zip(gt)
            .enumerate()
            .map(|(i, (e, g))| PosePair { timestamp: i as f64, estimate: *e, truth: *g })
            .collect()
    }

    fn random_pose(rng: &mut ChaCha8Rng, scale: f64) -> Pose {
        let w = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let v = Vector3::from_fn(|_, _| rng.random_range(-scale..scale));
        Pose::exp(&Twist::new(w, v))
    }

    #[test]
    fn tum_round_trip() {
        let text = "# ground truth\n1.000000 1 2 3 0 0 0 1\n\n2.500000 0.5 0 0 0 0 0.7071068 0.7071068\n";
        let t = Trajectory::parse_tum(text).unwrap();
        assert_eq!(t.len(), 2);
        let again = Trajectory::parse_tum(&t.to_tum_string()).unwrap();
        assert_eq!(again.to_tum_string(), t.to_tum_string());
        assert!(Trajectory::parse_tum("1 2 3").is_err());
        assert!(Trajectory::parse_tum("2 0 0 0 0 0 0 1\n1 0 0 0 0 0 0 1").is_err());
    }

    #[test]
    fn association_examples() {
        assert_eq!(associate_timestamps(&[1.0, 2.0], &[1.0, 2.0], 0.02), vec![(0, 0), (1, 1)]);
        assert!(associate_timestamps(&[1.0], &[1.05], 0.02).is_empty());
        let a = Trajectory::new(vec![(0.0, Pose::identity())]).unwrap();
        let b = Trajectory::new(vec![(1.0, Pose::identity())]).unwrap();
        assert!(matches!(associate_trajectories(&a, &b, 0.02), Err(EvalError::NoPairs(_))));
    }

    /// Exhaustive minimum-total-|Δt| maximum-cardinality assignment.
    fn brute_force(a: &[f64], b: &[f64], max_dt: f64) -> Vec<(usize, usize)> {
        fn rec(
            i: usize,
            a: &[f64],
            b: &[f64],
            max_dt: f64,
            used: &mut Vec<bool>,
            cur: &mut Vec<(usize, usize)>,
            best: &mut (usize, f64, Vec<(usize, usize)>),
        ) {
            if i == a.len() {
                let cost: f64 = cur.iter().map(|&(x, y)| (a[x] - b[y]).abs()).sum();
                if cur.len() > best.0 || (cur.len() == best.0 && cost < best.1 - 1e-15) {
                    *best = (cur.len(), cost, cur.clone());
                }
                return;
            }
            rec(i + 1, a, b, max_dt, used, cur, best);
            for j in 0..b.len() {
                if !used[j] && (a[i] - b[j]).abs() <= max_dt {
                    used[j] = true;
                    cur.push((i, j));
                    rec(i + 1, a, b, max_dt, used, cur, best);
                    cur.pop();
                    used[j] = false;
                }
            }
        }
        let mut best = (0, f64::INFINITY, Vec::new());
        rec(0, a, b, max_dt, &mut vec![false; b.len()], &mut Vec::new(), &mut best);
        best.2
    }

    #[test]
    fn greedy_matches_exhaustive_on_jittered_streams() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..7);
            let a: Vec<f64> = (0..n).map(|i| i as f64 * 0.033 + rng.random_range(-0.004..0.004)).collect();
            let mut b = Vec::new();
            for i in 0..n {
                let jitter = rng.random_range(-0.004..0.004);
                if rng.random_bool(0.8) {
                    b.push(i as f64 * 0.033 + jitter);
                }
            }
            assert_eq!(associate_timestamps(&a, &b, 0.02), brute_force(&a, &b, 0.02));
        }
        let rgb = [1.0, 1.033, 1.066];
        let depth = [1.01, 1.05];
        assert_eq!(associate_timestamps(&rgb, &depth, 0.02), brute_force(&rgb, &depth, 0.02));
    }

    #[test]
    fn association_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let mut a: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..0.3)).collect();
            let mut b: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..0.3)).collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            let ab = associate_timestamps(&a, &b, 0.02);
            let mut ba: Vec<(usize, usize)> = associate_timestamps(&b, &a, 0.02).into_iter().map(|(j, i)| (i, j)).collect();
            ba.sort_unstable();
            assert_eq!(ab, ba);
        }
    }

    #[test]
    fn alignment_examples() {
        let gt: Vec<Pose> = [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.5), (0.3, 0.2, 1.0)]
            .iter()
            .map(|&(x, y, z)| at(x, y, z))
            .collect();
        let same = pairs_of(&gt, &gt);
        let a = align_umeyama(&same).unwrap();
        assert!(a.translation.norm() < 1e-12 && a.angle() < 1e-12);
        assert!(ate_rmse(&same, &a) < 1e-12);

        let shifted: Vec<Pose> = gt.iter().map(|p| at(1.0, 2.0, 3.0).compose(p)).collect();
        let pairs = pairs_of(&shifted, &gt);
        let a = align_umeyama(&pairs).unwrap();
        assert!((a.translation - Vector3::new(-1.0, -2.0, -3.0)).norm() < 1e-12);
        assert!(ate_rmse(&pairs, &a) < 1e-12);

        let line: Vec<Pose> = (0..5).map(|i| at(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(align_umeyama(&pairs_of(&line, &line)), Err(EvalError::Degenerate(_))));
        let point = vec![at(1.0, 1.0, 1.0); 4];
        assert!(matches!(align_umeyama(&pairs_of(&point, &point)), Err(EvalError::Degenerate(_))));
    }

    /// Gauss-Newton over SE(3) on the point-to-point cost, as an independent
    /// iterative oracle for the closed form.
    fn iterative_alignment(pairs: &[PosePair]) -> Pose {
        let mut a = Pose::identity();
        for _ in 0..50 {
            let mut h = nalgebra::Matrix6::<f64>::zeros();
            let mut g = nalgebra::Vector6::<f64>::zeros();
            for p in pairs {
                let q = a.apply(&p.estimate.translation);
                let r = q - p.truth.translation;
                let mut j = nalgebra::Matrix3x6::zeros();
                let s = Matrix3::new(0.0, -q.z, q.y, q.z, 0.0, -q.x, -q.y, q.x, 0.0);
                j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-s));
                j.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
                h += j.transpose() * j;
                g += j.transpose() * r;
            }
            let step = -h.cholesky().unwrap().solve(&g);
            a = Pose::exp(&Twist(step)).compose(&a);
        }
        a
    }

    #[test]
    fn closed_form_matches_iterative_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let gt: Vec<Pose> = (0..30).map(|_| random_pose(&mut rng, 3.0)).collect();
            let offset = random_pose(&mut rng, 5.0);
            let est: Vec<Pose> = gt.iter().map(|p| offset.compose(p)).collect();
            let pairs = pairs_of(&est, &gt);
            let closed = align_umeyama(&pairs).unwrap();
            let oracle = iterative_alignment(&pairs);
            assert!((closed.translation - oracle.translation).norm() < 1e-10);
            assert!(closed.inverse().compose(&oracle).angle() < 1e-10);
            // exact recovery of the inverse offset
            assert!(closed.compose(&offset).translation.norm() < 1e-10);
            assert!(ate_rmse(&pairs, &closed) < 1e-10);
        }
    }

    #[test]
    fn alignment_never_worse_than_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..50 {
            let gt: Vec<Pose> = (0..10).map(|_| random_pose(&mut rng, 1.0)).collect();
            let est: Vec<Pose> = gt.iter().map(|p| random_pose(&mut rng, 0.1).compose(p)).collect();
            let pairs = pairs_of(&est, &gt);
            let a = align_umeyama(&pairs).unwrap();
            assert!(ate_rmse(&pairs, &a) <= ate_rmse(&pairs, &Pose::identity()) + 1e-12);
        }
    }

    #[test]
    fn ate_hand_example() {
        let gt = [at(0.0, 0.0, 0.0), at(1.0, 0.0, 0.0)];
        let est = [at(0.003, 0.0, 0.0), at(1.0, 0.004, 0.0)];
        let v = ate_rmse(&pairs_of(&est, &gt), &Pose::identity());
        assert!((v - (12.5e-6f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rpe_examples() {
        let gt: Vec<Pose> = (0..3).map(|i| at(i as f64, 0.0, 0.0)).collect();
        let zero = rpe(&pairs_of(&gt, &gt), 1.0).unwrap();
        assert_eq!(zero, (0.0, 0.0));

        // estimate slips 1 cm per second sideways
        let est: Vec<Pose> = (0..3).map(|i| at(i as f64, 0.01 * i as f64, 0.0)).collect();
        let (t, r) = rpe(&pairs_of(&est, &gt), 1.0).unwrap();
        assert!((t - 0.01).abs() < 1e-9);
        assert!(r.abs() < 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let walk: Vec<Pose> = (0..10).map(|_| random_pose(&mut rng, 1.0)).collect();
        let offset = random_pose(&mut rng, 2.0);
        let moved: Vec<Pose> = walk.iter().map(|p| offset.compose(p)).collect();
        let (t, r) = rpe(&pairs_of(&moved, &walk), 1.0).unwrap();
        assert!(t < 1e-9 && r < 1e-6);

        assert!(rpe(&pairs_of(&gt[..1], &gt[..1]), 1.0).is_err());
    }

    #[test]
    fn metrics_block_round_trip() {
        let m = MetricsReport {
            ate_rmse_m: 0.0194,
            rpe_trans_mps: 0.01,
            rpe_rot_dps: 0.5,
            frames: 10,
            keyframes: 2,
            dynamic_rejected: 7,
        };
        let s = m.to_string();
        assert_eq!(
            s,
            "ate_rmse_m=0.019400 rpe_trans_mps=0.010000 rpe_rot_dps=0.500000 frames=10 keyframes=2 dynamic_rejected=7"
        );
        assert_eq!(s.parse::<MetricsReport>().unwrap(), m);
    }
}
