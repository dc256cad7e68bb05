//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Criteria 1 to 9 gate the exit status. Criterion 10 runs only when
//! `DYNAVO_TUM_DIR` points at a TUM sequence (optionally with
//! `DYNAVO_TUM_MASKS` for its class masks) and never fails the run.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use dynavo::app::cmd_run;
use dynavo::clustering::{cluster_depth, kmeans, KMeansParams};
use dynavo::config::PipelineConfig;
use dynavo::dataset::{write_tum_sequence, SceneConfig, SyntheticScene};
use dynavo::dynamic::{compute_cluster_errors, Observation};
use dynavo::evaluation::{
    align_umeyama, ate_rmse, evaluate, rpe, Confusion, PosePair, Trajectory, DEFAULT_MAX_DT, DEFAULT_RPE_DELTA,
};
use dynavo::features::{Descriptor, Feature};
use dynavo::geometry::se3_exp;
use dynavo::map::Map;
use dynavo::semantic::{filter_keyframe, BinaryMask};
use dynavo::tracker::{optimize_pose, reprojection_jacobian, reprojection_residual, OptimizerParams, Tracker, TrackerConfig};
use dynavo::{CameraIntrinsics, DepthImage, DepthRange, Pose, Twist};
use nalgebra::{Matrix2x6, Rotation3, Vector2, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Report {
    gating_failures: usize,
}

impl Report {
    fn line(&mut self, n: usize, pass: bool, detail: String) {
        println!("criterion {n:>2}: {} {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass && n <= 9 {
            self.gating_failures += 1;
        }
    }
}

fn random_twist(rng: &mut ChaCha8Rng, rot: f64, trans: f64) -> Twist {
    let mut v = || Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    Twist::new(v() * rot, v() * trans)
}

// ---------------------------------------------------------------- 1

/// Depth image of random fronto-parallel blocks over a back plane, with
/// holes.
fn random_depth(rng: &mut ChaCha8Rng, intr: &CameraIntrinsics) -> DepthImage {
    let back = rng.random_range(3.0..5.0);
    let mut img = DepthImage::from_pixel(intr.width, intr.height, image::Luma([(back * intr.depth_scale) as u16]));
    for _ in 0..rng.random_range(2..6) {
        let (x0, y0) = (rng.random_range(0..560), rng.random_range(0..400));
        let (w, h) = (rng.random_range(40..200), rng.random_range(40..200));
        let z = rng.random_range(0.8..back);
        for y in y0..(y0 + h).min(intr.height) {
            for x in x0..(x0 + w).min(intr.width) {
                img.put_pixel(x, y, image::Luma([(z * intr.depth_scale) as u16]));
            }
        }
    }
    for _ in 0..2000 {
        img.put_pixel(rng.random_range(0..intr.width), rng.random_range(0..intr.height), image::Luma([0]));
    }
    img
}

/// Independent per-cluster sums: nearest valid sample by exhaustive scan,
/// explicit world-to-camera transform, pinhole and Huber formulas.
fn brute_force_errors(
    obs: &[Observation],
    pose: &Pose,
    labels: &dyn Fn(usize, usize) -> Option<usize>,
    dims: (usize, usize),
    stride: f64,
    n: usize,
    intr: &CameraIntrinsics,
    delta: f64,
) -> Vec<(f64, usize)> {
    let r_t = pose.rotation.matrix().transpose();
    let mut out = vec![(0.0, 0usize); n];
    for o in obs {
        let mut best: Option<(f64, usize)> = None;
        for row in 0..dims.1 {
            for col in 0..dims.0 {
                let Some(l) = labels(col, row) else { continue };
                let d = (col as f64 * stride - o.pixel.x).powi(2) + (row as f64 * stride - o.pixel.y).powi(2);
                if d <= stride * stride && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, l));
                }
            }
        }
        let Some((_, cluster)) = best else { continue };
        let c = r_t * (o.world - pose.translation);
        if c.z <= 0.0 {
            continue;
        }
        let u = intr.fx * c.x / c.z + intr.cx;
        let v = intr.fy * c.y / c.z + intr.cy;
        let r = ((o.pixel.x - u).powi(2) + (o.pixel.y - v).powi(2)).sqrt();
        let rho = if r <= delta { 0.5 * r * r } else { delta * (r - 0.5 * delta) };
        out[cluster].0 += rho;
        out[cluster].1 += 1;
    }
    out
}

fn criterion_1(report: &mut Report) {
    let intr = CameraIntrinsics::tum_freiburg3();
    let range = DepthRange::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst, mut worst_abs, mut elapsed, mut compared) = (0.0f64, 0.0f64, 0.0, 0);
    for frame in 0..50u64 {
        let depth = random_depth(&mut rng, &intr);
        let cmap = cluster_depth(&depth, &intr, &range, 24, 4, frame).expect("clustering");
        let pose = se3_exp(&random_twist(&mut rng, 0.3, 1.0));
        let mut obs = Vec::new();
        for _ in 0..400 {
            let pixel = Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
            let z = rng.random_range(-0.5..6.0);
            let local = Vector3::new((pixel.x - intr.cx) * z / intr.fx, (pixel.y - intr.cy) * z / intr.fy, z);
            // misplace a share of landmarks so errors span the Huber knee
            let shift = if rng.random_bool(0.3) { Vector3::new(rng.random_range(-0.3..0.3), 0.0, 0.0) } else { Vector3::zeros() };
            obs.push(Observation { pixel, world: pose.apply(&(local + shift)) });
        }
        let start = Instant::now();
        let got = compute_cluster_errors(&obs, &pose, &cmap, &intr, 2.0);
        elapsed += start.elapsed().as_secs_f64();
        let labels = |c: usize, r: usize| cmap.label_at_sample(c, r);
        let want = brute_force_errors(&obs, &pose, &labels, cmap.grid_dims(), 4.0, 24, &intr, 2.0);
        for (v, (sum, m)) in got.verdicts.iter().zip(&want) {
            let r = if *m > 0 { sum / *m as f64 } else { 0.0 };
            if v.m != *m {
                worst = f64::INFINITY;
            }
            // relative to the value: landmarks just in front of the camera
            // give residuals near 1e6 px
            worst = worst.max((v.r - r).abs() / r.abs().max(1.0));
            worst_abs = worst_abs.max((v.r - r).abs());
            compared += 1;
        }
    }
    report.line(
        1,
        worst <= 1e-12 && elapsed < 1.0,
        format!(
            "max relative deviation from oracle {worst:.2e} (absolute {worst_abs:.2e}) over {compared} clusters in 50 frames, {:.1} ms total",
            elapsed * 1e3
        ),
    );
}

// ---------------------------------------------------------------- 2, 3, 9

struct Arm {
    trajectory: Trajectory,
    judged: Confusion,
    matched: Confusion,
    coverage: f64,
    seconds: f64,
    geometry_ms: Vec<f64>,
}

fn run_arm(scene: &SyntheticScene, geometry: bool) -> Arm {
    let start = Instant::now();
    let mut tracker = Tracker::new(scene.intrinsics, TrackerConfig { geometry, ..TrackerConfig::default() }, None);
    let (mut judged, mut matched, mut coverage) = (Confusion::default(), Confusion::default(), 0.0);
    let mut geometry_ms = Vec::new();
    for frame in scene.frames() {
        let result = tracker
            .process(frame.index as u64, frame.timestamp, Arc::new(frame.rgb.clone()), Arc::new(frame.depth.clone()))
            .unwrap_or_else(|e| panic!("frame {}: {e}", frame.index));
        for f in result.judged_features() {
            judged.add(f.is_dynamic(), frame.is_dynamic_at(scene, &f.pixel));
        }
        for &i in &result.stage1_features {
            let f = &result.features[i];
            matched.add(f.is_dynamic(), frame.is_dynamic_at(scene, &f.pixel));
        }
        if result.classification.is_some() {
            geometry_ms.push(result.timing.cluster_ms + result.timing.dyndetect_ms);
        }
        coverage += frame.mover_coverage(scene);
    }
    Arm {
        trajectory: Trajectory::new(tracker.trajectory().to_vec()).unwrap(),
        judged,
        matched,
        coverage: coverage / scene.config.frames as f64,
        seconds: start.elapsed().as_secs_f64(),
        geometry_ms,
    }
}

fn criteria_2_3_9(report: &mut Report) {
    let scene = SyntheticScene::new(SceneConfig { frames: 200, seed: 42, ..SceneConfig::benchmark() }).expect("scene");
    let gt = scene.ground_truth();
    let geo = run_arm(&scene, true);
    let (p, r) = (geo.judged.precision(), geo.judged.recall());
    let coverage_ok = (0.20..=0.30).contains(&geo.coverage);
    report.line(
        2,
        p >= 0.80 && r >= 0.70 && geo.seconds < 60.0 && coverage_ok,
        format!(
            "precision {p:.3} recall {r:.3} over judged features (stage-1 matches: {:.3} / {:.3}), mover coverage {:.3}, {:.1} s",
            geo.matched.precision(),
            geo.matched.recall(),
            geo.coverage,
            geo.seconds
        ),
    );

    let base = run_arm(&scene, false);
    let ate = |t: &Trajectory| evaluate(t, &gt, DEFAULT_MAX_DT, DEFAULT_RPE_DELTA).unwrap().ate_rmse_m;
    let (a_geo, a_base) = (ate(&geo.trajectory), ate(&base.trajectory));
    report.line(
        3,
        a_geo <= 0.3 * a_base && base.seconds < 2.0 * geo.seconds,
        format!(
            "ATE {a_geo:.4} m with geometry vs {a_base:.4} m baseline (ratio {:.4}), baseline {:.1} s",
            a_geo / a_base,
            base.seconds
        ),
    );

    let mean = geo.geometry_ms.iter().sum::<f64>() / geo.geometry_ms.len().max(1) as f64;
    let worst = geo.geometry_ms.iter().cloned().fold(0.0, f64::max);
    report.line(
        9,
        mean < 50.0,
        format!("geometry module {mean:.1} ms/frame mean, {worst:.1} ms max over {} frames", geo.geometry_ms.len()),
    );
}

// ---------------------------------------------------------------- 4

fn criterion_4(report: &mut Report) {
    let intr = CameraIntrinsics::tum_freiburg3();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut states = 0;
    while states < 100 {
        let t_cw = se3_exp(&random_twist(&mut rng, 0.5, 1.0));
        let local = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.8..5.0));
        let world = t_cw.inverse().apply(&local);
        let obs = Observation { pixel: Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)), world };
        let Some(j) = reprojection_jacobian(&t_cw, &world, &intr) else { continue };
        let h = 1e-6;
        let mut fd = Matrix2x6::zeros();
        for k in 0..6 {
            let mut xi = Vector6::zeros();
            xi[k] = h;
            let step = |s: f64| {
                let v = xi * s;
                let tw = Twist::new(Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]));
                reprojection_residual(&se3_exp(&tw).compose(&t_cw), &obs, &intr).unwrap()
            };
            fd.set_column(k, &((step(1.0) - step(-1.0)) / (2.0 * h)));
        }
        worst = worst.max((j - fd).norm() / j.norm());
        states += 1;
    }

    let truth = se3_exp(&random_twist(&mut rng, 0.3, 0.5));
    let mut obs = Vec::new();
    while obs.len() < 200 {
        let local = Vector3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.0..1.0), rng.random_range(1.0..5.0));
        let pixel = dynavo::geometry::project(&local, &intr).unwrap();
        if intr.contains(&pixel) {
            obs.push(Observation { pixel, world: truth.apply(&local) });
        }
    }
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
    let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
    let offset = Pose::new(Rotation3::from_scaled_axis(axis * 3f64.to_radians()), dir * 0.05);
    let est = optimize_pose(&obs, &truth.compose(&offset), &intr, &OptimizerParams::default()).expect("optimizer");
    let error = (est.pose.translation - truth.translation).norm();
    report.line(
        4,
        worst < 1e-5 && error < 1e-6,
        format!("Jacobian max relative error {worst:.2e} over 100 states; 5 cm / 3 deg start converges to {error:.2e} m"),
    );
}

// ---------------------------------------------------------------- 5

fn criterion_5(report: &mut Report) {
    let intr = CameraIntrinsics::tum_freiburg3();
    // three compact patches at 1, 2.5 and 4 m, everything else invalid
    let patches = [(60u32, 60u32, 1.0), (260, 200, 2.5), (460, 320, 4.0)];
    let slab = |x: u32, y: u32| patches.iter().position(|&(px, py, _)| x >= px && x < px + 120 && y >= py && y < py + 120);
    let depth = DepthImage::from_fn(intr.width, intr.height, |x, y| {
        image::Luma([slab(x, y).map_or(0, |s| (patches[s].2 * intr.depth_scale) as u16)])
    });
    let cmap = cluster_depth(&depth, &intr, &DepthRange::default(), 3, 4, 5).expect("clustering");
    let (cols, rows) = cmap.grid_dims();
    let mut mapping: [Option<usize>; 3] = [None; 3];
    let mut exact = true;
    for row in 0..rows {
        for col in 0..cols {
            let (label, s) = (cmap.label_at_sample(col, row), slab(col as u32 * cmap.stride, row as u32 * cmap.stride));
            match (label, s) {
                (None, None) => {}
                (Some(label), Some(s)) => match mapping[s] {
                    None => mapping[s] = Some(label),
                    Some(l) => exact &= l == label,
                },
                _ => exact = false,
            }
        }
    }
    let distinct: std::collections::BTreeSet<_> = mapping.iter().flatten().collect();
    exact &= distinct.len() == 3;

    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut monotone = 0;
    for instance in 0..20 {
        let points: Vec<Vector3<f64>> = (0..rng.random_range(200..2000))
            .map(|_| Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-1.5..1.5), rng.random_range(0.5..6.0)))
            .collect();
        let k = rng.random_range(2..30);
        let result = kmeans(&points, k, instance, &KMeansParams::default()).expect("kmeans");
        if result.objective_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)) {
            monotone += 1;
        }
    }
    report.line(
        5,
        exact && monotone == 20,
        format!("3 slabs recovered exactly: {exact}; Lloyd objective non-increasing on {monotone}/20 instances"),
    );
}

// ---------------------------------------------------------------- 6

fn at(x: f64, y: f64, z: f64) -> Pose {
    Pose::new(Rotation3::identity(), Vector3::new(x, y, z))
}

fn pairs(est: &[Pose], gt: &[Pose], dt: f64) -> Vec<PosePair> {
    est.iter()
        .zip(gt)
        .enumerate()
        .map(|(i, (e, g))| PosePair { timestamp: i as f64 * dt, estimate: *e, truth: *g })
        .collect()
}

fn criterion_6(report: &mut Report) {
    let mut worst = 0.0f64;
    // 3 mm and 4 mm position errors, alignment fixed to identity
    let gt = [at(0.0, 0.0, 0.0), at(1.0, 0.0, 0.0)];
    let est = [at(0.003, 0.0, 0.0), at(1.0, 0.004, 0.0)];
    worst = worst.max((ate_rmse(&pairs(&est, &gt, 1.0), &Pose::identity()) - (12.5e-6f64).sqrt()).abs());

    // 1 cm of slip per second along the direction of travel
    let gt = [at(0.0, 0.0, 0.0), at(1.0, 0.0, 0.0), at(2.0, 0.0, 0.0)];
    let est = [at(0.0, 0.0, 0.0), at(1.01, 0.0, 0.0), at(2.02, 0.0, 0.0)];
    let (t, r) = rpe(&pairs(&est, &gt, 1.0), 1.0).unwrap();
    worst = worst.max((t - 0.01).abs()).max(r.abs());

    // 1 degree of yaw slip per second, no translation
    let yaw = |deg: f64| Pose::new(Rotation3::from_axis_angle(&Vector3::y_axis(), deg.to_radians()), Vector3::zeros());
    let gt = [Pose::identity(); 3];
    let est = [yaw(0.0), yaw(1.0), yaw(2.0)];
    let (t, r) = rpe(&pairs(&est, &gt, 1.0), 1.0).unwrap();
    worst = worst.max(t.abs()).max((r - 1.0).abs());

    // common rigid transform of both trajectories
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut invariance = 0.0f64;
    for _ in 0..20 {
        let gt: Vec<Pose> = (0..50).map(|_| se3_exp(&random_twist(&mut rng, 1.0, 2.0))).collect();
        let est: Vec<Pose> = gt.iter().map(|g| se3_exp(&random_twist(&mut rng, 0.02, 0.05)).compose(g)).collect();
        let common = se3_exp(&random_twist(&mut rng, 3.0, 10.0));
        let moved = |v: &[Pose]| v.iter().map(|p| common.compose(p)).collect::<Vec<_>>();
        let a = pairs(&est, &gt, 0.1);
        let b = pairs(&moved(&est), &moved(&gt), 0.1);
        let ate_a = ate_rmse(&a, &align_umeyama(&a).unwrap());
        let ate_b = ate_rmse(&b, &align_umeyama(&b).unwrap());
        invariance = invariance.max((ate_a - ate_b).abs());
    }
    report.line(
        6,
        worst < 1e-9 && invariance < 1e-9,
        format!("hand cases max deviation {worst:.2e}; ATE change under common rigid transform {invariance:.2e}"),
    );
}

// ---------------------------------------------------------------- 7

fn random_mask(rng: &mut ChaCha8Rng) -> BinaryMask {
    let mut m = BinaryMask::new(64, 48);
    let (x0, y0) = (rng.random_range(0..64), rng.random_range(0..48));
    let (w, h) = (rng.random_range(1..40), rng.random_range(1..30));
    for y in y0..(y0 + h).min(48) {
        for x in x0..(x0 + w).min(64) {
            m.set(x, y, true);
        }
    }
    m
}

fn criterion_7(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut map = Map::new();
    let mut keyframes = Vec::new();
    let (mut idempotent, mut audited, mut leaks) = (true, true, 0);
    for _ in 0..1000 {
        if keyframes.is_empty() || rng.random_bool(0.5) {
            let features: Vec<Feature> = (0..rng.random_range(5..40))
                .map(|_| Feature::new(Vector2::new(rng.random_range(0.0..64.0), rng.random_range(0.0..48.0)), Descriptor::default()))
                .collect();
            let n = features.len();
            let kf = map.add_keyframe(0, 0.0, Pose::identity(), features, None, None, 0);
            for f in 0..n {
                let existing: Vec<_> = map.points().map(|p| p.id).collect();
                if !existing.is_empty() && rng.random_bool(0.4) {
                    map.add_observation(existing[rng.random_range(0..existing.len())], kf, f);
                } else if rng.random_bool(0.8) {
                    map.add_point(Vector3::new(rng.random(), rng.random(), 1.0 + rng.random::<f64>()), kf, f);
                }
            }
            keyframes.push(kf);
        } else {
            let kf = keyframes[rng.random_range(0..keyframes.len())];
            let mask = random_mask(&mut rng);
            filter_keyframe(&mut map, kf, &mask);
            let snapshot: Vec<_> = map.points().cloned().collect();
            let again = filter_keyframe(&mut map, kf, &mask);
            idempotent &= again == Default::default() && map.points().cloned().collect::<Vec<_>>() == snapshot;
            let k = map.keyframe(kf).unwrap();
            leaks += k.features.iter().zip(&k.points).filter(|(f, p)| mask.at(f.pixel.x, f.pixel.y) && p.is_some()).count();
        }
        audited &= map.audit().is_ok();
    }
    report.line(
        7,
        idempotent && audited && leaks == 0,
        format!(
            "second filter a no-op: {idempotent}; audit after each of 1000 operations: {audited}; masked features still mapped: {leaks}; {} keyframes, {} points",
            map.keyframe_count(),
            map.point_count()
        ),
    );
}

// ---------------------------------------------------------------- 8

fn criterion_8(report: &mut Report) {
    let dir = tempfile::tempdir().expect("temp dir");
    let scene = SyntheticScene::new(SceneConfig { frames: 40, ..SceneConfig::benchmark() }).expect("scene");
    let seq = dir.path().join("seq");
    write_tum_sequence(&scene, &seq).expect("write");
    let run = |name: &str| {
        let out = dir.path().join(name);
        let config = PipelineConfig { dataset: seq.clone(), masks: Some(seq.join("masks")), out: out.clone(), ..Default::default() };
        cmd_run(&config).expect("run");
        std::fs::read(out.join("trajectory.txt")).expect("trajectory")
    };
    let (a, b) = (run("a"), run("b"));
    report.line(8, a == b && !a.is_empty(), format!("two sync runs, 40 frames with masks: trajectory files identical ({} bytes)", a.len()));
}

// ---------------------------------------------------------------- 10

fn criterion_10(report: &mut Report) {
    let Some(dir) = std::env::var_os("DYNAVO_TUM_DIR").map(PathBuf::from) else {
        println!("criterion 10: SKIP set DYNAVO_TUM_DIR (and DYNAVO_TUM_MASKS) to run the TUM check");
        return;
    };
    let masks = std::env::var_os("DYNAVO_TUM_MASKS").map(PathBuf::from);
    let scratch = tempfile::tempdir().expect("temp dir");
    let base = PipelineConfig { dataset: dir, ..Default::default() };
    let full = PipelineConfig { masks: masks.clone(), semantic: masks.is_some(), out: scratch.path().join("full"), ..base.clone() };
    let plain = PipelineConfig { semantic: false, geometry: false, out: scratch.path().join("plain"), ..base };
    let ate = |c: &PipelineConfig| cmd_run(c).map(|s| s.metrics.ate_rmse_m);
    match (ate(&full), ate(&plain)) {
        (Ok(a), Ok(b)) => report.line(
            10,
            a < 0.10 && 4.0 * a <= b,
            format!(
                "ATE {a:.4} m ({}) vs {b:.4} m with both modules off; reference value 0.0194 m",
                if masks.is_some() { "both modules" } else { "geometry only, no masks given" }
            ),
        ),
        (a, b) => report.line(10, false, format!("run failed: {:?} / {:?}", a.err(), b.err())),
    }
}

fn main() {
    // `cargo test` passes harness flags; a name filter that is not ours skips everything
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    if filter.as_deref().is_some_and(|f| !"acceptance".contains(f) && !f.starts_with("criterion")) {
        return;
    }
    let start = Instant::now();
    let mut report = Report { gating_failures: 0 };
    criterion_1(&mut report);
    criteria_2_3_9(&mut report);
    criterion_4(&mut report);
    criterion_5(&mut report);
    criterion_6(&mut report);
    criterion_7(&mut report);
    criterion_8(&mut report);
    criterion_10(&mut report);
    println!("acceptance: {} gating failure(s) in {:.1} s", report.gating_failures, start.elapsed().as_secs_f64());
    if report.gating_failures > 0 {
        std::process::exit(1);
    }
}
