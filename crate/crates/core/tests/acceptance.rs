//! End-to-end acceptance checks. Each test writes one `PASS`/`FAIL` line to
//! stderr (bypassing output capture) before asserting.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use armbench::camera::{calibrate, CalibrationOptions};
use armbench::compat::{run_comparison_session, BugKind, ComparisonParams};
use armbench::explorer::{
    run_exploration, Budget, ExplorationTrace, Observer, PerceptionCache, PerceptionParams, RunContext, Strategy,
    Variant, MASKED,
};
use armbench::geometry::Point2;
use armbench::harness::cli;
use armbench::kinematics::{forward_kinematics, inverse_kinematics, ArmConfig, PlanarPose};
use armbench::simbench::{
    render_screen, resolve_touch, suite, synthesize_chessboard_views, synthesize_photo, AppModel, AppSession,
    CameraRig, DeviceProfile, Scene, Touch,
};
use armbench::vision::{detect_screen, extract_widgets, ExtractionParams, GlyphLibrary, ScreenDetectParams, WidgetKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn verdict(name: &str, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] {name}: {detail}");
}

fn wrap(a: f64) -> f64 {
    (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI
}

#[test]
fn kinematics_round_trip() {
    let links = ArmConfig::default().links;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let targets: Vec<PlanarPose> = std::iter::repeat_with(|| {
        // tip positions whose wrist center is inside the two-link annulus
        let alpha = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let (lo, hi) = ((links.l1 - links.l2).abs(), links.l1 + links.l2);
        let r = rng.random_range(lo * lo..hi * hi).sqrt();
        let phi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let (u, v) = (r * phi.cos(), r * phi.sin());
        PlanarPose::new(u + links.l3 * alpha.cos(), v + links.l3 * alpha.sin(), alpha)
    })
    .take(10_000)
    .collect();
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for t in &targets {
        match inverse_kinematics(t, &links) {
            Ok(j) => {
                let p = forward_kinematics(&j, &links);
                worst = worst.max((p.x - t.x).abs()).max((p.y - t.y).abs()).max(wrap(p.alpha - t.alpha).abs());
            }
            Err(_) => failures += 1,
        }
    }
    let elapsed = t0.elapsed();
    let pass = failures == 0 && worst < 1e-6 && elapsed < Duration::from_secs(1);
    verdict(
        "kinematics FK(IK) round trip",
        pass,
        format!("10000 targets, max error {worst:.2e} mm, {failures} failures, {elapsed:?}"),
    );
    assert!(pass);
}

#[test]
fn calibration_accuracy() {
    let rig = CameraRig::default();
    let k = rig.intrinsics;
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    let run = |noise: f64, seed: u64| {
        let views = synthesize_chessboard_views(&rig, 5, (9, 6), 20.0, noise, seed);
        calibrate(&views, &CalibrationOptions::default()).unwrap().intrinsics
    };
    let mut worst_noisy: f64 = 0.0;
    let mut worst_skew: f64 = 0.0;
    for seed in 0..5 {
        let c = run(0.2, seed);
        worst_noisy = worst_noisy.max(rel(c.fx, k.fx)).max(rel(c.fy, k.fy)).max(rel(c.cx, k.cx)).max(rel(c.cy, k.cy));
        worst_skew = worst_skew.max((c.s - k.s).abs());
    }
    let c = run(0.0, 0);
    let clean = rel(c.fx, k.fx).max(rel(c.fy, k.fy)).max(rel(c.cx, k.cx)).max(rel(c.cy, k.cy)).max((c.s - k.s).abs() / k.fx);
    let pass = worst_noisy < 0.01 && worst_skew <= 2.0 && clean < 1e-3;
    verdict(
        "calibration from 5 views",
        pass,
        format!("sigma 0.2: worst relative error {worst_noisy:.4}, skew error {worst_skew:.3}; noiseless {clean:.2e}"),
    );
    assert!(pass);
}

/// The phone rotated by `deg` about its own center.
fn rotated_phone(deg: f64) -> DeviceProfile {
    let mut d = DeviceProfile::phone("phone");
    let (w, h) = (d.screen_mm[0], d.screen_mm[1]);
    let center = Point2::new(d.placement.x_mm + w / 2.0, d.placement.y_mm + h / 2.0);
    let (s, c) = deg.to_radians().sin_cos();
    let half = Point2::new(c * w / 2.0 - s * h / 2.0, s * w / 2.0 + c * h / 2.0);
    d.placement.x_mm = center.x - half.x;
    d.placement.y_mm = center.y - half.y;
    d.placement.deflection_deg = deg;
    d
}

#[test]
fn screen_detection_accuracy() {
    let glyphs = GlyphLibrary::builtin(2);
    let apps = suite::shipped_suite(&glyphs);
    let rig = CameraRig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cases: Vec<(usize, usize, f64, f64)> = (0..100)
        .map(|i| {
            let app = i % apps.len();
            let screen = rng.random_range(0..apps[app].screens.len());
            (app, screen, rng.random_range(-15.0..=15.0), rng.random_range(0.0..=2.0))
        })
        .collect();
    let results: Vec<(f64, f64)> = cases
        .par_iter()
        .enumerate()
        .map(|(i, &(a, s, deg, sigma))| {
            let device = rotated_phone(deg);
            let app = &apps[a];
            let (img, _) = render_screen(app, &app.screens[s].id, &device, &glyphs, None).unwrap();
            let scene = Scene {
                noise_sigma: sigma,
                ..Scene::default()
            };
            let photo = synthesize_photo(&img, &device, &rig, &scene, i as u64).unwrap();
            let params = ScreenDetectParams {
                physical_width_mm: device.screen_mm[0],
                ..ScreenDetectParams::default()
            };
            match detect_screen(&photo.image, &params) {
                Ok(q) => {
                    let err = q.corners.iter().zip(&photo.corners).map(|(p, t)| p.distance(t)).fold(0.0, f64::max);
                    let (a, b) = (photo.corners[0], photo.corners[1]);
                    let truth = (b.y - a.y).atan2(b.x - a.x);
                    (err, wrap(q.deflection_angle - truth).abs().to_degrees())
                }
                Err(_) => (f64::INFINITY, f64::INFINITY),
            }
        })
        .collect();
    let good = results.iter().filter(|(c, d)| *c <= 2.0 && *d <= 0.5).count();
    let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let pass = good >= 95;
    verdict(
        "screen detection",
        pass,
        format!("{good}/100 photos within 2 px and 0.5 deg (worst corner error {worst:.2} px)"),
    );
    assert!(pass);
}

#[test]
fn widget_extraction_quality() {
    let glyphs = GlyphLibrary::builtin(2);
    let device = DeviceProfile::phone("phone");
    let params = ExtractionParams::default();
    let (mut truths, mut found, mut matched, mut low_conf, mut screens) = (0, 0, 0, 0, 0);
    for app in suite::shipped_suite(&glyphs) {
        for s in &app.screens {
            screens += 1;
            let (img, gt) = render_screen(&app, &s.id, &device, &glyphs, None).unwrap();
            let det = extract_widgets(&img, &glyphs, &params);
            low_conf += det.iter().filter(|w| w.kind == WidgetKind::Text && w.confidence < 0.8).count();
            truths += gt.len();
            found += det.len();
            // greedy one-to-one matching by IoU
            let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
            for (i, g) in gt.iter().enumerate() {
                for (j, d) in det.iter().enumerate() {
                    let iou = g.bounds.iou(&d.bounds);
                    if iou >= 0.7 {
                        pairs.push((iou, i, j));
                    }
                }
            }
            pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
            let (mut used_g, mut used_d) = (BTreeSet::new(), BTreeSet::new());
            for (_, i, j) in pairs {
                if !used_g.contains(&i) && !used_d.contains(&j) {
                    used_g.insert(i);
                    used_d.insert(j);
                    matched += 1;
                }
            }
        }
    }
    let recall = matched as f64 / truths as f64;
    let precision = matched as f64 / found as f64;
    let pass = screens == 50 && recall >= 0.95 && precision >= 0.90 && low_conf == 0;
    verdict(
        "widget extraction",
        pass,
        format!("{screens} screens, recall {recall:.3}, precision {precision:.3}, {low_conf} text widgets below 0.8"),
    );
    assert!(pass);
}

struct Grid {
    /// (strategy, trace) for every app and seed.
    runs: Vec<(Variant, ExplorationTrace)>,
    elapsed: Duration,
}

fn context<'a>(glyphs: &'a GlyphLibrary, cache: &'a PerceptionCache, device: &DeviceProfile) -> RunContext<'a> {
    let rig = CameraRig::default();
    RunContext {
        glyphs,
        rig,
        scene: Scene::default(),
        observer: Observer::ideal(&rig, device, Scene::default().background),
        arm: ArmConfig::default(),
        perception: PerceptionParams::default(),
        cache: Some(cache),
        overlay_dir: None,
    }
}

/// The full exploration grid, shared by the efficiency and closed-loop checks.
fn exploration_grid() -> &'static Grid {
    static GRID: OnceLock<Grid> = OnceLock::new();
    GRID.get_or_init(|| {
        let t0 = Instant::now();
        let glyphs = GlyphLibrary::builtin(2);
        let device = DeviceProfile::phone("phone");
        let apps: Vec<Arc<AppModel>> = suite::shipped_suite(&glyphs).into_iter().map(Arc::new).collect();
        let cache = PerceptionCache::new();
        let ctx = context(&glyphs, &cache, &device);
        let cells: Vec<(usize, Variant, u64)> = (0..apps.len())
            .flat_map(|a| Variant::ALL.into_iter().flat_map(move |v| (0..10).map(move |s| (a, v, s))))
            .collect();
        let runs = cells
            .par_iter()
            .map(|&(a, v, seed)| {
                let mut session = AppSession::new(apps[a].clone(), device.clone());
                (v, run_exploration(&mut session, &Strategy::new(v, seed), Budget::steps(200), &ctx))
            })
            .collect();
        Grid {
            runs,
            elapsed: t0.elapsed(),
        }
    })
}

#[test]
fn strategy_efficiency_ordering() {
    let grid = exploration_grid();
    let mean = |v: Variant| {
        let d: Vec<f64> = grid.runs.iter().filter(|r| r.0 == v).map(|r| r.1.metrics.distance_mm).collect();
        d.iter().sum::<f64>() / d.len() as f64
    };
    let (r, e, c) = (mean(Variant::Random), mean(Variant::Edge), mean(Variant::Center));
    let below = 1.0 - c / r;
    let pass = c < e && e < r && below >= 0.15 && grid.elapsed < Duration::from_secs(600);
    verdict(
        "strategy efficiency",
        pass,
        format!(
            "mean distance random {r:.1} mm, edge {e:.1} mm, center {c:.1} mm; center {:.1}% below random, {:.1}% below edge; {:?}",
            below * 100.0,
            (1.0 - c / e) * 100.0,
            grid.elapsed
        ),
    );
    assert!(pass);
}

#[test]
fn closed_loop_targeting() {
    let grid = exploration_grid();
    let (targeted, hit) = grid.runs.iter().fold((0, 0), |(t, h), r| {
        (t + r.1.metrics.targeted_steps, h + r.1.metrics.on_target_steps)
    });
    let rate = hit as f64 / targeted as f64;
    let pass = rate >= 0.98;
    verdict(
        "closed-loop targeting",
        pass,
        format!("{hit}/{targeted} targeted steps resolved to the intended widget ({:.2}%)", rate * 100.0),
    );
    assert!(pass);
}

#[test]
fn compatibility_detection() {
    let glyphs = GlyphLibrary::builtin(2);
    let notched = DeviceProfile::notched_phone("notched");
    let regular = notched.regular_twin();
    let apps: Vec<Arc<AppModel>> = suite::shipped_suite(&glyphs).into_iter().map(Arc::new).collect();
    let cache = PerceptionCache::new();
    let ctx = context(&glyphs, &cache, &notched);
    let params = ComparisonParams::default();
    let cells: Vec<(usize, Variant, u64)> = (0..apps.len())
        .flat_map(|a| Variant::ALL.into_iter().flat_map(move |v| (0..10).map(move |s| (a, v, s))))
        .collect();
    // (touched faults, reported of those, false positives on regular pairs)
    let results: Vec<(usize, usize, usize, Vec<String>)> = cells
        .par_iter()
        .map(|&(a, v, seed)| {
            let app = &apps[a];
            let strategy = Strategy::new(v, seed);
            let faults: BTreeSet<(String, String)> = suite::mask_faults(app, &notched).into_iter().collect();
            let o = run_comparison_session(app.clone(), &notched, &regular, &strategy, Budget::steps(200), &ctx, &params, "n")
                .unwrap();
            let reported: BTreeSet<_> = o
                .reports
                .iter()
                .filter(|r| r.kind == BugKind::Compatibility)
                .map(|r| (r.screen.clone(), r.widget.clone(), r.gesture))
                .collect();
            // a fault is touched when a swallowed touch would have moved the
            // reference to another screen through a fault widget
            let mut touched = BTreeSet::new();
            for r in &o.trace.records {
                let (Some(g), Some(p)) = (r.gesture, r.touch_point) else { continue };
                if r.touched.as_deref() != Some(MASKED) {
                    continue;
                }
                if let Ok(Touch::Widget(w)) = resolve_touch(app, &r.screen, &regular, p) {
                    let live = app.transition(&r.screen, Some(&w.id), g).is_some_and(|to| to != r.screen);
                    if live && faults.contains(&(r.screen.clone(), w.id.clone())) {
                        touched.insert((r.screen.clone(), Some(w.id.clone()), g));
                    }
                }
            }
            let missed: Vec<String> = touched
                .difference(&reported)
                .map(|(s, w, g)| format!("{}/{s}/{}/{g} ({v} {seed})", app.id, w.as_deref().unwrap_or("-")))
                .collect();
            let rr = run_comparison_session(app.clone(), &regular, &regular, &strategy, Budget::steps(200), &ctx, &params, "r")
                .unwrap();
            (touched.len(), touched.len() - missed.len(), rr.count(BugKind::Compatibility), missed)
        })
        .collect();
    let touched: usize = results.iter().map(|r| r.0).sum();
    let reported: usize = results.iter().map(|r| r.1).sum();
    let fp: usize = results.iter().map(|r| r.2).sum();
    let missed: Vec<&String> = results.iter().flat_map(|r| &r.3).collect();
    let pass = touched > 0 && reported == touched && fp == 0;
    verdict(
        "compatibility detection",
        pass,
        format!(
            "{reported}/{touched} touched faults reported over {} sessions, {fp} false positives on regular pairs{}",
            cells.len(),
            if missed.is_empty() { String::new() } else { format!("; missed {missed:?}") }
        ),
    );
    assert!(pass);
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn cli_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap().to_string();
    let commands: [&[&str]; 4] = [
        &["calibrate"],
        &["explore", "--budget-steps", "20", "--seed", "3", "--debug-overlays"],
        &["compare", "--budget-steps", "40", "--seed", "1", "--strategy", "center"],
        &["report"],
    ];
    let run_all = || {
        let mut codes = Vec::new();
        for c in commands {
            let args = ["armbench"].iter().chain(c).map(|s| s.to_string()).chain(["--out".into(), out_s.clone()]);
            let (mut o, mut e) = (Vec::new(), Vec::new());
            codes.push(cli::run(args, |_| None, &mut o, &mut e));
        }
        codes
    };
    let first_codes = run_all();
    let first = snapshot(&out);
    let second_codes = run_all();
    let second = snapshot(&out);
    let differing: Vec<&String> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| a != b)
        .map(|(a, _)| &a.0)
        .collect();
    let ok_codes = first_codes.iter().all(|c| *c == 0 || *c == 3) && first_codes == second_codes;
    let pass = ok_codes && first.len() == second.len() && differing.is_empty() && !first.is_empty();
    verdict(
        "deterministic reruns",
        pass,
        format!(
            "{} files compared after calibrate/explore/compare/report, {} differ, exit codes {first_codes:?}",
            first.len(),
            differing.len() + first.len().abs_diff(second.len())
        ),
    );
    assert!(pass, "differing: {differing:?}");
}
