//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns JSON text; the page parses it.

use std::sync::Arc;

use armbench::explorer::{locate, run_exploration, Budget, Observer, PerceptionCache, PerceptionParams, RunContext, Strategy, Variant};
use armbench::kinematics::{forward_kinematics, inverse_kinematics, ArmConfig, PlanarPose};
use armbench::simbench::{render_screen, suite, synthesize_photo, AppModel, AppSession, CameraRig, DeviceProfile, Scene};
use armbench::vision::{extract_widgets, ExtractionParams, GlyphLibrary};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct IkAnswer {
    theta1_deg: f64,
    theta2_deg: f64,
    theta3_deg: f64,
    /// Joint positions from the base to the tip, mm.
    chain: Vec<[f64; 2]>,
}

pub fn ik_json(x: f64, y: f64, alpha_deg: f64) -> Result<String, String> {
    let links = ArmConfig::default().links;
    let j = inverse_kinematics(&PlanarPose::new(x, y, alpha_deg.to_radians()), &links).map_err(|e| e.to_string())?;
    let a1 = j.theta1;
    let a2 = a1 + j.theta2;
    let elbow = [links.l1 * a1.cos(), links.l1 * a1.sin()];
    let wrist = [elbow[0] + links.l2 * a2.cos(), elbow[1] + links.l2 * a2.sin()];
    let tip = forward_kinematics(&j, &links);
    let answer = IkAnswer {
        theta1_deg: j.theta1.to_degrees(),
        theta2_deg: j.theta2.to_degrees(),
        theta3_deg: j.theta3.to_degrees(),
        chain: vec![[0.0, 0.0], elbow, wrist, [tip.x, tip.y]],
    };
    Ok(serde_json::to_string(&answer).expect("serializes"))
}

/// Solves the arm's inverse kinematics for a tip pose.
#[wasm_bindgen]
pub fn solve_ik(x: f64, y: f64, alpha_deg: f64) -> Result<String, JsError> {
    ik_json(x, y, alpha_deg).map_err(|e| JsError::new(&e))
}

#[derive(Serialize)]
struct Detection {
    app: String,
    screen: String,
    width: u32,
    height: u32,
    /// Rectified screen, one byte per pixel.
    pixels: Vec<u8>,
    deflection_deg: f64,
    widgets: Vec<DetectedWidget>,
}

#[derive(Serialize)]
struct DetectedWidget {
    x: i32,
    y: i32,
    width: i32,
    height: i32,
    text: Option<String>,
}

fn apps(glyphs: &GlyphLibrary) -> Vec<AppModel> {
    suite::shipped_suite(glyphs)
}

pub fn detect_json(app: usize, screen: usize, deflection_deg: f64, noise: f64) -> Result<String, String> {
    let glyphs = GlyphLibrary::builtin(2);
    let apps = apps(&glyphs);
    let app = apps.get(app).ok_or("no such app")?;
    let spec = app.screens.get(screen).ok_or("no such screen")?;
    let mut device = DeviceProfile::phone("phone");
    device.placement.deflection_deg = deflection_deg.clamp(-15.0, 15.0);
    // keep the phone centered while it turns
    let (s, c) = device.placement.deflection_deg.to_radians().sin_cos();
    let (w, h) = (device.screen_mm[0], device.screen_mm[1]);
    device.placement.x_mm = -(c * w / 2.0 - s * h / 2.0);
    device.placement.y_mm = 156.0 - (s * w / 2.0 + c * h / 2.0);
    let rig = CameraRig::default();
    let scene = Scene {
        noise_sigma: noise.clamp(0.0, 10.0),
        ..Scene::default()
    };
    let (img, _) = render_screen(app, &spec.id, &device, &glyphs, None).map_err(|e| e.to_string())?;
    let photo = synthesize_photo(&img, &device, &rig, &scene, 1).map_err(|e| e.to_string())?;
    let observer = Observer::ideal(&rig, &device, scene.background);
    let (rectified, quad, _) = locate(&photo.image, &observer, &PerceptionParams::default()).map_err(|e| e.to_string())?;
    let widgets = extract_widgets(&rectified, &glyphs, &ExtractionParams::default())
        .into_iter()
        .map(|w| DetectedWidget {
            x: w.bounds.x,
            y: w.bounds.y,
            width: w.bounds.width,
            height: w.bounds.height,
            text: w.text,
        })
        .collect();
    let gray = rectified.to_gray();
    let out = Detection {
        app: app.id.clone(),
        screen: spec.id.clone(),
        width: gray.width(),
        height: gray.height(),
        pixels: gray.data().to_vec(),
        deflection_deg: quad.deflection_angle.to_degrees(),
        widgets,
    };
    Ok(serde_json::to_string(&out).expect("serializes"))
}

/// Photographs a suite screen at the given deflection and noise, then
/// locates the screen and extracts its widgets.
#[wasm_bindgen]
pub fn detect_widgets(app: usize, screen: usize, deflection_deg: f64, noise: f64) -> Result<String, JsError> {
    detect_json(app, screen, deflection_deg, noise).map_err(|e| JsError::new(&e))
}

#[derive(Serialize)]
struct Exploration {
    app: String,
    strategy: String,
    distance_mm: f64,
    screens_visited: usize,
    screens_total: usize,
    /// Pen path over the whole run, mm.
    path: Vec<[f64; 2]>,
    steps: Vec<StepSummary>,
}

#[derive(Serialize)]
struct StepSummary {
    screen: String,
    gesture: Option<String>,
    touched: Option<String>,
    cumulative_mm: f64,
}

pub fn explore_json(app: usize, strategy: &str, seed: u64, steps: usize) -> Result<String, String> {
    let variant: Variant = strategy.parse()?;
    let glyphs = GlyphLibrary::builtin(2);
    let mut apps = apps(&glyphs);
    if app >= apps.len() {
        return Err("no such app".into());
    }
    let app = Arc::new(apps.swap_remove(app));
    let device = DeviceProfile::phone("phone");
    let rig = CameraRig::default();
    let cache = PerceptionCache::new();
    let ctx = RunContext {
        glyphs: &glyphs,
        rig,
        scene: Scene::default(),
        observer: Observer::ideal(&rig, &device, Scene::default().background),
        arm: ArmConfig::default(),
        perception: PerceptionParams::default(),
        cache: Some(&cache),
        overlay_dir: None,
    };
    let mut session = AppSession::new(app.clone(), device);
    let trace = run_exploration(&mut session, &Strategy::new(variant, seed), Budget::steps(steps.min(500)), &ctx);
    let mut path: Vec<[f64; 2]> = Vec::new();
    for r in &trace.records {
        let skip = usize::from(!path.is_empty());
        path.extend(r.segment.iter().skip(skip).map(|p| [p.x, p.y]));
    }
    let out = Exploration {
        app: app.id.clone(),
        strategy: variant.to_string(),
        distance_mm: trace.metrics.distance_mm,
        screens_visited: trace.metrics.screens_visited,
        screens_total: trace.metrics.screens_total,
        path,
        steps: trace
            .records
            .iter()
            .map(|r| StepSummary {
                screen: r.screen.clone(),
                gesture: r.gesture.map(|g| g.to_string()),
                touched: r.touched.clone(),
                cumulative_mm: r.cumulative_mm,
            })
            .collect(),
    };
    Ok(serde_json::to_string(&out).expect("serializes"))
}

/// Runs one exploration of a suite app and returns the pen path and steps.
#[wasm_bindgen]
pub fn explore(app: usize, strategy: &str, seed: u64, steps: usize) -> Result<String, JsError> {
    explore_json(app, strategy, seed, steps).map_err(|e| JsError::new(&e))
}

/// Names of the suite apps and their screen counts.
#[wasm_bindgen]
pub fn suite_apps() -> String {
    let glyphs = GlyphLibrary::builtin(2);
    let list: Vec<(String, usize)> = apps(&glyphs).iter().map(|a| (a.id.clone(), a.screens.len())).collect();
    serde_json::to_string(&list).expect("serializes")
}
