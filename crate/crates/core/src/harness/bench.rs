//! Grid execution for the calibrate, explore and compare commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::BenchmarkConfig;
use super::io::{csv, write_atomic, write_json};
use super::HarnessError;
use crate::camera::{calibrate, CalibrationOptions, CameraIntrinsics};
use crate::compat::{run_comparison_session, BugKind, BugReport};
use crate::explorer::{run_exploration, Observer, PerceptionCache, RunContext, RunMetrics, Variant};
use crate::kinematics::GestureKind;
use crate::simbench::{render_screen, suite, synthesize_chessboard_views, AppModel, AppSession, DeviceProfile};
use crate::vision::GlyphLibrary;

pub const CALIBRATION_FILE: &str = "calibration.json";

/// The persisted intrinsics document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDoc {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub s: f64,
    pub k1: f64,
    pub reprojection_error: f64,
    pub views: usize,
    pub iterations: usize,
}

impl CalibrationDoc {
    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            k1: self.k1,
            ..CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.s)
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io(path.to_path_buf(), e)
}

/// Calibrates the configured camera from synthetic chessboard views and
/// writes `calibration.json` into the output directory.
pub fn cmd_calibrate(cfg: &BenchmarkConfig) -> Result<CalibrationDoc, HarnessError> {
    let c = &cfg.calibration;
    let views = synthesize_chessboard_views(&cfg.camera, c.views, c.grid, c.square_mm, c.noise_sigma, c.seed);
    let options = CalibrationOptions {
        estimate_k1: cfg.camera.intrinsics.k1 != 0.0,
        ..CalibrationOptions::default()
    };
    let cal = calibrate(&views, &options)?;
    let i = cal.intrinsics;
    let doc = CalibrationDoc {
        fx: i.fx,
        fy: i.fy,
        cx: i.cx,
        cy: i.cy,
        s: i.s,
        k1: i.k1,
        reprojection_error: cal.reprojection_error,
        views: views.len(),
        iterations: cal.iterations,
    };
    let path = cfg.out.join(CALIBRATION_FILE);
    write_json(&path, &doc).map_err(io_err(&path))?;
    Ok(doc)
}

/// Reads the calibration of a previous `calibrate` run, calibrating first
/// when there is none.
pub fn load_or_calibrate(cfg: &BenchmarkConfig) -> Result<(CalibrationDoc, bool), HarnessError> {
    let path = cfg.out.join(CALIBRATION_FILE);
    match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text)
            .map(|d| (d, false))
            .map_err(|e| HarnessError::Parse(path.clone(), e.to_string())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok((cmd_calibrate(cfg)?, true)),
        Err(e) => Err(HarnessError::Io(path, e)),
    }
}

pub fn load_apps(cfg: &BenchmarkConfig, glyphs: &GlyphLibrary) -> Result<Vec<AppModel>, HarnessError> {
    if cfg.apps.is_empty() {
        return Ok(suite::shipped_suite(glyphs));
    }
    cfg.apps
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(io_err(p))?;
            AppModel::from_json(&text, glyphs).map_err(|e| HarnessError::Model(p.clone(), e.to_string()))
        })
        .collect()
}

fn load_device(path: &Option<PathBuf>, default: DeviceProfile) -> Result<DeviceProfile, HarnessError> {
    match path {
        None => Ok(default),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(io_err(p))?;
            DeviceProfile::from_json(&text).map_err(|e| HarnessError::Model(p.clone(), e.to_string()))
        }
    }
}

/// Writes the app models, devices and glyph templates a run used.
fn write_models(out: &Path, apps: &[AppModel], devices: &[&DeviceProfile], glyphs: &GlyphLibrary) -> Result<(), HarnessError> {
    for app in apps {
        let p = out.join(format!("models/apps/{}.json", app.id));
        write_atomic(&p, app.to_json().as_bytes()).map_err(io_err(&p))?;
    }
    for d in devices {
        let p = out.join(format!("models/devices/{}.json", d.id));
        write_atomic(&p, d.to_json().as_bytes()).map_err(io_err(&p))?;
    }
    let dir = out.join("models/glyphs");
    glyphs.save_dir(&dir).map_err(|e| HarnessError::Model(dir.clone(), e.to_string()))
}

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
}

/// One grid cell's results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<String>,
    pub app: String,
    pub strategy: Variant,
    pub seed: u64,
    pub steps: usize,
    pub distance_mm: f64,
    pub sim_seconds: f64,
    pub screens_visited: usize,
    pub screens_total: usize,
    pub widgets_exercised: usize,
    pub widgets_total: usize,
    pub crashes: usize,
    pub compat_bugs: usize,
    pub failed_steps: usize,
    pub targeted_steps: usize,
    pub on_target_steps: usize,
    /// Trace path relative to the output directory.
    pub trace: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunSummary {
    fn new(pair: Option<&str>, app: &str, strategy: Variant, seed: u64, trace: String) -> RunSummary {
        RunSummary {
            pair: pair.map(str::to_string),
            app: app.to_string(),
            strategy,
            seed,
            steps: 0,
            distance_mm: 0.0,
            sim_seconds: 0.0,
            screens_visited: 0,
            screens_total: 0,
            widgets_exercised: 0,
            widgets_total: 0,
            crashes: 0,
            compat_bugs: 0,
            failed_steps: 0,
            targeted_steps: 0,
            on_target_steps: 0,
            trace,
            error: None,
        }
    }

    fn fill(&mut self, m: &RunMetrics) {
        self.steps = m.steps;
        self.distance_mm = m.distance_mm;
        self.sim_seconds = m.sim_seconds;
        self.screens_visited = m.screens_visited;
        self.screens_total = m.screens_total;
        self.widgets_exercised = m.widgets_exercised;
        self.widgets_total = m.widgets_total;
        self.crashes = m.crashes;
        self.failed_steps = m.failed_steps;
        self.targeted_steps = m.targeted_steps;
        self.on_target_steps = m.on_target_steps;
    }

    pub const CSV_HEADER: [&'static str; 18] = [
        "pair",
        "app",
        "strategy",
        "seed",
        "steps",
        "distance_mm",
        "sim_seconds",
        "screens_visited",
        "screens_total",
        "widgets_exercised",
        "widgets_total",
        "crashes",
        "compat_bugs",
        "failed_steps",
        "targeted_steps",
        "on_target_steps",
        "trace",
        "error",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.pair.clone().unwrap_or_default(),
            self.app.clone(),
            self.strategy.to_string(),
            self.seed.to_string(),
            self.steps.to_string(),
            format!("{:.3}", self.distance_mm),
            format!("{:.3}", self.sim_seconds),
            self.screens_visited.to_string(),
            self.screens_total.to_string(),
            self.widgets_exercised.to_string(),
            self.widgets_total.to_string(),
            self.crashes.to_string(),
            self.compat_bugs.to_string(),
            self.failed_steps.to_string(),
            self.targeted_steps.to_string(),
            self.on_target_steps.to_string(),
            self.trace.clone(),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

/// Mean and sample standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyAggregate {
    pub strategy: Variant,
    pub runs: usize,
    pub distance_mean_mm: f64,
    pub distance_sd_mm: f64,
    pub steps_mean: f64,
    pub sim_seconds_mean: f64,
    pub screens_visited_mean: f64,
    pub widgets_exercised_mean: f64,
    pub crashes_total: usize,
    pub compat_bugs_total: usize,
}

pub fn aggregate(runs: &[RunSummary], strategies: &[Variant]) -> Vec<StrategyAggregate> {
    strategies
        .iter()
        .map(|&v| {
            let rs: Vec<&RunSummary> = runs.iter().filter(|r| r.strategy == v && r.error.is_none()).collect();
            let col = |f: &dyn Fn(&RunSummary) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let (dm, dsd) = mean_sd(&col(&|r| r.distance_mm));
            StrategyAggregate {
                strategy: v,
                runs: rs.len(),
                distance_mean_mm: dm,
                distance_sd_mm: dsd,
                steps_mean: mean_sd(&col(&|r| r.steps as f64)).0,
                sim_seconds_mean: mean_sd(&col(&|r| r.sim_seconds)).0,
                screens_visited_mean: mean_sd(&col(&|r| r.screens_visited as f64)).0,
                widgets_exercised_mean: mean_sd(&col(&|r| r.widgets_exercised as f64)).0,
                crashes_total: rs.iter().map(|r| r.crashes).sum(),
                compat_bugs_total: rs.iter().map(|r| r.compat_bugs).sum(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub apps: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<String>,
    pub strategies: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub budget: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreSummary {
    pub grid: Grid,
    pub runs: Vec<RunSummary>,
    pub strategies: Vec<StrategyAggregate>,
}

pub struct Prepared {
    pub glyphs: GlyphLibrary,
    pub apps: Vec<Arc<AppModel>>,
    pub calibration: CalibrationDoc,
    pub calibrated_now: bool,
}

fn prepare(cfg: &BenchmarkConfig) -> Result<Prepared, HarnessError> {
    let glyphs = GlyphLibrary::builtin(cfg.glyph_scale);
    let apps = load_apps(cfg, &glyphs)?.into_iter().map(Arc::new).collect();
    let (calibration, calibrated_now) = load_or_calibrate(cfg)?;
    Ok(Prepared {
        glyphs,
        apps,
        calibration,
        calibrated_now,
    })
}

fn context<'a>(cfg: &BenchmarkConfig, p: &'a Prepared, device: &DeviceProfile, cache: &'a PerceptionCache, overlays: bool) -> RunContext<'a> {
    RunContext {
        glyphs: &p.glyphs,
        rig: cfg.camera,
        scene: cfg.scene,
        observer: Observer::new(p.calibration.intrinsics(), &cfg.camera, device, cfg.scene.background),
        arm: cfg.arm,
        perception: cfg.perception,
        cache: Some(cache),
        overlay_dir: overlays.then(|| cfg.out.clone()),
    }
}

/// Runs the app × strategy × seed grid on the exploration device.
pub fn cmd_explore(cfg: &BenchmarkConfig, debug_overlays: bool) -> Result<(ExploreSummary, bool), HarnessError> {
    let prep = prepare(cfg)?;
    let device = load_device(&cfg.device, DeviceProfile::phone("phone"))?;
    device.validate().map_err(|e| HarnessError::Model(PathBuf::from(&device.id), e.to_string()))?;
    let apps: Vec<AppModel> = prep.apps.iter().map(|a| (**a).clone()).collect();
    write_models(&cfg.out, &apps, &[&device], &prep.glyphs)?;
    if debug_overlays {
        for app in &prep.apps {
            let (img, _) = render_screen(app, &app.initial, &device, &prep.glyphs, None)?;
            let stem = cfg.out.join(format!("frames/{}-{}", app.id, app.initial));
            let png = stem.with_extension("png");
            write_atomic(&png, &img.encode_png()?).map_err(io_err(&png))?;
            let mut raw = Vec::new();
            img.write_raw_gray(&mut raw)?;
            let gray = stem.with_extension("gray");
            write_atomic(&gray, &raw).map_err(io_err(&gray))?;
        }
    }
    let cache = PerceptionCache::new();
    let ctx = context(cfg, &prep, &device, &cache, debug_overlays);
    let cells: Vec<(usize, Variant, u64)> = (0..prep.apps.len())
        .flat_map(|a| cfg.strategies.iter().flat_map(move |&v| cfg.seeds.iter().map(move |&s| (a, v, s))))
        .collect();
    let runs: Vec<Result<RunSummary, HarnessError>> = pool(cfg.workers).install(|| {
        cells
            .par_iter()
            .map(|&(a, v, seed)| {
                let app = &prep.apps[a];
                let trace_rel = format!("explore/traces/{}-{}-{}.jsonl", app.id, v, seed);
                let mut row = RunSummary::new(None, &app.id, v, seed, trace_rel.clone());
                let mut session = AppSession::new(app.clone(), device.clone());
                let trace = run_exploration(&mut session, &cfg.strategy_for(v, seed), cfg.budget, &ctx);
                let path = cfg.out.join(&trace_rel);
                write_atomic(&path, trace.to_jsonl().as_bytes()).map_err(io_err(&path))?;
                row.fill(&trace.metrics);
                Ok(row)
            })
            .collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let summary = ExploreSummary {
        grid: Grid {
            apps: prep.apps.iter().map(|a| a.id.clone()).collect(),
            pairs: Vec::new(),
            strategies: cfg.strategies.clone(),
            seeds: cfg.seeds.clone(),
            budget: cfg.budget_label(),
        },
        strategies: aggregate(&runs, &cfg.strategies),
        runs,
    };
    let dir = cfg.out.join("explore");
    write_json(&dir.join("summary.json"), &summary).map_err(io_err(&dir))?;
    let rows: Vec<Vec<String>> = summary.runs.iter().map(RunSummary::csv_row).collect();
    let p = dir.join("summary.csv");
    write_atomic(&p, csv(&RunSummary::CSV_HEADER, &rows).as_bytes()).map_err(io_err(&p))?;
    Ok((summary, prep.calibrated_now))
}

/// A unique bug over the whole comparison grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub pair: String,
    pub app: String,
    pub kind: BugKind,
    pub screen: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widget: Option<String>,
    pub gesture: GestureKind,
    /// Runs that reported it.
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub grid: Grid,
    pub runs: Vec<RunSummary>,
    pub findings: Vec<Finding>,
    /// Pairs that could not run, with the reason.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub failed_pairs: BTreeMap<String, String>,
}

impl CompareSummary {
    pub fn bug_count(&self) -> usize {
        self.findings.len()
    }
}

/// Runs comparison sessions over pairs × apps × strategies × seeds.
pub fn cmd_compare(cfg: &BenchmarkConfig) -> Result<CompareSummary, HarnessError> {
    let prep = prepare(cfg)?;
    let mut pairs = Vec::new();
    let mut failed_pairs = BTreeMap::new();
    let mut devices = Vec::new();
    for pair in &cfg.pairs {
        let loaded = load_device(&pair.dut, DeviceProfile::notched_phone("notched-phone")).and_then(|dut| {
            let reference = load_device(&pair.reference, dut.regular_twin())?;
            let dut = if pair.regular_dut { reference.clone() } else { dut };
            for d in [&dut, &reference] {
                d.validate().map_err(|e| HarnessError::Model(PathBuf::from(&d.id), e.to_string()))?;
            }
            if !dut.same_geometry(&reference) {
                return Err(HarnessError::Compat(crate::compat::CompatError::ProfileMismatch));
            }
            Ok((dut, reference))
        });
        match loaded {
            Ok((dut, reference)) => {
                devices.push(dut.clone());
                devices.push(reference.clone());
                pairs.push((pair.name.clone(), dut, reference));
            }
            Err(e) => {
                failed_pairs.insert(pair.name.clone(), e.to_string());
            }
        }
    }
    devices.sort_by(|a, b| a.id.cmp(&b.id));
    devices.dedup_by(|a, b| a.id == b.id);
    let apps: Vec<AppModel> = prep.apps.iter().map(|a| (**a).clone()).collect();
    write_models(&cfg.out, &apps, &devices.iter().collect::<Vec<_>>(), &prep.glyphs)?;

    let cache = PerceptionCache::new();
    let cells: Vec<(usize, usize, Variant, u64)> = (0..pairs.len())
        .flat_map(|p| {
            (0..prep.apps.len()).flat_map(move |a| {
                cfg.strategies.iter().flat_map(move |&v| cfg.seeds.iter().map(move |&s| (p, a, v, s)))
            })
        })
        .collect();
    type Cell = (RunSummary, Vec<BugReport>);
    let results: Vec<Result<Cell, HarnessError>> = pool(cfg.workers).install(|| {
        cells
            .par_iter()
            .map(|&(p, a, v, seed)| {
                let (pair, dut, reference) = &pairs[p];
                let app = &prep.apps[a];
                let ctx = context(cfg, &prep, dut, &cache, false);
                let name = format!("{pair}-{}-{v}-{seed}", app.id);
                let trace_rel = format!("compare/traces/{name}.jsonl");
                let mut row = RunSummary::new(Some(pair), &app.id, v, seed, trace_rel.clone());
                let outcome = run_comparison_session(
                    app.clone(),
                    dut,
                    reference,
                    &cfg.strategy_for(v, seed),
                    cfg.budget,
                    &ctx,
                    &cfg.comparison,
                    &name,
                );
                let o = match outcome {
                    Ok(o) => o,
                    Err(e) => {
                        row.error = Some(e.to_string());
                        return Ok((row, Vec::new()));
                    }
                };
                let dir = cfg.out.join("compare");
                for (rel, img) in &o.evidence {
                    let path = dir.join(rel);
                    write_atomic(&path, &img.encode_png()?).map_err(io_err(&path))?;
                }
                let path = dir.join(format!("reports/{name}.json"));
                write_json(&path, &o.reports).map_err(io_err(&path))?;
                let path = cfg.out.join(&trace_rel);
                write_atomic(&path, o.trace.to_jsonl().as_bytes()).map_err(io_err(&path))?;
                row.fill(&o.trace.metrics);
                row.compat_bugs = o.count(BugKind::Compatibility);
                Ok((row, o.reports))
            })
            .collect()
    });
    let mut runs = Vec::new();
    let mut found: BTreeMap<(String, String, BugKind, String, Option<String>, GestureKind), usize> = BTreeMap::new();
    for r in results {
        let (row, reports) = r?;
        for b in reports {
            let pair = row.pair.clone().unwrap_or_default();
            *found.entry((pair, b.app, b.kind, b.screen, b.widget, b.gesture)).or_default() += 1;
        }
        runs.push(row);
    }
    let findings = found
        .into_iter()
        .map(|((pair, app, kind, screen, widget, gesture), runs)| Finding {
            pair,
            app,
            kind,
            screen,
            widget,
            gesture,
            runs,
        })
        .collect();
    let summary = CompareSummary {
        grid: Grid {
            apps: prep.apps.iter().map(|a| a.id.clone()).collect(),
            pairs: pairs.iter().map(|p| p.0.clone()).collect(),
            strategies: cfg.strategies.clone(),
            seeds: cfg.seeds.clone(),
            budget: cfg.budget_label(),
        },
        runs,
        findings,
        failed_pairs,
    };
    write_compare_outputs(&cfg.out, &summary)?;
    Ok(summary)
}

fn write_compare_outputs(out: &Path, s: &CompareSummary) -> Result<(), HarnessError> {
    let dir = out.join("compare");
    write_json(&dir.join("summary.json"), s).map_err(io_err(&dir))?;
    let rows: Vec<Vec<String>> = s.runs.iter().map(RunSummary::csv_row).collect();
    let p = dir.join("summary.csv");
    write_atomic(&p, csv(&RunSummary::CSV_HEADER, &rows).as_bytes()).map_err(io_err(&p))?;
    let p = dir.join("findings.json");
    write_json(&p, &s.findings).map_err(io_err(&p))?;
    // bug kind × app
    let mut table: BTreeMap<(String, String), [usize; 2]> = BTreeMap::new();
    for pair in &s.grid.pairs {
        for app in &s.grid.apps {
            table.insert((pair.clone(), app.clone()), [0, 0]);
        }
    }
    for f in &s.findings {
        let e = table.entry((f.pair.clone(), f.app.clone())).or_default();
        e[usize::from(f.kind == BugKind::Compatibility)] += 1;
    }
    let rows: Vec<Vec<String>> = table
        .into_iter()
        .map(|((pair, app), [crash, compat])| vec![pair, app, crash.to_string(), compat.to_string()])
        .collect();
    let p = dir.join("findings.csv");
    write_atomic(&p, csv(&["pair", "app", "crash", "compatibility"], &rows).as_bytes()).map_err(io_err(&p))
}
