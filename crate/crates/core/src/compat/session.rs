//! Lockstep comparison of a device under test against its reference twin.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::similarity::gui_similarity;
use super::CompatError;
use crate::explorer::{Budget, ExplorationTrace, Explorer, Observation, RunContext, RunMetrics, Strategy};
use crate::geometry::Point2;
use crate::image::Image;
use crate::kinematics::GestureKind;
use crate::simbench::{resolve_touch, synthesize_photo, AppModel, AppSession, DeviceProfile, ResponseKind, Touch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperationClass {
    NormalProgress,
    NormalNoProgress,
    CompatibilityBug,
}

/// The three-way verdict from whether each device visibly responded.
pub fn classify_responses(responded_a: bool, responded_b: bool) -> OperationClass {
    match (responded_a, responded_b) {
        (true, true) => OperationClass::NormalProgress,
        (false, false) => OperationClass::NormalNoProgress,
        _ => OperationClass::CompatibilityBug,
    }
}

/// A device responded when its after-image differs from its before-image,
/// i.e. their similarity falls below `threshold`.
pub fn classify_operation(
    before_a: &Image,
    after_a: &Image,
    before_b: &Image,
    after_b: &Image,
    threshold: f64,
) -> Result<OperationClass, CompatError> {
    let a = gui_similarity(before_a, after_a)?.value < threshold;
    let b = gui_similarity(before_b, after_b)?.value < threshold;
    Ok(classify_responses(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BugKind {
    Crash,
    Compatibility,
}

/// Relative paths of the evidence photos.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub dut_before: String,
    pub dut_after: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_before: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_after: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugReport {
    pub kind: BugKind,
    pub app: String,
    pub screen: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widget: Option<String>,
    pub gesture: GestureKind,
    /// Step of the exploration at which it was first seen.
    pub step: usize,
    pub touch_point: Point2,
    pub evidence: Evidence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity_dut: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity_ref: Option<f64>,
    /// Screens since the last app start, ending where the crash happened.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub screen_stack: Vec<String>,
}

pub type BugKey = (String, String, Option<String>, GestureKind, BugKind);

impl BugReport {
    pub fn key(&self) -> BugKey {
        (self.app.clone(), self.screen.clone(), self.widget.clone(), self.gesture, self.kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComparisonParams {
    /// Similarity below which a device counts as having responded.
    pub threshold: f64,
}

impl Default for ComparisonParams {
    fn default() -> Self {
        ComparisonParams { threshold: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonOutcome {
    pub reports: Vec<BugReport>,
    /// Evidence photos by the relative paths the reports use.
    pub evidence: Vec<(String, Image)>,
    /// Exploration trace on the device under test.
    pub trace: ExplorationTrace,
    pub progress: usize,
    pub no_progress: usize,
    /// Steps that could not be compared (perception failed on a device).
    pub uncompared: usize,
}

impl ComparisonOutcome {
    pub fn count(&self, kind: BugKind) -> usize {
        self.reports.iter().filter(|r| r.kind == kind).count()
    }
}

struct Shots<'a> {
    before: &'a Observation,
    after: &'a Observation,
}

/// Explores `app` on `dut` and replays every gesture at the same screen
/// coordinates on `reference`, in lockstep. After each step the reference
/// takes over the UI state of the device under test, so a divergence costs
/// one step rather than the rest of the run.
///
/// Evidence paths are `evidence/<name>-NNN-<device>-<when>.png`.
pub fn run_comparison_session(
    app: Arc<AppModel>,
    dut: &DeviceProfile,
    reference: &DeviceProfile,
    strategy: &Strategy,
    budget: Budget,
    ctx: &RunContext,
    params: &ComparisonParams,
    name: &str,
) -> Result<ComparisonOutcome, CompatError> {
    if !dut.same_geometry(reference) {
        return Err(CompatError::ProfileMismatch);
    }
    let mut a = AppSession::new(app.clone(), dut.clone());
    let mut b = AppSession::new(app.clone(), reference.clone());
    let mut ex = Explorer::new(ctx, *strategy, &a);
    let mut records = Vec::new();
    let mut out = ComparisonOutcome {
        reports: Vec::new(),
        evidence: Vec::new(),
        trace: ExplorationTrace {
            records: Vec::new(),
            metrics: RunMetrics::default(),
        },
        progress: 0,
        no_progress: 0,
        uncompared: 0,
    };
    let mut seen: BTreeSet<BugKey> = BTreeSet::new();
    let mut stack = vec![a.current().to_string()];
    let mut a_obs = None;
    let mut memo = SimilarityMemo {
        enabled: ctx.scene.noise_sigma == 0.0,
        scores: HashMap::new(),
    };
    while !budget_spent(&budget, &ex) {
        if a.current() != b.current() {
            return Err(CompatError::MismatchedScreens(a.current().to_string(), b.current().to_string()));
        }
        let planned = match a_obs.take() {
            Some(obs) => ex.plan_from(obs, &a),
            None => ex.plan(&a),
        };
        let b_before = ex.observe(&b);
        let screen = a.current().to_string();
        let record = ex.execute(&planned, &mut a);
        let step = record.step;
        records.push(record);
        let Ok(decision) = &planned.decision else {
            a_obs = None;
            continue;
        };
        let g = &decision.actual;
        b.perform(g);
        let a_after = ex.observe(&a);
        let b_after = ex.observe(&b);
        let touch = g.touch_point(dut.width() as f64, dut.height() as f64);
        let response = records.last().and_then(|r| r.response);

        let shots_a = Shots { before: &planned.observation, after: &a_after };
        let shots_b = Shots { before: &b_before, after: &b_after };
        match (screens(&shots_a), screens(&shots_b)) {
            (Some((a0, a1)), Some((b0, b1))) => {
                let sa = memo.score(&shots_a, a0, a1)?;
                let sb = memo.score(&shots_b, b0, b1)?;
                match classify_responses(sa < params.threshold, sb < params.threshold) {
                    OperationClass::NormalProgress => out.progress += 1,
                    OperationClass::NormalNoProgress => out.no_progress += 1,
                    OperationClass::CompatibilityBug => {
                        let widget = match g.kind {
                            GestureKind::Scroll => None,
                            _ => match resolve_touch(&app, &screen, reference, g.targets[0]) {
                                Ok(Touch::Widget(w)) => Some(w.id.clone()),
                                _ => None,
                            },
                        };
                        let report = BugReport {
                            kind: BugKind::Compatibility,
                            app: app.id.clone(),
                            screen: screen.clone(),
                            widget,
                            gesture: g.kind,
                            step,
                            touch_point: touch,
                            evidence: Evidence {
                                dut_before: String::new(),
                                dut_after: String::new(),
                                ref_before: None,
                                ref_after: None,
                            },
                            similarity_dut: Some(sa),
                            similarity_ref: Some(sb),
                            screen_stack: Vec::new(),
                        };
                        add_report(&mut out, &mut seen, report, ctx, name, step, (&a, &shots_a), Some((&b, &shots_b)));
                    }
                }
            }
            _ => out.uncompared += 1,
        }

        if response == Some(ResponseKind::Crash) {
            let widget = match g.kind {
                GestureKind::Scroll => None,
                _ => match resolve_touch(&app, &screen, dut, g.targets[0]) {
                    Ok(Touch::Widget(w)) => Some(w.id.clone()),
                    _ => None,
                },
            };
            let report = BugReport {
                kind: BugKind::Crash,
                app: app.id.clone(),
                screen: screen.clone(),
                widget,
                gesture: g.kind,
                step,
                touch_point: touch,
                evidence: Evidence {
                    dut_before: String::new(),
                    dut_after: String::new(),
                    ref_before: None,
                    ref_after: None,
                },
                similarity_dut: None,
                similarity_ref: None,
                screen_stack: stack.clone(),
            };
            add_report(&mut out, &mut seen, report, ctx, name, step, (&a, &shots_a), None);
            stack = vec![a.current().to_string()];
        } else if stack.last().map(String::as_str) != Some(a.current()) {
            stack.push(a.current().to_string());
        }

        b.mirror(&a);
        a_obs = Some(a_after);
    }
    let widgets_total = app.screens.iter().map(|s| s.widgets.len()).sum();
    out.trace = ExplorationTrace {
        metrics: RunMetrics::from_trace(&records, &app.initial, app.screens.len(), widgets_total),
        records,
    };
    Ok(out)
}

/// Noise-free photos are a function of the rendered frame, so similarity
/// can be memoized by the pair of perception keys.
struct SimilarityMemo {
    enabled: bool,
    scores: HashMap<(u64, u64), f64>,
}

impl SimilarityMemo {
    fn score(&mut self, shots: &Shots, a: &Image, b: &Image) -> Result<f64, CompatError> {
        let key = (shots.before.cache_key, shots.after.cache_key);
        if key.0 == key.1 && self.enabled {
            return Ok(1.0);
        }
        if let Some(v) = self.scores.get(&key).filter(|_| self.enabled) {
            return Ok(*v);
        }
        let v = gui_similarity(a, b)?.value;
        if self.enabled {
            self.scores.insert(key, v);
        }
        Ok(v)
    }
}

fn budget_spent(budget: &Budget, ex: &Explorer) -> bool {
    budget.steps.is_some_and(|n| ex.steps() >= n) || budget.seconds.is_some_and(|s| ex.sim_seconds() >= s)
}

fn screens<'a>(s: &Shots<'a>) -> Option<(&'a Image, &'a Image)> {
    match (s.before.perception.as_ref(), s.after.perception.as_ref()) {
        (Ok(p), Ok(q)) => Some((&p.screen, &q.screen)),
        _ => None,
    }
}

/// Records `report` unless its key was already reported, attaching photos
/// of both moments on each device involved.
#[allow(clippy::too_many_arguments)]
fn add_report(
    out: &mut ComparisonOutcome,
    seen: &mut BTreeSet<BugKey>,
    mut report: BugReport,
    ctx: &RunContext,
    name: &str,
    step: usize,
    dut: (&AppSession, &Shots),
    reference: Option<(&AppSession, &Shots)>,
) {
    if !seen.insert(report.key()) {
        return;
    }
    let n = out.reports.len();
    let mut photo = |session: &AppSession, obs: &Observation, tag: &str, salt: u64| {
        let path = format!("evidence/{name}-{n:03}-{tag}.png");
        let seed = (step as u64) << 8 | salt;
        let img = synthesize_photo(&obs.rendered, session.device(), &ctx.rig, &ctx.scene, seed)
            .map(|p| p.image)
            .unwrap_or_else(|_| obs.rendered.clone());
        out.evidence.push((path.clone(), img));
        path
    };
    report.evidence.dut_before = photo(dut.0, dut.1.before, "dut-before", 0);
    report.evidence.dut_after = photo(dut.0, dut.1.after, "dut-after", 1);
    if let Some((session, shots)) = reference {
        report.evidence.ref_before = Some(photo(session, shots.before, "ref-before", 2));
        report.evidence.ref_after = Some(photo(session, shots.after, "ref-after", 3));
    }
    out.reports.push(report);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explorer::{Observer, PerceptionCache, PerceptionParams, Variant};
    use crate::kinematics::ArmConfig;
    use crate::simbench::{suite, CameraRig, Scene};
    use crate::vision::GlyphLibrary;

    #[test]
    fn response_matrix() {
        assert_eq!(classify_responses(true, true), OperationClass::NormalProgress);
        assert_eq!(classify_responses(false, false), OperationClass::NormalNoProgress);
        assert_eq!(classify_responses(true, false), OperationClass::CompatibilityBug);
        assert_eq!(classify_responses(false, true), OperationClass::CompatibilityBug);
    }

    #[test]
    fn classification_is_swap_symmetric() {
        let still = Image::gray(64, 64, 200);
        let mut moved = still.clone();
        moved.fill_rect(0, 0, 64, 32, 20);
        let c = classify_operation(&still, &still, &still, &moved, 0.9).unwrap();
        assert_eq!(c, OperationClass::CompatibilityBug);
        assert_eq!(classify_operation(&still, &moved, &still, &still, 0.9).unwrap(), c);
        assert_eq!(classify_operation(&still, &moved, &still, &moved, 0.9).unwrap(), OperationClass::NormalProgress);
    }

    fn run(dut: &DeviceProfile, reference: &DeviceProfile, seed: u64, steps: usize) -> ComparisonOutcome {
        let lib = GlyphLibrary::builtin(2);
        let app = Arc::new(suite::shipped_suite(&lib).swap_remove(4));
        let rig = CameraRig::default();
        let cache = PerceptionCache::new();
        let ctx = RunContext {
            glyphs: &lib,
            rig,
            scene: Scene::default(),
            observer: Observer::ideal(&rig, dut, 40),
            arm: ArmConfig::default(),
            perception: PerceptionParams::default(),
            cache: Some(&cache),
            overlay_dir: None,
        };
        let s = Strategy::new(Variant::Center, seed);
        run_comparison_session(app, dut, reference, &s, Budget::steps(steps), &ctx, &ComparisonParams::default(), "t")
            .unwrap()
    }

    #[test]
    fn twin_devices_report_no_compatibility_bugs() {
        let d = DeviceProfile::phone("p");
        let o = run(&d, &d, 2, 60);
        assert_eq!(o.count(BugKind::Compatibility), 0);
        assert_eq!(o.trace.records.len(), 60);
        assert_eq!(o.progress + o.no_progress + o.uncompared, 60);
    }

    #[test]
    fn notch_fault_is_reported_with_evidence() {
        let n = DeviceProfile::notched_phone("n");
        let o = run(&n, &n.regular_twin(), 1, 200);
        let bug = o.reports.iter().find(|r| r.kind == BugKind::Compatibility).expect("a compatibility bug");
        assert_eq!(bug.widget.as_deref(), Some("promo"));
        assert!(bug.similarity_dut.unwrap() >= 0.9 && bug.similarity_ref.unwrap() < 0.9);
        let paths: Vec<&str> = o.evidence.iter().map(|e| e.0.as_str()).collect();
        assert!(paths.contains(&bug.evidence.dut_after.as_str()));
        assert!(paths.contains(&bug.evidence.ref_after.as_deref().unwrap()));
        let keys: BTreeSet<BugKey> = o.reports.iter().map(BugReport::key).collect();
        assert_eq!(keys.len(), o.reports.len());
    }

    #[test]
    fn crashes_carry_the_screen_stack() {
        let d = DeviceProfile::phone("p");
        let o = run(&d, &d, 0, 200);
        assert!(o.count(BugKind::Crash) > 0);
        for r in o.reports.iter().filter(|r| r.kind == BugKind::Crash) {
            assert_eq!(r.screen_stack.last(), Some(&r.screen));
            assert!(r.evidence.ref_before.is_none());
        }
    }

    #[test]
    fn mismatched_profiles_are_rejected() {
        let a = DeviceProfile::phone("a");
        let mut b = a.clone();
        b.resolution = [360, 640];
        let lib = GlyphLibrary::builtin(2);
        let app = Arc::new(suite::build_app("x", 3, 1, &lib));
        let rig = CameraRig::default();
        let ctx = RunContext {
            glyphs: &lib,
            rig,
            scene: Scene::default(),
            observer: Observer::ideal(&rig, &a, 40),
            arm: ArmConfig::default(),
            perception: PerceptionParams::default(),
            cache: None,
            overlay_dir: None,
        };
        let s = Strategy::new(Variant::Random, 0);
        let r = run_comparison_session(app, &a, &b, &s, Budget::steps(5), &ctx, &ComparisonParams::default(), "t");
        assert_eq!(r.unwrap_err(), CompatError::ProfileMismatch);
    }
}
