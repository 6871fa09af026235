//! The perceive-decide-act loop and its trace.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::perception::{perceive, Observer, Perception, PerceptionCache, PerceptionParams};
use super::policy::{
    sample_edge_point, screen_signature, select_gesture_for, select_target, visit_key, ExplorationHistory,
    Strategy, Target, Variant,
};
use super::ExploreError;
use crate::geometry::{Point2, Rect};
use crate::image::Image;
use crate::kinematics::{synthesize_gesture, ArmConfig, ArmPosition, CompoundGesture, GestureKind, GesturePlan};
use crate::simbench::{resolve_touch, synthesize_photo, AppSession, CameraRig, ResponseKind, Scene, Touch, WidgetSpec};
use crate::vision::{GlyphLibrary, VisionError, Widget, WidgetKind};

/// Simulated time charged for a step whose perception or planning failed.
pub const FAILED_STEP_SECONDS: f64 = 1.0;

const SLIDE_PX: f64 = 60.0;
const WORDS: &[&str] = &["hello", "test", "query", "note", "abc", "name", "mail", "zoom"];

/// Fixed inputs shared by every step of a run.
#[derive(Clone)]
pub struct RunContext<'a> {
    pub glyphs: &'a GlyphLibrary,
    /// The physical camera that takes the photos.
    pub rig: CameraRig,
    pub scene: Scene,
    /// What the tester believes about camera and device.
    pub observer: Observer,
    pub arm: ArmConfig,
    pub perception: PerceptionParams,
    /// Memo for noise-free runs; ignored when the scene has noise.
    pub cache: Option<&'a PerceptionCache>,
    /// Where to write perception overlays, if anywhere.
    pub overlay_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub steps: Option<usize>,
    pub seconds: Option<f64>,
}

impl Budget {
    pub fn steps(n: usize) -> Budget {
        Budget { steps: Some(n), seconds: None }
    }

    pub fn seconds(s: f64) -> Budget {
        Budget { steps: None, seconds: Some(s) }
    }

    fn exhausted(&self, steps: usize, seconds: f64) -> bool {
        self.steps.is_some_and(|n| steps >= n) || self.seconds.is_some_and(|s| seconds >= s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub screen: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gesture: Option<GestureKind>,
    /// Detected bounds of the target widget, screen pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_bounds: Option<Rect>,
    /// Ground-truth widget best matching the detected target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intended: Option<String>,
    /// Ground-truth widget the touch actually landed on; `masked` for a
    /// swallowed touch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub touched: Option<String>,
    /// Where the first touch landed on the real screen.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub touch_point: Option<Point2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<ResponseKind>,
    pub next_screen: String,
    /// Pen tip XY path in the arm frame, mm; starts where the previous
    /// segment ended.
    pub segment: Vec<Point2>,
    pub segment_mm: f64,
    pub cumulative_mm: f64,
    pub sim_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photo: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StepRecord {
    /// A widget-targeted step whose touch landed where perception aimed.
    pub fn on_target(&self) -> Option<bool> {
        self.intended.as_ref()?;
        Some(self.intended == self.touched)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub steps: usize,
    pub distance_mm: f64,
    pub sim_seconds: f64,
    pub screens_visited: usize,
    pub screens_total: usize,
    pub widgets_exercised: usize,
    pub widgets_total: usize,
    pub crashes: usize,
    pub failed_steps: usize,
    /// Steps aimed at a detected widget with a ground-truth match.
    pub targeted_steps: usize,
    /// Of those, steps whose touch resolved to the intended widget.
    pub on_target_steps: usize,
}

impl RunMetrics {
    /// Recomputes the metrics from a trace.
    pub fn from_trace(trace: &[StepRecord], initial: &str, screens_total: usize, widgets_total: usize) -> RunMetrics {
        let mut screens: BTreeSet<&str> = BTreeSet::from([initial]);
        let mut widgets = BTreeSet::new();
        let mut m = RunMetrics {
            screens_total,
            widgets_total,
            ..RunMetrics::default()
        };
        for r in trace {
            m.steps += 1;
            m.distance_mm += r.segment_mm;
            m.sim_seconds = r.sim_seconds;
            screens.insert(&r.next_screen);
            if let Some(t) = r.touched.as_deref().filter(|t| *t != MASKED && !t.starts_with(KEY_PREFIX)) {
                widgets.insert((r.screen.as_str(), t));
            }
            m.crashes += usize::from(r.response == Some(ResponseKind::Crash));
            m.failed_steps += usize::from(r.error.is_some());
            if let Some(hit) = r.on_target() {
                m.targeted_steps += 1;
                m.on_target_steps += usize::from(hit);
            }
        }
        m.screens_visited = screens.len();
        m.widgets_exercised = widgets.len();
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationTrace {
    pub records: Vec<StepRecord>,
    pub metrics: RunMetrics,
}

impl ExplorationTrace {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

pub const MASKED: &str = "masked";
const KEY_PREFIX: &str = "key:";

/// A rendered screen and what the tester made of its photo.
#[derive(Clone)]
pub struct Observation {
    pub rendered: Image,
    pub truth: Vec<WidgetSpec>,
    pub perception: Arc<Result<Perception, VisionError>>,
    pub cache_key: u64,
}

/// A chosen action, in both the perceived and the real screen frame.
#[derive(Debug, Clone)]
pub struct Decision {
    pub target: Target,
    pub widget: Option<Widget>,
    pub gesture: CompoundGesture,
    /// The same gesture where the arm actually touches the real screen.
    pub actual: CompoundGesture,
    pub plan: GesturePlan,
}

pub struct PlannedStep {
    pub observation: Observation,
    pub decision: Result<Decision, ExploreError>,
}

fn mix(parts: &[u64]) -> u64 {
    let mut h = DefaultHasher::new();
    parts.hash(&mut h);
    h.finish()
}

/// Stateful explorer for one run on one device.
pub struct Explorer<'a> {
    ctx: &'a RunContext<'a>,
    strategy: Strategy,
    rng: ChaCha8Rng,
    history: ExplorationHistory,
    anchor: Point2,
    arm: ArmPosition,
    signature: Option<u64>,
    context: u64,
    step: usize,
    cumulative_mm: f64,
    sim_seconds: f64,
}

impl<'a> Explorer<'a> {
    /// The arm starts hovering above the middle of the device.
    pub fn new(ctx: &'a RunContext<'a>, strategy: Strategy, session: &AppSession) -> Explorer<'a> {
        let mut rng = ChaCha8Rng::seed_from_u64(strategy.seed);
        let (w, h) = (ctx.observer.resolution[0] as f64, ctx.observer.resolution[1] as f64);
        let anchor = match strategy.variant {
            Variant::Edge => sample_edge_point(&mut rng, w, h),
            _ => Point2::new(w / 2.0, h / 2.0),
        };
        let dev = session.device();
        let home = dev.frame().to_world_unchecked(Point2::new(dev.width() as f64 / 2.0, dev.height() as f64 / 2.0));
        let context = mix(&[
            mix_debug(&ctx.rig),
            mix_debug(&ctx.scene),
            mix_debug(&ctx.observer),
            mix_debug(&ctx.perception),
        ]);
        Explorer {
            ctx,
            strategy,
            rng,
            history: ExplorationHistory::default(),
            anchor,
            arm: ArmPosition::new(home.x, home.y, ctx.arm.pen_alpha, ctx.arm.hover_height_mm),
            signature: None,
            context,
            step: 0,
            cumulative_mm: 0.0,
            sim_seconds: 0.0,
        }
    }

    pub fn history(&self) -> &ExplorationHistory {
        &self.history
    }

    pub fn sim_seconds(&self) -> f64 {
        self.sim_seconds
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    fn perceive_image(&self, rendered: &Image, session: &AppSession, tag: u64) -> (u64, Arc<Result<Perception, VisionError>>) {
        let placement = session.device().placement;
        let key = PerceptionCache::key(rendered, mix(&[self.context, mix_debug(&placement)]));
        let ctx = self.ctx;
        let run = || {
            let seed = mix(&[self.strategy.seed, self.step as u64, tag]);
            let photo = synthesize_photo(rendered, session.device(), &ctx.rig, &ctx.scene, seed)
                .map_err(|_| VisionError::NoScreenFound)?;
            perceive(&photo.image, &ctx.observer, ctx.glyphs, &ctx.perception)
        };
        let result = match ctx.cache {
            Some(cache) if ctx.scene.noise_sigma == 0.0 => cache.get_or_insert_with(key, run),
            _ => Arc::new(run()),
        };
        (key, result)
    }

    /// Photographs the current screen of `session` and perceives it. Works
    /// for any device, not just the one being explored.
    pub fn observe(&self, session: &AppSession) -> Observation {
        let (rendered, truth) = session.render(self.ctx.glyphs);
        let (cache_key, perception) = self.perceive_image(&rendered, session, 0);
        Observation {
            rendered,
            truth,
            perception,
            cache_key,
        }
    }

    /// Key centers read off a photo of the screen with the keyboard up.
    fn perceive_keyboard(&self, session: &AppSession) -> BTreeMap<char, Point2> {
        let img = session.render_with_keyboard(self.ctx.glyphs);
        let (_, p) = self.perceive_image(&img, session, 1);
        let Ok(p) = p.as_ref() else {
            return BTreeMap::new();
        };
        let top = p.screen.height() as f64 * 0.55;
        p.widgets
            .iter()
            .filter(|w| w.kind == WidgetKind::Text && w.bounds.center().y >= top)
            .filter_map(|w| {
                let mut cs = w.text.as_deref()?.chars();
                let c = cs.next()?;
                cs.next().is_none().then(|| (c, w.bounds.center()))
            })
            .collect()
    }

    fn decide(&mut self, session: &AppSession, p: &Perception) -> Result<Decision, ExploreError> {
        let (w, h) = (p.frame.width_px, p.frame.height_px);
        let signature = screen_signature(&p.widgets);
        if self.signature != Some(signature) {
            self.history.reanchor();
            self.signature = Some(signature);
        }
        let target = if self.rng.random_bool(self.strategy.scroll_probability.clamp(0.0, 1.0)) {
            Target::Screen
        } else {
            select_target(
                &p.widgets,
                &mut self.history,
                &self.strategy,
                self.anchor,
                signature,
                (w, h),
                true,
                &mut self.rng,
            )?
        };
        let widget = match target {
            Target::Widget(i) => Some(p.widgets[i].clone()),
            Target::Screen => None,
        };
        let input_like = widget.as_ref().is_some_and(|w| looks_like_input(&p.screen, w));
        let mut kind = select_gesture_for(target, input_like, &mut self.rng);
        let mut keyboard = None;
        let mut payload = None;
        if kind == GestureKind::Input {
            let keys = self.perceive_keyboard(session);
            let typable: Vec<&str> = WORDS.iter().copied().filter(|s| s.chars().all(|c| keys.contains_key(&c))).collect();
            if typable.is_empty() {
                kind = GestureKind::Click;
            } else {
                payload = Some(typable[self.rng.random_range(0..typable.len())].to_string());
                keyboard = Some(keys);
            }
        }
        let targets = match (&widget, kind) {
            (_, GestureKind::Scroll) | (None, _) => Vec::new(),
            (Some(wd), GestureKind::Slide) => {
                let c = wd.bounds.center();
                let dir = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)][self.rng.random_range(0..4)];
                let end = Point2::new(
                    (c.x + dir.0 * SLIDE_PX).clamp(1.0, w - 1.0),
                    (c.y + dir.1 * SLIDE_PX).clamp(1.0, h - 1.0),
                );
                vec![c, end]
            }
            (Some(wd), _) => vec![wd.bounds.center()],
        };
        let gesture = CompoundGesture::new(kind, targets, payload)?;
        let plan = synthesize_gesture(&gesture, self.arm, &p.frame, &self.ctx.arm, keyboard.as_ref())?;
        // Where the pen really lands: perceived screen px -> arm frame -> true screen px.
        let truth = session.device().frame();
        let real = |q: &Point2| truth.to_screen(p.frame.to_world_unchecked(*q));
        let actual = CompoundGesture {
            kind,
            targets: gesture.targets.iter().map(real).collect(),
            payload: gesture.payload.clone(),
        };
        Ok(Decision {
            target,
            widget,
            gesture,
            actual,
            plan,
        })
    }

    /// Observes the device and decides the next action without acting.
    pub fn plan(&mut self, session: &AppSession) -> PlannedStep {
        let observation = self.observe(session);
        self.plan_from(observation, session)
    }

    /// Decides from an observation already made of `session`'s current
    /// screen.
    pub fn plan_from(&mut self, observation: Observation, session: &AppSession) -> PlannedStep {
        let decision = match observation.perception.as_ref() {
            Ok(p) => self.decide(session, p),
            Err(e) => Err(ExploreError::Vision(e.clone())),
        };
        PlannedStep { observation, decision }
    }

    /// Carries out a planned step on `session` and records it.
    pub fn execute(&mut self, planned: &PlannedStep, session: &mut AppSession) -> StepRecord {
        let screen = session.current().to_string();
        let photo = self.write_overlay(&planned.observation);
        let mut record = StepRecord {
            step: self.step,
            screen: screen.clone(),
            gesture: None,
            target_bounds: None,
            intended: None,
            touched: None,
            touch_point: None,
            response: None,
            next_screen: screen.clone(),
            segment: vec![self.arm.xy()],
            segment_mm: 0.0,
            cumulative_mm: self.cumulative_mm,
            sim_seconds: self.sim_seconds,
            photo,
            error: None,
        };
        self.step += 1;
        self.history.steps = self.step;
        let d = match &planned.decision {
            Ok(d) => d,
            Err(e) => {
                self.sim_seconds += FAILED_STEP_SECONDS;
                record.sim_seconds = self.sim_seconds;
                record.error = Some(e.to_string());
                return record;
            }
        };
        let (sw, sh) = (session.device().width() as f64, session.device().height() as f64);
        let touch = d.actual.touch_point(sw, sh);
        if let Some(wd) = &d.widget {
            record.target_bounds = Some(wd.bounds);
            record.intended = intended_widget(&wd.bounds, &planned.observation.truth, session);
            record.touched = touched_widget(session, &d.actual);
        }
        record.gesture = Some(d.gesture.kind);
        record.touch_point = Some(touch);
        let response = session.perform(&d.actual);
        record.response = Some(response.kind);
        record.next_screen = session.current().to_string();

        record.segment = d.plan.xy_path();
        let seg = d.plan.xy_distance();
        self.cumulative_mm += seg;
        self.sim_seconds += d.plan.duration_s(&self.ctx.arm);
        record.segment_mm = seg;
        record.cumulative_mm = self.cumulative_mm;
        record.sim_seconds = self.sim_seconds;
        self.arm = d.plan.end();

        if let (Some(wd), Some(sig)) = (&d.widget, self.signature) {
            self.history.record(wd.bounds.center());
            self.history.visited.insert(visit_key(sig, &wd.bounds));
        }
        record
    }

    fn write_overlay(&self, obs: &Observation) -> Option<String> {
        let dir = self.ctx.overlay_dir.as_ref()?;
        let Ok(p) = obs.perception.as_ref() else {
            return None;
        };
        let name = format!("overlays/{:016x}.png", obs.cache_key);
        let path = dir.join(&name);
        if !path.exists() {
            let png = draw_overlay(&p.screen, &p.widgets).encode_png().ok()?;
            crate::harness::io::write_atomic(&path, &png).ok()?;
        }
        Some(name)
    }
}

fn mix_debug<T: std::fmt::Debug>(v: &T) -> u64 {
    let mut h = DefaultHasher::new();
    format!("{v:?}").hash(&mut h);
    h.finish()
}

/// Input fields render as near-white boxes.
fn looks_like_input(screen: &Image, w: &Widget) -> bool {
    if w.kind != WidgetKind::Nontext || w.bounds.width < 12 || w.bounds.height < 12 {
        return false;
    }
    let b = w.bounds;
    let (mut sum, mut n) = (0u64, 0u64);
    for y in b.y + 4..b.bottom() - 4 {
        for x in b.x + 4..b.right() - 4 {
            if let Some(v) = screen.get_checked(x as i64, y as i64) {
                sum += v as u64;
                n += 1;
            }
        }
    }
    n > 0 && sum as f64 / n as f64 >= 240.0
}

/// Ground-truth element (widget or soft key) that best overlaps `bounds`.
fn intended_widget(bounds: &Rect, truth: &[WidgetSpec], session: &AppSession) -> Option<String> {
    let mut best: Option<(f64, String)> = None;
    let mut consider = |iou: f64, id: String| {
        if iou > 0.0 && best.as_ref().is_none_or(|(b, _)| iou > *b) {
            best = Some((iou, id));
        }
    };
    let kb = session.keyboard();
    if kb.visible {
        for (c, r) in &kb.keys {
            consider(r.iou(bounds), format!("{KEY_PREFIX}{c}"));
        }
    }
    for w in truth {
        if kb.visible && w.bounds.y >= kb.top() {
            continue;
        }
        consider(w.bounds.iou(bounds), w.id.clone());
    }
    best.map(|b| b.1)
}

fn touched_widget(session: &AppSession, g: &CompoundGesture) -> Option<String> {
    if g.kind == GestureKind::Scroll {
        return None;
    }
    if let Some(c) = session.key_under(g) {
        return Some(format!("{KEY_PREFIX}{c}"));
    }
    match resolve_touch(session.app(), session.current(), session.device(), g.targets[0]).ok()? {
        Touch::Masked => Some(MASKED.to_string()),
        Touch::Widget(w) => Some(w.id.clone()),
        Touch::Background => None,
    }
}

/// The rectified screen with detected widgets outlined: text in green,
/// everything else in red.
pub fn draw_overlay(screen: &Image, widgets: &[Widget]) -> Image {
    let mut img = screen.to_rgb();
    let (w, h) = (img.width() as i32, img.height() as i32);
    for wd in widgets {
        let color = match wd.kind {
            WidgetKind::Text => [0, 200, 0],
            WidgetKind::Nontext => [230, 0, 0],
        };
        let b = wd.bounds;
        let mut put = |x: i32, y: i32| {
            if x >= 0 && y >= 0 && x < w && y < h {
                img.set_rgb(x as u32, y as u32, color);
            }
        };
        for x in b.x..b.right() {
            put(x, b.y);
            put(x, b.bottom() - 1);
        }
        for y in b.y..b.bottom() {
            put(b.x, y);
            put(b.right() - 1, y);
        }
    }
    img
}

/// Explores `session` under `strategy` until the budget runs out.
pub fn run_exploration(session: &mut AppSession, strategy: &Strategy, budget: Budget, ctx: &RunContext) -> ExplorationTrace {
    let mut ex = Explorer::new(ctx, *strategy, session);
    let mut records = Vec::new();
    while !budget.exhausted(ex.steps(), ex.sim_seconds()) {
        let planned = ex.plan(session);
        records.push(ex.execute(&planned, session));
    }
    let app = session.app();
    let widgets_total = app.screens.iter().map(|s| s.widgets.len()).sum();
    let metrics = RunMetrics::from_trace(&records, &app.initial, app.screens.len(), widgets_total);
    ExplorationTrace { records, metrics }
}
