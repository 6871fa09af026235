//! Planar kinematics for the 4-DOF touch arm.
//!
//! Three rotary joints move the tip in the arm's XY plane; the fourth
//! degree of freedom is the pen's vertical axis (`z`, millimeters above the
//! screen surface, `0` meaning contact). Touch gestures are planned as
//! sequences of single-axis [`AtomicMove`]s.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::ScreenQuad;
use crate::geometry::Point2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("link lengths must be strictly positive, got ({0}, {1}, {2})")]
    InvalidLinks(f64, f64, f64),
    #[error("target ({x:.3}, {y:.3}) is outside the arm workspace")]
    Unreachable { x: f64, y: f64 },
    #[error("wrist center coincides with the base joint")]
    DegenerateTarget,
    #[error("screen point ({x:.1}, {y:.1}) px is outside the screen")]
    OutOfScreen { x: f64, y: f64 },
    #[error("gesture target ({x:.1}, {y:.1}) px is outside the screen")]
    TargetOutOfBounds { x: f64, y: f64 },
    #[error("character {0:?} is not on the soft keyboard")]
    UnknownCharacter(char),
    #[error("malformed gesture: {0}")]
    MalformedGesture(&'static str),
}

pub type Result<T> = std::result::Result<T, KinematicsError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkLengths {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl LinkLengths {
    pub fn new(l1: f64, l2: f64, l3: f64) -> Result<Self> {
        let links = Self { l1, l2, l3 };
        links.validate()?;
        Ok(links)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.l1, self.l2, self.l3]
            .iter()
            .all(|l| l.is_finite() && *l > 0.0);
        if ok {
            Ok(())
        } else {
            Err(KinematicsError::InvalidLinks(self.l1, self.l2, self.l3))
        }
    }

    pub fn reach(&self) -> f64 {
        self.l1 + self.l2 + self.l3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointState {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    /// Pen height above the screen, millimeters.
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub alpha: f64,
}

impl PlanarPose {
    pub const fn new(x: f64, y: f64, alpha: f64) -> Self {
        Self { x, y, alpha }
    }

    pub fn xy(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

pub fn forward_kinematics(joints: &JointState, links: &LinkLengths) -> PlanarPose {
    let a1 = joints.theta1;
    let a2 = a1 + joints.theta2;
    let a3 = a2 + joints.theta3;
    PlanarPose {
        x: links.l1 * a1.cos() + links.l2 * a2.cos() + links.l3 * a3.cos(),
        y: links.l1 * a1.sin() + links.l2 * a2.sin() + links.l3 * a3.sin(),
        alpha: a3,
    }
}

/// Closed-form inverse kinematics, elbow angle in `[0, π]`.
///
/// The returned `z` is zero; callers carry the pen height separately.
pub fn inverse_kinematics(target: &PlanarPose, links: &LinkLengths) -> Result<JointState> {
    // wrist center: the tip minus the last link along the tool orientation
    let u = target.x - links.l3 * target.alpha.cos();
    let v = target.y - links.l3 * target.alpha.sin();
    let r2 = u * u + v * v;
    if r2 <= 0.0 {
        return Err(KinematicsError::DegenerateTarget);
    }
    let r = r2.sqrt();
    let (l1, l2) = (links.l1, links.l2);

    let cos_elbow = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
    let cos_shoulder = (r2 + l1 * l1 - l2 * l2) / (2.0 * l1 * r);
    let unreachable = || KinematicsError::Unreachable {
        x: target.x,
        y: target.y,
    };
    let cos_elbow = clamp_unit(cos_elbow).ok_or_else(unreachable)?;
    let cos_shoulder = clamp_unit(cos_shoulder).ok_or_else(unreachable)?;

    let theta2 = cos_elbow.acos();
    let theta1 = v.atan2(u) - cos_shoulder.acos();
    let theta3 = target.alpha - theta1 - theta2;
    Ok(JointState {
        theta1,
        theta2,
        theta3,
        z: 0.0,
    })
}

/// Accepts values a few ulps outside `[-1, 1]` produced by rounding at the
/// workspace boundary.
fn clamp_unit(c: f64) -> Option<f64> {
    const SLACK: f64 = 1e-12;
    if !c.is_finite() || c.abs() > 1.0 + SLACK {
        None
    } else {
        Some(c.clamp(-1.0, 1.0))
    }
}

pub fn is_reachable(target: &PlanarPose, links: &LinkLengths) -> bool {
    inverse_kinematics(target, links).is_ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    /// Unit vector of the direction in (x, y, z); right is +x, forward is +y,
    /// up is +z.
    pub fn unit(self) -> [f64; 3] {
        match self {
            Direction::Right => [1.0, 0.0, 0.0],
            Direction::Left => [-1.0, 0.0, 0.0],
            Direction::Forward => [0.0, 1.0, 0.0],
            Direction::Backward => [0.0, -1.0, 0.0],
            Direction::Up => [0.0, 0.0, 1.0],
            Direction::Down => [0.0, 0.0, -1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomicMove {
    pub direction: Direction,
    pub distance: f64,
}

impl AtomicMove {
    pub fn displacement(&self) -> [f64; 3] {
        let u = self.direction.unit();
        [u[0] * self.distance, u[1] * self.distance, u[2] * self.distance]
    }
}

/// Tip position: planar pose plus pen height.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ArmPosition {
    pub pose: PlanarPose,
    pub z: f64,
}

impl ArmPosition {
    pub const fn new(x: f64, y: f64, alpha: f64, z: f64) -> Self {
        Self {
            pose: PlanarPose::new(x, y, alpha),
            z,
        }
    }

    pub fn xy(&self) -> Point2 {
        self.pose.xy()
    }

    fn is_down(&self) -> bool {
        self.z <= 0.0
    }
}

fn axis_move(delta: f64, positive: Direction, negative: Direction) -> Option<AtomicMove> {
    if delta > 0.0 {
        Some(AtomicMove {
            direction: positive,
            distance: delta,
        })
    } else if delta < 0.0 {
        Some(AtomicMove {
            direction: negative,
            distance: -delta,
        })
    } else {
        None
    }
}

/// Splits a tip displacement into single-axis moves.
///
/// When both ends are in contact with the screen and the tip must travel,
/// the pen is lifted by `hover_height` first and lowered again at the end.
pub fn decompose_to_atomics(
    from: &ArmPosition,
    to: &ArmPosition,
    links: &LinkLengths,
    hover_height: f64,
) -> Result<Vec<AtomicMove>> {
    inverse_kinematics(&from.pose, links)?;
    inverse_kinematics(&to.pose, links)?;

    let dx = to.pose.x - from.pose.x;
    let dy = to.pose.y - from.pose.y;
    let dz = to.z - from.z;
    let planar: Vec<AtomicMove> = [
        axis_move(dx, Direction::Right, Direction::Left),
        axis_move(dy, Direction::Forward, Direction::Backward),
    ]
    .into_iter()
    .flatten()
    .collect();

    let mut moves = Vec::with_capacity(4);
    if from.is_down() && to.is_down() && !planar.is_empty() && hover_height > 0.0 {
        moves.push(AtomicMove {
            direction: Direction::Up,
            distance: hover_height,
        });
        moves.extend(planar);
        moves.push(AtomicMove {
            direction: Direction::Down,
            distance: hover_height,
        });
        moves.extend(axis_move(dz, Direction::Up, Direction::Down));
    } else if dz < 0.0 {
        moves.extend(planar);
        moves.extend(axis_move(dz, Direction::Up, Direction::Down));
    } else {
        moves.extend(axis_move(dz, Direction::Up, Direction::Down));
        moves.extend(planar);
    }
    Ok(moves)
}

/// Total XY travel of a tip trace. Pen strokes along Z are not counted.
pub fn path_length(trace: &[Point2]) -> f64 {
    trace.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

/// Maps screen pixels of a rectified screen into the arm's base frame.
///
/// World = origin + R(deflection) · (scale · p).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenFrame {
    pub origin: Point2,
    pub deflection: f64,
    /// Millimeters per screen pixel.
    pub scale: f64,
    pub width_px: f64,
    pub height_px: f64,
}

impl ScreenFrame {
    /// Frame for a screen rectified to `out_width` × `out_height` pixels.
    pub fn from_quad(quad: &ScreenQuad, out_width: f64, out_height: f64) -> Self {
        let native_w = quad.pixel_width();
        Self {
            origin: quad.origin,
            deflection: quad.deflection_angle,
            scale: quad.scale * native_w / out_width,
            width_px: out_width,
            height_px: out_height,
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        const EPS: f64 = 1e-9;
        p.x >= -EPS && p.y >= -EPS && p.x <= self.width_px + EPS && p.y <= self.height_px + EPS
    }

    pub fn to_world(&self, p: Point2) -> Result<Point2> {
        if !self.contains(p) {
            return Err(KinematicsError::OutOfScreen { x: p.x, y: p.y });
        }
        Ok(self.to_world_unchecked(p))
    }

    pub fn to_world_unchecked(&self, p: Point2) -> Point2 {
        let (s, c) = self.deflection.sin_cos();
        let (px, py) = (p.x * self.scale, p.y * self.scale);
        Point2::new(
            self.origin.x + c * px - s * py,
            self.origin.y + s * px + c * py,
        )
    }

    pub fn to_screen(&self, w: Point2) -> Point2 {
        let (s, c) = self.deflection.sin_cos();
        let d = w.sub(&self.origin);
        Point2::new(
            (c * d.x + s * d.y) / self.scale,
            (-s * d.x + c * d.y) / self.scale,
        )
    }
}

/// Maps a point in the quad's native rectified pixel frame into the arm's
/// base frame.
pub fn screen_to_world(p: Point2, quad: &ScreenQuad) -> Result<PlanarPose> {
    let frame = ScreenFrame::from_quad(quad, quad.pixel_width(), quad.pixel_height());
    let w = frame.to_world(p)?;
    Ok(PlanarPose::new(w.x, w.y, 0.0))
}

pub fn world_to_screen(w: Point2, quad: &ScreenQuad) -> Point2 {
    ScreenFrame::from_quad(quad, quad.pixel_width(), quad.pixel_height()).to_screen(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureKind {
    Click,
    DoubleClick,
    LongClick,
    Slide,
    Scroll,
    Input,
}

impl GestureKind {
    pub const ALL: [GestureKind; 6] = [
        GestureKind::Click,
        GestureKind::DoubleClick,
        GestureKind::LongClick,
        GestureKind::Slide,
        GestureKind::Scroll,
        GestureKind::Input,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GestureKind::Click => "click",
            GestureKind::DoubleClick => "double_click",
            GestureKind::LongClick => "long_click",
            GestureKind::Slide => "slide",
            GestureKind::Scroll => "scroll",
            GestureKind::Input => "input",
        }
    }

    fn target_count(self) -> usize {
        match self {
            GestureKind::Slide => 2,
            GestureKind::Scroll => 0,
            _ => 1,
        }
    }
}

impl std::fmt::Display for GestureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A tester-level operation with its targets in screen pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundGesture {
    pub kind: GestureKind,
    pub targets: Vec<Point2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

impl CompoundGesture {
    pub fn new(kind: GestureKind, targets: Vec<Point2>, payload: Option<String>) -> Result<Self> {
        if targets.len() != kind.target_count() {
            return Err(KinematicsError::MalformedGesture("wrong number of targets"));
        }
        if (kind == GestureKind::Input) != payload.is_some() {
            return Err(KinematicsError::MalformedGesture(
                "payload is required for input and only for input",
            ));
        }
        Ok(Self {
            kind,
            targets,
            payload,
        })
    }

    pub fn click(p: Point2) -> Self {
        Self::new(GestureKind::Click, vec![p], None).expect("valid click")
    }

    /// Screen point where the first touch lands.
    pub fn touch_point(&self, screen_width: f64, screen_height: f64) -> Point2 {
        match self.kind {
            GestureKind::Scroll => scroll_span(screen_width, screen_height).0,
            _ => self.targets[0],
        }
    }
}

/// Start and end of the screen-level scroll sweep: bottom to top along the
/// vertical center line.
pub fn scroll_span(screen_width: f64, screen_height: f64) -> (Point2, Point2) {
    let x = screen_width / 2.0;
    (
        Point2::new(x, screen_height * 0.8),
        Point2::new(x, screen_height * 0.2),
    )
}

fn default_hover() -> f64 {
    10.0
}
fn default_long_press() -> f64 {
    800.0
}
fn default_double_window() -> f64 {
    300.0
}
fn default_speed() -> f64 {
    50.0
}
fn default_tap() -> f64 {
    100.0
}
fn default_alpha() -> f64 {
    PI / 2.0
}

/// Arm geometry and timing constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub links: LinkLengths,
    /// Fixed end-effector orientation used for every touch, radians.
    #[serde(default = "default_alpha")]
    pub pen_alpha: f64,
    #[serde(default = "default_hover")]
    pub hover_height_mm: f64,
    #[serde(default = "default_long_press")]
    pub long_press_ms: f64,
    #[serde(default = "default_double_window")]
    pub double_tap_window_ms: f64,
    /// Contact time of a single tap.
    #[serde(default = "default_tap")]
    pub tap_ms: f64,
    #[serde(default = "default_speed")]
    pub speed_mm_per_s: f64,
}

impl Default for ArmConfig {
    fn default() -> Self {
        Self {
            links: LinkLengths {
                l1: 120.0,
                l2: 100.0,
                l3: 60.0,
            },
            pen_alpha: default_alpha(),
            hover_height_mm: default_hover(),
            long_press_ms: default_long_press(),
            double_tap_window_ms: default_double_window(),
            tap_ms: default_tap(),
            speed_mm_per_s: default_speed(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// Pen-up travel to a point above the next contact.
    Travel,
    Press,
    Release,
    /// Pen-down lateral motion.
    Drag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureStep {
    pub kind: StepKind,
    pub moves: Vec<AtomicMove>,
    /// Pause after the step completes, milliseconds.
    pub dwell_ms: f64,
}

/// Arm motion realizing one compound gesture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GesturePlan {
    pub steps: Vec<GestureStep>,
    /// Tip positions after each step, starting with the start position.
    pub tip_path: Vec<ArmPosition>,
}

impl GesturePlan {
    pub fn start(&self) -> ArmPosition {
        self.tip_path[0]
    }

    pub fn end(&self) -> ArmPosition {
        *self.tip_path.last().expect("non-empty tip path")
    }

    pub fn xy_path(&self) -> Vec<Point2> {
        self.tip_path.iter().map(|p| p.xy()).collect()
    }

    pub fn xy_distance(&self) -> f64 {
        path_length(&self.xy_path())
    }

    pub fn dwell_ms(&self) -> f64 {
        self.steps.iter().map(|s| s.dwell_ms).sum()
    }

    /// Movement time at constant arm speed (including Z strokes) plus dwell.
    pub fn duration_s(&self, arm: &ArmConfig) -> f64 {
        let travel: f64 = self
            .steps
            .iter()
            .flat_map(|s| s.moves.iter())
            .map(|m| m.distance)
            .sum();
        travel / arm.speed_mm_per_s + self.dwell_ms() / 1000.0
    }
}

struct Planner<'a> {
    arm: &'a ArmConfig,
    frame: &'a ScreenFrame,
    steps: Vec<GestureStep>,
    path: Vec<ArmPosition>,
}

impl<'a> Planner<'a> {
    fn current(&self) -> ArmPosition {
        *self.path.last().expect("planner starts with a position")
    }

    fn world(&self, p: Point2) -> Result<Point2> {
        if !self.frame.contains(p) {
            return Err(KinematicsError::TargetOutOfBounds { x: p.x, y: p.y });
        }
        Ok(self.frame.to_world_unchecked(p))
    }

    fn push(&mut self, kind: StepKind, to: ArmPosition, dwell_ms: f64) -> Result<()> {
        let from = self.current();
        let moves = decompose_to_atomics(&from, &to, &self.arm.links, self.arm.hover_height_mm)?;
        self.steps.push(GestureStep {
            kind,
            moves,
            dwell_ms,
        });
        self.path.push(to);
        Ok(())
    }

    fn travel_above(&mut self, p: Point2) -> Result<()> {
        let w = self.world(p)?;
        let to = ArmPosition::new(w.x, w.y, self.arm.pen_alpha, self.arm.hover_height_mm);
        self.push(StepKind::Travel, to, 0.0)
    }

    fn press(&mut self, dwell_ms: f64) -> Result<()> {
        let mut to = self.current();
        to.z = 0.0;
        self.push(StepKind::Press, to, dwell_ms)
    }

    fn release(&mut self, dwell_ms: f64) -> Result<()> {
        self.release_to(self.arm.hover_height_mm, dwell_ms)
    }

    fn release_to(&mut self, height: f64, dwell_ms: f64) -> Result<()> {
        let mut to = self.current();
        to.z = height;
        self.push(StepKind::Release, to, dwell_ms)
    }

    /// Pen-down move; planned directly so the pen stays in contact.
    fn drag(&mut self, p: Point2) -> Result<()> {
        let w = self.world(p)?;
        let from = self.current();
        let to = ArmPosition::new(w.x, w.y, self.arm.pen_alpha, 0.0);
        inverse_kinematics(&to.pose, &self.arm.links)?;
        let moves = [
            axis_move(to.pose.x - from.pose.x, Direction::Right, Direction::Left),
            axis_move(to.pose.y - from.pose.y, Direction::Forward, Direction::Backward),
        ]
        .into_iter()
        .flatten()
        .collect();
        self.steps.push(GestureStep {
            kind: StepKind::Drag,
            moves,
            dwell_ms: 0.0,
        });
        self.path.push(to);
        Ok(())
    }

    fn tap(&mut self, p: Point2) -> Result<()> {
        self.travel_above(p)?;
        self.press(self.arm.tap_ms)?;
        self.release(0.0)
    }
}

/// Plans the arm motion for a gesture starting from `from` (pen up).
///
/// `keyboard` maps characters to key centers in screen pixels; it is only
/// consulted for input gestures.
pub fn synthesize_gesture(
    gesture: &CompoundGesture,
    from: ArmPosition,
    frame: &ScreenFrame,
    arm: &ArmConfig,
    keyboard: Option<&BTreeMap<char, Point2>>,
) -> Result<GesturePlan> {
    if gesture.targets.len() != gesture.kind.target_count() {
        return Err(KinematicsError::MalformedGesture("wrong number of targets"));
    }
    let mut planner = Planner {
        arm,
        frame,
        steps: Vec::new(),
        path: vec![from],
    };
    if from.z <= 0.0 {
        let mut up = from;
        up.z = arm.hover_height_mm;
        planner.push(StepKind::Release, up, 0.0)?;
    }
    // Two taps must land well inside the double-tap window, so the pen
    // only lifts slightly between them.
    let inter_tap = (arm.double_tap_window_ms / 3.0).min(arm.tap_ms);
    let tap_lift = (arm.speed_mm_per_s * arm.double_tap_window_ms / 1000.0 / 8.0)
        .min(arm.hover_height_mm);

    match gesture.kind {
        GestureKind::Click => planner.tap(gesture.targets[0])?,
        GestureKind::DoubleClick => {
            planner.travel_above(gesture.targets[0])?;
            planner.press(arm.tap_ms.min(inter_tap))?;
            planner.release_to(tap_lift, inter_tap)?;
            planner.press(arm.tap_ms.min(inter_tap))?;
            planner.release(0.0)?;
        }
        GestureKind::LongClick => {
            planner.travel_above(gesture.targets[0])?;
            planner.press(arm.long_press_ms)?;
            planner.release(0.0)?;
        }
        GestureKind::Slide => {
            planner.travel_above(gesture.targets[0])?;
            planner.press(0.0)?;
            planner.drag(gesture.targets[1])?;
            planner.release(0.0)?;
        }
        GestureKind::Scroll => {
            let (start, end) = scroll_span(frame.width_px, frame.height_px);
            planner.travel_above(start)?;
            planner.press(0.0)?;
            planner.drag(end)?;
            planner.release(0.0)?;
        }
        GestureKind::Input => {
            let text = gesture
                .payload
                .as_deref()
                .ok_or(KinematicsError::MalformedGesture("input without payload"))?;
            let keys = keyboard.ok_or(KinematicsError::MalformedGesture("input without keyboard"))?;
            let centers = text
                .chars()
                .map(|c| keys.get(&c).copied().ok_or(KinematicsError::UnknownCharacter(c)))
                .collect::<Result<Vec<_>>>()?;
            planner.tap(gesture.targets[0])?;
            for key in centers {
                planner.tap(key)?;
            }
        }
    }
    Ok(GesturePlan {
        steps: planner.steps,
        tip_path: planner.path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn links() -> LinkLengths {
        LinkLengths::new(100.0, 100.0, 50.0).unwrap()
    }

    fn identity_frame() -> ScreenFrame {
        ScreenFrame {
            origin: Point2::new(-30.0, 120.0),
            deflection: 0.0,
            scale: 0.2,
            width_px: 320.0,
            height_px: 560.0,
        }
    }

    #[test]
    fn fk_fully_extended() {
        let p = forward_kinematics(&JointState::default(), &links());
        assert!((p.x - 250.0).abs() < 1e-12);
        assert!(p.y.abs() < 1e-12);
        assert_eq!(p.alpha, 0.0);
    }

    #[test]
    fn fk_quarter_turn() {
        let j = JointState {
            theta1: PI / 2.0,
            ..Default::default()
        };
        let p = forward_kinematics(&j, &links());
        assert!(p.x.abs() < 1e-12);
        assert!((p.y - 250.0).abs() < 1e-12);
        assert!((p.alpha - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn fk_matches_hand_evaluated_sums() {
        // per-link projections evaluated one by one
        let (t1, t2, t3) = (0.5_f64, 0.8_f64, -0.25_f64);
        let (l1, l2, l3) = (120.0, 100.0, 60.0);
        let x1 = l1 * t1.cos();
        let x2 = l2 * (t1 + t2).cos();
        let x3 = l3 * (t1 + t2 + t3).cos();
        let y1 = l1 * t1.sin();
        let y2 = l2 * (t1 + t2).sin();
        let y3 = l3 * (t1 + t2 + t3).sin();
        let p = forward_kinematics(
            &JointState {
                theta1: t1,
                theta2: t2,
                theta3: t3,
                z: 0.0,
            },
            &LinkLengths::new(l1, l2, l3).unwrap(),
        );
        assert!((p.x - (x1 + x2 + x3)).abs() < 1e-12);
        assert!((p.y - (y1 + y2 + y3)).abs() < 1e-12);
        // frozen values, rounded
        assert!((p.x - 161.914053).abs() < 1e-5, "{}", p.x);
        assert!((p.y - 205.932277).abs() < 1e-5, "{}", p.y);
    }

    #[test]
    fn ik_extended_target_gives_zero_angles() {
        let j = inverse_kinematics(&PlanarPose::new(250.0, 0.0, 0.0), &links()).unwrap();
        assert!(j.theta1.abs() < 1e-7 && j.theta2.abs() < 1e-7 && j.theta3.abs() < 1e-7);
    }

    #[test]
    fn ik_beyond_reach_is_unreachable() {
        let err = inverse_kinematics(&PlanarPose::new(1000.0, 0.0, 0.0), &links()).unwrap_err();
        assert!(matches!(err, KinematicsError::Unreachable { .. }));
    }

    #[test]
    fn ik_wrist_at_base_is_degenerate() {
        let err = inverse_kinematics(&PlanarPose::new(50.0, 0.0, 0.0), &links()).unwrap_err();
        assert_eq!(err, KinematicsError::DegenerateTarget);
    }

    #[test]
    fn ik_handles_all_quadrants() {
        for (x, y) in [(-120.0, 40.0), (-80.0, -90.0), (60.0, -150.0)] {
            let t = PlanarPose::new(x, y, 1.0);
            let j = inverse_kinematics(&t, &links()).unwrap();
            let p = forward_kinematics(&j, &links());
            assert!((p.x - x).abs() < 1e-9 && (p.y - y).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_links_rejected() {
        assert!(LinkLengths::new(0.0, 1.0, 1.0).is_err());
        assert!(LinkLengths::new(1.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn decompose_planar_travel() {
        let a = ArmPosition::new(0.0, 150.0, PI / 2.0, 10.0);
        let b = ArmPosition::new(30.0, 190.0, PI / 2.0, 10.0);
        let m = decompose_to_atomics(&a, &b, &links(), 10.0).unwrap();
        assert_eq!(
            m,
            vec![
                AtomicMove {
                    direction: Direction::Right,
                    distance: 30.0
                },
                AtomicMove {
                    direction: Direction::Forward,
                    distance: 40.0
                }
            ]
        );
    }

    #[test]
    fn decompose_pure_descent() {
        let a = ArmPosition::new(0.0, 150.0, PI / 2.0, 10.0);
        let b = ArmPosition::new(0.0, 150.0, PI / 2.0, 0.0);
        let m = decompose_to_atomics(&a, &b, &links(), 10.0).unwrap();
        assert_eq!(
            m,
            vec![AtomicMove {
                direction: Direction::Down,
                distance: 10.0
            }]
        );
    }

    #[test]
    fn decompose_lifts_pen_between_contacts() {
        let a = ArmPosition::new(10.0, 150.0, PI / 2.0, 0.0);
        let b = ArmPosition::new(40.0, 150.0, PI / 2.0, 0.0);
        let h = 10.0;
        let m = decompose_to_atomics(&a, &b, &links(), h).unwrap();
        let dirs: Vec<_> = m.iter().map(|m| (m.direction, m.distance)).collect();
        assert_eq!(
            dirs,
            vec![
                (Direction::Up, h),
                (Direction::Right, 30.0),
                (Direction::Down, h)
            ]
        );
    }

    #[test]
    fn decompose_orders_z_by_direction() {
        let high = ArmPosition::new(0.0, 150.0, PI / 2.0, 20.0);
        let low = ArmPosition::new(15.0, 160.0, PI / 2.0, 5.0);
        let down = decompose_to_atomics(&high, &low, &links(), 10.0).unwrap();
        assert_eq!(down.last().unwrap().direction, Direction::Down);
        let up = decompose_to_atomics(&low, &high, &links(), 10.0).unwrap();
        assert_eq!(up.first().unwrap().direction, Direction::Up);
    }

    #[test]
    fn decompose_propagates_unreachable() {
        let a = ArmPosition::new(0.0, 150.0, PI / 2.0, 10.0);
        let b = ArmPosition::new(900.0, 0.0, PI / 2.0, 10.0);
        assert!(decompose_to_atomics(&a, &b, &links(), 10.0).is_err());
    }

    #[test]
    fn path_length_cases() {
        assert_eq!(path_length(&[]), 0.0);
        assert_eq!(path_length(&[Point2::new(3.0, 3.0)]), 0.0);
        assert_eq!(
            path_length(&[Point2::new(0.0, 0.0), Point2::new(30.0, 40.0)]),
            50.0
        );
    }

    fn quad(deflection: f64, scale: f64) -> ScreenQuad {
        ScreenQuad {
            corners: [
                Point2::new(0.0, 0.0),
                Point2::new(400.0, 0.0),
                Point2::new(400.0, 600.0),
                Point2::new(0.0, 600.0),
            ],
            deflection_angle: deflection,
            scale,
            origin: Point2::new(0.0, 0.0),
        }
    }

    #[test]
    fn screen_to_world_identity() {
        let w = screen_to_world(Point2::new(10.0, 20.0), &quad(0.0, 1.0)).unwrap();
        assert!((w.x - 10.0).abs() < 1e-12 && (w.y - 20.0).abs() < 1e-12);
    }

    #[test]
    fn screen_to_world_pure_rotation() {
        let w = screen_to_world(Point2::new(10.0, 0.0), &quad(PI / 2.0, 1.0)).unwrap();
        assert!(w.x.abs() < 1e-12 && (w.y - 10.0).abs() < 1e-12);
    }

    #[test]
    fn screen_to_world_matches_matrix_composition() {
        // translate(origin) * rotate(10°) * scale(0.2), built as a 3x3 matrix
        let th = 10f64.to_radians();
        let mut q = quad(th, 0.2);
        q.origin = Point2::new(-35.0, 110.0);
        let m = nalgebra::Matrix3::new(1.0, 0.0, -35.0, 0.0, 1.0, 110.0, 0.0, 0.0, 1.0)
            * nalgebra::Matrix3::new(th.cos(), -th.sin(), 0.0, th.sin(), th.cos(), 0.0, 0.0, 0.0, 1.0)
            * nalgebra::Matrix3::new(0.2, 0.0, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0, 1.0);
        for (x, y) in [(0.0, 0.0), (100.0, 0.0), (0.0, 250.0), (399.0, 599.0), (17.5, 42.25)] {
            let expect = m * nalgebra::Vector3::new(x, y, 1.0);
            let w = screen_to_world(Point2::new(x, y), &q).unwrap();
            assert!((w.x - expect.x).abs() < 1e-9 && (w.y - expect.y).abs() < 1e-9);
        }
    }

    #[test]
    fn screen_to_world_rejects_outside() {
        let e = screen_to_world(Point2::new(-5.0, 3.0), &quad(0.0, 1.0)).unwrap_err();
        assert!(matches!(e, KinematicsError::OutOfScreen { .. }));
    }

    fn arm() -> ArmConfig {
        ArmConfig::default()
    }

    fn start() -> ArmPosition {
        let f = identity_frame();
        let c = f.to_world_unchecked(Point2::new(160.0, 280.0));
        ArmPosition::new(c.x, c.y, PI / 2.0, 10.0)
    }

    fn assert_pen_up_ends(plan: &GesturePlan) {
        assert!(plan.start().z > 0.0);
        assert!(plan.end().z > 0.0);
    }

    #[test]
    fn click_is_three_steps_ending_pen_up() {
        let g = CompoundGesture::click(Point2::new(100.0, 200.0));
        let plan = synthesize_gesture(&g, start(), &identity_frame(), &arm(), None).unwrap();
        assert_eq!(plan.steps.len(), 3);
        let kinds: Vec<_> = plan.steps.iter().map(|s| s.kind).collect();
        assert_eq!(kinds, vec![StepKind::Travel, StepKind::Press, StepKind::Release]);
        assert_pen_up_ends(&plan);
    }

    #[test]
    fn double_click_taps_within_window() {
        let g = CompoundGesture::new(GestureKind::DoubleClick, vec![Point2::new(50.0, 60.0)], None)
            .unwrap();
        let a = arm();
        let plan = synthesize_gesture(&g, start(), &identity_frame(), &a, None).unwrap();
        let kinds: Vec<_> = plan.steps.iter().map(|s| s.kind).collect();
        assert_eq!(
            kinds,
            vec![
                StepKind::Travel,
                StepKind::Press,
                StepKind::Release,
                StepKind::Press,
                StepKind::Release
            ]
        );
        // contact lost at the start of the first release, regained at the
        // end of the second press
        let stroke_ms =
            |s: &GestureStep| s.moves.iter().map(|m| m.distance).sum::<f64>() / a.speed_mm_per_s * 1000.0;
        let between = stroke_ms(&plan.steps[2]) + plan.steps[2].dwell_ms + stroke_ms(&plan.steps[3]);
        assert!(between < a.double_tap_window_ms, "{between}");
    }

    #[test]
    fn long_click_dwells() {
        let g = CompoundGesture::new(GestureKind::LongClick, vec![Point2::new(50.0, 60.0)], None)
            .unwrap();
        let plan = synthesize_gesture(&g, start(), &identity_frame(), &arm(), None).unwrap();
        let press = plan.steps.iter().find(|s| s.kind == StepKind::Press).unwrap();
        assert!(press.dwell_ms >= 800.0);
        assert_pen_up_ends(&plan);
    }

    #[test]
    fn slide_drags_across_widget_width() {
        // widget at x 40..140 px, slide from left edge to right edge
        let g = CompoundGesture::new(
            GestureKind::Slide,
            vec![Point2::new(40.0, 300.0), Point2::new(140.0, 300.0)],
            None,
        )
        .unwrap();
        let f = identity_frame();
        let plan = synthesize_gesture(&g, start(), &f, &arm(), None).unwrap();
        let drag = plan.steps.iter().find(|s| s.kind == StepKind::Drag).unwrap();
        let lateral: f64 = drag.moves.iter().map(|m| m.distance).sum();
        assert!((lateral - 100.0 * f.scale).abs() < 1e-9);
        assert_pen_up_ends(&plan);
    }

    #[test]
    fn input_clicks_once_per_character() {
        let keys: BTreeMap<char, Point2> =
            [('a', Point2::new(20.0, 450.0)), ('b', Point2::new(180.0, 500.0))].into();
        let g = CompoundGesture::new(
            GestureKind::Input,
            vec![Point2::new(100.0, 100.0)],
            Some("ab".into()),
        )
        .unwrap();
        let plan = synthesize_gesture(&g, start(), &identity_frame(), &arm(), Some(&keys)).unwrap();
        let presses = plan.steps.iter().filter(|s| s.kind == StepKind::Press).count();
        assert_eq!(presses, 3);
    }

    #[test]
    fn input_rejects_unknown_character() {
        let keys: BTreeMap<char, Point2> = [('a', Point2::new(20.0, 450.0))].into();
        let g = CompoundGesture::new(
            GestureKind::Input,
            vec![Point2::new(100.0, 100.0)],
            Some("a?".into()),
        )
        .unwrap();
        let e = synthesize_gesture(&g, start(), &identity_frame(), &arm(), Some(&keys)).unwrap_err();
        assert_eq!(e, KinematicsError::UnknownCharacter('?'));
    }

    #[test]
    fn gesture_outside_screen_rejected() {
        let g = CompoundGesture::click(Point2::new(500.0, 10.0));
        let e = synthesize_gesture(&g, start(), &identity_frame(), &arm(), None).unwrap_err();
        assert!(matches!(e, KinematicsError::TargetOutOfBounds { .. }));
    }

    #[test]
    fn scroll_has_no_targets() {
        assert!(CompoundGesture::new(GestureKind::Scroll, vec![Point2::new(1.0, 1.0)], None).is_err());
        let g = CompoundGesture::new(GestureKind::Scroll, vec![], None).unwrap();
        let plan = synthesize_gesture(&g, start(), &identity_frame(), &arm(), None).unwrap();
        assert_pen_up_ends(&plan);
    }

    fn reachable_pose() -> impl Strategy<Value = PlanarPose> {
        (0.0..2.0 * PI, 0.0..PI, -PI..PI).prop_map(|(t1, t2, t3)| {
            forward_kinematics(
                &JointState {
                    theta1: t1,
                    theta2: t2,
                    theta3: t3,
                    z: 0.0,
                },
                &LinkLengths::new(100.0, 100.0, 50.0).unwrap(),
            )
        })
    }

    proptest! {
        #[test]
        fn fk_after_ik_is_identity(t in reachable_pose()) {
            prop_assume!((t.x - 50.0 * t.alpha.cos()).hypot(t.y - 50.0 * t.alpha.sin()) > 1e-3);
            let j = inverse_kinematics(&t, &links()).unwrap();
            prop_assert!((0.0..=PI).contains(&j.theta2));
            let p = forward_kinematics(&j, &links());
            prop_assert!((p.x - t.x).abs() < 1e-6 && (p.y - t.y).abs() < 1e-6);
            prop_assert_eq!(inverse_kinematics(&t, &links()).unwrap(), j);
        }

        #[test]
        fn atomic_moves_sum_to_displacement(
            x0 in -40.0..40.0f64, y0 in 120.0..200.0f64, z0 in 0.0..15.0f64,
            x1 in -40.0..40.0f64, y1 in 120.0..200.0f64, z1 in 0.0..15.0f64,
        ) {
            let a = ArmPosition::new(x0, y0, PI / 2.0, z0);
            let b = ArmPosition::new(x1, y1, PI / 2.0, z1);
            let moves = decompose_to_atomics(&a, &b, &links(), 10.0).unwrap();
            prop_assert!(moves.len() <= 5);
            let mut sum = [0.0f64; 3];
            for m in &moves {
                prop_assert!(m.distance >= 0.0);
                let d = m.displacement();
                for k in 0..3 { sum[k] += d[k]; }
            }
            prop_assert_eq!(sum[0], x1 - x0);
            prop_assert_eq!(sum[1], y1 - y0);
            prop_assert!((sum[2] - (z1 - z0)).abs() <= 1e-12);
        }

        #[test]
        fn path_length_is_additive(
            a in proptest::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 1..20),
            b in proptest::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 1..20),
        ) {
            let pa: Vec<Point2> = a.iter().map(|&(x, y)| Point2::new(x, y)).collect();
            let pb: Vec<Point2> = b.iter().map(|&(x, y)| Point2::new(x, y)).collect();
            let joined: Vec<Point2> = pa.iter().chain(pb.iter()).copied().collect();
            let bridge = pa.last().unwrap().distance(&pb[0]);
            let total = path_length(&joined);
            prop_assert!(total >= 0.0);
            prop_assert!((total - (path_length(&pa) + bridge + path_length(&pb))).abs() < 1e-9);
        }

        #[test]
        fn screen_world_round_trip(x in 0.0..320.0f64, y in 0.0..560.0f64, th in -0.5..0.5f64) {
            let f = ScreenFrame { deflection: th, ..identity_frame() };
            let w = f.to_world(Point2::new(x, y)).unwrap();
            let back = f.to_screen(w);
            prop_assert!((back.x - x).abs() * f.scale < 0.1 && (back.y - y).abs() * f.scale < 0.1);
            prop_assert!((back.x - x).abs() < 1e-9 && (back.y - y).abs() < 1e-9);
        }

        #[test]
        fn click_family_presses_do_not_drag(x in 1.0..319.0f64, y in 1.0..559.0f64, k in 0usize..3) {
            let kind = [GestureKind::Click, GestureKind::DoubleClick, GestureKind::LongClick][k];
            let g = CompoundGesture::new(kind, vec![Point2::new(x, y)], None).unwrap();
            let plan = synthesize_gesture(&g, start(), &identity_frame(), &arm(), None).unwrap();
            prop_assert!(plan.start().z > 0.0 && plan.end().z > 0.0);
            for (i, step) in plan.steps.iter().enumerate() {
                if plan.tip_path[i].z <= 0.0 {
                    prop_assert_eq!(plan.tip_path[i].xy(), plan.tip_path[i + 1].xy());
                    prop_assert!(step.kind != StepKind::Drag);
                }
            }
        }
    }
}
