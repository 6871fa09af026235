//! Target and gesture selection.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExploreError;
use crate::geometry::{Point2, Rect};
use crate::kinematics::GestureKind;
use crate::vision::Widget;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Random,
    Edge,
    Center,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Random, Variant::Edge, Variant::Center];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Random => "random",
            Variant::Edge => "edge",
            Variant::Center => "center",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Variant::Random),
            "edge" => Ok(Variant::Edge),
            "center" => Ok(Variant::Center),
            other => Err(format!("unknown strategy {other:?} (random, edge, center)")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_cone() -> f64 {
    60f64.to_radians()
}

fn yes() -> bool {
    true
}

fn default_scroll() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub variant: Variant,
    pub seed: u64,
    /// Half-angle of the proximity cone, radians.
    #[serde(default = "default_cone")]
    pub cone_half_angle: f64,
    /// Prefer widgets not yet exercised.
    #[serde(default = "yes")]
    pub prefer_unvisited: bool,
    /// Chance per step of a screen-level scroll instead of a widget gesture.
    #[serde(default = "default_scroll")]
    pub scroll_probability: f64,
}

impl Strategy {
    pub fn new(variant: Variant, seed: u64) -> Strategy {
        Strategy {
            variant,
            seed,
            cone_half_angle: default_cone(),
            prefer_unvisited: true,
            scroll_probability: default_scroll(),
        }
    }
}

/// Identity of a detected widget across visits: the screen's layout
/// signature plus the widget's quantized bounds.
pub type VisitKey = (u64, Rect);

pub fn visit_key(signature: u64, bounds: &Rect) -> VisitKey {
    let q = |v: i32| (v + 4).div_euclid(8) * 8;
    (signature, Rect::new(q(bounds.x), q(bounds.y), q(bounds.width), q(bounds.height)))
}

/// Layout signature of a detected screen.
pub fn screen_signature(widgets: &[Widget]) -> u64 {
    use std::hash::{DefaultHasher, Hash, Hasher};
    let mut h = DefaultHasher::new();
    for w in widgets {
        visit_key(0, &w.bounds).1.hash(&mut h);
        w.kind.hash(&mut h);
    }
    h.finish()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExplorationHistory {
    /// Up to two most recent target points, oldest first.
    pub points: Vec<Point2>,
    pub visited: BTreeSet<VisitKey>,
    pub steps: usize,
}

impl ExplorationHistory {
    pub fn record(&mut self, p: Point2) {
        self.points.push(p);
        if self.points.len() > 2 {
            self.points.remove(0);
        }
    }

    /// Unit direction of the last move, when the last two points differ.
    pub fn direction(&self) -> Option<Point2> {
        match self.points.as_slice() {
            [a, b] => {
                let d = b.sub(a);
                let n = d.norm();
                (n > 1e-9).then(|| d.scale(1.0 / n))
            }
            _ => None,
        }
    }

    /// Forget locations (new screen); the visited set is kept.
    pub fn reanchor(&mut self) {
        self.points.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Widget(usize),
    Screen,
}

const MAX_REDRAWS: usize = 8;

fn random_direction(rng: &mut ChaCha8Rng) -> Point2 {
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    Point2::new(a.cos(), a.sin())
}

/// Uniform point on the boundary of a `w` × `h` screen.
pub fn sample_edge_point(rng: &mut ChaCha8Rng, w: f64, h: f64) -> Point2 {
    let t = rng.random_range(0.0..2.0 * (w + h));
    if t < w {
        Point2::new(t, 0.0)
    } else if t < w + h {
        Point2::new(w, t - w)
    } else if t < 2.0 * w + h {
        Point2::new(2.0 * w + h - t, h)
    } else {
        Point2::new(0.0, 2.0 * (w + h) - t)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Median over widgets of the distance to the nearest other widget.
pub fn median_spacing(widgets: &[Widget]) -> f64 {
    let centers: Vec<Point2> = widgets.iter().map(|w| w.bounds.center()).collect();
    median(
        centers
            .iter()
            .enumerate()
            .filter_map(|(i, c)| {
                centers
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, d)| c.distance(d))
                    .min_by(f64::total_cmp)
            })
            .collect(),
    )
}

fn nearest(
    widgets: &[Widget],
    candidates: impl Iterator<Item = usize>,
    from: Point2,
    visited: &dyn Fn(usize) -> bool,
    prefer_unvisited: bool,
) -> Option<usize> {
    let cands: Vec<usize> = candidates.collect();
    let pick = |pool: &mut dyn Iterator<Item = usize>| {
        pool.min_by(|&a, &b| {
            let da = widgets[a].bounds.center().distance(&from);
            let db = widgets[b].bounds.center().distance(&from);
            da.total_cmp(&db).then(a.cmp(&b))
        })
    };
    if prefer_unvisited {
        if let Some(i) = pick(&mut cands.iter().copied().filter(|&i| !visited(i))) {
            return Some(i);
        }
    }
    pick(&mut cands.iter().copied())
}

/// Next target on the current screen.
///
/// Random picks uniformly. Center and edge start from the widget nearest
/// their anchor, then follow the direction of the last two targets: the
/// nearest widget inside the cone around that direction wins. When the
/// continuation would leave the screen the walk restarts from the anchor in
/// a fresh random direction (recorded in `history`); an empty cone also
/// redraws the direction.
#[allow(clippy::too_many_arguments)]
pub fn select_target(
    widgets: &[Widget],
    history: &mut ExplorationHistory,
    strategy: &Strategy,
    anchor: Point2,
    signature: u64,
    screen: (f64, f64),
    allow_screen_level: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Target, ExploreError> {
    if widgets.is_empty() {
        return if allow_screen_level {
            Ok(Target::Screen)
        } else {
            Err(ExploreError::NoWidgets)
        };
    }
    let visited = |i: usize| history.visited.contains(&visit_key(signature, &widgets[i].bounds));
    if strategy.variant == Variant::Random {
        return Ok(Target::Widget(rng.random_range(0..widgets.len())));
    }
    let Some(&last) = history.points.last() else {
        let i = nearest(widgets, 0..widgets.len(), anchor, &visited, strategy.prefer_unvisited)
            .expect("non-empty");
        return Ok(Target::Widget(i));
    };
    let spacing = median_spacing(widgets).max(1.0);
    let inside = |p: Point2| p.x >= 0.0 && p.y >= 0.0 && p.x <= screen.0 && p.y <= screen.1;
    let cos_limit = strategy.cone_half_angle.cos();
    let mut origin = last;
    let mut dir = history.direction();
    if dir.is_some_and(|d| !inside(last.add(&d.scale(spacing)))) {
        origin = anchor;
        dir = None;
    }
    let mut pick = None;
    for _ in 0..=MAX_REDRAWS {
        let d = dir.take().unwrap_or_else(|| random_direction(rng));
        if origin == last && !inside(last.add(&d.scale(spacing))) {
            continue;
        }
        let in_cone = (0..widgets.len()).filter(|&i| {
            let v = widgets[i].bounds.center().sub(&origin);
            let n = v.norm();
            n > 1e-9 && v.dot(&d) / n >= cos_limit
        });
        pick = nearest(widgets, in_cone, origin, &visited, strategy.prefer_unvisited);
        if pick.is_some() {
            break;
        }
    }
    if origin != last {
        history.points = vec![anchor];
    }
    Ok(Target::Widget(pick.unwrap_or_else(|| rng.random_range(0..widgets.len()))))
}

/// Gestures a widget supports: input only on input fields, scroll only at
/// screen level.
pub fn compatible_gestures(target: Target, is_input: bool) -> Vec<GestureKind> {
    match target {
        Target::Screen => vec![GestureKind::Scroll],
        Target::Widget(_) => {
            let mut g = vec![
                GestureKind::Click,
                GestureKind::DoubleClick,
                GestureKind::LongClick,
                GestureKind::Slide,
            ];
            if is_input {
                g.push(GestureKind::Input);
            }
            g
        }
    }
}

pub fn select_gesture_for(target: Target, is_input: bool, rng: &mut ChaCha8Rng) -> GestureKind {
    let options = compatible_gestures(target, is_input);
    options[rng.random_range(0..options.len())]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn at(x: i32, y: i32) -> Widget {
        Widget::nontext(Rect::new(x - 5, y - 5, 10, 10))
    }

    fn hist(points: &[(f64, f64)]) -> ExplorationHistory {
        let mut h = ExplorationHistory::default();
        for p in points {
            h.record(Point2::new(p.0, p.1));
        }
        h
    }

    #[test]
    fn cone_prefers_the_current_direction() {
        let ws = vec![at(150, 100), at(50, 100)];
        let mut h = hist(&[(80.0, 100.0), (100.0, 100.0)]);
        let s = Strategy::new(Variant::Center, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = select_target(&ws, &mut h, &s, Point2::new(0.0, 0.0), 0, (320.0, 560.0), true, &mut rng).unwrap();
        assert_eq!(t, Target::Widget(0));
    }

    #[test]
    fn first_center_step_picks_nearest_to_anchor() {
        let ws = vec![at(160 + 100, 280), at(160 + 10, 280)];
        let s = Strategy::new(Variant::Center, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = select_target(&ws, &mut ExplorationHistory::default(), &s, Point2::new(160.0, 280.0), 0, (320.0, 560.0), true, &mut rng)
            .unwrap();
        assert_eq!(t, Target::Widget(1));
    }

    #[test]
    fn edge_exit_restarts_from_the_anchor_reproducibly() {
        let ws: Vec<Widget> = (0..6).map(|i| at(40 + 50 * i, 100 + 60 * (i % 3))).collect();
        let s = Strategy::new(Variant::Edge, 9);
        let anchor = Point2::new(0.0, 280.0);
        let pick = |seed| {
            let mut h = hist(&[(250.0, 100.0), (315.0, 100.0)]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = select_target(&ws, &mut h, &s, anchor, 0, (320.0, 560.0), true, &mut rng).unwrap();
            (t, h.points)
        };
        let (t, points) = pick(5);
        assert_eq!((t, points.clone()), pick(5));
        assert_eq!(points, vec![anchor]);
        let Target::Widget(i) = t else { panic!() };
        assert!(ws[i].bounds.center().x > anchor.x);
    }

    #[test]
    fn unvisited_widgets_come_first() {
        let ws = vec![at(120, 100), at(200, 100)];
        let mut h = hist(&[(60.0, 100.0), (100.0, 100.0)]);
        h.visited.insert(visit_key(7, &ws[0].bounds));
        let s = Strategy::new(Variant::Center, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = select_target(&ws, &mut h, &s, Point2::new(0.0, 0.0), 7, (320.0, 560.0), true, &mut rng).unwrap();
        assert_eq!(t, Target::Widget(1));
    }

    #[test]
    fn empty_screen_without_screen_gestures_is_an_error() {
        let s = Strategy::new(Variant::Random, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = ExplorationHistory::default();
        let origin = Point2::new(0.0, 0.0);
        assert_eq!(select_target(&[], &mut h.clone(), &s, origin, 0, (1.0, 1.0), false, &mut rng), Err(ExploreError::NoWidgets));
        assert_eq!(select_target(&[], &mut h.clone(), &s, origin, 0, (1.0, 1.0), true, &mut rng), Ok(Target::Screen));
    }

    #[test]
    fn input_only_offered_for_input_fields() {
        assert!(compatible_gestures(Target::Widget(0), true).contains(&GestureKind::Input));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            assert_ne!(select_gesture_for(Target::Widget(0), false, &mut rng), GestureKind::Input);
        }
        assert_eq!(select_gesture_for(Target::Screen, false, &mut rng), GestureKind::Scroll);
    }

    #[test]
    fn seeded_gesture_sequence_repeats() {
        let seq = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| select_gesture_for(Target::Widget(0), true, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(seq(4), seq(4));
    }

    proptest::proptest! {
        #[test]
        fn center_first_move_beats_random_on_average(
            centers in proptest::collection::vec((10i32..310, 10i32..550), 1..20),
        ) {
            let ws: Vec<Widget> = centers.iter().map(|&(x, y)| at(x, y)).collect();
            let anchor = Point2::new(160.0, 280.0);
            let s = Strategy::new(Variant::Center, 0);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let Target::Widget(i) = select_target(&ws, &mut ExplorationHistory::default(), &s, anchor, 0, (320.0, 560.0), true, &mut rng).unwrap() else {
                panic!()
            };
            let mean = ws.iter().map(|w| w.bounds.center().distance(&anchor)).sum::<f64>() / ws.len() as f64;
            proptest::prop_assert!(ws[i].bounds.center().distance(&anchor) <= mean + 1e-9);
        }
    }

    #[test]
    fn edge_points_lie_on_the_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let p = sample_edge_point(&mut rng, 320.0, 560.0);
            let on = p.x.abs() < 1e-9 || p.y.abs() < 1e-9 || (p.x - 320.0).abs() < 1e-9 || (p.y - 560.0).abs() < 1e-9;
            assert!(on && (0.0..=320.0).contains(&p.x) && (0.0..=560.0).contains(&p.y));
        }
    }
}
