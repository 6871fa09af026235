use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{SimError, SCHEMA_VERSION};
use crate::geometry::Rect;
use crate::kinematics::GestureKind;
use crate::vision::{GlyphLibrary, WidgetKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WidgetRole {
    Button,
    Text,
    Input,
    Image,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WidgetSpec {
    pub id: String,
    pub role: WidgetRole,
    /// Screen-pixel bounds; for text, the exact ink box of the label.
    pub bounds: Rect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default = "yes")]
    pub clickable: bool,
}

impl WidgetSpec {
    pub fn kind(&self) -> WidgetKind {
        match self.role {
            WidgetRole::Text => WidgetKind::Text,
            _ => WidgetKind::Nontext,
        }
    }

    pub fn is_input(&self) -> bool {
        self.role == WidgetRole::Input
    }
}

fn default_background() -> u8 {
    230
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenSpec {
    pub id: String,
    #[serde(default = "default_background")]
    pub background: u8,
    pub widgets: Vec<WidgetSpec>,
}

impl ScreenSpec {
    pub fn widget(&self, id: &str) -> Option<&WidgetSpec> {
        self.widgets.iter().find(|w| w.id == id)
    }
}

/// `widget` is `None` for screen-level gestures (scroll).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub screen: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widget: Option<String>,
    pub gesture: GestureKind,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashTrigger {
    pub screen: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widget: Option<String>,
    pub gesture: GestureKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppModel {
    pub schema_version: u32,
    pub id: String,
    /// Screen resolution the layout is authored for.
    pub resolution: [u32; 2],
    pub initial: String,
    pub screens: Vec<ScreenSpec>,
    #[serde(default)]
    pub transitions: Vec<Transition>,
    #[serde(default)]
    pub crash_triggers: Vec<CrashTrigger>,
}

impl AppModel {
    pub fn screen(&self, id: &str) -> Result<&ScreenSpec, SimError> {
        self.screens
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| SimError::UnknownScreen(id.to_string()))
    }

    pub fn transition(&self, screen: &str, widget: Option<&str>, gesture: GestureKind) -> Option<&str> {
        self.transitions
            .iter()
            .find(|t| t.screen == screen && t.widget.as_deref() == widget && t.gesture == gesture)
            .map(|t| t.target.as_str())
    }

    pub fn is_crash(&self, screen: &str, widget: Option<&str>, gesture: GestureKind) -> bool {
        self.crash_triggers
            .iter()
            .any(|c| c.screen == screen && c.widget.as_deref() == widget && c.gesture == gesture)
    }

    /// Structural checks, text-box consistency against `glyphs`, and
    /// reachability of every transition from the initial screen.
    pub fn validate(&self, glyphs: &GlyphLibrary) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidModel(m));
        if self.schema_version != SCHEMA_VERSION {
            return Err(SimError::Schema(self.schema_version));
        }
        let full = Rect::new(0, 0, self.resolution[0] as i32, self.resolution[1] as i32);
        let mut ids = BTreeSet::new();
        for s in &self.screens {
            if !ids.insert(s.id.as_str()) {
                return bad(format!("duplicate screen {}", s.id));
            }
            let mut wids = BTreeSet::new();
            for w in &s.widgets {
                if !wids.insert(w.id.as_str()) {
                    return bad(format!("duplicate widget {} on {}", w.id, s.id));
                }
                if w.bounds.area() == 0 || !full.contains_rect(&w.bounds) {
                    return bad(format!("widget {}/{} outside the screen", s.id, w.id));
                }
                match (&w.role, &w.text) {
                    (WidgetRole::Text, Some(t)) => {
                        if t.is_empty() || !t.chars().all(|c| c != ' ' && glyphs.contains(c)) {
                            return bad(format!("text {}/{} must be a single known word", s.id, w.id));
                        }
                        let ink = glyphs.text_ink_bounds(t, 0, 0).expect("non-empty word");
                        if (ink.width, ink.height) != (w.bounds.width, w.bounds.height) {
                            return bad(format!("text {}/{} bounds do not match its ink", s.id, w.id));
                        }
                    }
                    (WidgetRole::Text, None) => return bad(format!("text {}/{} has no label", s.id, w.id)),
                    (_, Some(_)) => return bad(format!("widget {}/{} carries text", s.id, w.id)),
                    _ => {}
                }
            }
        }
        if !ids.contains(self.initial.as_str()) {
            return bad(format!("initial screen {} missing", self.initial));
        }
        let check_ref = |screen: &str, widget: Option<&str>, gesture: GestureKind| -> Result<(), SimError> {
            let s = self.screen(screen)?;
            match (widget, gesture) {
                (None, GestureKind::Scroll) => Ok(()),
                (None, g) => bad(format!("{g} on {screen} needs a widget")),
                (Some(_), GestureKind::Scroll) => bad(format!("scroll on {screen} is screen-level")),
                (Some(w), g) => {
                    let spec = s
                        .widget(w)
                        .ok_or_else(|| SimError::InvalidModel(format!("unknown widget {screen}/{w}")))?;
                    if g == GestureKind::Input && !spec.is_input() {
                        return bad(format!("input on non-input widget {screen}/{w}"));
                    }
                    Ok(())
                }
            }
        };
        let mut seen = BTreeSet::new();
        for t in &self.transitions {
            check_ref(&t.screen, t.widget.as_deref(), t.gesture)?;
            self.screen(&t.target)?;
            if !seen.insert((&t.screen, &t.widget, t.gesture)) {
                return bad(format!("duplicate transition on {}", t.screen));
            }
        }
        for c in &self.crash_triggers {
            check_ref(&c.screen, c.widget.as_deref(), c.gesture)?;
        }

        let mut edges: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for t in &self.transitions {
            edges.entry(t.screen.as_str()).or_default().push(t.target.as_str());
        }
        let mut reached = BTreeSet::from([self.initial.as_str()]);
        let mut queue = VecDeque::from([self.initial.as_str()]);
        while let Some(s) = queue.pop_front() {
            for &n in edges.get(s).into_iter().flatten() {
                if reached.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        for t in &self.transitions {
            if !reached.contains(t.screen.as_str()) {
                return Err(SimError::Unreachable(t.screen.clone()));
            }
        }
        for c in &self.crash_triggers {
            if !reached.contains(c.screen.as_str()) {
                return Err(SimError::Unreachable(c.screen.clone()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str, glyphs: &GlyphLibrary) -> Result<AppModel, SimError> {
        let m: AppModel = serde_json::from_str(s).map_err(|e| SimError::Parse(e.to_string()))?;
        m.validate(glyphs)?;
        Ok(m)
    }
}
