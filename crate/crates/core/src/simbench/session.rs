use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::app::{AppModel, WidgetSpec};
use super::device::DeviceProfile;
use super::render::{render_screen, show_keyboard, SoftKeyboard};
use super::SimError;
use crate::geometry::Point2;
use crate::image::Image;
use crate::kinematics::{CompoundGesture, GestureKind};
use crate::vision::GlyphLibrary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    Transition,
    None,
    Crash,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub kind: ResponseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_screen: Option<String>,
}

impl Response {
    pub fn none() -> Response {
        Response {
            kind: ResponseKind::None,
            next_screen: None,
        }
    }

    pub fn crash() -> Response {
        Response {
            kind: ResponseKind::Crash,
            next_screen: None,
        }
    }

    pub fn transition(to: &str) -> Response {
        Response {
            kind: ResponseKind::Transition,
            next_screen: Some(to.to_string()),
        }
    }
}

/// What a touch at a screen point lands on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Touch<'a> {
    /// Swallowed by a screen cutout.
    Masked,
    Widget(&'a WidgetSpec),
    Background,
}

/// Topmost widget under `p`; later widgets in the document draw on top.
pub fn resolve_touch<'a>(
    app: &'a AppModel,
    screen: &str,
    device: &DeviceProfile,
    p: Point2,
) -> Result<Touch<'a>, SimError> {
    let spec = app.screen(screen)?;
    if device.is_masked(p) {
        return Ok(Touch::Masked);
    }
    Ok(spec
        .widgets
        .iter()
        .rev()
        .find(|w| w.bounds.contains_point(p))
        .map_or(Touch::Background, Touch::Widget))
}

/// Response of the app on `current` to gesture `g`, without side effects.
pub fn apply_operation(
    app: &AppModel,
    current: &str,
    device: &DeviceProfile,
    g: &CompoundGesture,
) -> Result<Response, SimError> {
    let widget = if g.kind == GestureKind::Scroll {
        app.screen(current)?;
        None
    } else {
        match resolve_touch(app, current, device, g.targets[0])? {
            Touch::Masked | Touch::Background => return Ok(Response::none()),
            Touch::Widget(w) => {
                if g.kind == GestureKind::Input && !w.is_input() {
                    return Ok(Response::none());
                }
                Some(w.id.as_str())
            }
        }
    };
    if app.is_crash(current, widget, g.kind) {
        return Ok(Response::crash());
    }
    Ok(app
        .transition(current, widget, g.kind)
        .map_or_else(Response::none, Response::transition))
}

/// A running app on one device: current screen, soft keyboard and typed
/// field contents. Crashes restart the app on its initial screen.
#[derive(Debug, Clone)]
pub struct AppSession {
    app: Arc<AppModel>,
    device: DeviceProfile,
    current: String,
    keyboard: SoftKeyboard,
    focused: Option<(String, String)>,
    fields: BTreeMap<(String, String), String>,
    crashes: usize,
}

impl AppSession {
    pub fn new(app: Arc<AppModel>, device: DeviceProfile) -> AppSession {
        let mut keyboard = show_keyboard(&device);
        keyboard.visible = false;
        AppSession {
            current: app.initial.clone(),
            app,
            device,
            keyboard,
            focused: None,
            fields: BTreeMap::new(),
            crashes: 0,
        }
    }

    pub fn app(&self) -> &AppModel {
        &self.app
    }

    pub fn device(&self) -> &DeviceProfile {
        &self.device
    }

    pub fn current(&self) -> &str {
        &self.current
    }

    /// Moves to `screen` without a gesture; used to keep a reference
    /// device in step with the device under test.
    pub fn jump_to(&mut self, screen: &str) -> Result<(), SimError> {
        self.app.screen(screen)?;
        self.current = screen.to_string();
        self.focused = None;
        self.keyboard.visible = false;
        Ok(())
    }

    /// Copies the UI state of `other` (screen, keyboard, focus and typed
    /// text) of a session of the same app; crash count is kept.
    pub fn mirror(&mut self, other: &AppSession) {
        self.current = other.current.clone();
        self.keyboard.visible = other.keyboard.visible;
        self.focused = other.focused.clone();
        self.fields = other.fields.clone();
    }

    pub fn crashes(&self) -> usize {
        self.crashes
    }

    pub fn keyboard(&self) -> &SoftKeyboard {
        &self.keyboard
    }

    pub fn field_text(&self, screen: &str, widget: &str) -> Option<&str> {
        self.fields
            .get(&(screen.to_string(), widget.to_string()))
            .map(String::as_str)
    }

    pub fn render(&self, glyphs: &GlyphLibrary) -> (Image, Vec<WidgetSpec>) {
        render_screen(&self.app, &self.current, &self.device, glyphs, Some(&self.keyboard))
            .expect("session screen exists")
    }

    /// Screen with the keyboard forced visible, as seen mid-input.
    pub fn render_with_keyboard(&self, glyphs: &GlyphLibrary) -> Image {
        let mut kb = self.keyboard.clone();
        kb.visible = true;
        render_screen(&self.app, &self.current, &self.device, glyphs, Some(&kb))
            .expect("session screen exists")
            .0
    }

    /// Single tap at `p`.
    pub fn tap(&mut self, p: Point2) -> Response {
        self.perform(&CompoundGesture::click(p))
    }

    /// Applies `g`. While the keyboard is up, touches on keys type into the
    /// focused field (clicks once, double clicks twice) and any other touch
    /// dismisses the keyboard before it is applied.
    pub fn perform(&mut self, g: &CompoundGesture) -> Response {
        if g.kind == GestureKind::Input {
            return self.input(g);
        }
        if self.keyboard.visible {
            let p = g.touch_point(self.device.width() as f64, self.device.height() as f64);
            if let Some(c) = self.key_under(g) {
                let times = match g.kind {
                    GestureKind::Click => 1,
                    GestureKind::DoubleClick => 2,
                    _ => 0,
                };
                if let Some(f) = &self.focused {
                    let field = self.fields.entry(f.clone()).or_default();
                    field.extend(std::iter::repeat_n(c, times));
                }
                return Response::none();
            }
            if !self.device.is_masked(p) {
                self.keyboard.visible = false;
                self.focused = None;
            }
        }
        let r = apply_operation(&self.app, &self.current, &self.device, g).expect("session screen exists");
        if g.kind == GestureKind::Click {
            if let Ok(Touch::Widget(w)) = resolve_touch(&self.app, &self.current, &self.device, g.targets[0]) {
                if w.is_input() {
                    self.focused = Some((self.current.clone(), w.id.clone()));
                    self.keyboard.visible = true;
                }
            }
        }
        self.settle(&r);
        r
    }

    /// Key under the touch of `g` when the keyboard is up and the gesture
    /// presses a single point.
    pub fn key_under(&self, g: &CompoundGesture) -> Option<char> {
        if !self.keyboard.visible || matches!(g.kind, GestureKind::Scroll | GestureKind::Input) {
            return None;
        }
        let p = g.targets[0];
        if self.device.is_masked(p) {
            return None;
        }
        self.keyboard.key_at(p)
    }

    fn input(&mut self, g: &CompoundGesture) -> Response {
        let field = match resolve_touch(&self.app, &self.current, &self.device, g.targets[0]) {
            Ok(Touch::Widget(w)) if w.is_input() => w.id.clone(),
            _ => return Response::none(),
        };
        self.focused = Some((self.current.clone(), field));
        self.keyboard.visible = true;
        for c in g.payload.as_deref().unwrap_or("").chars() {
            if let Some(r) = self.keyboard.keys.get(&c).copied() {
                self.tap(r.center());
            }
        }
        self.keyboard.visible = false;
        self.focused = None;
        let r = apply_operation(&self.app, &self.current, &self.device, g).expect("session screen exists");
        self.settle(&r);
        r
    }

    fn settle(&mut self, r: &Response) {
        match r.kind {
            ResponseKind::Transition => {
                self.current = r.next_screen.clone().expect("transition target");
                self.keyboard.visible = false;
                self.focused = None;
            }
            ResponseKind::Crash => {
                self.crashes += 1;
                self.current = self.app.initial.clone();
                self.keyboard.visible = false;
                self.focused = None;
            }
            ResponseKind::None => {}
        }
    }
}
