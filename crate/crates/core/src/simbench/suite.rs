//! The shipped benchmark suite: five generated app models whose layouts,
//! transitions, crash triggers and notch-overlap faults are fixed by seed.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::app::{AppModel, CrashTrigger, ScreenSpec, Transition, WidgetRole, WidgetSpec};
use super::device::DeviceProfile;
use super::SCHEMA_VERSION;
use crate::geometry::Rect;
use crate::kinematics::GestureKind;
use crate::vision::GlyphLibrary;

/// (app id, screen count, seed)
pub const SUITE: [(&str, usize, u64); 5] = [
    ("notes", 8, 11),
    ("shop", 10, 12),
    ("mail", 12, 13),
    ("photos", 9, 14),
    ("setup", 11, 15),
];

const TITLES: &[&str] = &[
    "home", "inbox", "cart", "edit", "share", "menu", "list", "item", "photo", "album", "view",
    "help", "about", "news", "sort", "find", "sync", "send", "draft", "trash", "user", "login",
    "price", "order", "track", "notes", "tags", "zoom", "crop", "wifi", "sound", "theme", "font",
    "lang", "date", "alarm", "info", "more", "store", "deals",
];

const LABELS: &[&str] = &[
    "open", "close", "save", "next", "play", "stop", "like", "copy", "move", "details", "reply",
    "forward", "archive", "select", "filter", "account", "profile", "privacy", "update", "rename",
    "delete", "export", "import", "upload", "refresh", "search", "recent", "starred", "summary",
    "invite", "contact", "billing", "wallet", "coupon", "history", "display", "battery", "storage",
    "backup", "network", "print", "review", "rate", "follow", "report", "mute", "pin", "label",
    "color", "size", "width", "height", "top", "bottom", "left", "right", "daily", "weekly",
    "monthly", "yes", "no", "ok", "go", "add", "new", "all", "set", "run", "tip", "map", "car",
];

/// Where a notch-overlap fault widget sits on its screen.
pub const FAULT_BOUNDS: Rect = Rect::new(104, 4, 112, 44);
pub const FAULT_ID: &str = "promo";
const FAULTS_PER_APP: usize = 3;

struct Layout<'a> {
    glyphs: &'a GlyphLibrary,
    widgets: Vec<WidgetSpec>,
    counter: usize,
}

impl Layout<'_> {
    fn push(&mut self, role: WidgetRole, bounds: Rect, text: Option<&str>, clickable: bool) {
        self.counter += 1;
        let prefix = match role {
            WidgetRole::Button => "btn",
            WidgetRole::Text => "txt",
            WidgetRole::Input => "field",
            WidgetRole::Image => "img",
        };
        self.widgets.push(WidgetSpec {
            id: format!("{prefix}{}", self.counter),
            role,
            bounds,
            text: text.map(str::to_string),
            clickable,
        });
    }

    fn text(&mut self, word: &str, x: i32, y: i32, clickable: bool) {
        let ink = self.glyphs.text_ink_bounds(word, 0, 0).expect("word has ink");
        self.push(WidgetRole::Text, Rect::new(x, y, ink.width, ink.height), Some(word), clickable);
    }
}

fn screen_layout(
    glyphs: &GlyphLibrary,
    rng: &mut ChaCha8Rng,
    title: &str,
    has_back: bool,
    has_fault: bool,
) -> Vec<WidgetSpec> {
    let mut l = Layout {
        glyphs,
        widgets: Vec::new(),
        counter: 0,
    };
    l.text(title, 12, 14, false);
    if has_back {
        l.widgets.push(WidgetSpec {
            id: "back".into(),
            role: WidgetRole::Button,
            bounds: Rect::new(264, 8, 44, 32),
            text: None,
            clickable: true,
        });
    }
    if has_fault {
        l.widgets.push(WidgetSpec {
            id: FAULT_ID.into(),
            role: WidgetRole::Button,
            bounds: FAULT_BOUNDS,
            text: None,
            clickable: true,
        });
    }
    let mut y = 64;
    let word = |rng: &mut ChaCha8Rng| *LABELS.choose(rng).expect("labels");
    loop {
        let kind = rng.random_range(0..7);
        let h = match kind {
            0 | 1 | 6 => 40,
            2 => 36,
            3 => 72,
            4 => 80,
            _ => 14,
        };
        if y + h > 548 {
            break;
        }
        match kind {
            0 => {
                l.push(WidgetRole::Button, Rect::new(16, y, 136, 40), None, true);
                l.push(WidgetRole::Button, Rect::new(168, y, 136, 40), None, true);
            }
            1 => {
                let w = word(rng);
                l.text(w, 16, y + 13, true);
                l.push(WidgetRole::Button, Rect::new(200, y, 104, 40), None, true);
            }
            2 => l.push(WidgetRole::Input, Rect::new(16, y, 288, 36), None, true),
            3 => l.push(WidgetRole::Image, Rect::new(16, y, 288, 72), None, true),
            4 => {
                l.push(WidgetRole::Image, Rect::new(16, y, 136, 80), None, true);
                l.push(WidgetRole::Image, Rect::new(168, y, 136, 80), None, true);
            }
            5 => {
                let (a, b) = (word(rng), word(rng));
                l.text(a, 16, y, true);
                l.text(b, 168, y, true);
            }
            _ => l.push(WidgetRole::Button, Rect::new(16, y, 288, 40), None, true),
        }
        y += h + 18;
    }
    l.widgets
}

/// Builds one generated app. Screen `i > 0` hangs off an earlier parent,
/// reachable by a click there and left again through its back button.
pub fn build_app(id: &str, screens: usize, seed: u64, glyphs: &GlyphLibrary) -> AppModel {
    assert!(screens >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut titles: Vec<&str> = TITLES.to_vec();
    let mut faults: Vec<usize> = (0..screens).collect();
    // deterministic shuffle of titles and fault screens
    for i in (1..titles.len()).rev() {
        titles.swap(i, rng.random_range(0..=i));
    }
    for i in (1..faults.len()).rev() {
        faults.swap(i, rng.random_range(0..=i));
    }
    faults.truncate(FAULTS_PER_APP);

    let ids: Vec<String> = (0..screens).map(|i| format!("{}_{}", titles[i], i)).collect();
    let mut specs = Vec::with_capacity(screens);
    for i in 0..screens {
        let background = 222 + rng.random_range(0..5u8) * 4;
        let widgets = screen_layout(glyphs, &mut rng, titles[i], i > 0, faults.contains(&i));
        specs.push(ScreenSpec {
            id: ids[i].clone(),
            background,
            widgets,
        });
    }

    let mut transitions: Vec<Transition> = Vec::new();
    let mut used: Vec<(usize, String, GestureKind)> = Vec::new();
    let clickable = |s: &ScreenSpec| -> Vec<String> {
        s.widgets
            .iter()
            .filter(|w| w.clickable && w.id != "back" && w.id != FAULT_ID)
            .map(|w| w.id.clone())
            .collect()
    };
    let mut link = |from: usize, widget: &str, g: GestureKind, to: usize, used: &mut Vec<(usize, String, GestureKind)>| {
        if used.iter().any(|u| u.0 == from && u.1 == widget && u.2 == g) {
            return false;
        }
        used.push((from, widget.to_string(), g));
        transitions.push(Transition {
            screen: ids[from].clone(),
            widget: Some(widget.to_string()),
            gesture: g,
            target: ids[to].clone(),
        });
        true
    };
    let mut parents = vec![0usize; screens];
    for j in 1..screens {
        let parent = rng.random_range(0..j).max(j.saturating_sub(3));
        parents[j] = parent;
        let options = clickable(&specs[parent]);
        loop {
            let w = options.choose(&mut rng).expect("every screen has clickable widgets");
            if link(parent, w, GestureKind::Click, j, &mut used) {
                break;
            }
        }
        link(j, "back", GestureKind::Click, parent, &mut used);
    }
    // cross links and other gesture kinds
    for i in 0..screens {
        let options = clickable(&specs[i]);
        for w in &options {
            let roll = rng.random_range(0..10);
            let to = rng.random_range(0..screens);
            if to == i {
                continue;
            }
            let g = match roll {
                0 | 1 => GestureKind::Click,
                2 => GestureKind::DoubleClick,
                3 => GestureKind::LongClick,
                4 => GestureKind::Slide,
                _ => continue,
            };
            link(i, w, g, to, &mut used);
        }
        let inputs: Vec<String> = specs[i].widgets.iter().filter(|w| w.is_input()).map(|w| w.id.clone()).collect();
        if let Some(f) = inputs.first() {
            let to = (i + 1) % screens;
            link(i, f, GestureKind::Input, to, &mut used);
        }
        if faults.contains(&i) {
            let to = if i == 0 { 1 } else { parents[i] };
            link(i, FAULT_ID, GestureKind::Click, to, &mut used);
        }
    }
    for (n, i) in [screens - 1, screens / 2].into_iter().enumerate() {
        transitions.push(Transition {
            screen: ids[i].clone(),
            widget: None,
            gesture: GestureKind::Scroll,
            target: ids[(i + 1 + n) % screens].clone(),
        });
        if ids[(i + 1 + n) % screens] == ids[i] {
            transitions.pop();
        }
    }

    let mut crash_triggers = Vec::new();
    for (i, g) in [(screens - 2, GestureKind::LongClick), (screens / 3, GestureKind::DoubleClick)] {
        let free: Vec<String> = clickable(&specs[i])
            .into_iter()
            .filter(|w| !used.iter().any(|u| u.0 == i && &u.1 == w && u.2 == g))
            .collect();
        if let Some(w) = free.choose(&mut rng) {
            crash_triggers.push(CrashTrigger {
                screen: ids[i].clone(),
                widget: Some(w.clone()),
                gesture: g,
            });
        }
    }

    AppModel {
        schema_version: SCHEMA_VERSION,
        id: id.to_string(),
        resolution: [320, 560],
        initial: ids[0].clone(),
        screens: specs,
        transitions,
        crash_triggers,
    }
}

pub fn shipped_suite(glyphs: &GlyphLibrary) -> Vec<AppModel> {
    SUITE
        .iter()
        .map(|(id, n, seed)| build_app(id, *n, *seed, glyphs))
        .collect()
}

/// Widgets overlapping the device's cutouts that respond to some gesture on
/// the regular twin: the seeded compatibility faults, as (screen, widget).
pub fn mask_faults(app: &AppModel, device: &DeviceProfile) -> Vec<(String, String)> {
    let masks: Vec<Rect> = device.irregular_mask.iter().map(|m| m.bounds()).collect();
    let mut out = Vec::new();
    for s in &app.screens {
        for w in &s.widgets {
            let hidden = masks.iter().any(|m| m.intersection(&w.bounds).is_some());
            let live = app
                .transitions
                .iter()
                .any(|t| t.screen == s.id && t.widget.as_deref() == Some(w.id.as_str()))
                || app
                    .crash_triggers
                    .iter()
                    .any(|c| c.screen == s.id && c.widget.as_deref() == Some(w.id.as_str()));
            if hidden && live {
                out.push((s.id.clone(), w.id.clone()));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_models_validate() {
        let lib = GlyphLibrary::builtin(2);
        let suite = shipped_suite(&lib);
        assert_eq!(suite.len(), 5);
        assert_eq!(suite.iter().map(|a| a.screens.len()).sum::<usize>(), 50);
        for app in &suite {
            app.validate(&lib).unwrap();
            assert!((6..=15).contains(&app.screens.len()));
            assert!(!app.crash_triggers.is_empty());
        }
    }

    #[test]
    fn suite_is_deterministic() {
        let lib = GlyphLibrary::builtin(2);
        assert_eq!(shipped_suite(&lib), shipped_suite(&lib));
    }

    #[test]
    fn only_fault_widgets_touch_the_notch() {
        let lib = GlyphLibrary::builtin(2);
        let dev = DeviceProfile::notched_phone("n");
        for app in shipped_suite(&lib) {
            let faults = mask_faults(&app, &dev);
            assert_eq!(faults.len(), FAULTS_PER_APP, "{}", app.id);
            assert!(faults.iter().all(|(_, w)| w == FAULT_ID));
            for s in &app.screens {
                for w in &s.widgets {
                    if w.id != FAULT_ID {
                        assert!(w.bounds.intersection(&Rect::new(120, 0, 80, 32)).is_none());
                    }
                }
            }
        }
    }

    #[test]
    fn widgets_do_not_overlap() {
        let lib = GlyphLibrary::builtin(2);
        for app in shipped_suite(&lib) {
            for s in &app.screens {
                for (i, a) in s.widgets.iter().enumerate() {
                    for b in &s.widgets[i + 1..] {
                        assert!(a.bounds.intersection(&b.bounds).is_none(), "{}/{} vs {}", s.id, a.id, b.id);
                    }
                }
            }
        }
    }
}
