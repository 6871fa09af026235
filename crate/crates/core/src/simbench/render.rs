use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::app::{AppModel, WidgetRole, WidgetSpec};
use super::device::DeviceProfile;
use super::SimError;
use crate::geometry::{Point2, Rect};
use crate::image::Image;
use crate::vision::GlyphLibrary;

pub const INK: u8 = 30;
pub const BUTTON_BORDER: u8 = 60;
pub const BUTTON_FILL: u8 = 200;
pub const INPUT_BORDER: u8 = 100;
pub const INPUT_FILL: u8 = 250;
pub const IMAGE_FILL: u8 = 120;
pub const KEYBOARD_PANEL: u8 = 215;
pub const MASK: u8 = 0;
const BORDER: i32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoftKeyboard {
    pub keys: BTreeMap<char, Rect>,
    pub visible: bool,
}

impl SoftKeyboard {
    pub fn key_at(&self, p: Point2) -> Option<char> {
        self.keys
            .iter()
            .find(|(_, r)| r.contains_point(p))
            .map(|(c, _)| *c)
    }

    /// Top edge of the keyboard panel.
    pub fn top(&self) -> i32 {
        self.keys.values().map(|r| r.y).min().unwrap_or(0) - 8
    }

    /// Key centers, the lookup the arm needs for typing.
    pub fn centers(&self) -> BTreeMap<char, Point2> {
        self.keys.iter().map(|(c, r)| (*c, r.center())).collect()
    }
}

/// QWERTY letters plus space in the lower 40% of the screen.
pub fn show_keyboard(device: &DeviceProfile) -> SoftKeyboard {
    let (w, h) = (device.width() as f64, device.height() as f64);
    let top = h * 0.6;
    let pitch_x = w / 10.0;
    let pitch_y = (h - top) / 4.0;
    let key_w = (pitch_x * 0.75).floor() as i32;
    let key_h = (pitch_y * 0.75).floor() as i32;
    let mut keys = BTreeMap::new();
    for (row, letters) in ["qwertyuiop", "asdfghjkl", "zxcvbnm"].iter().enumerate() {
        let offset = (10 - letters.len()) as f64 * pitch_x / 2.0;
        for (i, c) in letters.chars().enumerate() {
            let cx = offset + (i as f64 + 0.5) * pitch_x;
            let cy = top + (row as f64 + 0.5) * pitch_y;
            keys.insert(
                c,
                Rect::new(
                    (cx - key_w as f64 / 2.0).round() as i32,
                    (cy - key_h as f64 / 2.0).round() as i32,
                    key_w,
                    key_h,
                ),
            );
        }
    }
    let cy = top + 3.5 * pitch_y;
    let space_w = (5.0 * pitch_x) as i32 - (pitch_x as i32 - key_w);
    keys.insert(
        ' ',
        Rect::new(
            (w / 2.0 - space_w as f64 / 2.0).round() as i32,
            (cy - key_h as f64 / 2.0).round() as i32,
            space_w,
            key_h,
        ),
    );
    SoftKeyboard {
        keys,
        visible: true,
    }
}

fn bordered(img: &mut Image, r: Rect, border: u8, fill: u8) {
    img.fill_rect(r.x, r.y, r.width, r.height, border);
    img.fill_rect(r.x + BORDER, r.y + BORDER, r.width - 2 * BORDER, r.height - 2 * BORDER, fill);
}

/// Draws `text` so that its ink box starts at (`x`, `y`).
pub fn draw_label(img: &mut Image, glyphs: &GlyphLibrary, text: &str, x: i32, y: i32) {
    if let Some(ink) = glyphs.text_ink_bounds(text, 0, 0) {
        glyphs.draw_text(img, text, x - ink.x, y - ink.y, INK);
    }
}

pub fn draw_widget(img: &mut Image, glyphs: &GlyphLibrary, w: &WidgetSpec) {
    let r = w.bounds;
    match w.role {
        WidgetRole::Button => bordered(img, r, BUTTON_BORDER, BUTTON_FILL),
        WidgetRole::Input => bordered(img, r, INPUT_BORDER, INPUT_FILL),
        WidgetRole::Image => img.fill_rect(r.x, r.y, r.width, r.height, IMAGE_FILL),
        WidgetRole::Text => draw_label(img, glyphs, w.text.as_deref().unwrap_or(""), r.x, r.y),
    }
}

pub fn draw_keyboard(img: &mut Image, glyphs: &GlyphLibrary, kb: &SoftKeyboard) {
    let top = kb.top().max(0);
    img.fill_rect(0, top, img.width() as i32, img.height() as i32 - top, KEYBOARD_PANEL);
    for (c, r) in &kb.keys {
        bordered(img, *r, BUTTON_BORDER, BUTTON_FILL);
        if *c != ' ' {
            let label = c.to_string();
            if let Some(ink) = glyphs.text_ink_bounds(&label, 0, 0) {
                let x = r.x + (r.width - ink.width) / 2;
                let y = r.y + (r.height - ink.height) / 2;
                draw_label(img, glyphs, &label, x, y);
            }
        }
    }
}

/// Paints the device cutouts black.
pub fn apply_mask(img: &mut Image, device: &DeviceProfile) {
    if device.irregular_mask.is_empty() {
        return;
    }
    for y in 0..img.height() {
        for x in 0..img.width() {
            if device.is_masked(Point2::new(x as f64 + 0.5, y as f64 + 0.5)) {
                img.set(x, y, MASK);
            }
        }
    }
}

/// Rasterizes one screen, with the keyboard when given, and returns the
/// pixels plus the unmasked ground-truth widgets.
pub fn render_screen(
    app: &AppModel,
    screen: &str,
    device: &DeviceProfile,
    glyphs: &GlyphLibrary,
    keyboard: Option<&SoftKeyboard>,
) -> Result<(Image, Vec<WidgetSpec>), SimError> {
    let spec = app.screen(screen)?;
    let mut img = Image::gray(device.width(), device.height(), spec.background);
    for w in &spec.widgets {
        draw_widget(&mut img, glyphs, w);
    }
    if let Some(kb) = keyboard.filter(|k| k.visible) {
        draw_keyboard(&mut img, glyphs, kb);
    }
    apply_mask(&mut img, device);
    Ok((img, spec.widgets.clone()))
}
