//! Screen detection in photos and widget extraction from rectified screens.

mod edges;
pub mod glyphs;
mod nontext;
mod screen;
mod text;

pub use edges::{canny, connected_components, morph_close, Component, EdgeMap};
pub(crate) use edges::gaussian_blur;
pub use glyphs::{GlyphError, GlyphLibrary};
pub use nontext::{eliminate_nested, extract_nontext, NontextParams};
pub use screen::{detect_screen, ScreenDetectParams};
pub use text::{assemble_words, detect_text, CharMatch, TEXT_CONFIDENCE_FLOOR};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Rect;
use crate::image::Image;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisionError {
    #[error("no screen-like region found in photo")]
    NoScreenFound,
    #[error(transparent)]
    Camera(#[from] crate::camera::CameraError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WidgetKind {
    Text,
    Nontext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Widget {
    pub kind: WidgetKind,
    pub bounds: Rect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub confidence: f64,
}

impl Widget {
    pub fn nontext(bounds: Rect) -> Widget {
        Widget {
            kind: WidgetKind::Nontext,
            bounds,
            text: None,
            confidence: 1.0,
        }
    }

    pub fn text(bounds: Rect, text: impl Into<String>, confidence: f64) -> Widget {
        Widget {
            kind: WidgetKind::Text,
            bounds,
            text: Some(text.into()),
            confidence,
        }
    }
}

/// Tunables for [`extract_widgets`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionParams {
    pub nontext: NontextParams,
    /// Text/nontext overlap above which the nontext duplicate is dropped.
    pub dedup_iou: f64,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            nontext: NontextParams::default(),
            dedup_iou: 0.7,
        }
    }
}

fn reading_order(a: &Widget, b: &Widget) -> std::cmp::Ordering {
    (a.bounds.y, a.bounds.x, a.kind, a.bounds.width, a.bounds.height, &a.text)
        .cmp(&(b.bounds.y, b.bounds.x, b.kind, b.bounds.width, b.bounds.height, &b.text))
        .then(a.confidence.total_cmp(&b.confidence))
}

/// Drops nontext widgets that duplicate a text widget, either by IoU above
/// `dedup_iou` or by lying inside the text box (a fragment of the word),
/// and sorts the result top-to-bottom, left-to-right.
pub fn merge_widgets(text: &[Widget], nontext: &[Widget], dedup_iou: f64) -> Vec<Widget> {
    let texts: Vec<&Widget> = text
        .iter()
        .chain(nontext)
        .filter(|w| w.kind == WidgetKind::Text)
        .collect();
    let mut out: Vec<Widget> = text
        .iter()
        .chain(nontext)
        .filter(|w| {
            w.kind == WidgetKind::Text
                || !texts.iter().any(|t| {
                    let grown = Rect::new(t.bounds.x - 2, t.bounds.y - 2, t.bounds.width + 4, t.bounds.height + 4);
                    t.bounds.iou(&w.bounds) > dedup_iou || grown.contains_rect(&w.bounds)
                })
        })
        .cloned()
        .collect();
    out.sort_by(reading_order);
    out
}

/// Full extraction on a rectified screen: text, nontext, then merge.
pub fn extract_widgets(screen: &Image, glyphs: &GlyphLibrary, params: &ExtractionParams) -> Vec<Widget> {
    let gray = screen.to_gray();
    let text = detect_text(&gray, glyphs);
    let nontext = extract_nontext(&gray, &params.nontext);
    merge_widgets(&text, &nontext, params.dedup_iou)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn disjoint_sets_concatenate_sorted() {
        let t = vec![Widget::text(Rect::new(50, 100, 20, 10), "ok", 0.9)];
        let n = vec![
            Widget::nontext(Rect::new(10, 200, 30, 30)),
            Widget::nontext(Rect::new(10, 10, 30, 30)),
        ];
        let m = merge_widgets(&t, &n, 0.7);
        let ys: Vec<i32> = m.iter().map(|w| w.bounds.y).collect();
        assert_eq!(ys, vec![10, 100, 200]);
    }

    #[test]
    fn identical_bounds_keep_text() {
        let r = Rect::new(5, 5, 40, 16);
        let m = merge_widgets(&[Widget::text(r, "go", 0.95)], &[Widget::nontext(r)], 0.7);
        assert_eq!(m, vec![Widget::text(r, "go", 0.95)]);
    }

    #[test]
    fn nontext_fragments_inside_a_word_are_dropped() {
        let word = Widget::text(Rect::new(40, 40, 60, 14), "menu", 0.92);
        let letter = Widget::nontext(Rect::new(41, 39, 10, 15));
        let button = Widget::nontext(Rect::new(30, 32, 80, 30));
        let m = merge_widgets(std::slice::from_ref(&word), &[letter, button.clone()], 0.7);
        assert_eq!(m, vec![button, word]);
    }

    fn arb_widget() -> impl Strategy<Value = Widget> {
        (0..100i32, 0..100i32, 1..40i32, 1..40i32, any::<bool>()).prop_map(|(x, y, w, h, t)| {
            let r = Rect::new(x, y, w, h);
            if t {
                Widget::text(r, "a", 0.9)
            } else {
                Widget::nontext(r)
            }
        })
    }

    proptest! {
        #[test]
        fn merge_is_idempotent_and_order_insensitive(
            ws in proptest::collection::vec(arb_widget(), 0..12)
        ) {
            let (t, n): (Vec<Widget>, Vec<Widget>) =
                ws.iter().cloned().partition(|w| w.kind == WidgetKind::Text);
            let once = merge_widgets(&t, &n, 0.7);
            let twice = merge_widgets(&once, &[], 0.7);
            prop_assert_eq!(&once, &twice);
            let mut rt = t.clone();
            rt.reverse();
            let mut rn = n.clone();
            rn.reverse();
            prop_assert_eq!(&once, &merge_widgets(&rt, &rn, 0.7));
        }
    }
}
