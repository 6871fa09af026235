//! Two-pass text extraction by template matching against a glyph library.
//!
//! The coarse pass groups dark-ink components into line boxes. The refine
//! pass matches each character inside a line, drops weak matches and merges
//! the survivors into words.

use super::edges::components_of;
use super::glyphs::GlyphLibrary;
use super::Widget;
use crate::geometry::Rect;
use crate::image::Image;

pub const TEXT_CONFIDENCE_FLOOR: f64 = 0.8;

/// Gray level below which a pixel counts as ink.
const INK_THRESHOLD: u8 = 110;

#[derive(Debug, Clone, PartialEq)]
pub struct CharMatch {
    pub bounds: Rect,
    pub ch: char,
    pub confidence: f64,
}

fn ncc(img: &Image, template: &Image, ox: i32, oy: i32) -> f64 {
    let n = (template.width() * template.height()) as f64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ty in 0..template.height() {
        for tx in 0..template.width() {
            let a = img
                .get_checked(ox as i64 + tx as i64, oy as i64 + ty as i64)
                .unwrap_or(255) as f64;
            let b = template.get(tx, ty) as f64;
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
        }
    }
    let cov = sab - sa * sb / n;
    let va = saa - sa * sa / n;
    let vb = sbb - sb * sb / n;
    if va <= 1e-9 || vb <= 1e-9 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Best glyph for the ink box `b`, with its correlation clamped to [0, 1].
fn match_char(img: &Image, b: Rect, lib: &GlyphLibrary) -> Option<CharMatch> {
    let mut best: Option<CharMatch> = None;
    for g in lib.glyphs() {
        if (g.ink.width - b.width).abs() > 1 || (g.ink.height - b.height).abs() > 1 {
            continue;
        }
        for dy in -1..=1 {
            for dx in -1..=1 {
                let score = ncc(img, &g.template, b.x - 1 + dx, b.y - 1 + dy).clamp(0.0, 1.0);
                if best.as_ref().is_none_or(|m| score > m.confidence) {
                    best = Some(CharMatch {
                        bounds: b,
                        ch: g.ch,
                        confidence: score,
                    });
                }
            }
        }
    }
    best
}

/// Merges kept characters into words. Matches below the confidence floor
/// are dropped first; neighbours whose gap is under the line's median gap
/// (clamped to half and three quarters of the glyph height) join a word.
pub fn assemble_words(mut chars: Vec<CharMatch>, glyph_height: f64) -> Vec<Widget> {
    chars.retain(|c| c.confidence >= TEXT_CONFIDENCE_FLOOR);
    chars.sort_by_key(|c| (c.bounds.x, c.bounds.y));
    if chars.is_empty() {
        return Vec::new();
    }
    let mut gaps: Vec<i32> = chars
        .windows(2)
        .map(|w| w[1].bounds.x - w[0].bounds.right())
        .collect();
    let merge_below = if gaps.is_empty() {
        0.0
    } else {
        gaps.sort_unstable();
        let median = gaps[gaps.len() / 2] as f64;
        median.clamp(0.5 * glyph_height, 0.75 * glyph_height)
    };
    let mut words = Vec::new();
    let mut cur: Option<(Rect, String, f64)> = None;
    for c in chars {
        cur = match cur {
            Some((r, mut s, conf)) if ((c.bounds.x - r.right()) as f64) < merge_below => {
                s.push(c.ch);
                Some((r.union(&c.bounds), s, conf.min(c.confidence)))
            }
            prev => {
                if let Some((r, s, conf)) = prev {
                    words.push(Widget::text(r, s, conf));
                }
                Some((c.bounds, c.ch.to_string(), c.confidence))
            }
        };
    }
    if let Some((r, s, conf)) = cur {
        words.push(Widget::text(r, s, conf));
    }
    words
}

struct Line {
    bounds: Rect,
    parts: Vec<Rect>,
}

pub fn detect_text(screen: &Image, lib: &GlyphLibrary) -> Vec<Widget> {
    assert!(!lib.is_empty(), "glyph library must not be empty");
    let gray = screen.to_gray();
    let data = gray.data();
    let ch = lib.cell_height() as i32;
    let cw = lib.cell_width() as i32;
    let mut comps: Vec<Rect> = components_of(gray.width(), gray.height(), |i| data[i] < INK_THRESHOLD)
        .into_iter()
        .filter(|c| c.pixels >= 2 && c.bounds.height <= ch + ch / 2 && c.bounds.width <= 3 * cw)
        .map(|c| c.bounds)
        .collect();
    comps.sort_by_key(|r| (r.x, r.y));

    // coarse pass: line boxes
    let margin = ch / 2;
    let mut lines: Vec<Line> = Vec::new();
    for c in comps {
        let host = lines.iter_mut().rev().find(|l| {
            c.y < l.bounds.bottom() + margin
                && c.bottom() + margin > l.bounds.y
                && c.x - l.bounds.right() <= ch + ch / 2
        });
        match host {
            Some(l) => {
                l.bounds = l.bounds.union(&c);
                l.parts.push(c);
            }
            None => lines.push(Line {
                bounds: c,
                parts: vec![c],
            }),
        }
    }

    // refine pass: characters inside each line
    let mut out = Vec::new();
    for line in lines {
        let mut cells: Vec<Rect> = Vec::new();
        for p in line.parts {
            match cells.last_mut() {
                Some(last) if p.x < last.right() => *last = last.union(&p),
                _ => cells.push(p),
            }
        }
        let matches: Vec<CharMatch> = cells
            .into_iter()
            .filter_map(|b| match_char(&gray, b, lib))
            .collect();
        let coarse = matches.iter().map(|m| m.confidence).sum::<f64>() / matches.len().max(1) as f64;
        if coarse < 0.5 {
            continue;
        }
        out.extend(assemble_words(matches, ch as f64));
    }
    out.sort_by_key(|w| (w.bounds.y, w.bounds.x));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn page(words: &[(&str, i32, i32)]) -> (Image, GlyphLibrary) {
        let lib = GlyphLibrary::builtin(2);
        let mut img = Image::gray(320, 200, 230);
        for (w, x, y) in words {
            lib.draw_text(&mut img, w, *x, *y, 30);
        }
        (img, lib)
    }

    #[test]
    fn single_word_is_recovered_exactly() {
        let (img, lib) = page(&[("settings", 40, 50)]);
        let ws = detect_text(&img, &lib);
        assert_eq!(ws.len(), 1, "{ws:?}");
        assert_eq!(ws[0].text.as_deref(), Some("settings"));
        assert!(ws[0].confidence >= 0.95);
        assert_eq!(ws[0].bounds, lib.text_ink_bounds("settings", 40, 50).unwrap());
    }

    #[test]
    fn words_on_a_line_split_at_spaces() {
        let (img, lib) = page(&[("sign in now", 20, 20), ("fill 2024", 20, 80)]);
        let texts: Vec<String> = detect_text(&img, &lib).into_iter().filter_map(|w| w.text).collect();
        assert_eq!(texts, vec!["sign", "in", "now", "fill", "2024"]);
    }

    #[test]
    fn every_glyph_is_recognized() {
        let lib = GlyphLibrary::builtin(2);
        let all: String = lib.glyphs().map(|g| g.ch).collect();
        let mut img = Image::gray(40 * 12, 60, 230);
        for (i, c) in all.chars().enumerate() {
            lib.draw_text(&mut img, &c.to_string(), 6 + i as i32 * 13, 20, 30);
        }
        let found: String = detect_text(&img, &lib)
            .into_iter()
            .filter_map(|w| w.text)
            .collect();
        assert_eq!(found, all);
    }

    #[test]
    fn weak_fragment_excluded() {
        let m = |x, c: char, conf| CharMatch {
            bounds: Rect::new(x, 0, 10, 14),
            ch: c,
            confidence: conf,
        };
        let ws = assemble_words(vec![m(0, 'a', 0.79)], 14.0);
        assert!(ws.is_empty());
        let ws = assemble_words(vec![m(0, 'a', 0.8)], 14.0);
        assert_eq!(ws.len(), 1);
    }

    #[test]
    fn sub_median_gap_merges() {
        let m = |x, c: char| CharMatch {
            bounds: Rect::new(x, 0, 10, 14),
            ch: c,
            confidence: 0.9,
        };
        // gaps 2 and 20: only the small one merges
        let ws = assemble_words(vec![m(0, 'o'), m(12, 'k'), m(42, 'x')], 14.0);
        let texts: Vec<_> = ws.iter().filter_map(|w| w.text.clone()).collect();
        assert_eq!(texts, vec!["ok", "x"]);
        assert_eq!(ws[0].bounds, Rect::new(0, 0, 22, 14));
    }

    #[test]
    fn shapes_that_are_not_glyphs_are_ignored() {
        let lib = GlyphLibrary::builtin(2);
        let mut img = Image::gray(200, 100, 230);
        img.fill_rect(20, 20, 9, 9, 30);
        img.fill_rect(60, 20, 3, 14, 30);
        img.fill_rect(60, 20, 10, 3, 30);
        assert!(detect_text(&img, &lib).is_empty());
    }

    #[test]
    fn empty_image_yields_nothing() {
        let lib = GlyphLibrary::builtin(2);
        assert!(detect_text(&Image::gray(50, 50, 230), &lib).is_empty());
    }
}
