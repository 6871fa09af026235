//! Contour-based extraction of non-text widgets.

use serde::{Deserialize, Serialize};

use super::edges::{canny, connected_components, morph_close};
use super::Widget;
use crate::geometry::Rect;
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NontextParams {
    pub canny_low: f64,
    pub canny_high: f64,
    pub close_kernel: u32,
    /// Inner/outer area ratio above which the outer candidate is replaced.
    pub nesting_ratio: f64,
    /// Candidates covering more than this fraction of the screen are dropped.
    pub oversize_fraction: f64,
    /// Smallest accepted candidate side, pixels.
    pub min_side: i32,
}

impl Default for NontextParams {
    fn default() -> Self {
        Self {
            canny_low: 50.0,
            canny_high: 150.0,
            close_kernel: 5,
            nesting_ratio: 0.85,
            oversize_fraction: 0.9,
            min_side: 4,
        }
    }
}

/// Repeatedly removes a candidate that contains another candidate whose
/// area exceeds `ratio` of its own, largest first. Each pass removes one
/// rectangle, so the loop terminates.
pub fn eliminate_nested(mut rects: Vec<Rect>, ratio: f64) -> Vec<Rect> {
    rects.sort_by(|a, b| b.area().cmp(&a.area()).then(a.cmp(b)));
    rects.dedup();
    loop {
        let victim = rects.iter().enumerate().position(|(i, outer)| {
            rects.iter().enumerate().any(|(j, inner)| {
                i != j
                    && outer.contains_rect(inner)
                    && inner.area() as f64 / outer.area() as f64 > ratio
            })
        });
        match victim {
            Some(i) => {
                rects.remove(i);
            }
            None => return rects,
        }
    }
}

pub fn extract_nontext(screen: &Image, params: &NontextParams) -> Vec<Widget> {
    let edges = canny(screen, params.canny_low, params.canny_high);
    let closed = morph_close(&edges, params.close_kernel);
    let candidates: Vec<Rect> = connected_components(&closed)
        .into_iter()
        .map(|c| c.bounds)
        .filter(|r| r.width >= params.min_side && r.height >= params.min_side)
        .collect();
    let screen_area = screen.width() as f64 * screen.height() as f64;
    let mut kept: Vec<Widget> = eliminate_nested(candidates, params.nesting_ratio)
        .into_iter()
        .filter(|r| (r.area() as f64) <= params.oversize_fraction * screen_area)
        .map(Widget::nontext)
        .collect();
    kept.sort_by_key(|w| (w.bounds.y, w.bounds.x, w.bounds.width, w.bounds.height));
    kept
}
