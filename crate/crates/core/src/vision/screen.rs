//! Locating the device screen in a camera photo.

use serde::{Deserialize, Serialize};

use super::VisionError;
use crate::camera::{measure_deflection, ScreenQuad};
use crate::geometry::Point2;
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScreenDetectParams {
    /// Physical screen width, used for the scale estimate.
    pub physical_width_mm: f64,
    /// Regions smaller than this fraction of the photo are rejected.
    pub min_area_fraction: f64,
    /// Minimum brightness gap between screen and surroundings.
    pub min_contrast: f64,
}

impl Default for ScreenDetectParams {
    fn default() -> Self {
        Self {
            physical_width_mm: 64.0,
            min_area_fraction: 0.05,
            min_contrast: 30.0,
        }
    }
}

/// Box mean and standard deviation from integral images.
struct BoxStats {
    w: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl BoxStats {
    fn new(img: &Image) -> BoxStats {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut sum = vec![0.0; (w + 1) * (h + 1)];
        let mut sq = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            let (mut rs, mut rq) = (0.0, 0.0);
            for x in 0..w {
                let v = img.get(x as u32, y as u32) as f64;
                rs += v;
                rq += v * v;
                sum[(y + 1) * (w + 1) + x + 1] = sum[y * (w + 1) + x + 1] + rs;
                sq[(y + 1) * (w + 1) + x + 1] = sq[y * (w + 1) + x + 1] + rq;
            }
        }
        BoxStats { w: w + 1, sum, sq }
    }

    fn window(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> (f64, f64) {
        let at = |t: &Vec<f64>, x: usize, y: usize| t[y * self.w + x];
        let n = ((x1 - x0) * (y1 - y0)) as f64;
        let s = at(&self.sum, x1, y1) - at(&self.sum, x0, y1) - at(&self.sum, x1, y0) + at(&self.sum, x0, y0);
        let q = at(&self.sq, x1, y1) - at(&self.sq, x0, y1) - at(&self.sq, x1, y0) + at(&self.sq, x0, y0);
        let mean = s / n;
        (mean, (q / n - mean * mean).max(0.0).sqrt())
    }
}

fn median(mut v: Vec<u8>) -> f64 {
    v.sort_unstable();
    v[v.len() / 2] as f64
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn convex_hull(mut pts: Vec<Point2>) -> Vec<Point2> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Minimum-area enclosing rectangle of a convex polygon: the unit edge
/// direction it is aligned with.
fn min_area_direction(hull: &[Point2]) -> Point2 {
    let mut best = (f64::INFINITY, Point2::new(1.0, 0.0));
    for i in 0..hull.len() {
        let e = hull[(i + 1) % hull.len()].sub(&hull[i]);
        let n = e.norm();
        if n < 1e-9 {
            continue;
        }
        let u = e.scale(1.0 / n);
        let v = Point2::new(-u.y, u.x);
        let (mut a0, mut a1, mut b0, mut b1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in hull {
            let a = p.dot(&u);
            let b = p.dot(&v);
            a0 = a0.min(a);
            a1 = a1.max(a);
            b0 = b0.min(b);
            b1 = b1.max(b);
        }
        let area = (a1 - a0) * (b1 - b0);
        if area < best.0 {
            best = (area, u);
        }
    }
    best.1
}

/// Line through a point cloud as (point on line, unit direction), by total
/// least squares.
fn fit_line(pts: &[Point2]) -> Option<(Point2, Point2)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.x - cx, p.y - cy);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some((Point2::new(cx, cy), Point2::new(theta.cos(), theta.sin())))
}

fn intersect(a: (Point2, Point2), b: (Point2, Point2)) -> Option<Point2> {
    let (p, r) = a;
    let (q, s) = b;
    let denom = r.x * s.y - r.y * s.x;
    if denom.abs() < 1e-9 {
        return None;
    }
    let d = q.sub(&p);
    let t = (d.x * s.y - d.y * s.x) / denom;
    Some(p.add(&r.scale(t)))
}

/// Finds the bright screen region, fits its four sides to sub-pixel
/// threshold crossings and returns the corner quad (top-left, top-right,
/// bottom-right, bottom-left) with deflection and scale attached.
pub fn detect_screen(photo: &Image, params: &ScreenDetectParams) -> Result<ScreenQuad, VisionError> {
    let gray = photo.to_gray();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let data = gray.data();
    if w < 8 || h < 8 {
        return Err(VisionError::NoScreenFound);
    }

    // seed: brightest, flattest window on a coarse grid
    let stats = BoxStats::new(&gray);
    let half = (w.min(h) / 40).max(2);
    let step = half.max(1);
    let mut seed = None;
    let mut best = f64::NEG_INFINITY;
    let mut y = half;
    while y + half < h {
        let mut x = half;
        while x + half < w {
            let (mean, sd) = stats.window(x - half, y - half, x + half + 1, y + half + 1);
            let score = mean - 2.0 * sd;
            if score > best {
                best = score;
                seed = Some((x, y));
            }
            x += step;
        }
        y += step;
    }
    let (sx, sy) = seed.ok_or(VisionError::NoScreenFound)?;

    let mut rim = Vec::with_capacity(2 * (w + h));
    for x in 0..w {
        rim.push(data[x]);
        rim.push(data[(h - 1) * w + x]);
    }
    for y in 0..h {
        rim.push(data[y * w]);
        rim.push(data[y * w + w - 1]);
    }
    let bg = median(rim);
    let mut seed_px = Vec::new();
    for y in sy - half..=sy + half {
        for x in sx - half..=sx + half {
            seed_px.push(data[y * w + x]);
        }
    }
    let fg = median(seed_px);
    if fg - bg < params.min_contrast {
        return Err(VisionError::NoScreenFound);
    }
    // Anything clearly different from the surroundings belongs to the
    // screen, so dark status bars and cutouts stay inside the region.
    let tau = (0.5 * (fg - bg)).min(25.0).max(0.5 * params.min_contrast);
    let on = |i: usize| (data[i] as f64 - bg).abs() >= tau;

    let mut inside = vec![false; w * h];
    let mut stack = vec![sy * w + sx];
    inside[sy * w + sx] = true;
    let mut area = 0usize;
    let mut touches_border = false;
    while let Some(i) = stack.pop() {
        area += 1;
        let (x, y) = (i % w, i / w);
        if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
            touches_border = true;
            continue;
        }
        for j in [i - 1, i + 1, i - w, i + w] {
            if !inside[j] && on(j) {
                inside[j] = true;
                stack.push(j);
            }
        }
    }
    if touches_border || (area as f64) < params.min_area_fraction * (w * h) as f64 {
        return Err(VisionError::NoScreenFound);
    }

    let center = |i: usize| Point2::new((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
    let boundary: Vec<Point2> = (0..w * h)
        .filter(|&i| inside[i] && [i - 1, i + 1, i - w, i + w].iter().any(|&j| !inside[j]))
        .map(center)
        .collect();
    let hull = convex_hull(boundary);
    if hull.len() < 3 {
        return Err(VisionError::NoScreenFound);
    }
    let u = min_area_direction(&hull);
    let v = Point2::new(-u.y, u.x);
    let (mut a0, mut a1, mut b0, mut b1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &hull {
        let (a, b) = (p.dot(&u), p.dot(&v));
        a0 = a0.min(a);
        a1 = a1.max(a);
        b0 = b0.min(b);
        b1 = b1.max(b);
    }
    // pixel centers of the hull sit half a pixel inside the true boundary
    let (a0, a1, b0, b1) = (a0 - 0.5, a1 + 0.5, b0 - 0.5, b1 + 0.5);

    // Each side: sample intensity profiles along the outward normal and take
    // the mid-level crossing between the inside and outside plateaus.
    let sample = |p: Point2| gray.sample_bilinear(p.x, p.y, bg);
    let corner_margin = 6.0;
    let mut lines = Vec::with_capacity(4);
    for (normal, level, lo, hi) in [
        (v.scale(-1.0), -b0, a0, a1),
        (u, a1, b0, b1),
        (v, b1, a0, a1),
        (u.scale(-1.0), -a0, b0, b1),
    ] {
        let tangent = Point2::new(-normal.y, normal.x);
        // position along the side is measured on the tangent axis
        let t_of = |p: &Point2| p.dot(&tangent);
        let base = normal.scale(level);
        let (t_lo, t_hi) = {
            let c0 = if normal.dot(&u).abs() > 0.5 { v.scale(lo) } else { u.scale(lo) };
            let c1 = if normal.dot(&u).abs() > 0.5 { v.scale(hi) } else { u.scale(hi) };
            let (x, y) = (t_of(&c0), t_of(&c1));
            (x.min(y) + corner_margin, x.max(y) - corner_margin)
        };
        let mut pts = Vec::new();
        let mut t = t_lo;
        while t <= t_hi {
            let anchor = base.add(&tangent.scale(t));
            let inner = sample(anchor.sub(&normal.scale(3.0)));
            let outer = sample(anchor.add(&normal.scale(3.0)));
            if (inner - outer).abs() >= params.min_contrast {
                let mid = 0.5 * (inner + outer);
                let steps = 24;
                let mut prev = (-3.0, inner);
                for k in 1..=steps {
                    let d = -3.0 + 6.0 * k as f64 / steps as f64;
                    let val = sample(anchor.add(&normal.scale(d)));
                    if (prev.1 - mid) * (val - mid) <= 0.0 && prev.1 != val {
                        let f = (prev.1 - mid) / (prev.1 - val);
                        pts.push(anchor.add(&normal.scale(prev.0 + f * (d - prev.0))));
                        break;
                    }
                    prev = (d, val);
                }
            }
            t += 1.0;
        }
        let mut line = fit_line(&pts).ok_or(VisionError::NoScreenFound)?;
        for band in [1.5, 0.75] {
            let kept: Vec<Point2> = pts
                .iter()
                .copied()
                .filter(|p| {
                    let r = p.sub(&line.0);
                    (r.x * line.1.y - r.y * line.1.x).abs() <= band
                })
                .collect();
            if kept.len() >= 2 {
                line = fit_line(&kept).expect("two points");
            }
        }
        lines.push(line);
    }

    let mut corners = Vec::with_capacity(4);
    for i in 0..4 {
        corners.push(intersect(lines[(i + 3) % 4], lines[i]).ok_or(VisionError::NoScreenFound)?);
    }
    // order clockwise on screen starting from the corner nearest the
    // upper-left diagonal
    let c = corners.iter().fold(Point2::new(0.0, 0.0), |acc, p| acc.add(p)).scale(0.25);
    corners.sort_by(|p, q| {
        let ap = (p.y - c.y).atan2(p.x - c.x);
        let aq = (q.y - c.y).atan2(q.x - c.x);
        ap.total_cmp(&aq)
    });
    let target = -3.0 * std::f64::consts::FRAC_PI_4;
    let start = (0..4)
        .min_by(|&i, &j| {
            let d = |k: usize| {
                let a = (corners[k].y - c.y).atan2(corners[k].x - c.x) - target;
                a.sin().atan2(a.cos()).abs()
            };
            d(i).total_cmp(&d(j))
        })
        .expect("four corners");
    let ordered = [
        corners[start],
        corners[(start + 1) % 4],
        corners[(start + 2) % 4],
        corners[(start + 3) % 4],
    ];
    let (deflection_angle, scale) = measure_deflection(&ordered, params.physical_width_mm)?;
    let quad = ScreenQuad {
        corners: ordered,
        deflection_angle,
        scale,
        origin: Point2::new(0.0, 0.0),
    };
    quad.validate()?;
    Ok(quad)
}
