//! Canny edge detection, binary closing and connected components.

use crate::geometry::Rect;
use crate::image::Image;

/// Binary mask with values in {0, 1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl EdgeMap {
    pub fn new(width: u32, height: u32) -> EdgeMap {
        EdgeMap {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize] != 0
    }

    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.data[(y * self.width + x) as usize] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn to_image(&self) -> Image {
        Image::from_raw(
            self.width,
            self.height,
            1,
            self.data.iter().map(|&v| v * 255).collect(),
        )
        .expect("edge map dimensions are valid")
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil().max(1.0) as i32;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur with replicated borders.
pub(crate) fn gaussian_blur(img: &Image, sigma: f64) -> Vec<f32> {
    let (w, h) = (img.width() as i32, img.height() as i32);
    let gray = img.to_gray();
    let src: Vec<f32> = gray.data().iter().map(|&v| v as f32).collect();
    if sigma <= 0.0 {
        return src;
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i32;
    let mut tmp = vec![0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f64;
            for (i, kv) in k.iter().enumerate() {
                let xx = (x + i as i32 - r).clamp(0, w - 1);
                acc += kv * src[(y * w + xx) as usize] as f64;
            }
            tmp[(y * w + x) as usize] = acc as f32;
        }
    }
    let mut out = vec![0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f64;
            for (i, kv) in k.iter().enumerate() {
                let yy = (y + i as i32 - r).clamp(0, h - 1);
                acc += kv * tmp[(yy * w + x) as usize] as f64;
            }
            out[(y * w + x) as usize] = acc as f32;
        }
    }
    out
}

/// Canny edges with the default smoothing σ = 1.4. Thresholds apply to the
/// raw Sobel magnitude.
pub fn canny(img: &Image, low: f64, high: f64) -> EdgeMap {
    canny_with_sigma(img, low, high, 1.4)
}

pub fn canny_with_sigma(img: &Image, low: f64, high: f64, sigma: f64) -> EdgeMap {
    assert!(0.0 <= low && low <= high, "thresholds must satisfy 0 <= low <= high");
    let (w, h) = (img.width() as usize, img.height() as usize);
    let s = gaussian_blur(img, sigma);
    let at = |x: usize, y: usize| s[y * w + x];
    let mut mag = vec![0f32; w * h];
    let mut dir = vec![0u8; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let m = gx.hypot(gy);
            mag[y * w + x] = m;
            // quantize gradient direction to 0°, 45°, 90°, 135°
            let mut a = gy.atan2(gx).to_degrees();
            if a < 0.0 {
                a += 180.0;
            }
            dir[y * w + x] = if !(22.5..157.5).contains(&a) {
                0
            } else if a < 67.5 {
                1
            } else if a < 112.5 {
                2
            } else {
                3
            };
        }
    }
    let mut nms = vec![0f32; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let m = mag[y * w + x];
            if m <= 0.0 {
                continue;
            }
            let (dx, dy): (isize, isize) = match dir[y * w + x] {
                0 => (1, 0),
                1 => (1, 1),
                2 => (0, 1),
                _ => (-1, 1),
            };
            let fwd = mag[(y as isize + dy) as usize * w + (x as isize + dx) as usize];
            let back = mag[(y as isize - dy) as usize * w + (x as isize - dx) as usize];
            // strict on one side breaks plateau ties
            if m > back && m >= fwd {
                nms[y * w + x] = m;
            }
        }
    }
    let (low, high) = (low as f32, high as f32);
    let mut out = EdgeMap::new(w as u32, h as u32);
    let mut stack = Vec::new();
    for i in 0..w * h {
        if nms[i] >= high && out.data[i] == 0 {
            out.data[i] = 1;
            stack.push(i);
            while let Some(j) = stack.pop() {
                let (jx, jy) = ((j % w) as isize, (j / w) as isize);
                for ny in jy - 1..=jy + 1 {
                    for nx in jx - 1..=jx + 1 {
                        if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let k = ny as usize * w + nx as usize;
                        if out.data[k] == 0 && nms[k] >= low && nms[k] > 0.0 {
                            out.data[k] = 1;
                            stack.push(k);
                        }
                    }
                }
            }
        }
    }
    out
}

/// 1-D running max or min over a window of radius `r`, ignoring
/// out-of-range taps.
fn sweep(line: &[u8], r: usize, dilate: bool, out: &mut Vec<u8>) {
    out.clear();
    let n = line.len();
    let mut prefix = vec![0u32; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + line[i] as u32;
    }
    for i in 0..n {
        let lo = i.saturating_sub(r);
        let hi = (i + r + 1).min(n);
        let ones = prefix[hi] - prefix[lo];
        let v = if dilate {
            ones > 0
        } else {
            ones as usize == hi - lo
        };
        out.push(v as u8);
    }
}

fn separable(map: &EdgeMap, r: usize, dilate: bool) -> EdgeMap {
    let (w, h) = (map.width as usize, map.height as usize);
    let mut tmp = EdgeMap::new(map.width, map.height);
    let mut buf = Vec::with_capacity(w.max(h));
    for y in 0..h {
        sweep(&map.data[y * w..(y + 1) * w], r, dilate, &mut buf);
        tmp.data[y * w..(y + 1) * w].copy_from_slice(&buf);
    }
    let mut out = EdgeMap::new(map.width, map.height);
    let mut col = vec![0u8; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = tmp.data[y * w + x];
        }
        sweep(&col, r, dilate, &mut buf);
        for y in 0..h {
            out.data[y * w + x] = buf[y];
        }
    }
    out
}

pub fn dilate(map: &EdgeMap, kernel: u32) -> EdgeMap {
    separable(map, (kernel / 2) as usize, true)
}

/// Erosion where taps outside the map are ignored.
pub fn erode(map: &EdgeMap, kernel: u32) -> EdgeMap {
    separable(map, (kernel / 2) as usize, false)
}

/// Dilation followed by erosion with a `kernel`×`kernel` square.
pub fn morph_close(edges: &EdgeMap, kernel: u32) -> EdgeMap {
    assert!(kernel >= 1 && kernel % 2 == 1, "kernel must be odd and >= 1");
    if kernel == 1 {
        return edges.clone();
    }
    erode(&dilate(edges, kernel), kernel)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Component {
    pub bounds: Rect,
    pub pixels: usize,
}

/// 8-connected components of the set pixels, in raster order of their
/// first pixel.
pub fn connected_components(map: &EdgeMap) -> Vec<Component> {
    components_of(map.width, map.height, |i| map.data[i] != 0)
}

pub(crate) fn components_of(width: u32, height: u32, on: impl Fn(usize) -> bool) -> Vec<Component> {
    let (w, h) = (width as usize, height as usize);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || !on(start) {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut pixels = 0;
        while let Some(j) = stack.pop() {
            let (jx, jy) = (j % w, j / w);
            pixels += 1;
            x0 = x0.min(jx);
            y0 = y0.min(jy);
            x1 = x1.max(jx);
            y1 = y1.max(jy);
            for ny in jy.saturating_sub(1)..=(jy + 1).min(h - 1) {
                for nx in jx.saturating_sub(1)..=(jx + 1).min(w - 1) {
                    let k = ny * w + nx;
                    if !seen[k] && on(k) {
                        seen[k] = true;
                        stack.push(k);
                    }
                }
            }
        }
        out.push(Component {
            bounds: Rect::from_extents(x0 as i32, y0 as i32, x1 as i32, y1 as i32),
            pixels,
        });
    }
    out
}
