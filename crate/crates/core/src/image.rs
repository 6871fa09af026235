//! 8-bit raster images and their on-disk formats.
//!
//! Continuous image coordinates put the center of pixel `(i, j)` at
//! `(i + 0.5, j + 0.5)`; an image covers `[0, width] × [0, height]`.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {0}x{1}")]
    EmptyImage(u32, u32),
    #[error("unsupported channel count {0}")]
    Channels(u8),
    #[error("pixel buffer has {got} bytes, expected {expected}")]
    BufferSize { got: usize, expected: usize },
    #[error("png: {0}")]
    Png(String),
    #[error("raw image: {0}")]
    Raw(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl Image {
    pub fn from_raw(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage(width, height));
        }
        if channels != 1 && channels != 3 {
            return Err(ImageError::Channels(channels));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(ImageError::BufferSize {
                got: data.len(),
                expected,
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Grayscale image filled with `value`.
    ///
    /// Panics on zero dimensions.
    pub fn gray(width: u32, height: u32, value: u8) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        Self {
            width,
            height,
            channels: 1,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn is_gray(&self) -> bool {
        self.channels == 1
    }

    fn index(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    /// Gray value (channel 0 for RGB images; use [`Image::to_gray`] first
    /// for luminance).
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[self.index(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        let i = self.index(x, y);
        for c in 0..self.channels as usize {
            self.data[i + c] = v;
        }
    }

    pub fn get_checked(&self, x: i64, y: i64) -> Option<u8> {
        (x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64)
            .then(|| self.get(x as u32, y as u32))
    }

    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| {
                let l = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
                l.round().clamp(0.0, 255.0) as u8
            })
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }

    pub fn set_rgb(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        debug_assert_eq!(self.channels, 3);
        let i = self.index(x, y);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Fills the pixels whose centers fall inside `x..x+w` × `y..y+h`,
    /// clipped to the image.
    pub fn fill_rect(&mut self, x: i32, y: i32, w: i32, h: i32, v: u8) {
        let x0 = x.max(0);
        let y0 = y.max(0);
        let x1 = (x + w).min(self.width as i32);
        let y1 = (y + h).min(self.height as i32);
        for yy in y0..y1 {
            for xx in x0..x1 {
                self.set(xx as u32, yy as u32, v);
            }
        }
    }

    /// Bilinear sample of the gray channel at continuous coordinates.
    /// Taps outside the image read `fill`.
    pub fn sample_bilinear(&self, x: f64, y: f64, fill: f64) -> f64 {
        let fx = x - 0.5;
        let fy = y - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let ax = fx - x0;
        let ay = fy - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let tap = |xx: i64, yy: i64| self.get_checked(xx, yy).map_or(fill, |v| v as f64);
        let top = tap(x0, y0) * (1.0 - ax) + tap(x0 + 1, y0) * ax;
        let bottom = tap(x0, y0 + 1) * (1.0 - ax) + tap(x0 + 1, y0 + 1) * ax;
        top * (1.0 - ay) + bottom * ay
    }

    /// Mean absolute per-sample difference. Panics on mismatched shapes.
    pub fn mean_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!(
            (self.width, self.height, self.channels),
            (other.width, other.height, other.channels),
            "image shapes differ"
        );
        let total: u64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as i32 - *b as i32).unsigned_abs() as u64)
            .sum();
        total as f64 / self.data.len() as f64
    }

    /// Box-filter downsample to the given size (gray only).
    pub fn resize_area(&self, width: u32, height: u32) -> Image {
        let src = self.to_gray();
        if width == src.width && height == src.height {
            return src;
        }
        let sx = src.width as f64 / width as f64;
        let sy = src.height as f64 / height as f64;
        let mut out = Image::gray(width, height, 0);
        for y in 0..height {
            for x in 0..width {
                let cx = (x as f64 + 0.5) * sx;
                let cy = (y as f64 + 0.5) * sy;
                let v = if sx <= 1.0 && sy <= 1.0 {
                    src.sample_bilinear(cx, cy, 0.0)
                } else {
                    let x0 = (x as f64 * sx).floor() as u32;
                    let y0 = (y as f64 * sy).floor() as u32;
                    let x1 = (((x + 1) as f64 * sx).ceil() as u32).min(src.width).max(x0 + 1);
                    let y1 = (((y + 1) as f64 * sy).ceil() as u32).min(src.height).max(y0 + 1);
                    let mut acc = 0.0;
                    for yy in y0..y1 {
                        for xx in x0..x1 {
                            acc += src.get(xx, yy) as f64;
                        }
                    }
                    acc / ((x1 - x0) * (y1 - y0)) as f64
                };
                out.set(x, y, v.round().clamp(0.0, 255.0) as u8);
            }
        }
        out
    }

    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Image {
        let mut out = Image {
            width: w,
            height: h,
            channels: self.channels,
            data: Vec::with_capacity((w * h) as usize * self.channels as usize),
        };
        for yy in y..y + h {
            let start = self.index(x, yy);
            let end = start + w as usize * self.channels as usize;
            out.data.extend_from_slice(&self.data[start..end]);
        }
        out
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImageError> {
        let mut buf = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut buf, self.width, self.height);
            enc.set_color(if self.channels == 1 {
                png::ColorType::Grayscale
            } else {
                png::ColorType::Rgb
            });
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().map_err(|e| ImageError::Png(e.to_string()))?;
            w.write_image_data(&self.data)
                .map_err(|e| ImageError::Png(e.to_string()))?;
        }
        Ok(buf)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Image, ImageError> {
        let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder.read_info().map_err(|e| ImageError::Png(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| ImageError::Png(e.to_string()))?;
        buf.truncate(info.buffer_size());
        let (w, h) = (info.width, info.height);
        match info.color_type {
            png::ColorType::Grayscale => Image::from_raw(w, h, 1, buf),
            png::ColorType::Rgb => Image::from_raw(w, h, 3, buf),
            png::ColorType::GrayscaleAlpha => {
                Image::from_raw(w, h, 1, buf.chunks_exact(2).map(|p| p[0]).collect())
            }
            png::ColorType::Rgba => Image::from_raw(
                w,
                h,
                3,
                buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            ),
            png::ColorType::Indexed => Err(ImageError::Png("indexed color not expanded".into())),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        crate::harness::io::write_atomic(path, &self.encode_png()?)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Image, ImageError> {
        Image::decode_png(&std::fs::read(path)?)
    }

    /// Raw grayscale matrix: an ASCII header line `GRAY8 <width> <height>\n`
    /// followed by `width * height` row-major bytes.
    pub fn write_raw_gray<W: Write>(&self, w: W) -> Result<(), ImageError> {
        let gray = self.to_gray();
        let mut w = BufWriter::new(w);
        writeln!(w, "GRAY8 {} {}", gray.width, gray.height)?;
        w.write_all(&gray.data)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_raw_gray<R: Read>(mut r: R) -> Result<Image, ImageError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| ImageError::Raw("missing header".into()))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|e| ImageError::Raw(e.to_string()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "GRAY8" {
            return Err(ImageError::Raw(format!("bad header {header:?}")));
        }
        let parse = |s: &str| {
            s.parse::<u32>()
                .map_err(|e| ImageError::Raw(format!("{s:?}: {e}")))
        };
        let (w, h) = (parse(parts[1])?, parse(parts[2])?);
        Image::from_raw(w, h, 1, bytes[nl + 1..].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Image {
        let data = (0..12 * 7).map(|i| (i * 3 % 256) as u8).collect();
        Image::from_raw(12, 7, 1, data).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(
            Image::from_raw(0, 3, 1, vec![]),
            Err(ImageError::EmptyImage(0, 3))
        ));
        assert!(matches!(
            Image::from_raw(2, 2, 1, vec![0; 3]),
            Err(ImageError::BufferSize { .. })
        ));
        assert!(matches!(
            Image::from_raw(2, 2, 2, vec![0; 8]),
            Err(ImageError::Channels(2))
        ));
    }

    #[test]
    fn bilinear_at_pixel_centers_is_exact() {
        let img = ramp();
        for y in 0..7 {
            for x in 0..12 {
                let v = img.sample_bilinear(x as f64 + 0.5, y as f64 + 0.5, 0.0);
                assert_eq!(v, img.get(x, y) as f64);
            }
        }
    }

    #[test]
    fn bilinear_fills_outside() {
        let img = Image::gray(4, 4, 200);
        assert_eq!(img.sample_bilinear(-3.0, 2.0, 17.0), 17.0);
        // halfway across the border blends image and fill
        assert_eq!(img.sample_bilinear(0.0, 2.0, 0.0), 100.0);
    }

    #[test]
    fn png_and_raw_round_trip() {
        let img = ramp();
        assert_eq!(Image::decode_png(&img.encode_png().unwrap()).unwrap(), img);
        let mut raw = Vec::new();
        img.write_raw_gray(&mut raw).unwrap();
        assert!(raw.starts_with(b"GRAY8 12 7\n"));
        assert_eq!(Image::read_raw_gray(&raw[..]).unwrap(), img);
        let rgb = img.to_rgb();
        assert_eq!(Image::decode_png(&rgb.encode_png().unwrap()).unwrap(), rgb);
        assert_eq!(rgb.to_gray(), img);
    }

    #[test]
    fn area_downsample_averages() {
        let mut img = Image::gray(4, 2, 0);
        img.fill_rect(0, 0, 2, 2, 100);
        let small = img.resize_area(2, 1);
        assert_eq!(small.data(), &[100, 0]);
    }
}
