//! Bitmap glyph library shared by the screen renderer and the text
//! detector.
//!
//! Each glyph is a 5×7 cell drawn at an integer scale. Templates are stored
//! as grayscale cell images with ink at 0 and paper at 255.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::geometry::Rect;
use crate::image::{Image, ImageError};

pub const CELL_COLS: u32 = 5;
pub const CELL_ROWS: u32 = 7;
/// Horizontal advance in cell columns (glyph plus one blank column).
pub const ADVANCE_COLS: u32 = 6;

#[derive(Debug, Error)]
pub enum GlyphError {
    #[error("glyph library is empty")]
    Empty,
    #[error("glyph template {0:?} has inconsistent size")]
    Size(String),
    #[error("cannot derive a character from template name {0:?}")]
    Name(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const FONT: &[(char, [&str; 7])] = &[
    ('a', [".....", ".....", ".###.", "....#", ".####", "#...#", ".####"]),
    ('b', ["#....", "#....", "#.##.", "##..#", "#...#", "#...#", "####."]),
    ('c', [".....", ".....", ".###.", "#....", "#....", "#...#", ".###."]),
    ('d', ["....#", "....#", ".##.#", "#..##", "#...#", "#...#", ".####"]),
    ('e', [".....", ".....", ".###.", "#...#", "#####", "#....", ".###."]),
    ('f', ["..##.", ".#..#", ".#...", "###..", ".#...", ".#...", ".#..."]),
    ('g', [".....", ".####", "#...#", "#...#", ".####", "....#", ".###."]),
    ('h', ["#....", "#....", "#.##.", "##..#", "#...#", "#...#", "#...#"]),
    ('i', ["..#..", ".....", ".##..", "..#..", "..#..", "..#..", ".###."]),
    ('j', ["...#.", ".....", "..##.", "...#.", "...#.", "#..#.", ".##.."]),
    ('k', ["#....", "#....", "#..#.", "#.#..", "##...", "#.#..", "#..#."]),
    ('l', [".##..", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."]),
    ('m', [".....", ".....", "##.#.", "#.#.#", "#.#.#", "#...#", "#...#"]),
    ('n', [".....", ".....", "#.##.", "##..#", "#...#", "#...#", "#...#"]),
    ('o', [".....", ".....", ".###.", "#...#", "#...#", "#...#", ".###."]),
    ('p', [".....", "####.", "#...#", "#...#", "####.", "#....", "#...."]),
    ('q', [".....", ".####", "#...#", "#...#", ".####", "....#", "....#"]),
    ('r', [".....", ".....", "#.##.", "##..#", "#....", "#....", "#...."]),
    ('s', [".....", ".....", ".####", "#....", ".###.", "....#", "####."]),
    ('t', [".#...", ".#...", "###..", ".#...", ".#...", ".#..#", "..##."]),
    ('u', [".....", ".....", "#...#", "#...#", "#...#", "#..##", ".##.#"]),
    ('v', [".....", ".....", "#...#", "#...#", "#...#", ".#.#.", "..#.."]),
    ('w', [".....", ".....", "#...#", "#...#", "#.#.#", "#.#.#", ".#.#."]),
    ('x', [".....", ".....", "#...#", ".#.#.", "..#..", ".#.#.", "#...#"]),
    ('y', [".....", "#...#", "#...#", "#...#", ".####", "....#", ".###."]),
    ('z', [".....", ".....", "#####", "...#.", "..#..", ".#...", "#####"]),
    ('0', [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."]),
    ('1', ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."]),
    ('2', [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"]),
    ('3', ["#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."]),
    ('4', ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."]),
    ('5', ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."]),
    ('6', ["..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."]),
    ('7', ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."]),
    ('8', [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."]),
    ('9', [".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Glyph {
    pub ch: char,
    /// Full cell, ink 0, paper 255.
    pub cell: Image,
    /// Ink bounding box within the cell.
    pub ink: Rect,
    /// Ink crop with a one-pixel paper margin, used for matching.
    pub template: Image,
}

impl Glyph {
    fn from_cell(ch: char, cell: Image) -> Option<Glyph> {
        let mut ink: Option<Rect> = None;
        for y in 0..cell.height() {
            for x in 0..cell.width() {
                if cell.get(x, y) < 128 {
                    let px = Rect::new(x as i32, y as i32, 1, 1);
                    ink = Some(ink.map_or(px, |r| r.union(&px)));
                }
            }
        }
        let ink = ink?;
        let mut template = Image::gray(ink.width as u32 + 2, ink.height as u32 + 2, 255);
        for y in 0..ink.height {
            for x in 0..ink.width {
                let v = cell.get((ink.x + x) as u32, (ink.y + y) as u32);
                template.set(x as u32 + 1, y as u32 + 1, v);
            }
        }
        Some(Glyph {
            ch,
            cell,
            ink,
            template,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlyphLibrary {
    scale: u32,
    glyphs: BTreeMap<char, Glyph>,
}

impl GlyphLibrary {
    /// The built-in lowercase-and-digits font at the given pixel scale.
    pub fn builtin(scale: u32) -> GlyphLibrary {
        assert!(scale >= 1);
        let glyphs = FONT
            .iter()
            .map(|(ch, rows)| {
                let mut cell = Image::gray(CELL_COLS * scale, CELL_ROWS * scale, 255);
                for (r, row) in rows.iter().enumerate() {
                    for (c, b) in row.bytes().enumerate() {
                        if b == b'#' {
                            cell.fill_rect(
                                c as i32 * scale as i32,
                                r as i32 * scale as i32,
                                scale as i32,
                                scale as i32,
                                0,
                            );
                        }
                    }
                }
                (*ch, Glyph::from_cell(*ch, cell).expect("font glyphs have ink"))
            })
            .collect();
        GlyphLibrary { scale, glyphs }
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn cell_width(&self) -> u32 {
        CELL_COLS * self.scale
    }

    pub fn cell_height(&self) -> u32 {
        CELL_ROWS * self.scale
    }

    pub fn advance(&self) -> u32 {
        ADVANCE_COLS * self.scale
    }

    pub fn is_empty(&self) -> bool {
        self.glyphs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.glyphs.len()
    }

    pub fn get(&self, ch: char) -> Option<&Glyph> {
        self.glyphs.get(&ch)
    }

    pub fn glyphs(&self) -> impl Iterator<Item = &Glyph> {
        self.glyphs.values()
    }

    pub fn contains(&self, ch: char) -> bool {
        ch == ' ' || self.glyphs.contains_key(&ch)
    }

    /// Writes one `<char>.png` cell image per glyph.
    pub fn save_dir(&self, dir: &Path) -> Result<(), GlyphError> {
        std::fs::create_dir_all(dir)?;
        for g in self.glyphs.values() {
            g.cell.save_png(&dir.join(format!("{}.png", g.ch)))?;
        }
        Ok(())
    }

    /// Loads a directory of named PNG templates. The file stem is the
    /// character; every cell must have the same size, a multiple of 5×7.
    pub fn load_dir(dir: &Path) -> Result<GlyphLibrary, GlyphError> {
        let mut entries: Vec<_> = std::fs::read_dir(dir)?
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
            .collect();
        entries.sort();
        let mut glyphs = BTreeMap::new();
        let mut size = None;
        for path in entries {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let mut chars = stem.chars();
            let ch = match (chars.next(), chars.next()) {
                (Some(c), None) => c,
                _ => return Err(GlyphError::Name(stem)),
            };
            let cell = Image::load_png(&path)?.to_gray();
            let dims = (cell.width(), cell.height());
            if *size.get_or_insert(dims) != dims {
                return Err(GlyphError::Size(stem));
            }
            if let Some(g) = Glyph::from_cell(ch, cell) {
                glyphs.insert(ch, g);
            }
        }
        let (w, h) = size.ok_or(GlyphError::Empty)?;
        if w % CELL_COLS != 0 || h % CELL_ROWS != 0 || w / CELL_COLS != h / CELL_ROWS {
            return Err(GlyphError::Size(format!("{w}x{h}")));
        }
        if glyphs.is_empty() {
            return Err(GlyphError::Empty);
        }
        Ok(GlyphLibrary {
            scale: w / CELL_COLS,
            glyphs,
        })
    }

    /// Ink bounds of `text` drawn with its cell origin at (`x`, `y`), or
    /// `None` for text without ink.
    pub fn text_ink_bounds(&self, text: &str, x: i32, y: i32) -> Option<Rect> {
        let mut bounds: Option<Rect> = None;
        for (i, ch) in text.chars().enumerate() {
            if let Some(g) = self.glyphs.get(&ch) {
                let r = Rect::new(
                    x + (i as u32 * self.advance()) as i32 + g.ink.x,
                    y + g.ink.y,
                    g.ink.width,
                    g.ink.height,
                );
                bounds = Some(bounds.map_or(r, |b| b.union(&r)));
            }
        }
        bounds
    }

    /// Paints `text` into `img` with cell origin at (`x`, `y`). Characters
    /// outside the library advance without ink.
    pub fn draw_text(&self, img: &mut Image, text: &str, x: i32, y: i32, ink: u8) {
        for (i, ch) in text.chars().enumerate() {
            let Some(g) = self.glyphs.get(&ch) else {
                continue;
            };
            let ox = x + (i as u32 * self.advance()) as i32;
            for cy in 0..g.cell.height() {
                for cx in 0..g.cell.width() {
                    if g.cell.get(cx, cy) < 128 {
                        let (px, py) = (ox + cx as i32, y + cy as i32);
                        if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height() {
                            img.set(px as u32, py as u32, ink);
                        }
                    }
                }
            }
        }
    }
}
