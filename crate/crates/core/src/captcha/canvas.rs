//! Layered compositing surface for the image-level transforms.
//!
//! The flattened captcha is kept as a background layer plus a foreground
//! color layer with its alpha ("ink"). Background transforms only touch the
//! background layer so the text stays on top; occluders are drawn into the
//! foreground.

use serde::{Deserialize, Serialize};

use super::layout::PlacedGlyph;
use crate::raster::{polyline_coverage, stroke_bounds, Plane, RasterImage, WHITE};

/// Axis-aligned box, `x1`/`y1` exclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlyphBox {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl GlyphBox {
    pub fn width(&self) -> i32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> i32 {
        self.y1 - self.y0
    }

    pub fn union(&self, o: &GlyphBox) -> GlyphBox {
        GlyphBox {
            x0: self.x0.min(o.x0),
            y0: self.y0.min(o.y0),
            x1: self.x1.max(o.x1),
            y1: self.y1.max(o.y1),
        }
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.x0 >= 0 && self.y0 >= 0 && self.x1 <= width as i32 && self.y1 <= height as i32
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Canvas {
    bg: Plane,
    fg: Plane,
    ink: Plane,
    background: [u8; 3],
    glyph_boxes: Vec<GlyphBox>,
}

impl Canvas {
    pub(crate) fn blank(width: u32, height: u32) -> Self {
        let (w, h) = (width as usize, height as usize);
        Self {
            bg: Plane::new(w, h, 3, &[255.0, 255.0, 255.0]),
            fg: Plane::new(w, h, 3, &[0.0, 0.0, 0.0]),
            ink: Plane::new(w, h, 1, &[0.0]),
            background: WHITE,
            glyph_boxes: Vec::new(),
        }
    }

    /// Wraps an existing raster as pure background. The nominal background
    /// color is the most frequent pixel value.
    pub fn from_image(img: &RasterImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut bg = Plane::new(w, h, 3, &[0.0, 0.0, 0.0]);
        for (dst, src) in bg.data.chunks_exact_mut(3).zip(img.pixels().chunks_exact(3)) {
            for c in 0..3 {
                dst[c] = src[c] as f32;
            }
        }
        let mut counts = std::collections::HashMap::new();
        for p in img.pixels().chunks_exact(3) {
            *counts.entry([p[0], p[1], p[2]]).or_insert(0usize) += 1;
        }
        let background = counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(c, _)| c)
            .unwrap_or(WHITE);
        Self {
            bg,
            fg: Plane::new(w, h, 3, &[0.0, 0.0, 0.0]),
            ink: Plane::new(w, h, 1, &[0.0]),
            background,
            glyph_boxes: Vec::new(),
        }
    }

    pub fn width(&self) -> u32 {
        self.bg.width as u32
    }

    pub fn height(&self) -> u32 {
        self.bg.height as u32
    }

    pub fn background(&self) -> [u8; 3] {
        self.background
    }

    /// Canvas-space boxes of the glyphs composited by flatten, adjusted for
    /// any later geometric warps.
    pub fn glyph_boxes(&self) -> &[GlyphBox] {
        &self.glyph_boxes
    }

    pub fn to_image(&self) -> RasterImage {
        let n = self.bg.width * self.bg.height;
        let mut pixels = Vec::with_capacity(n * 3);
        for i in 0..n {
            let a = self.ink.data[i];
            for c in 0..3 {
                let v = a * self.fg.data[i * 3 + c] + (1.0 - a) * self.bg.data[i * 3 + c];
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
        RasterImage::from_raw(self.width(), self.height(), pixels)
            .expect("canvas dimensions are validated on construction")
    }

    pub(crate) fn draw_glyph(&mut self, g: &PlacedGlyph, dx: i32, dy: i32) {
        let color = g.color.map(|c| c as f32);
        let ox = g.x + dx;
        let oy = g.y + dy;
        for my in 0..g.mask.height {
            for mx in 0..g.mask.width {
                if g.mask.get(mx, my) < 128 {
                    continue;
                }
                let x = ox + mx as i32;
                let y = oy + my as i32;
                if x < 0 || y < 0 || x >= self.bg.width as i32 || y >= self.bg.height as i32 {
                    continue;
                }
                let (x, y) = (x as usize, y as usize);
                self.fg.at_mut(x, y).copy_from_slice(&color);
                self.ink.at_mut(x, y)[0] = 1.0;
            }
        }
        let b = g.bounds();
        self.glyph_boxes.push(GlyphBox {
            x0: b.x0 + dx,
            y0: b.y0 + dy,
            x1: b.x1 + dx,
            y1: b.y1 + dy,
        });
    }

    /// Replaces the background layer everywhere.
    pub(crate) fn fill_background(&mut self, color: [u8; 3]) {
        let c = color.map(|v| v as f32);
        for px in self.bg.data.chunks_exact_mut(3) {
            px.copy_from_slice(&c);
        }
        self.background = color;
    }

    pub(crate) fn set_background_pixel(&mut self, x: usize, y: usize, color: [u8; 3]) {
        let px = self.bg.at_mut(x, y);
        for c in 0..3 {
            px[c] = color[c] as f32;
        }
    }

    pub(crate) fn background_pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let p = self.bg.at(x, y);
        [p[0] as u8, p[1] as u8, p[2] as u8]
    }

    /// Strokes a polyline into the background layer.
    pub(crate) fn stroke_background(&mut self, points: &[(f32, f32)], width: f32, color: [u8; 3]) {
        let Some((x0, y0, x1, y1)) = stroke_bounds(points, width, self.bg.width, self.bg.height)
        else {
            return;
        };
        for y in y0..=y1 {
            for x in x0..=x1 {
                let cov = polyline_coverage((x as f32 + 0.5, y as f32 + 0.5), points, width);
                if cov >= 0.5 {
                    self.set_background_pixel(x, y, color);
                }
            }
        }
    }

    /// Strokes a polyline over the text with antialiased coverage.
    pub(crate) fn stroke_foreground(&mut self, points: &[(f32, f32)], width: f32, color: [u8; 3]) {
        let Some((x0, y0, x1, y1)) = stroke_bounds(points, width, self.bg.width, self.bg.height)
        else {
            return;
        };
        let c = color.map(|v| v as f32);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let a = polyline_coverage((x as f32 + 0.5, y as f32 + 0.5), points, width);
                if a <= 0.0 {
                    continue;
                }
                let old_a = self.ink.at(x, y)[0];
                let new_a = a + old_a * (1.0 - a);
                let fg = self.fg.at_mut(x, y);
                for ch in 0..3 {
                    fg[ch] = (a * c[ch] + old_a * (1.0 - a) * fg[ch]) / new_a;
                }
                self.ink.at_mut(x, y)[0] = new_a;
            }
        }
    }

    /// Vertical sine displacement of every column, padding `pad` rows above
    /// and below. Samples outside the source clamp to the edge for color
    /// layers and are transparent for ink.
    pub(crate) fn wave(&mut self, amplitude: f32, wavelength: f32, phase: f32, pad: u32) {
        let w = self.bg.width;
        let h = self.bg.height + 2 * pad as usize;
        let mut bg = Plane::new(w, h, 3, &[0.0; 3]);
        let mut fg = Plane::new(w, h, 3, &[0.0; 3]);
        let mut ink = Plane::new(w, h, 1, &[0.0]);
        let src_h = self.bg.height as f32;
        let mut tmp = [0.0f32; 3];
        for x in 0..w {
            let dy = amplitude
                * (2.0 * std::f32::consts::PI * x as f32 / wavelength + phase).sin();
            for y in 0..h {
                let sy = y as f32 - pad as f32 - dy;
                self.bg.sample_clamped(x as f32, sy, &mut tmp);
                bg.at_mut(x, y).copy_from_slice(&tmp);
                self.fg.sample_clamped(x as f32, sy, &mut tmp);
                fg.at_mut(x, y).copy_from_slice(&tmp);
                if sy > -1.0 && sy < src_h {
                    self.ink.sample_clamped(x as f32, sy, &mut tmp[..1]);
                    // fade the row that straddles the border
                    let edge = if sy < 0.0 {
                        1.0 + sy
                    } else if sy > src_h - 1.0 {
                        src_h - sy
                    } else {
                        1.0
                    };
                    ink.at_mut(x, y)[0] = tmp[0] * edge;
                }
            }
        }
        self.bg = bg;
        self.fg = fg;
        self.ink = ink;
        let a = amplitude.abs().ceil() as i32;
        for b in &mut self.glyph_boxes {
            b.y0 = b.y0 + pad as i32 - a;
            b.y1 = b.y1 + pad as i32 + a;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_image_round_trips() {
        let mut img = RasterImage::filled(6, 4, [9, 9, 9]).unwrap();
        img.put(1, 1, [1, 2, 3]);
        let c = Canvas::from_image(&img);
        assert_eq!(c.background(), [9, 9, 9]);
        assert_eq!(c.to_image(), img);
    }

    #[test]
    fn background_change_keeps_text() {
        let mut c = Canvas::blank(4, 4);
        c.fg.at_mut(1, 1).copy_from_slice(&[10.0, 20.0, 30.0]);
        c.ink.at_mut(1, 1)[0] = 1.0;
        c.fill_background([200, 100, 0]);
        let img = c.to_image();
        assert_eq!(img.get(1, 1), [10, 20, 30]);
        assert_eq!(img.get(0, 0), [200, 100, 0]);
    }

    #[test]
    fn wave_pads_by_requested_rows() {
        let mut c = Canvas::blank(40, 32);
        c.wave(3.0, 20.0, 0.0, 3);
        assert_eq!((c.width(), c.height()), (40, 38));
    }
}
