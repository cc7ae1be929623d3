//! Text to glyph layout (domain transfer) and layout to raster (flatten).

use serde::{Deserialize, Serialize};

use super::canvas::{Canvas, GlyphBox};
use super::fonts::{FontId, FontPool};
use super::CaptchaError;
use crate::raster::{RasterImage, BLACK, MAX_SIDE};

/// Payloads longer than this many characters are wrapped.
pub const WRAP_THRESHOLD: usize = 64;
/// Maximum characters per wrapped line.
pub const WRAP_WIDTH: usize = 32;
pub const DEFAULT_MARGIN: u32 = 8;

/// A sentence to render.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextPayload {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language_tag: Option<String>,
}

impl TextPayload {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            language_tag: None,
        }
    }
}

/// 8-bit coverage mask of a single glyph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlyphMask {
    pub width: u32,
    pub height: u32,
    pub coverage: Vec<u8>,
}

impl GlyphMask {
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.coverage[(y * self.width + x) as usize]
    }

    pub fn is_blank(&self) -> bool {
        self.coverage.iter().all(|&c| c == 0)
    }

    /// Removes fully transparent borders. Returns the mask and the offset of
    /// its new top-left corner. A blank mask is returned unchanged.
    pub(crate) fn trimmed(self) -> (GlyphMask, i32, i32) {
        let (w, h) = (self.width, self.height);
        let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
        for y in 0..h {
            for x in 0..w {
                if self.get(x, y) != 0 {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        if x1 == 0 {
            return (self, 0, 0);
        }
        if (x0, y0, x1, y1) == (0, 0, w, h) {
            return (self, 0, 0);
        }
        let (nw, nh) = (x1 - x0, y1 - y0);
        let mut coverage = Vec::with_capacity((nw * nh) as usize);
        for y in y0..y1 {
            let row = (y * w) as usize;
            coverage.extend_from_slice(&self.coverage[row + x0 as usize..row + x1 as usize]);
        }
        (
            GlyphMask {
                width: nw,
                height: nh,
                coverage,
            },
            x0 as i32,
            y0 as i32,
        )
    }
}

/// One rendered character, positioned in layout space.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacedGlyph {
    pub ch: char,
    pub line: usize,
    /// Pen position and advance before any size change.
    pub pen_x: f32,
    pub advance: f32,
    pub baseline: f32,
    /// Top-left corner of `mask`.
    pub x: i32,
    pub y: i32,
    pub mask: GlyphMask,
    pub rotation_deg: f32,
    pub font: FontId,
    pub size: f32,
    pub color: [u8; 3],
}

impl PlacedGlyph {
    pub fn bounds(&self) -> GlyphBox {
        GlyphBox {
            x0: self.x,
            y0: self.y,
            x1: self.x + self.mask.width as i32,
            y1: self.y + self.mask.height as i32,
        }
    }
}

/// Glyphs in reading order.
#[derive(Clone, Debug, PartialEq)]
pub struct GlyphLayout {
    pub entries: Vec<PlacedGlyph>,
    pub line_height: f32,
}

impl GlyphLayout {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn bounds(&self) -> Option<GlyphBox> {
        self.entries
            .iter()
            .map(PlacedGlyph::bounds)
            .reduce(|a, b| a.union(&b))
    }
}

/// How the flattened canvas is sized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CanvasPolicy {
    /// Tight bounding box of the glyphs plus `margin` on every side, grown to
    /// at least `min_side` per axis with the content centred.
    AutoFit { margin: u32, min_side: u32 },
    /// Fixed size with the content centred.
    Fixed { width: u32, height: u32 },
}

impl Default for CanvasPolicy {
    fn default() -> Self {
        CanvasPolicy::AutoFit {
            margin: DEFAULT_MARGIN,
            min_side: 0,
        }
    }
}

/// Greedy word wrap at whitespace; words longer than `width` are split.
fn wrap_lines(text: &str) -> Vec<String> {
    if text.chars().count() <= WRAP_THRESHOLD {
        return vec![text.to_string()];
    }
    let mut lines = Vec::new();
    let mut current = String::new();
    for word in text.split_whitespace() {
        let mut word: Vec<char> = word.chars().collect();
        while word.len() > WRAP_WIDTH {
            if !current.is_empty() {
                lines.push(std::mem::take(&mut current));
            }
            lines.push(word.drain(..WRAP_WIDTH).collect());
        }
        let cur_len = current.chars().count();
        let needed = if cur_len == 0 { word.len() } else { cur_len + 1 + word.len() };
        if needed > WRAP_WIDTH && cur_len > 0 {
            lines.push(std::mem::take(&mut current));
        }
        if !current.is_empty() {
            current.push(' ');
        }
        current.extend(word);
    }
    if !current.is_empty() {
        lines.push(current);
    }
    lines
}

pub(crate) fn rasterize_glyph(
    fonts: &FontPool,
    font: &FontId,
    ch: char,
    size: f32,
) -> Result<(fontdue::Metrics, GlyphMask), CaptchaError> {
    let f = fonts.get(font)?;
    if ch.is_control() || f.lookup_glyph_index(ch) == 0 {
        return Err(CaptchaError::UnrenderableCharacter {
            code_point: ch as u32,
        });
    }
    let (metrics, coverage) = f.rasterize(ch, size);
    Ok((
        metrics,
        GlyphMask {
            width: metrics.width as u32,
            height: metrics.height as u32,
            coverage,
        },
    ))
}

/// Renders `payload` as black glyphs on an implied white canvas, one entry
/// per visible character. Whitespace only advances the pen.
pub fn render_plain_text(
    payload: &TextPayload,
    fonts: &FontPool,
    font: &FontId,
    size: f32,
) -> Result<GlyphLayout, CaptchaError> {
    if payload.text.trim().is_empty() {
        return Err(CaptchaError::EmptyPayload(payload.id.clone()));
    }
    if !(size.is_finite() && size > 0.0) {
        return Err(CaptchaError::ParamOutOfRange(format!("font size {size}")));
    }
    let f = fonts.get(font)?;
    let line_metrics = f
        .horizontal_line_metrics(size)
        .ok_or_else(|| CaptchaError::FontLoad {
            font: font.to_string(),
            reason: "missing horizontal metrics".into(),
        })?;
    let line_height = line_metrics.new_line_size.ceil();
    let mut entries = Vec::new();
    for (line, text) in wrap_lines(&payload.text).iter().enumerate() {
        let baseline = line_metrics.ascent.ceil() + line as f32 * line_height;
        let mut pen_x = 0.0f32;
        for ch in text.chars() {
            if ch.is_whitespace() {
                pen_x += f.metrics(' ', size).advance_width;
                continue;
            }
            let (metrics, mask) = rasterize_glyph(fonts, font, ch, size)?;
            if mask.width > 0 && mask.height > 0 && !mask.is_blank() {
                entries.push(PlacedGlyph {
                    ch,
                    line,
                    pen_x,
                    advance: metrics.advance_width,
                    baseline,
                    x: (pen_x + metrics.xmin as f32).round() as i32,
                    y: (baseline - metrics.ymin as f32 - metrics.height as f32).round() as i32,
                    mask,
                    rotation_deg: 0.0,
                    font: font.clone(),
                    size,
                    color: BLACK,
                });
            }
            pen_x += metrics.advance_width;
        }
    }
    if entries.is_empty() {
        return Err(CaptchaError::EmptyPayload(payload.id.clone()));
    }
    Ok(GlyphLayout {
        entries,
        line_height,
    })
}

/// Composites the layout onto a white canvas in painter's order. Glyph
/// coverage is binarised at 50% so untransformed text stays two-colored.
pub fn flatten(layout: &GlyphLayout, policy: CanvasPolicy) -> Result<RasterImage, CaptchaError> {
    Ok(flatten_canvas(layout, policy)?.to_image())
}

pub(crate) fn flatten_canvas(
    layout: &GlyphLayout,
    policy: CanvasPolicy,
) -> Result<Canvas, CaptchaError> {
    let bounds = layout.bounds().ok_or(CaptchaError::EmptyLayout)?;
    let (bw, bh) = (bounds.width() as u32, bounds.height() as u32);
    let (width, height, off_x, off_y) = match policy {
        CanvasPolicy::AutoFit { margin, min_side } => {
            let w = (bw + 2 * margin).max(min_side);
            let h = (bh + 2 * margin).max(min_side);
            (w, h, (w - bw) / 2, (h - bh) / 2)
        }
        CanvasPolicy::Fixed { width, height } => {
            if bw > width || bh > height {
                return Err(CaptchaError::CanvasTooSmall {
                    needed: (bw, bh),
                    available: (width, height),
                });
            }
            (width, height, (width - bw) / 2, (height - bh) / 2)
        }
    };
    if width > MAX_SIDE || height > MAX_SIDE {
        return Err(CaptchaError::CanvasTooLarge { width, height });
    }
    let dx = off_x as i32 - bounds.x0;
    let dy = off_y as i32 - bounds.y0;
    let mut canvas = Canvas::blank(width, height);
    for g in &layout.entries {
        canvas.draw_glyph(g, dx, dy);
    }
    Ok(canvas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::captcha::fonts::MONO;

    fn mono() -> FontId {
        FontId::new(MONO)
    }

    #[test]
    fn hi_renders_two_upright_entries() {
        let l = render_plain_text(&TextPayload::new("a", "hi"), FontPool::bundled(), &mono(), 24.0)
            .unwrap();
        assert_eq!(l.len(), 2);
        assert!(l.entries.iter().all(|e| e.rotation_deg == 0.0 && e.color == BLACK));
    }

    #[test]
    fn spaces_advance_without_glyphs() {
        let text = "I Hate You";
        // oracle: count of non-space printable characters
        let expected = text.chars().filter(|c| !c.is_whitespace()).count();
        assert_eq!(expected, 8);
        let l = render_plain_text(&TextPayload::new("a", text), FontPool::bundled(), &mono(), 24.0)
            .unwrap();
        assert_eq!(l.len(), expected);
        for w in l.entries.windows(2) {
            assert!(w[0].pen_x < w[1].pen_x);
            assert!(w[0].x <= w[1].x);
        }
    }

    #[test]
    fn empty_or_blank_payload_is_rejected() {
        for t in ["", "   "] {
            assert!(matches!(
                render_plain_text(&TextPayload::new("e", t), FontPool::bundled(), &mono(), 24.0),
                Err(CaptchaError::EmptyPayload(_))
            ));
        }
    }

    #[test]
    fn unknown_font_and_unrenderable_char() {
        let p = TextPayload::new("a", "ok");
        assert!(matches!(
            render_plain_text(&p, FontPool::bundled(), &FontId::new("comic"), 24.0),
            Err(CaptchaError::UnknownFont(_))
        ));
        // U+E000 is a private-use code point absent from the bundled faces.
        let p = TextPayload::new("a", "a\u{E000}");
        assert!(matches!(
            render_plain_text(&p, FontPool::bundled(), &mono(), 24.0),
            Err(CaptchaError::UnrenderableCharacter { code_point: 0xE000 })
        ));
    }

    #[test]
    fn long_payload_wraps() {
        let text = "word ".repeat(20);
        let lines = wrap_lines(text.trim());
        assert!(lines.len() > 1);
        assert!(lines.iter().all(|l| l.chars().count() <= WRAP_WIDTH));
        let l = render_plain_text(&TextPayload::new("a", text), FontPool::bundled(), &mono(), 16.0)
            .unwrap();
        assert!(l.entries.iter().any(|e| e.line > 0));
        let short = wrap_lines("a short one");
        assert_eq!(short, vec!["a short one".to_string()]);
    }

    fn square_glyph(x: i32, y: i32, side: u32, color: [u8; 3]) -> PlacedGlyph {
        PlacedGlyph {
            ch: 'x',
            line: 0,
            pen_x: x as f32,
            advance: side as f32,
            baseline: (y + side as i32) as f32,
            x,
            y,
            mask: GlyphMask {
                width: side,
                height: side,
                coverage: vec![255; (side * side) as usize],
            },
            rotation_deg: 0.0,
            font: mono(),
            size: side as f32,
            color,
        }
    }

    #[test]
    fn autofit_adds_margin_on_each_side() {
        // oracle: bounding box 10x10 plus 2 * 8 margin
        let layout = GlyphLayout {
            entries: vec![square_glyph(3, -4, 10, BLACK)],
            line_height: 10.0,
        };
        let img = flatten(&layout, CanvasPolicy::default()).unwrap();
        assert_eq!((img.width(), img.height()), (26, 26));
        assert_eq!(img.get(8, 8), BLACK);
        assert_eq!(img.get(7, 8), crate::raster::WHITE);
        assert_eq!(img.get(17, 17), BLACK);
        assert_eq!(img.get(18, 17), crate::raster::WHITE);
    }

    #[test]
    fn empty_layout_cannot_flatten() {
        let layout = GlyphLayout {
            entries: vec![],
            line_height: 1.0,
        };
        assert!(matches!(
            flatten(&layout, CanvasPolicy::default()),
            Err(CaptchaError::EmptyLayout)
        ));
    }

    #[test]
    fn later_glyph_paints_over_earlier() {
        let red = [200, 0, 0];
        let blue = [0, 0, 200];
        let layout = GlyphLayout {
            entries: vec![square_glyph(0, 0, 10, red), square_glyph(5, 0, 10, blue)],
            line_height: 10.0,
        };
        let img = flatten(&layout, CanvasPolicy::AutoFit { margin: 0, min_side: 0 }).unwrap();
        assert_eq!(img.get(2, 2), red);
        assert_eq!(img.get(7, 2), blue);
    }

    #[test]
    fn fixed_canvas_too_small() {
        let layout = GlyphLayout {
            entries: vec![square_glyph(0, 0, 10, BLACK)],
            line_height: 10.0,
        };
        assert!(matches!(
            flatten(&layout, CanvasPolicy::Fixed { width: 8, height: 40 }),
            Err(CaptchaError::CanvasTooSmall { .. })
        ));
        let img = flatten(&layout, CanvasPolicy::Fixed { width: 40, height: 40 }).unwrap();
        assert_eq!(img.get(20, 20), BLACK);
    }
}
