//! The captcha transformation steps and their seeded application.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::canvas::Canvas;
use super::fonts::{FontId, FontPool};
use super::layout::{rasterize_glyph, render_plain_text, GlyphLayout, GlyphMask, TextPayload};
use super::CaptchaError;

pub const MAX_ROTATION_DEG: f32 = 45.0;

/// Inclusive numeric range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Span<T> {
    pub min: T,
    pub max: T,
}

impl<T: Copy + PartialOrd + fmt::Display> Span<T> {
    pub const fn new(min: T, max: T) -> Self {
        Self { min, max }
    }

    fn check(&self, what: &str) -> Result<(), CaptchaError> {
        if self.min <= self.max {
            Ok(())
        } else {
            Err(CaptchaError::ParamOutOfRange(format!(
                "{what}: min {} > max {}",
                self.min, self.max
            )))
        }
    }
}

impl Span<f32> {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f32 {
        if self.min == self.max {
            self.min
        } else {
            rng.gen_range(self.min..=self.max)
        }
    }
}

impl Span<u32> {
    fn draw(&self, rng: &mut ChaCha8Rng) -> u32 {
        rng.gen_range(self.min..=self.max)
    }
}

impl Span<u8> {
    fn draw(&self, rng: &mut ChaCha8Rng) -> u8 {
        rng.gen_range(self.min..=self.max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccluderShape {
    Line,
    Arc,
    DotCluster,
}

/// Which representation a step operates on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Text,
    Glyph,
    Image,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StepKind {
    DomainTransfer,
    Rotation,
    Distortion,
    Waving,
    SolidBackground,
    NoisyBackground,
    FontSizeVariation,
    ColorVariation,
    OccludingSymbols,
}

impl StepKind {
    pub fn stage(self) -> StageKind {
        match self {
            StepKind::DomainTransfer => StageKind::Text,
            StepKind::Rotation
            | StepKind::Distortion
            | StepKind::FontSizeVariation
            | StepKind::ColorVariation => StageKind::Glyph,
            StepKind::Waving
            | StepKind::SolidBackground
            | StepKind::NoisyBackground
            | StepKind::OccludingSymbols => StageKind::Image,
        }
    }

    /// Ordinal label in the transformation table (T1, T3..T10).
    pub fn label(self) -> &'static str {
        match self {
            StepKind::DomainTransfer => "T1",
            StepKind::Rotation => "T3",
            StepKind::Distortion => "T4",
            StepKind::Waving => "T5",
            StepKind::SolidBackground => "T6",
            StepKind::NoisyBackground => "T7",
            StepKind::FontSizeVariation => "T8",
            StepKind::ColorVariation => "T9",
            StepKind::OccludingSymbols => "T10",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StepKind::DomainTransfer => "domain_transfer",
            StepKind::Rotation => "rotation",
            StepKind::Distortion => "distortion",
            StepKind::Waving => "waving",
            StepKind::SolidBackground => "solid_background",
            StepKind::NoisyBackground => "noisy_background",
            StepKind::FontSizeVariation => "font_size_variation",
            StepKind::ColorVariation => "color_variation",
            StepKind::OccludingSymbols => "occluding_symbols",
        }
    }
}

/// One parameterised transformation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformStep {
    /// Text to glyphs. `font: None` uses the first font of the profile pool.
    DomainTransfer { font: Option<FontId>, size_px: f32 },
    Rotation { degrees: Span<f32> },
    /// Smooth random displacement field, bilinearly interpolated from a
    /// `grid`x`grid` lattice of control vectors.
    Distortion { max_displacement_px: f32, grid: u32 },
    Waving { amplitude_px: Span<f32>, wavelength_px: Span<f32> },
    /// Per-channel draws from `channel` for a uniform background.
    SolidBackground { channel: Span<u8> },
    /// Salt-and-pepper pixels at `density` plus short random strokes.
    NoisyBackground { density: f32, strokes: Span<u32> },
    /// Per-glyph scale factor; with `vary_font` each glyph also draws a face
    /// from the profile's font pool.
    FontSizeVariation { scale: Span<f32>, vary_font: bool },
    /// Per-glyph color, each channel drawn from `channel`.
    ColorVariation { channel: Span<u8> },
    OccludingSymbols {
        count: Span<u32>,
        stroke_width: Span<f32>,
        shapes: Vec<OccluderShape>,
    },
}

impl TransformStep {
    pub fn kind(&self) -> StepKind {
        match self {
            TransformStep::DomainTransfer { .. } => StepKind::DomainTransfer,
            TransformStep::Rotation { .. } => StepKind::Rotation,
            TransformStep::Distortion { .. } => StepKind::Distortion,
            TransformStep::Waving { .. } => StepKind::Waving,
            TransformStep::SolidBackground { .. } => StepKind::SolidBackground,
            TransformStep::NoisyBackground { .. } => StepKind::NoisyBackground,
            TransformStep::FontSizeVariation { .. } => StepKind::FontSizeVariation,
            TransformStep::ColorVariation { .. } => StepKind::ColorVariation,
            TransformStep::OccludingSymbols { .. } => StepKind::OccludingSymbols,
        }
    }

    pub fn validate(&self) -> Result<(), CaptchaError> {
        let bad = |msg: String| Err(CaptchaError::ParamOutOfRange(msg));
        match self {
            TransformStep::DomainTransfer { size_px, .. } => {
                if !(size_px.is_finite() && *size_px >= 4.0 && *size_px <= 512.0) {
                    return bad(format!("font size {size_px} outside [4, 512]"));
                }
            }
            TransformStep::Rotation { degrees } => {
                degrees.check("rotation")?;
                if degrees.min < -MAX_ROTATION_DEG || degrees.max > MAX_ROTATION_DEG {
                    return bad(format!("rotation magnitude exceeds {MAX_ROTATION_DEG} degrees"));
                }
            }
            TransformStep::Distortion {
                max_displacement_px,
                grid,
            } => {
                if !(0.0..=32.0).contains(max_displacement_px) {
                    return bad(format!("distortion displacement {max_displacement_px}"));
                }
                if *grid < 2 {
                    return bad("distortion grid must be at least 2".into());
                }
            }
            TransformStep::Waving {
                amplitude_px,
                wavelength_px,
            } => {
                amplitude_px.check("waving amplitude")?;
                wavelength_px.check("waving wavelength")?;
                if amplitude_px.min < 0.0 || amplitude_px.max > 64.0 {
                    return bad("waving amplitude outside [0, 64]".into());
                }
                if wavelength_px.min <= 0.0 {
                    return bad("waving wavelength must be positive".into());
                }
            }
            TransformStep::SolidBackground { channel } => channel.check("background channel")?,
            TransformStep::NoisyBackground { density, strokes } => {
                if !(0.0..=1.0).contains(density) {
                    return bad(format!("noise density {density} outside [0, 1]"));
                }
                strokes.check("noise strokes")?;
            }
            TransformStep::FontSizeVariation { scale, .. } => {
                scale.check("font scale")?;
                if scale.min <= 0.0 || scale.max > 4.0 {
                    return bad("font scale outside (0, 4]".into());
                }
            }
            TransformStep::ColorVariation { channel } => channel.check("glyph color channel")?,
            TransformStep::OccludingSymbols {
                count,
                stroke_width,
                shapes,
            } => {
                count.check("occluder count")?;
                stroke_width.check("occluder stroke width")?;
                if stroke_width.min <= 0.0 {
                    return bad("occluder stroke width must be positive".into());
                }
                if shapes.is_empty() && count.max > 0 {
                    return bad("occluder shape set is empty".into());
                }
            }
        }
        Ok(())
    }
}

/// A primitive drawn by `OccludingSymbols`, in canvas coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub shape: OccluderShape,
    pub points: Vec<[f32; 2]>,
    pub stroke_width: f32,
    pub color: [u8; 3],
}

/// The values a step actually drew from its ranges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Realized {
    DomainTransfer { font: FontId, size_px: f32, glyphs: usize },
    Rotation { degrees: Vec<f32> },
    Distortion { peak_displacement_px: Vec<f32> },
    Waving { amplitude_px: f32, wavelength_px: f32, phase: f32, pad_px: u32 },
    SolidBackground { color: [u8; 3] },
    NoisyBackground { density: f32, noisy_pixels: usize, strokes: usize },
    FontSizeVariation { sizes_px: Vec<f32>, fonts: Vec<FontId> },
    ColorVariation { colors: Vec<[u8; 3]> },
    OccludingSymbols { primitives: Vec<Occluder> },
}

/// Log entry for one applied step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppliedStep {
    pub index: usize,
    pub kind: StepKind,
    pub label: String,
    pub realized: Realized,
}

/// The value flowing through a composition: text, then glyphs, then pixels.
#[derive(Clone, Debug)]
pub enum Stage {
    Text(TextPayload),
    Glyphs(GlyphLayout),
    Image(Canvas),
}

impl Stage {
    pub fn kind(&self) -> StageKind {
        match self {
            Stage::Text(_) => StageKind::Text,
            Stage::Glyphs(_) => StageKind::Glyph,
            Stage::Image(_) => StageKind::Image,
        }
    }
}

/// Environment a step may need besides its input.
#[derive(Clone, Copy, Debug)]
pub struct StepContext<'a> {
    pub fonts: &'a FontPool,
    /// Faces a style may draw from; the first one is its default.
    pub font_pool: &'a [FontId],
}

/// Applies one step. Glyph-level steps need [`Stage::Glyphs`], image-level
/// steps need [`Stage::Image`] and domain transfer needs [`Stage::Text`].
pub fn apply_transform(
    input: Stage,
    step: &TransformStep,
    rng: &mut ChaCha8Rng,
    ctx: StepContext<'_>,
) -> Result<(Stage, Realized), CaptchaError> {
    step.validate()?;
    let kind = step.kind();
    if kind.stage() != input.kind() {
        return Err(CaptchaError::StepStageMismatch {
            step: kind,
            expected: kind.stage(),
            found: input.kind(),
        });
    }
    match (input, step) {
        (Stage::Text(payload), TransformStep::DomainTransfer { font, size_px }) => {
            let font = match font {
                Some(f) => f.clone(),
                None => ctx
                    .font_pool
                    .first()
                    .cloned()
                    .unwrap_or_else(|| ctx.fonts.default_font().clone()),
            };
            let layout = render_plain_text(&payload, ctx.fonts, &font, *size_px)?;
            let glyphs = layout.len();
            Ok((
                Stage::Glyphs(layout),
                Realized::DomainTransfer {
                    font,
                    size_px: *size_px,
                    glyphs,
                },
            ))
        }
        (Stage::Glyphs(layout), step) => glyph_step(layout, step, rng, ctx),
        (Stage::Image(canvas), step) => image_step(canvas, step, rng),
        _ => unreachable!("stage checked above"),
    }
}

fn glyph_step(
    mut layout: GlyphLayout,
    step: &TransformStep,
    rng: &mut ChaCha8Rng,
    ctx: StepContext<'_>,
) -> Result<(Stage, Realized), CaptchaError> {
    let realized = match step {
        TransformStep::Rotation { degrees } => {
            let mut angles = Vec::with_capacity(layout.len());
            for g in &mut layout.entries {
                let a = degrees.draw(rng);
                angles.push(a);
                if a != 0.0 {
                    let (mask, dx, dy) = rotate_mask(&g.mask, a);
                    g.mask = mask;
                    g.x += dx;
                    g.y += dy;
                    g.rotation_deg += a;
                }
            }
            Realized::Rotation { degrees: angles }
        }
        TransformStep::Distortion {
            max_displacement_px,
            grid,
        } => {
            let mut peaks = Vec::with_capacity(layout.len());
            for g in &mut layout.entries {
                let (mask, dx, dy, peak) = distort_mask(&g.mask, *max_displacement_px, *grid, rng);
                g.mask = mask;
                g.x += dx;
                g.y += dy;
                peaks.push(peak);
            }
            Realized::Distortion {
                peak_displacement_px: peaks,
            }
        }
        TransformStep::FontSizeVariation { scale, vary_font } => {
            let pool: &[FontId] = if ctx.font_pool.is_empty() {
                ctx.fonts.ids()
            } else {
                ctx.font_pool
            };
            let mut sizes = Vec::with_capacity(layout.len());
            let mut fonts = Vec::with_capacity(layout.len());
            let mut max_scale = 1.0f32;
            let mut prev: Option<(usize, f32, f32, f32)> = None; // line, old pen end, new pen end, new origin
            for g in &mut layout.entries {
                let s = scale.draw(rng);
                max_scale = max_scale.max(s);
                let font = if *vary_font {
                    pool.choose(rng).cloned().unwrap_or_else(|| g.font.clone())
                } else {
                    g.font.clone()
                };
                let size = g.size * s;
                let (metrics, mask) = rasterize_glyph(ctx.fonts, &font, g.ch, size)?;
                let new_pen = match prev {
                    Some((line, old_end, new_end, _)) if line == g.line => {
                        new_end + (g.pen_x - old_end).max(0.0)
                    }
                    _ => g.pen_x,
                };
                prev = Some((g.line, g.pen_x + g.advance, new_pen + metrics.advance_width, 0.0));
                let mask = if g.rotation_deg != 0.0 {
                    rotate_mask(&mask, g.rotation_deg).0
                } else {
                    mask
                };
                g.x = (new_pen + metrics.xmin as f32).round() as i32;
                g.y = (g.baseline - metrics.ymin as f32 - metrics.height as f32).round() as i32;
                g.mask = mask;
                g.pen_x = new_pen;
                g.advance = metrics.advance_width;
                g.size = size;
                g.font = font.clone();
                sizes.push(size);
                fonts.push(font);
            }
            if max_scale > 1.0 {
                let extra = layout.line_height * (max_scale - 1.0);
                for g in &mut layout.entries {
                    let shift = (g.line as f32 * extra).round() as i32;
                    g.y += shift;
                    g.baseline += shift as f32;
                }
                layout.line_height *= max_scale;
            }
            Realized::FontSizeVariation {
                sizes_px: sizes,
                fonts,
            }
        }
        TransformStep::ColorVariation { channel } => {
            let mut colors = Vec::with_capacity(layout.len());
            for g in &mut layout.entries {
                let c = [channel.draw(rng), channel.draw(rng), channel.draw(rng)];
                g.color = c;
                colors.push(c);
            }
            Realized::ColorVariation { colors }
        }
        _ => unreachable!("glyph stage checked by caller"),
    };
    Ok((Stage::Glyphs(layout), realized))
}

fn image_step(
    mut canvas: Canvas,
    step: &TransformStep,
    rng: &mut ChaCha8Rng,
) -> Result<(Stage, Realized), CaptchaError> {
    let (w, h) = (canvas.width() as usize, canvas.height() as usize);
    let realized = match step {
        TransformStep::Waving {
            amplitude_px,
            wavelength_px,
        } => {
            let amplitude = amplitude_px.draw(rng);
            let wavelength = wavelength_px.draw(rng);
            let phase = rng.gen_range(0.0..std::f32::consts::TAU);
            let pad = amplitude.ceil() as u32;
            if canvas.height() + 2 * pad > crate::raster::MAX_SIDE {
                return Err(CaptchaError::CanvasTooLarge {
                    width: canvas.width(),
                    height: canvas.height() + 2 * pad,
                });
            }
            canvas.wave(amplitude, wavelength, phase, pad);
            Realized::Waving {
                amplitude_px: amplitude,
                wavelength_px: wavelength,
                phase,
                pad_px: pad,
            }
        }
        TransformStep::SolidBackground { channel } => {
            let c = [channel.draw(rng), channel.draw(rng), channel.draw(rng)];
            canvas.fill_background(c);
            Realized::SolidBackground { color: c }
        }
        TransformStep::NoisyBackground { density, strokes } => {
            let mut noisy = 0usize;
            for y in 0..h {
                for x in 0..w {
                    if *density > 0.0 && rng.gen::<f32>() < *density {
                        let old = canvas.background_pixel(x, y);
                        let c = distinct_color(rng, &[old, canvas.background()]);
                        canvas.set_background_pixel(x, y, c);
                        noisy += 1;
                    }
                }
            }
            let n = strokes.draw(rng) as usize;
            for _ in 0..n {
                let x0 = rng.gen_range(0.0..w as f32);
                let y0 = rng.gen_range(0.0..h as f32);
                let len = rng.gen_range(4.0..14.0f32);
                let ang = rng.gen_range(0.0..std::f32::consts::TAU);
                let p1 = (x0 + len * ang.cos(), y0 + len * ang.sin());
                let c = distinct_color(rng, &[canvas.background()]);
                canvas.stroke_background(&[(x0, y0), p1], 1.0, c);
            }
            Realized::NoisyBackground {
                density: *density,
                noisy_pixels: noisy,
                strokes: n,
            }
        }
        TransformStep::OccludingSymbols {
            count,
            stroke_width,
            shapes,
        } => {
            let n = count.draw(rng);
            let mut primitives = Vec::with_capacity(n as usize);
            for _ in 0..n {
                let shape = *shapes.choose(rng).expect("validated non-empty");
                let width = stroke_width.draw(rng);
                let color = [
                    rng.gen_range(0..=110u8),
                    rng.gen_range(0..=110u8),
                    rng.gen_range(0..=110u8),
                ];
                let (wf, hf) = (w as f32, h as f32);
                let points: Vec<(f32, f32)> = match shape {
                    OccluderShape::Line => {
                        let a = (rng.gen_range(0.0..wf * 0.3), rng.gen_range(0.0..hf));
                        let b = (rng.gen_range(wf * 0.7..wf), rng.gen_range(0.0..hf));
                        vec![a, b]
                    }
                    OccluderShape::Arc => {
                        let cx = rng.gen_range(0.0..wf);
                        let cy = rng.gen_range(0.0..hf);
                        let r = rng.gen_range(hf * 0.3..(wf.max(hf) * 0.6).max(hf * 0.3 + 1.0));
                        let start = rng.gen_range(0.0..std::f32::consts::TAU);
                        let sweep = rng.gen_range(0.5..2.5f32);
                        (0..=24)
                            .map(|i| {
                                let t = start + sweep * i as f32 / 24.0;
                                (cx + r * t.cos(), cy + r * t.sin())
                            })
                            .collect()
                    }
                    OccluderShape::DotCluster => {
                        let cx = rng.gen_range(0.0..wf);
                        let cy = rng.gen_range(0.0..hf);
                        let dots = rng.gen_range(5..=12);
                        (0..dots)
                            .map(|_| {
                                (
                                    cx + rng.gen_range(-8.0..8.0f32),
                                    cy + rng.gen_range(-8.0..8.0f32),
                                )
                            })
                            .collect()
                    }
                };
                match shape {
                    OccluderShape::DotCluster => {
                        for p in &points {
                            canvas.stroke_foreground(&[*p], width + 1.0, color);
                        }
                    }
                    _ => canvas.stroke_foreground(&points, width, color),
                }
                primitives.push(Occluder {
                    shape,
                    points: points.iter().map(|p| [p.0, p.1]).collect(),
                    stroke_width: width,
                    color,
                });
            }
            Realized::OccludingSymbols { primitives }
        }
        _ => unreachable!("image stage checked by caller"),
    };
    Ok((Stage::Image(canvas), realized))
}

/// Random color different from every color in `avoid`.
fn distinct_color(rng: &mut ChaCha8Rng, avoid: &[[u8; 3]]) -> [u8; 3] {
    let mut c: [u8; 3] = [rng.gen(), rng.gen(), rng.gen()];
    while avoid.contains(&c) {
        c[0] = c[0].wrapping_add(97);
        c[1] = c[1].wrapping_add(31);
    }
    c
}

/// Rotates a mask about its centre, growing it to hold the result. Returns the
/// new mask and the shift of its top-left corner.
pub(crate) fn rotate_mask(mask: &GlyphMask, degrees: f32) -> (GlyphMask, i32, i32) {
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (w, h) = (mask.width as f32, mask.height as f32);
    let nw = (w * cos.abs() + h * sin.abs()).ceil().max(1.0) as u32;
    let nh = (w * sin.abs() + h * cos.abs()).ceil().max(1.0) as u32;
    let (cx, cy) = (w / 2.0, h / 2.0);
    let (ncx, ncy) = (nw as f32 / 2.0, nh as f32 / 2.0);
    let mut coverage = vec![0u8; (nw * nh) as usize];
    for y in 0..nh {
        for x in 0..nw {
            // inverse map the destination pixel centre into the source
            let dx = x as f32 + 0.5 - ncx;
            let dy = y as f32 + 0.5 - ncy;
            let sx = cos * dx + sin * dy + cx - 0.5;
            let sy = -sin * dx + cos * dy + cy - 0.5;
            coverage[(y * nw + x) as usize] = sample_mask(mask, sx, sy);
        }
    }
    let shift_x = ((w - nw as f32) / 2.0).round() as i32;
    let shift_y = ((h - nh as f32) / 2.0).round() as i32;
    let (m, tx, ty) = GlyphMask {
        width: nw,
        height: nh,
        coverage,
    }
    .trimmed();
    (m, shift_x + tx, shift_y + ty)
}

fn sample_mask(mask: &GlyphMask, x: f32, y: f32) -> u8 {
    if x <= -1.0 || y <= -1.0 || x >= mask.width as f32 || y >= mask.height as f32 {
        return 0;
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let get = |xi: f32, yi: f32| -> f32 {
        if xi < 0.0 || yi < 0.0 || xi >= mask.width as f32 || yi >= mask.height as f32 {
            0.0
        } else {
            mask.get(xi as u32, yi as u32) as f32
        }
    };
    let a = get(x0, y0) * (1.0 - fx) + get(x0 + 1.0, y0) * fx;
    let b = get(x0, y0 + 1.0) * (1.0 - fx) + get(x0 + 1.0, y0 + 1.0) * fx;
    (a * (1.0 - fy) + b * fy).round().clamp(0.0, 255.0) as u8
}

fn distort_mask(
    mask: &GlyphMask,
    max_disp: f32,
    grid: u32,
    rng: &mut ChaCha8Rng,
) -> (GlyphMask, i32, i32, f32) {
    let g = grid as usize;
    let mut field = Vec::with_capacity(g * g);
    let mut peak = 0.0f32;
    for _ in 0..g * g {
        let (dx, dy) = if max_disp > 0.0 {
            let r = rng.gen_range(0.0..=max_disp);
            let t = rng.gen_range(0.0..std::f32::consts::TAU);
            (r * t.cos(), r * t.sin())
        } else {
            (0.0, 0.0)
        };
        peak = peak.max((dx * dx + dy * dy).sqrt());
        field.push((dx, dy));
    }
    if max_disp == 0.0 {
        return (mask.clone(), 0, 0, 0.0);
    }
    let pad = max_disp.ceil() as u32;
    let (nw, nh) = (mask.width + 2 * pad, mask.height + 2 * pad);
    let mut coverage = vec![0u8; (nw * nh) as usize];
    let gx = (g - 1) as f32 / (nw.max(2) - 1) as f32;
    let gy = (g - 1) as f32 / (nh.max(2) - 1) as f32;
    for y in 0..nh {
        for x in 0..nw {
            let (fx, fy) = (x as f32 * gx, y as f32 * gy);
            let (ix, iy) = ((fx.floor() as usize).min(g - 2), (fy.floor() as usize).min(g - 2));
            let (tx, ty) = (fx - ix as f32, fy - iy as f32);
            let at = |i: usize, j: usize| field[j * g + i];
            let lerp = |a: (f32, f32), b: (f32, f32), t: f32| {
                (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t)
            };
            let top = lerp(at(ix, iy), at(ix + 1, iy), tx);
            let bot = lerp(at(ix, iy + 1), at(ix + 1, iy + 1), tx);
            let d = lerp(top, bot, ty);
            let sx = x as f32 - pad as f32 + d.0;
            let sy = y as f32 - pad as f32 + d.1;
            coverage[(y * nw + x) as usize] = sample_mask(mask, sx, sy);
        }
    }
    let (m, tx, ty) = GlyphMask {
        width: nw,
        height: nh,
        coverage,
    }
    .trimmed();
    if m.is_blank() {
        return (mask.clone(), 0, 0, peak);
    }
    (m, tx - pad as i32, ty - pad as i32, peak)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::captcha::fonts::MONO;
    use crate::raster::{RasterImage, WHITE};
    use rand::SeedableRng;

    fn ctx() -> StepContext<'static> {
        StepContext {
            fonts: FontPool::bundled(),
            font_pool: &[],
        }
    }

    fn layout(text: &str) -> GlyphLayout {
        render_plain_text(
            &TextPayload::new("t", text),
            FontPool::bundled(),
            &FontId::new(MONO),
            32.0,
        )
        .unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn zero_rotation_is_identity() {
        let l = layout("hate");
        let step = TransformStep::Rotation {
            degrees: Span::new(0.0, 0.0),
        };
        let (out, realized) =
            apply_transform(Stage::Glyphs(l.clone()), &step, &mut rng(), ctx()).unwrap();
        let Stage::Glyphs(out) = out else { panic!() };
        assert_eq!(out, l);
        assert_eq!(realized, Realized::Rotation { degrees: vec![0.0; 4] });
    }

    #[test]
    fn full_density_noise_replaces_every_background_pixel() {
        let img = RasterImage::filled(64, 64, WHITE).unwrap();
        let step = TransformStep::NoisyBackground {
            density: 1.0,
            strokes: Span::new(0, 4),
        };
        let (out, _) =
            apply_transform(Stage::Image(Canvas::from_image(&img)), &step, &mut rng(), ctx())
                .unwrap();
        let Stage::Image(c) = out else { panic!() };
        let out = c.to_image();
        // pixel-scan oracle
        let unchanged = out.pixels().chunks_exact(3).filter(|p| *p == WHITE).count();
        assert_eq!(unchanged, 0);
    }

    #[test]
    fn occluder_count_is_logged() {
        let img = RasterImage::filled(80, 40, WHITE).unwrap();
        let step = TransformStep::OccludingSymbols {
            count: Span::new(3, 3),
            stroke_width: Span::new(1.0, 3.0),
            shapes: vec![OccluderShape::Line, OccluderShape::Arc, OccluderShape::DotCluster],
        };
        let (_, realized) =
            apply_transform(Stage::Image(Canvas::from_image(&img)), &step, &mut rng(), ctx())
                .unwrap();
        let Realized::OccludingSymbols { primitives } = realized else { panic!() };
        assert_eq!(primitives.len(), 3);
    }

    #[test]
    fn stage_mismatch_is_reported() {
        let img = RasterImage::filled(40, 40, WHITE).unwrap();
        let rot = TransformStep::Rotation {
            degrees: Span::new(-5.0, 5.0),
        };
        assert!(matches!(
            apply_transform(Stage::Image(Canvas::from_image(&img)), &rot, &mut rng(), ctx()),
            Err(CaptchaError::StepStageMismatch { step: StepKind::Rotation, .. })
        ));
        let solid = TransformStep::SolidBackground {
            channel: Span::new(200, 255),
        };
        assert!(matches!(
            apply_transform(Stage::Glyphs(layout("a")), &solid, &mut rng(), ctx()),
            Err(CaptchaError::StepStageMismatch { .. })
        ));
    }

    #[test]
    fn out_of_range_params_are_rejected() {
        let bad = [
            TransformStep::Rotation {
                degrees: Span::new(-50.0, 10.0),
            },
            TransformStep::Rotation {
                degrees: Span::new(10.0, -10.0),
            },
            TransformStep::NoisyBackground {
                density: 1.5,
                strokes: Span::new(0, 1),
            },
            TransformStep::OccludingSymbols {
                count: Span::new(5, 2),
                stroke_width: Span::new(1.0, 2.0),
                shapes: vec![OccluderShape::Line],
            },
        ];
        for step in bad {
            assert!(matches!(step.validate(), Err(CaptchaError::ParamOutOfRange(_))), "{step:?}");
        }
    }

    #[test]
    fn rotation_keeps_glyph_ink() {
        let l = layout("H");
        let before: usize = l.entries[0].mask.coverage.iter().filter(|&&c| c >= 128).count();
        let (m, _, _) = rotate_mask(&l.entries[0].mask, 30.0);
        let after: usize = m.coverage.iter().filter(|&&c| c >= 128).count();
        let ratio = after as f32 / before as f32;
        assert!((0.8..1.25).contains(&ratio), "{ratio}");
    }

    #[test]
    fn distortion_stays_within_displacement_pad() {
        let l = layout("W");
        let g = &l.entries[0];
        let mut r = rng();
        let (m, dx, dy, peak) = distort_mask(&g.mask, 4.0, 4, &mut r);
        assert!(peak <= 4.0);
        assert!(dx >= -4 && dy >= -4);
        assert!(m.width <= g.mask.width + 8 && m.height <= g.mask.height + 8);
    }

    #[test]
    fn size_variation_keeps_reading_order() {
        let l = layout("abcdef");
        let step = TransformStep::FontSizeVariation {
            scale: Span::new(0.7, 1.4),
            vary_font: true,
        };
        let (out, realized) = apply_transform(Stage::Glyphs(l), &step, &mut rng(), ctx()).unwrap();
        let Stage::Glyphs(out) = out else { panic!() };
        for w in out.entries.windows(2) {
            assert!(w[0].pen_x < w[1].pen_x);
        }
        let Realized::FontSizeVariation { sizes_px, .. } = realized else { panic!() };
        assert!(sizes_px.iter().all(|s| (32.0 * 0.7..=32.0 * 1.4).contains(s)));
    }
}
