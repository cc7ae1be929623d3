//! RGB8 raster buffers and the handful of drawing primitives the captcha
//! transforms need.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};
use thiserror::Error;

/// Largest accepted side length, in pixels.
pub const MAX_SIDE: u32 = 4096;

/// Smallest side length of a generated captcha.
pub const MIN_GENERATED_SIDE: u32 = 32;

pub const WHITE: [u8; 3] = [255, 255, 255];
pub const BLACK: [u8; 3] = [0, 0, 0];

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid dimensions {width}x{height} (each side must be in 1..={MAX_SIDE})")]
    BadDimensions { width: u32, height: u32 },
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("cannot encode png: {0}")]
    Encode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major RGB8 image.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

fn check_dims(width: u32, height: u32) -> Result<(), RasterError> {
    if width == 0 || height == 0 || width > MAX_SIDE || height > MAX_SIDE {
        return Err(RasterError::BadDimensions { width, height });
    }
    Ok(())
}

impl RasterImage {
    pub fn filled(width: u32, height: u32, color: [u8; 3]) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&color);
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_raw(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(RasterError::BufferLength {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, c: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    /// Number of distinct colors in the image.
    pub fn distinct_colors(&self) -> usize {
        let mut seen: Vec<u32> = self
            .pixels
            .chunks_exact(3)
            .map(|p| (p[0] as u32) << 16 | (p[1] as u32) << 8 | p[2] as u32)
            .collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// Encodes as an 8-bit RGB PNG.
    pub fn to_png(&self) -> Result<Vec<u8>, RasterError> {
        let img = RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("buffer length checked at construction");
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)
            .map_err(|e| RasterError::Encode(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        std::fs::write(path, self.to_png()?)?;
        Ok(())
    }

    /// Decodes any supported format, dropping alpha. Images larger than
    /// [`MAX_SIDE`] are downscaled preserving aspect ratio.
    pub fn decode(bytes: &[u8]) -> Result<Self, RasterError> {
        let img = image::load_from_memory(bytes).map_err(|e| RasterError::Decode(e.to_string()))?;
        let img = if img.width() > MAX_SIDE || img.height() > MAX_SIDE {
            img.resize(MAX_SIDE, MAX_SIDE, image::imageops::FilterType::Triangle)
        } else {
            img
        };
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::from_raw(w, h, rgb.into_raw())
    }

    pub fn open(path: &Path) -> Result<Self, RasterError> {
        Self::decode(&std::fs::read(path)?)
    }

    /// Rotates by 180 degrees.
    pub fn rotated_180(&self) -> Self {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for p in self.pixels.chunks_exact(3).rev() {
            pixels.extend_from_slice(p);
        }
        Self {
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}

/// Floating-point RGB + alpha plane used while compositing. Values are in
/// `[0, 255]` for color and `[0, 1]` for alpha.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
    pub channels: usize,
}

impl Plane {
    pub fn new(width: usize, height: usize, channels: usize, fill: &[f32]) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for _ in 0..width * height {
            data.extend_from_slice(&fill[..channels]);
        }
        Self {
            width,
            height,
            data,
            channels,
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn at_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// Samples with bilinear interpolation, clamping coordinates to the edge.
    pub fn sample_clamped(&self, x: f32, y: f32, out: &mut [f32]) {
        let max_x = (self.width - 1) as f32;
        let max_y = (self.height - 1) as f32;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            let a = self.at(x0, y0)[c] * (1.0 - fx) + self.at(x1, y0)[c] * fx;
            let b = self.at(x0, y1)[c] * (1.0 - fx) + self.at(x1, y1)[c] * fx;
            *o = a * (1.0 - fy) + b * fy;
        }
    }
}

/// Shortest distance from `p` to the segment `a`-`b`.
pub(crate) fn segment_distance(p: (f32, f32), a: (f32, f32), b: (f32, f32)) -> f32 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Coverage in `[0,1]` of a pixel centred at `p` by a stroke of `width`
/// around the polyline `points`. One pixel of linear falloff for antialiasing.
pub(crate) fn polyline_coverage(p: (f32, f32), points: &[(f32, f32)], width: f32) -> f32 {
    let mut d = f32::INFINITY;
    for w in points.windows(2) {
        d = d.min(segment_distance(p, w[0], w[1]));
    }
    if points.len() == 1 {
        d = segment_distance(p, points[0], points[0]);
    }
    (width / 2.0 + 0.5 - d).clamp(0.0, 1.0)
}

/// Integer bounding box of a polyline stroke, clipped to the canvas.
pub(crate) fn stroke_bounds(
    points: &[(f32, f32)],
    width: f32,
    canvas_w: usize,
    canvas_h: usize,
) -> Option<(usize, usize, usize, usize)> {
    let pad = width / 2.0 + 1.0;
    let min_x = points.iter().map(|p| p.0).fold(f32::INFINITY, f32::min) - pad;
    let max_x = points.iter().map(|p| p.0).fold(f32::NEG_INFINITY, f32::max) + pad;
    let min_y = points.iter().map(|p| p.1).fold(f32::INFINITY, f32::min) - pad;
    let max_y = points.iter().map(|p| p.1).fold(f32::NEG_INFINITY, f32::max) + pad;
    if max_x < 0.0 || max_y < 0.0 || min_x >= canvas_w as f32 || min_y >= canvas_h as f32 {
        return None;
    }
    let x0 = min_x.max(0.0).floor() as usize;
    let y0 = min_y.max(0.0).floor() as usize;
    let x1 = (max_x.ceil() as usize).min(canvas_w - 1);
    let y1 = (max_y.ceil() as usize).min(canvas_h - 1);
    Some((x0, y0, x1, y1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_buffers() {
        assert!(matches!(
            RasterImage::from_raw(2, 2, vec![0; 11]),
            Err(RasterError::BufferLength { expected: 12, actual: 11 })
        ));
        assert!(RasterImage::filled(0, 4, WHITE).is_err());
        assert!(RasterImage::filled(MAX_SIDE + 1, 4, WHITE).is_err());
    }

    #[test]
    fn png_round_trip_is_lossless() {
        let mut img = RasterImage::filled(5, 3, WHITE).unwrap();
        img.put(1, 2, [10, 20, 30]);
        let back = RasterImage::decode(&img.to_png().unwrap()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn rotation_by_180_twice_is_identity() {
        let mut img = RasterImage::filled(4, 3, WHITE).unwrap();
        img.put(0, 0, BLACK);
        let r = img.rotated_180();
        assert_eq!(r.get(3, 2), BLACK);
        assert_eq!(r.rotated_180(), img);
    }

    #[test]
    fn segment_distance_endpoints() {
        assert_eq!(segment_distance((0.0, 3.0), (0.0, 0.0), (4.0, 0.0)), 3.0);
        assert_eq!(segment_distance((7.0, 0.0), (0.0, 0.0), (4.0, 0.0)), 3.0);
    }
}
