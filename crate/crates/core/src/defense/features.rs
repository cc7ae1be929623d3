//! Deterministic 512-dimension hand-crafted image descriptor.

use std::path::Path;

use rayon::prelude::*;

use super::{DefenseError, FeatureMatrix, FeatureSet};
use crate::corpus::Manifest;
use crate::raster::RasterImage;

pub const FEATURE_DIM: usize = 512;
const GRID: usize = 4;
const ORIENT_BINS: usize = 8;
const INTENSITY_BINS: usize = 16;

/// Offsets of the blocks inside a feature vector.
pub const COLOR_BLOCK: std::ops::Range<usize> = 0..96;
pub const EDGE_BLOCK: std::ops::Range<usize> = 96..224;
pub const INTENSITY_BLOCK: std::ops::Range<usize> = 224..480;
pub const GLOBAL_HISTOGRAM_BLOCK: std::ops::Range<usize> = 480..496;
pub const TEXTURE_BLOCK: std::ops::Range<usize> = 496..512;

fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn luma(p: [u8; 3]) -> f64 {
    0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])
}

/// 16-bin index of an 8-bit-range gray value.
pub(crate) fn intensity_bin(gray: f64) -> usize {
    ((gray.round().clamp(0.0, 255.0) as usize) * INTENSITY_BINS / 256).min(INTENSITY_BINS - 1)
}

fn cell_range(i: usize, n: usize) -> (usize, usize) {
    (i * n / GRID, (i + 1) * n / GRID)
}

/// Color statistics per cell, edge-orientation and intensity histograms per
/// cell, a global intensity histogram and global texture statistics. Each
/// block is L2-normalized; an all-zero block stays zero.
pub fn extract_features_builtin(image: &RasterImage) -> Result<Vec<f64>, DefenseError> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if w == 0 || h == 0 {
        return Err(DefenseError::DegenerateImage);
    }
    let px = image.pixels();
    let rgb = |x: usize, y: usize| {
        let o = 3 * (y * w + x);
        [px[o], px[o + 1], px[o + 2]]
    };
    let gray: Vec<f64> = (0..w * h).map(|i| luma(rgb(i % w, i / w))).collect();
    let g = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        gray[y * w + x]
    };
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = (g(x + 1, y - 1) + 2.0 * g(x + 1, y) + g(x + 1, y + 1))
                - (g(x - 1, y - 1) + 2.0 * g(x - 1, y) + g(x - 1, y + 1));
            gy[i] = (g(x - 1, y + 1) + 2.0 * g(x, y + 1) + g(x + 1, y + 1))
                - (g(x - 1, y - 1) + 2.0 * g(x, y - 1) + g(x + 1, y - 1));
        }
    }
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();

    let mut f = vec![0.0; FEATURE_DIM];
    for cy in 0..GRID {
        let (y0, y1) = cell_range(cy, h);
        for cx in 0..GRID {
            let (x0, x1) = cell_range(cx, w);
            let cell = cy * GRID + cx;
            let count = ((y1 - y0) * (x1 - x0)) as f64;
            if count == 0.0 {
                continue;
            }
            let mut sum = [0.0; 3];
            let mut sq = [0.0; 3];
            let mut orient = [0.0; ORIENT_BINS];
            let mut hist = [0.0; INTENSITY_BINS];
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = rgb(x, y);
                    for c in 0..3 {
                        let v = f64::from(p[c]) / 255.0;
                        sum[c] += v;
                        sq[c] += v * v;
                    }
                    let i = y * w + x;
                    if mag[i] > 0.0 {
                        // unsigned orientation in [0, pi)
                        let mut a = gy[i].atan2(gx[i]);
                        if a < 0.0 {
                            a += std::f64::consts::PI;
                        }
                        let b = ((a / std::f64::consts::PI) * ORIENT_BINS as f64) as usize;
                        orient[b.min(ORIENT_BINS - 1)] += mag[i];
                    }
                    hist[intensity_bin(gray[i])] += 1.0;
                }
            }
            for c in 0..3 {
                let mean = sum[c] / count;
                let var = (sq[c] / count - mean * mean).max(0.0);
                f[COLOR_BLOCK.start + cell * 6 + c * 2] = mean;
                f[COLOR_BLOCK.start + cell * 6 + c * 2 + 1] = var.sqrt();
            }
            f[EDGE_BLOCK.start + cell * ORIENT_BINS..][..ORIENT_BINS].copy_from_slice(&orient);
            for (b, v) in hist.iter().enumerate() {
                f[INTENSITY_BLOCK.start + cell * INTENSITY_BINS + b] = v / count;
            }
        }
    }

    let n = (w * h) as f64;
    let mut ghist = [0.0; INTENSITY_BINS];
    for v in &gray {
        ghist[intensity_bin(*v)] += 1.0 / n;
    }
    f[GLOBAL_HISTOGRAM_BLOCK].copy_from_slice(&ghist);
    f[TEXTURE_BLOCK].copy_from_slice(&texture_stats(image, &gray, &gx, &gy, &mag, &ghist));

    for block in [COLOR_BLOCK, EDGE_BLOCK, INTENSITY_BLOCK, GLOBAL_HISTOGRAM_BLOCK, TEXTURE_BLOCK] {
        l2_normalize(&mut f[block]);
    }
    Ok(f)
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (mut n, mut s, mut sq) = (0.0, 0.0, 0.0);
    for x in v {
        n += 1.0;
        s += x;
        sq += x * x;
    }
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let m = s / n;
    (m, (sq / n - m * m).max(0.0).sqrt())
}

fn texture_stats(
    image: &RasterImage,
    gray: &[f64],
    gx: &[f64],
    gy: &[f64],
    mag: &[f64],
    ghist: &[f64; INTENSITY_BINS],
) -> [f64; 16] {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let px = image.pixels();
    let (gm, gs) = mean_std(gray.iter().map(|v| v / 255.0));
    // Sobel magnitudes reach about 4 * 255 * sqrt(2)
    let (mm, ms) = mean_std(mag.iter().map(|v| v / 1442.0));
    let edge_density = mag.iter().filter(|m| **m > 128.0).count() as f64 / gray.len() as f64;
    let (ex, ey) = gx
        .iter()
        .zip(gy)
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x * x, b + y * y));
    let orientation_balance = if ex + ey > 0.0 { ex / (ex + ey) } else { 0.5 };
    let mut rg = Vec::with_capacity(gray.len());
    let mut yb = Vec::with_capacity(gray.len());
    let mut sat = Vec::with_capacity(gray.len());
    for p in px.chunks_exact(3) {
        let (r, g, b) = (f64::from(p[0]), f64::from(p[1]), f64::from(p[2]));
        rg.push(r - g);
        yb.push(0.5 * (r + g) - b);
        let mx = r.max(g).max(b);
        let mn = r.min(g).min(b);
        sat.push(if mx > 0.0 { (mx - mn) / mx } else { 0.0 });
    }
    let (rgm, rgs) = mean_std(rg.iter().copied());
    let (ybm, ybs) = mean_std(yb.iter().copied());
    let colorfulness = ((rgs * rgs + ybs * ybs).sqrt() + 0.3 * (rgm * rgm + ybm * ybm).sqrt()) / 255.0;
    let (sm, ss) = mean_std(sat.iter().copied());
    let entropy = -ghist
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.log2())
        .sum::<f64>()
        / (INTENSITY_BINS as f64).log2();
    let dark = gray.iter().filter(|v| **v < 64.0).count() as f64 / gray.len() as f64;
    let bright = gray.iter().filter(|v| **v > 192.0).count() as f64 / gray.len() as f64;
    let mut colors: Vec<[u8; 3]> = px.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect();
    colors.sort_unstable();
    colors.dedup();
    let distinct = (colors.len() as f64).ln() / (gray.len() as f64).ln().max(1.0);
    let aspect = ((w as f64) / (h as f64)).ln().tanh();
    let lap = {
        let at = |x: usize, y: usize| gray[y * w + x];
        let mut v = Vec::new();
        for y in 1..h.saturating_sub(1) {
            for x in 1..w.saturating_sub(1) {
                v.push((at(x - 1, y) + at(x + 1, y) + at(x, y - 1) + at(x, y + 1) - 4.0 * at(x, y)) / 1020.0);
            }
        }
        mean_std(v.into_iter()).1
    };
    let size = ((w * h) as f64).ln() / (crate::raster::MAX_SIDE as f64).powi(2).ln();
    [
        gm,
        gs,
        mm,
        ms,
        edge_density,
        orientation_balance,
        colorfulness,
        sm,
        ss,
        entropy,
        dark,
        bright,
        distinct,
        aspect,
        lap,
        size,
    ]
}

/// Decodes and describes every record of `manifest`, in manifest order.
pub fn extract_manifest_features(manifest: &Manifest) -> Result<FeatureSet, DefenseError> {
    let rows: Vec<Vec<f64>> = manifest
        .records
        .par_iter()
        .map(|r| {
            let path = manifest.resolve(r);
            let img = RasterImage::open(&path).map_err(|e| DefenseError::Io {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            extract_features_builtin(&img)
        })
        .collect::<Result<_, _>>()?;
    let ids = manifest.records.iter().map(|r| r.id.clone()).collect();
    FeatureSet::new(ids, FeatureMatrix::from_rows(&rows)?)
}

/// Features of a single image file.
pub fn extract_file_features(path: &Path) -> Result<Vec<f64>, DefenseError> {
    let img = RasterImage::open(path).map_err(|e| DefenseError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    extract_features_builtin(&img)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> RasterImage {
        let mut img = RasterImage::filled(7, 5, [250, 250, 250]).unwrap();
        for (x, y, c) in [(0, 0, [0, 0, 0]), (3, 2, [200, 10, 10]), (6, 4, [90, 90, 90]), (5, 1, [0, 0, 0])] {
            img.put(x, y, c);
        }
        img
    }

    #[test]
    fn length_and_finiteness() {
        for img in [fixture(), RasterImage::filled(1, 1, [3, 4, 5]).unwrap()] {
            let f = extract_features_builtin(&img).unwrap();
            assert_eq!(f.len(), FEATURE_DIM);
            assert!(f.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn uniform_image_has_no_edges() {
        let f = extract_features_builtin(&RasterImage::filled(20, 12, [128, 128, 128]).unwrap()).unwrap();
        assert!(f[EDGE_BLOCK].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn global_histogram_matches_oracle_and_rotation() {
        let img = fixture();
        // oracle: count luma bins directly, then L2-normalize
        let mut counts = [0.0f64; 16];
        for y in 0..img.height() {
            for x in 0..img.width() {
                let p = img.get(x, y);
                let l = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
                counts[(l.round() as usize) / 16] += 1.0;
            }
        }
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        let f = extract_features_builtin(&img).unwrap();
        for (b, c) in counts.iter().enumerate() {
            assert!((f[GLOBAL_HISTOGRAM_BLOCK][b] - c / norm).abs() < 1e-12);
        }
        let r = extract_features_builtin(&img.rotated_180()).unwrap();
        for b in GLOBAL_HISTOGRAM_BLOCK {
            assert!((f[b] - r[b]).abs() < 1e-12);
        }
    }

    #[test]
    fn blocks_are_unit_or_zero() {
        let f = extract_features_builtin(&fixture()).unwrap();
        for block in [COLOR_BLOCK, EDGE_BLOCK, INTENSITY_BLOCK, GLOBAL_HISTOGRAM_BLOCK, TEXTURE_BLOCK] {
            let n: f64 = f[block].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9 || n == 0.0);
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            extract_features_builtin(&fixture()).unwrap(),
            extract_features_builtin(&fixture()).unwrap()
        );
    }
}
