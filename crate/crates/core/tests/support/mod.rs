//! Shared fixtures for integration tests: photo-like benign images and
//! in-memory captcha corpora.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use textcap::captcha::{compose_style, flatten, render_plain_text, CanvasPolicy, FontPool, StyleProfile, TextPayload};
use textcap::corpus::{random_payloads, Manifest, ManifestRecord};
use textcap::defense::{extract_features_builtin, FeatureMatrix, FeatureSet};
use textcap::raster::RasterImage;

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

fn color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    // mostly muted, natural tones
    let base: f64 = rng.gen_range(30.0..220.0);
    [0, 1, 2].map(|_| (base + rng.gen_range(-60.0..60.0)).clamp(0.0, 255.0))
}

/// A photo-like scene: a two-tone gradient, soft blobs and boxes, and
/// low-frequency plus pixel noise.
pub fn benign_image(seed: u64) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.gen_range(64..=160u32);
    let h = rng.gen_range(64..=160u32);
    scene(w, h, &mut rng)
}

const WORDS: &[&str] = &[
    "the", "sunset", "was", "great", "today", "coffee", "with", "friends", "new", "post", "check", "this", "out",
    "weekend", "trip", "to", "lake", "love", "my", "dog", "happy", "birthday", "mom", "recipe", "for", "pasta",
    "game", "night", "best", "view", "ever", "sale", "ends", "soon", "meet", "us", "at", "noon", "quote", "of",
];

/// A text post: a few plain words over a flat or photo-like background,
/// like a meme or a screenshot.
pub fn text_post(seed: u64) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fonts = FontPool::bundled();
    let font = fonts.ids()[rng.gen_range(0..fonts.ids().len())].clone();
    let n = rng.gen_range(2..=9);
    let text: Vec<&str> = (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
    let payload = TextPayload::new("post", text.join(" "));
    let layout = render_plain_text(&payload, fonts, &font, rng.gen_range(14.0..30.0)).expect("renders");
    let margin = rng.gen_range(6..30);
    let mask = flatten(&layout, CanvasPolicy::AutoFit { margin, min_side: 48 }).expect("fits");
    let (w, h) = (mask.width(), mask.height());
    let mut img = if rng.gen_bool(0.5) {
        scene(w, h, &mut rng)
    } else {
        let c = [0, 1, 2].map(|_| rng.gen_range(200..=255u8));
        RasterImage::filled(w, h, c).unwrap()
    };
    let ink = [0, 1, 2].map(|_| rng.gen_range(0..70u8));
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y)[0] < 128 {
                img.put(x, y, ink);
            }
        }
    }
    img
}

fn scene(w: u32, h: u32, rng: &mut ChaCha8Rng) -> RasterImage {
    let (c0, c1) = (color(rng), color(rng));
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let mut px = vec![[0.0f64; 3]; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let t = ((x as f64 / w as f64 - 0.5) * dx + (y as f64 / h as f64 - 0.5) * dy + 0.75) / 1.5;
            px[(y * w + x) as usize] = lerp(c0, c1, t.clamp(0.0, 1.0));
        }
    }
    for _ in 0..rng.gen_range(2..9) {
        let c = color(rng);
        let (cx, cy) = (rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64));
        let (rx, ry) = (rng.gen_range(6.0..w as f64 / 2.0), rng.gen_range(6.0..h as f64 / 2.0));
        let alpha = rng.gen_range(0.3..0.9);
        let boxy = rng.gen_bool(0.3);
        for y in 0..h {
            for x in 0..w {
                let (u, v) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
                let inside = if boxy { u.abs().max(v.abs()) } else { (u * u + v * v).sqrt() };
                if inside < 1.0 {
                    let a = alpha * (1.0 - inside.powi(4));
                    let p = &mut px[(y * w + x) as usize];
                    *p = lerp(*p, c, a);
                }
            }
        }
    }
    let waves: f64 = rng.gen_range(0.0..25.0);
    let (fx, fy) = (rng.gen_range(0.02..0.3), rng.gen_range(0.02..0.3));
    let grain: f64 = rng.gen_range(0.0..18.0);
    let mut pixels = Vec::with_capacity(px.len() * 3);
    for y in 0..h {
        for x in 0..w {
            let wave = waves * ((x as f64 * fx).sin() * (y as f64 * fy).cos());
            for ch in px[(y * w + x) as usize] {
                let v = ch + wave + rng.gen_range(-grain..=grain);
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RasterImage::from_raw(w, h, pixels).expect("valid dimensions")
}

/// Share of benign samples that are text posts.
pub const TEXT_POST_SHARE: usize = 5;

/// Benign manifest plus builtin features for `n` synthetic images; every
/// fifth one is a text post, the rest are scenes.
pub fn benign_corpus(n: usize, seed: u64) -> (Manifest, Vec<(String, Vec<f64>)>) {
    let rows: Vec<(String, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            let img = if i % TEXT_POST_SHARE == 0 { text_post(s) } else { benign_image(s) };
            (format!("benign/{i:05}.png"), extract_features_builtin(&img).expect("non-empty"))
        })
        .collect();
    let records = rows.iter().map(|(id, _)| ManifestRecord::benign(id, id)).collect();
    (Manifest::new(records, "."), rows)
}

/// Captcha manifest plus builtin features, `per_style` samples per profile.
pub fn captcha_corpus(profiles: &[StyleProfile], per_style: usize, seed: u64) -> (Manifest, Vec<(String, Vec<f64>)>) {
    let fonts = FontPool::bundled();
    let jobs: Vec<(&StyleProfile, TextPayload)> = profiles
        .iter()
        .flat_map(|p| random_payloads(per_style, seed, &format!("{}-", p.name)).into_iter().map(move |t| (p, t)))
        .collect();
    let out: Vec<(ManifestRecord, Vec<f64>)> = jobs
        .par_iter()
        .map(|(p, t)| {
            let (img, _) = compose_style(t, p, seed, fonts).expect("profile renders");
            let rec = ManifestRecord::captcha(&t.id, format!("{}.png", t.id), &p.name, &t.text);
            (rec, extract_features_builtin(&img).expect("non-empty"))
        })
        .collect();
    let rows = out.iter().map(|(r, f)| (r.id.clone(), f.clone())).collect();
    (Manifest::new(out.into_iter().map(|(r, _)| r).collect(), "."), rows)
}

pub fn feature_set(parts: &[&[(String, Vec<f64>)]]) -> FeatureSet {
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for part in parts {
        for (id, f) in part.iter() {
            ids.push(id.clone());
            rows.push(f.clone());
        }
    }
    FeatureSet::new(ids, FeatureMatrix::from_rows(&rows).unwrap()).unwrap()
}
