//! Stand-in styles for a multi-scheme captcha corpus: eleven recipes of the
//! transformation kinds real schemes combine, each with its own parameter
//! draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::split::mixed_seed;
use crate::captcha::fonts::{MONO, SANS, SERIF};
use crate::captcha::{
    CanvasPolicy, FontId, OccluderShape, Span, StyleProfile, TextPayload, TransformStep,
    DEFAULT_MARGIN,
};
use crate::raster::MIN_GENERATED_SIDE;

pub const SURROGATE_PREFIX: &str = "c11-like-";

const ROT: u16 = 1;
const DIST: u16 = 1 << 1;
const WAVE: u16 = 1 << 2;
const OCCL: u16 = 1 << 3;
const SOLID: u16 = 1 << 4;
const NOISY: u16 = 1 << 5;
const SIZE: u16 = 1 << 6;
const COLOR: u16 = 1 << 7;
const FONTS: u16 = 1 << 8;

const RECIPES: [u16; 11] = [
    ROT | DIST,
    OCCL | ROT | DIST | WAVE | SIZE | COLOR,
    DIST | ROT | WAVE,
    ROT | DIST | WAVE | SIZE | COLOR,
    ROT | DIST,
    SOLID | ROT | WAVE | SIZE | FONTS,
    ROT | DIST | SIZE,
    ROT | DIST | WAVE,
    NOISY | OCCL | ROT | SIZE | COLOR,
    OCCL | ROT | DIST,
    ROT | DIST | WAVE,
];

fn recipe_profile(name: String, recipe: u16, rng: &mut ChaCha8Rng) -> StyleProfile {
    let faces = [MONO, SANS, SERIF];
    let font = FontId::new(faces[rng.gen_range(0..faces.len())]);
    let mut steps = vec![TransformStep::DomainTransfer {
        font: Some(font.clone()),
        size_px: rng.gen_range(30.0..48.0f32).round(),
    }];
    if recipe & SIZE != 0 {
        steps.push(TransformStep::FontSizeVariation {
            scale: Span::new(rng.gen_range(0.75..0.95), rng.gen_range(1.05..1.3)),
            vary_font: recipe & FONTS != 0,
        });
    }
    if recipe & ROT != 0 {
        let m = rng.gen_range(8.0..35.0f32).round();
        steps.push(TransformStep::Rotation {
            degrees: Span::new(-m, m),
        });
    }
    if recipe & DIST != 0 {
        steps.push(TransformStep::Distortion {
            max_displacement_px: rng.gen_range(1.5..5.0),
            grid: rng.gen_range(3..=5),
        });
    }
    if recipe & COLOR != 0 {
        steps.push(TransformStep::ColorVariation {
            channel: Span::new(0, rng.gen_range(60..=160)),
        });
    }
    if recipe & WAVE != 0 {
        let a = rng.gen_range(1.0..3.0f32);
        let w = rng.gen_range(20.0..40.0f32);
        steps.push(TransformStep::Waving {
            amplitude_px: Span::new(a, a + rng.gen_range(1.0..4.0)),
            wavelength_px: Span::new(w, w + rng.gen_range(10.0..40.0)),
        });
    }
    if recipe & SOLID != 0 {
        steps.push(TransformStep::SolidBackground {
            channel: Span::new(rng.gen_range(150..=220), 255),
        });
    }
    if recipe & NOISY != 0 {
        let lo = rng.gen_range(2..=4);
        steps.push(TransformStep::NoisyBackground {
            density: rng.gen_range(0.05..0.2),
            strokes: Span::new(lo, lo + rng.gen_range(1..=4)),
        });
    }
    if recipe & OCCL != 0 {
        let lo = rng.gen_range(1..=3);
        let mut shapes = vec![OccluderShape::Line];
        if rng.gen_bool(0.5) {
            shapes.push(OccluderShape::Arc);
        }
        steps.push(TransformStep::OccludingSymbols {
            count: Span::new(lo, lo + rng.gen_range(1..=3)),
            stroke_width: Span::new(1.0, rng.gen_range(1.5..3.0)),
            shapes,
        });
    }
    let font_pool = if recipe & FONTS != 0 {
        vec![font, FontId::new(SANS), FontId::new(SERIF), FontId::new(MONO)]
            .into_iter()
            .fold(Vec::new(), |mut v, f| {
                if !v.contains(&f) {
                    v.push(f);
                }
                v
            })
    } else {
        vec![font]
    };
    StyleProfile {
        name,
        steps,
        canvas: CanvasPolicy::AutoFit {
            margin: DEFAULT_MARGIN,
            min_side: MIN_GENERATED_SIDE,
        },
        font_pool,
    }
}

/// `count` surrogate styles named `c11-like-01`, `c11-like-02`, ...; recipes
/// cycle after the eleventh.
pub fn synthesize_surrogate_styles(count: usize, seed: u64) -> Vec<StyleProfile> {
    (0..count)
        .map(|i| {
            let name = format!("{SURROGATE_PREFIX}{:02}", i + 1);
            let mut rng = ChaCha8Rng::seed_from_u64(mixed_seed(seed, &["surrogate", &name]));
            recipe_profile(name, RECIPES[i % RECIPES.len()], &mut rng)
        })
        .collect()
}

/// Random 4 to 6 character alphanumeric strings with ids `<prefix>00000`, ...
pub fn random_payloads(count: usize, seed: u64, prefix: &str) -> Vec<TextPayload> {
    const ALPHABET: &[u8] = b"ABCDEFGHJKLMNPQRSTUVWXYZabcdefghjkmnpqrstuvwxyz23456789";
    let mut rng = ChaCha8Rng::seed_from_u64(mixed_seed(seed, &["payloads", prefix]));
    (0..count)
        .map(|i| {
            let len = rng.gen_range(4..=6);
            let text: String = (0..len)
                .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char)
                .collect();
            TextPayload::new(format!("{prefix}{i:05}"), text)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::captcha::{compose_style, FontPool};

    #[test]
    fn eleven_valid_distinct_styles() {
        let styles = synthesize_surrogate_styles(11, 3);
        assert_eq!(styles.len(), 11);
        for s in &styles {
            s.validate().unwrap();
        }
        for (i, a) in styles.iter().enumerate() {
            for b in &styles[i + 1..] {
                assert_ne!(a.steps, b.steps, "{} == {}", a.name, b.name);
            }
        }
        assert_eq!(styles, synthesize_surrogate_styles(11, 3));
    }

    #[test]
    fn surrogates_render() {
        let payloads = random_payloads(2, 5, "p");
        for s in synthesize_surrogate_styles(11, 5) {
            for p in &payloads {
                compose_style(p, &s, 1, FontPool::bundled()).unwrap();
            }
        }
    }

    #[test]
    fn payloads_are_short_and_deterministic() {
        let p = random_payloads(50, 1, "x");
        assert!(p.iter().all(|p| (4..=6).contains(&p.text.chars().count())));
        assert_eq!(p, random_payloads(50, 1, "x"));
        assert_eq!(p[3].id, "x00003");
    }
}
