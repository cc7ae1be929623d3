use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::canvas::GlyphBox;
use super::fonts::FontPool;
use super::layout::{flatten_canvas, TextPayload};
use super::profile::StyleProfile;
use super::transform::{apply_transform, AppliedStep, Stage, StageKind, StepContext};
use super::CaptchaError;
use crate::raster::RasterImage;

/// Provenance of one generated captcha.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub payload_id: String,
    pub style: String,
    pub master_seed: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    pub width: u32,
    pub height: u32,
    pub step_log: Vec<AppliedStep>,
    /// Canvas-space glyph extents.
    pub glyph_boxes: Vec<GlyphBox>,
}

/// Per-sample seed: the first 8 bytes of SHA-256 over the length-prefixed
/// master seed, payload id and style name.
pub fn derive_seed(master_seed: u64, payload_id: &str, style: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    for part in [payload_id, style] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Runs every profile step in order on `payload`, flattening once between
/// the last glyph-level step and the first image-level step.
pub fn compose_style(
    payload: &TextPayload,
    profile: &StyleProfile,
    master_seed: u64,
    fonts: &FontPool,
) -> Result<(RasterImage, GenerationRecord), CaptchaError> {
    profile.validate()?;
    profile.check_fonts(fonts)?;
    let seed = derive_seed(master_seed, &payload.id, &profile.name);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ctx = StepContext {
        fonts,
        font_pool: &profile.font_pool,
    };
    let mut stage = Stage::Text(payload.clone());
    let mut log = Vec::with_capacity(profile.steps.len());
    for (index, step) in profile.steps.iter().enumerate() {
        let at = |e: CaptchaError| CaptchaError::Step {
            index,
            source: Box::new(e),
        };
        if step.kind().stage() == StageKind::Image {
            if let Stage::Glyphs(layout) = &stage {
                stage = Stage::Image(flatten_canvas(layout, profile.canvas).map_err(at)?);
            }
        }
        let (next, realized) = apply_transform(stage, step, &mut rng, ctx).map_err(at)?;
        stage = next;
        log.push(AppliedStep {
            index,
            kind: step.kind(),
            label: step.kind().label().to_string(),
            realized,
        });
    }
    let canvas = match stage {
        Stage::Glyphs(layout) => flatten_canvas(&layout, profile.canvas)?,
        Stage::Image(c) => c,
        Stage::Text(_) => unreachable!("validated profiles start with domain transfer"),
    };
    let image = canvas.to_image();
    let record = GenerationRecord {
        payload_id: payload.id.clone(),
        style: profile.name.clone(),
        master_seed,
        seed,
        image_path: None,
        width: image.width(),
        height: image.height(),
        step_log: log,
        glyph_boxes: canvas.glyph_boxes().to_vec(),
    };
    Ok((image, record))
}
