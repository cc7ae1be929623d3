//! Textual captcha generation as a composition of seeded transformations.
//!
//! A captcha is produced by rendering a payload to glyphs (domain
//! transfer), applying glyph-level steps, flattening to a canvas, and then
//! applying image-level steps. Every random draw comes from a per-sample
//! ChaCha stream derived from the master seed, so outputs are byte-identical
//! across runs and independent of generation order.

mod canvas;
mod compose;
mod dataset;
pub mod fonts;
mod layout;
mod profile;
mod transform;

use thiserror::Error;

pub use canvas::{Canvas, GlyphBox};
pub use compose::{compose_style, derive_seed, GenerationRecord};
pub use dataset::{generate_dataset, DatasetSummary};
pub use fonts::{FontId, FontPool};
pub use layout::{
    flatten, render_plain_text, CanvasPolicy, GlyphLayout, GlyphMask, PlacedGlyph, TextPayload,
    DEFAULT_MARGIN,
};
pub use profile::{
    builtin_profiles, ProfileRegistry, StyleProfile, CLAPTCHA, CLEAN, DEFAULT_TEXT_SIZE, HOMEMADE,
    MULTICOLOR,
};
pub use transform::{
    apply_transform, AppliedStep, Occluder, OccluderShape, Realized, Span, Stage, StageKind,
    StepContext, StepKind, TransformStep, MAX_ROTATION_DEG,
};

#[derive(Debug, Error)]
pub enum CaptchaError {
    #[error("unknown font {0:?}")]
    UnknownFont(String),
    #[error("cannot load font {font}: {reason}")]
    FontLoad { font: String, reason: String },
    #[error("character U+{code_point:04X} cannot be rendered")]
    UnrenderableCharacter { code_point: u32 },
    #[error("payload {0:?} has no visible characters")]
    EmptyPayload(String),
    #[error("layout has no glyphs")]
    EmptyLayout,
    #[error("canvas {available:?} cannot hold content of size {needed:?}")]
    CanvasTooSmall { needed: (u32, u32), available: (u32, u32) },
    #[error("canvas {width}x{height} exceeds the maximum side length")]
    CanvasTooLarge { width: u32, height: u32 },
    #[error("{step:?} operates on {expected:?} input but got {found:?}")]
    StepStageMismatch {
        step: StepKind,
        expected: StageKind,
        found: StageKind,
    },
    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),
    #[error("invalid profile {profile:?}: {reason}")]
    InvalidProfile { profile: String, reason: String },
    #[error("unknown style profile {0:?}")]
    UnknownProfile(String),
    #[error("step {index}: {source}")]
    Step {
        index: usize,
        #[source]
        source: Box<CaptchaError>,
    },
    #[error("empty word list")]
    EmptyWordList,
    #[error("i/o failure: {0}")]
    Io(String),
}
