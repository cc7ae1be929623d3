//! A cross-domain content moderator: modality routing, OCR, text and image
//! moderation behind pluggable adapters, and attack evaluation over captcha
//! manifests.

mod adapters;
mod config;
mod evaluate;
mod http;
mod process;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adapters::{
    normalize_token, BlocklistModerator, EchoOcr, ImageInput, ImageModerator, NoopImageModerator,
    NullOcr, OcrEngine, TextModerator, OFFENSIVE,
};
pub use config::{ImageModeratorConfig, ModeratorConfig, OcrConfig, Pipeline, PipelineConfig};
pub use evaluate::{evaluate_attack, AttackReport, SampleResult, StyleReport};
pub use http::{HttpAdapter, HttpEndpoint};
pub use process::{CommandOcr, IMAGE_PLACEHOLDER};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum AdapterError {
    #[error("{adapter} timed out after {ms} ms")]
    Timeout { adapter: String, ms: u64 },
    #[error("{adapter}: {reason}")]
    Protocol { adapter: String, reason: String },
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("malformed item {id:?}: {reason}")]
    MalformedItem { id: String, reason: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("manifest has no captcha samples with text")]
    EmptyManifest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Image,
    /// A post with both a text body and an attached image.
    TextWithImage,
    /// An image whose content is text, such as a captcha.
    ImageWithText,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStage {
    Ocr,
    TextModeration,
    ImageModeration,
}

/// Something submitted for moderation. The ground truth of an
/// `ImageWithText` item is kept for scoring and never shown to adapters.
#[derive(Clone, Debug, PartialEq)]
pub struct ContentItem {
    pub id: String,
    pub modality: Modality,
    pub text: Option<String>,
    pub image: Option<ImageInput>,
    ground_truth: Option<String>,
}

impl ContentItem {
    pub fn text(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            modality: Modality::Text,
            text: Some(text.into()),
            image: None,
            ground_truth: None,
        }
    }

    pub fn image(id: impl Into<String>, image: ImageInput) -> Self {
        Self {
            id: id.into(),
            modality: Modality::Image,
            text: None,
            image: Some(image),
            ground_truth: None,
        }
    }

    pub fn text_with_image(id: impl Into<String>, text: impl Into<String>, image: ImageInput) -> Self {
        Self {
            modality: Modality::TextWithImage,
            text: Some(text.into()),
            ..Self::image(id, image)
        }
    }

    pub fn image_with_text(id: impl Into<String>, image: ImageInput, ground_truth: impl Into<String>) -> Self {
        Self {
            modality: Modality::ImageWithText,
            ground_truth: Some(ground_truth.into()),
            ..Self::image(id, image)
        }
    }

    pub fn ground_truth(&self) -> Option<&str> {
        self.ground_truth.as_deref()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let (need_text, need_image) = match self.modality {
            Modality::Text => (true, false),
            Modality::Image | Modality::ImageWithText => (false, true),
            Modality::TextWithImage => (true, true),
        };
        let bad = |reason: &str| {
            Err(PipelineError::MalformedItem {
                id: self.id.clone(),
                reason: reason.into(),
            })
        };
        if need_text != self.text.is_some() {
            return bad(if need_text { "missing text" } else { "unexpected text" });
        }
        if need_image != self.image.is_some() {
            return bad(if need_image { "missing image" } else { "unexpected image" });
        }
        if self.ground_truth.is_some() && self.modality != Modality::ImageWithText {
            return bad("ground truth only applies to images with text");
        }
        Ok(())
    }
}

/// Why a verdict could not be reached.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Indeterminate {
    pub stage: PipelineStage,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModerationVerdict {
    pub item_id: String,
    /// `text.<category>` and `image.<category>` scores.
    pub scores: BTreeMap<String, f64>,
    pub flagged: bool,
    pub route: Vec<PipelineStage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extracted_text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub indeterminate: Option<Indeterminate>,
}

impl ModerationVerdict {
    pub fn max_score(&self) -> f64 {
        self.scores.values().copied().fold(0.0, f64::max)
    }
}

/// Stages an item passes through; depends only on its modality and on
/// whether the OCR stage is enabled.
pub fn route(item: &ContentItem, config: &PipelineConfig) -> Result<Vec<PipelineStage>, PipelineError> {
    item.validate()?;
    use PipelineStage::*;
    Ok(match item.modality {
        Modality::Text => vec![TextModeration],
        Modality::Image => vec![ImageModeration],
        Modality::TextWithImage => vec![TextModeration, ImageModeration],
        Modality::ImageWithText if config.ocr_stage_enabled => vec![Ocr, TextModeration, ImageModeration],
        Modality::ImageWithText => vec![ImageModeration],
    })
}

/// Runs the routed stages. Adapter failures yield an unflagged verdict
/// marked indeterminate rather than an error.
pub fn moderate(item: &ContentItem, pipeline: &Pipeline) -> Result<ModerationVerdict, PipelineError> {
    let plan = route(item, &pipeline.config)?;
    let mut verdict = ModerationVerdict {
        item_id: item.id.clone(),
        scores: BTreeMap::new(),
        flagged: false,
        route: plan.clone(),
        extracted_text: None,
        indeterminate: None,
    };
    for stage in plan {
        let result = match stage {
            PipelineStage::Ocr => {
                let image = item.image.as_ref().expect("validated");
                pipeline.ocr.extract(image).map(|t| {
                    verdict.extracted_text = Some(t);
                    BTreeMap::new()
                })
            }
            PipelineStage::TextModeration => {
                let text = verdict
                    .extracted_text
                    .as_deref()
                    .or(item.text.as_deref())
                    .unwrap_or("");
                pipeline.text.score(text).map(|s| prefixed("text", s))
            }
            PipelineStage::ImageModeration => {
                let image = item.image.as_ref().expect("validated");
                pipeline.image.score(image).map(|s| prefixed("image", s))
            }
        };
        match result {
            Ok(scores) => verdict.scores.extend(scores),
            Err(e) => {
                verdict.scores.clear();
                verdict.indeterminate = Some(Indeterminate {
                    stage,
                    reason: e.to_string(),
                });
                return Ok(verdict);
            }
        }
    }
    let threshold = pipeline.config.threshold;
    verdict.flagged = verdict.scores.values().any(|s| *s > threshold);
    Ok(verdict)
}

fn prefixed(domain: &str, scores: BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    scores
        .into_iter()
        .map(|(k, v)| (format!("{domain}.{k}"), v))
        .collect()
}
