use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use super::{AdapterError, PipelineError};
use crate::corpus::{hex_digest, Label, Manifest};
use crate::raster::RasterImage;

/// Encoded image bytes as submitted to adapters, plus the file they came
/// from when there is one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageInput {
    pub bytes: Vec<u8>,
    pub path: Option<PathBuf>,
}

impl ImageInput {
    pub fn from_path(path: &Path) -> Result<Self, PipelineError> {
        let bytes = std::fs::read(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Ok(Self {
            bytes,
            path: Some(path.to_path_buf()),
        })
    }

    pub fn from_raster(img: &RasterImage) -> Self {
        Self {
            bytes: img.to_png().expect("in-memory png encoding"),
            path: None,
        }
    }

    pub fn digest(&self) -> String {
        hex_digest(&self.bytes)
    }
}

pub trait OcrEngine: Send + Sync {
    fn name(&self) -> &str;
    fn extract(&self, image: &ImageInput) -> Result<String, AdapterError>;
    /// Adapters that cannot be called concurrently return true; the
    /// evaluator then processes items one at a time.
    fn serial_only(&self) -> bool {
        false
    }
}

pub trait TextModerator: Send + Sync {
    fn name(&self) -> &str;
    fn categories(&self) -> Vec<String>;
    /// One probability in [0, 1] per category.
    fn score(&self, text: &str) -> Result<BTreeMap<String, f64>, AdapterError>;
    fn serial_only(&self) -> bool {
        false
    }
}

pub trait ImageModerator: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, image: &ImageInput) -> Result<BTreeMap<String, f64>, AdapterError>;
    fn serial_only(&self) -> bool {
        false
    }
}

/// Perfect OCR for a known corpus: returns the text whose image has the same
/// bytes. Unknown images yield an empty string.
#[derive(Clone, Debug, Default)]
pub struct EchoOcr {
    by_digest: HashMap<String, String>,
}

impl EchoOcr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, image: &ImageInput, text: impl Into<String>) {
        self.by_digest.insert(image.digest(), text.into());
    }

    /// Hashes every captcha image of `manifest`.
    pub fn from_manifest(manifest: &Manifest) -> Result<Self, PipelineError> {
        let mut ocr = Self::new();
        for r in &manifest.records {
            if let (Label::Captcha, Some(text)) = (r.label, &r.text) {
                ocr.insert(&ImageInput::from_path(&manifest.resolve(r))?, text.clone());
            }
        }
        Ok(ocr)
    }
}

impl OcrEngine for EchoOcr {
    fn name(&self) -> &str {
        "echo"
    }

    fn extract(&self, image: &ImageInput) -> Result<String, AdapterError> {
        Ok(self.by_digest.get(&image.digest()).cloned().unwrap_or_default())
    }
}

/// OCR that never reads anything.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullOcr;

impl OcrEngine for NullOcr {
    fn name(&self) -> &str {
        "null"
    }

    fn extract(&self, _image: &ImageInput) -> Result<String, AdapterError> {
        Ok(String::new())
    }
}

pub const OFFENSIVE: &str = "offensive";

/// Lower-cases and removes every non-alphanumeric character.
pub fn normalize_token(token: &str) -> String {
    token
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Scores 1.0 on [`OFFENSIVE`] when any normalized token is blocklisted.
#[derive(Clone, Debug)]
pub struct BlocklistModerator {
    words: BTreeSet<String>,
}

impl BlocklistModerator {
    pub fn new<I, S>(words: I) -> Result<Self, PipelineError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: BTreeSet<String> = words
            .into_iter()
            .map(|w| normalize_token(w.as_ref()))
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return Err(PipelineError::Config("blocklist is empty".into()));
        }
        Ok(Self { words })
    }

    pub fn words(&self) -> &BTreeSet<String> {
        &self.words
    }
}

impl TextModerator for BlocklistModerator {
    fn name(&self) -> &str {
        "blocklist"
    }

    fn categories(&self) -> Vec<String> {
        vec![OFFENSIVE.into()]
    }

    fn score(&self, text: &str) -> Result<BTreeMap<String, f64>, AdapterError> {
        let hit = text
            .split_whitespace()
            .any(|t| self.words.contains(&normalize_token(t)));
        Ok(BTreeMap::from([(OFFENSIVE.to_string(), if hit { 1.0 } else { 0.0 })]))
    }
}

/// Image moderation placeholder: no categories, never flags.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoopImageModerator;

impl ImageModerator for NoopImageModerator {
    fn name(&self) -> &str {
        "none"
    }

    fn score(&self, _image: &ImageInput) -> Result<BTreeMap<String, f64>, AdapterError> {
        Ok(BTreeMap::new())
    }
}
