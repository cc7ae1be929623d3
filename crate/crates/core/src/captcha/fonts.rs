use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use fontdue::{Font, FontSettings};
use serde::{Deserialize, Serialize};

use super::CaptchaError;

/// Name of a font in a [`FontPool`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FontId(pub String);

impl FontId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FontId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub const MONO: &str = "dejavu-sans-mono";
pub const SANS: &str = "dejavu-sans";
pub const SERIF: &str = "dejavu-serif";

static BUNDLED: &[(&str, &[u8])] = &[
    (MONO, include_bytes!("../../fonts/DejaVuSansMono.ttf")),
    (SANS, include_bytes!("../../fonts/DejaVuSans.ttf")),
    (SERIF, include_bytes!("../../fonts/DejaVuSerif.ttf")),
];

/// Immutable set of parsed fonts, in registration order. The first font is
/// the default.
#[derive(Clone)]
pub struct FontPool {
    order: Vec<FontId>,
    fonts: BTreeMap<FontId, Arc<Font>>,
}

impl fmt::Debug for FontPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FontPool").field("fonts", &self.order).finish()
    }
}

impl FontPool {
    /// The three bundled DejaVu faces. Parsed once per process.
    pub fn bundled() -> &'static FontPool {
        static POOL: OnceLock<FontPool> = OnceLock::new();
        POOL.get_or_init(|| {
            let mut pool = FontPool::empty();
            for (name, bytes) in BUNDLED {
                pool.insert(FontId::new(*name), bytes)
                    .expect("bundled fonts parse");
            }
            pool
        })
    }

    fn empty() -> Self {
        Self {
            order: Vec::new(),
            fonts: BTreeMap::new(),
        }
    }

    fn insert(&mut self, id: FontId, bytes: &[u8]) -> Result<(), CaptchaError> {
        let font = Font::from_bytes(bytes, FontSettings::default()).map_err(|e| {
            CaptchaError::FontLoad {
                font: id.to_string(),
                reason: e.to_string(),
            }
        })?;
        if self.fonts.insert(id.clone(), Arc::new(font)).is_none() {
            self.order.push(id);
        }
        Ok(())
    }

    /// Loads every `.ttf`/`.otf` file in `dir`, sorted by file name. Font ids
    /// are the lower-cased file stems.
    pub fn from_dir(dir: &Path) -> Result<Self, CaptchaError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| CaptchaError::Io(e.to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| matches!(e.to_ascii_lowercase().as_str(), "ttf" | "otf"))
                    .unwrap_or(false)
            })
            .collect();
        paths.sort();
        let mut pool = Self::empty();
        for p in paths {
            let stem = p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_ascii_lowercase();
            let bytes = std::fs::read(&p).map_err(|e| CaptchaError::Io(e.to_string()))?;
            pool.insert(FontId::new(stem), &bytes)?;
        }
        if pool.order.is_empty() {
            return Err(CaptchaError::FontLoad {
                font: dir.display().to_string(),
                reason: "directory contains no fonts".into(),
            });
        }
        Ok(pool)
    }

    pub fn ids(&self) -> &[FontId] {
        &self.order
    }

    pub fn default_font(&self) -> &FontId {
        &self.order[0]
    }

    pub fn get(&self, id: &FontId) -> Result<&Font, CaptchaError> {
        self.fonts
            .get(id)
            .map(|f| f.as_ref())
            .ok_or_else(|| CaptchaError::UnknownFont(id.to_string()))
    }

    pub fn contains(&self, id: &FontId) -> bool {
        self.fonts.contains_key(id)
    }
}
