use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::adapters::{
    BlocklistModerator, EchoOcr, ImageModerator, NoopImageModerator, NullOcr, OcrEngine,
    TextModerator,
};
use super::http::{HttpAdapter, HttpEndpoint};
use super::process::CommandOcr;
use super::PipelineError;
use crate::corpus::{load_wordlist, Manifest};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OcrConfig {
    /// Perfect reader for the evaluated manifest.
    Echo,
    Null,
    Command { command: Vec<String> },
    Http {
        #[serde(flatten)]
        endpoint: HttpEndpoint,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModeratorConfig {
    /// Inline `words`, a newline-delimited `file`, or both.
    Blocklist {
        #[serde(default)]
        words: Vec<String>,
        #[serde(default)]
        file: Option<PathBuf>,
    },
    Http {
        #[serde(flatten)]
        endpoint: HttpEndpoint,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImageModeratorConfig {
    #[default]
    None,
    Http {
        #[serde(flatten)]
        endpoint: HttpEndpoint,
    },
}

fn default_threshold() -> f64 {
    0.5
}

fn default_timeout() -> u64 {
    30_000
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// A verdict is flagged when any category score exceeds this.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    /// When false, images carrying text skip OCR and text moderation.
    #[serde(default = "default_true")]
    pub ocr_stage_enabled: bool,
    pub ocr: OcrConfig,
    pub moderator: ModeratorConfig,
    #[serde(default)]
    pub image_moderator: ImageModeratorConfig,
}

impl PipelineConfig {
    /// Echo OCR, a blocklist moderator and no image moderation.
    pub fn mock(blocklist: &[&str]) -> Self {
        Self {
            threshold: default_threshold(),
            timeout_ms: default_timeout(),
            ocr_stage_enabled: true,
            ocr: OcrConfig::Echo,
            moderator: ModeratorConfig::Blocklist {
                words: blocklist.iter().map(|s| s.to_string()).collect(),
                file: None,
            },
            image_moderator: ImageModeratorConfig::None,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(PipelineError::Config(format!(
                "threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        if self.timeout_ms == 0 {
            return Err(PipelineError::Config("timeout_ms must be positive".into()));
        }
        if let OcrConfig::Command { command } = &self.ocr {
            if command.is_empty() {
                return Err(PipelineError::Config("empty OCR command".into()));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, PipelineError> {
        let c: Self = toml::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Relative blocklist files resolve against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let s = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut c = Self::from_toml_str(&s)?;
        if let ModeratorConfig::Blocklist { file: Some(f), .. } = &mut c.moderator {
            if f.is_relative() {
                if let Some(dir) = path.parent() {
                    *f = dir.join(&*f);
                }
            }
        }
        Ok(c)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

/// A configuration bound to live adapters.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub ocr: Box<dyn OcrEngine>,
    pub text: Box<dyn TextModerator>,
    pub image: Box<dyn ImageModerator>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("config", &self.config)
            .field("ocr", &self.ocr.name())
            .field("text", &self.text.name())
            .field("image", &self.image.name())
            .finish()
    }
}

impl Pipeline {
    /// Instantiates the configured adapters. Echo OCR needs the manifest
    /// whose images it will be shown.
    pub fn build(config: PipelineConfig, manifest: Option<&Manifest>) -> Result<Self, PipelineError> {
        config.validate()?;
        let timeout = config.timeout();
        let ocr: Box<dyn OcrEngine> = match &config.ocr {
            OcrConfig::Echo => {
                let m = manifest.ok_or_else(|| {
                    PipelineError::Config("echo OCR requires a manifest".into())
                })?;
                Box::new(EchoOcr::from_manifest(m)?)
            }
            OcrConfig::Null => Box::new(NullOcr),
            OcrConfig::Command { command } => Box::new(
                CommandOcr::new(command, timeout)
                    .ok_or_else(|| PipelineError::Config("empty OCR command".into()))?,
            ),
            OcrConfig::Http { endpoint } => Box::new(HttpAdapter::new(endpoint.clone(), timeout)),
        };
        let text: Box<dyn TextModerator> = match &config.moderator {
            ModeratorConfig::Blocklist { words, file } => {
                let mut all = words.clone();
                if let Some(f) = file {
                    let list = load_wordlist(f).map_err(|e| PipelineError::Config(e.to_string()))?;
                    all.extend(list.payloads.into_iter().map(|p| p.text));
                }
                Box::new(BlocklistModerator::new(all)?)
            }
            ModeratorConfig::Http { endpoint } => Box::new(HttpAdapter::new(endpoint.clone(), timeout)),
        };
        let image: Box<dyn ImageModerator> = match &config.image_moderator {
            ImageModeratorConfig::None => Box::new(NoopImageModerator),
            ImageModeratorConfig::Http { endpoint } => Box::new(HttpAdapter::new(endpoint.clone(), timeout)),
        };
        Ok(Self {
            config,
            ocr,
            text,
            image,
        })
    }

    pub fn serial_only(&self) -> bool {
        self.ocr.serial_only() || self.text.serial_only() || self.image.serial_only()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_toml_with_defaults() {
        let c = PipelineConfig::from_toml_str(
            r#"
            ocr_stage_enabled = false
            [ocr]
            kind = "command"
            command = ["tesseract", "{image}", "stdout"]
            [moderator]
            kind = "blocklist"
            words = ["hate"]
            "#,
        )
        .unwrap();
        assert_eq!(c.threshold, 0.5);
        assert_eq!(c.timeout_ms, 30_000);
        assert!(!c.ocr_stage_enabled);
        assert_eq!(c.image_moderator, ImageModeratorConfig::None);
        assert!(matches!(c.ocr, OcrConfig::Command { ref command } if command.len() == 3));
    }

    #[test]
    fn http_sections_flatten() {
        let c = PipelineConfig::from_toml_str(
            r#"
            threshold = 0.7
            [ocr]
            kind = "null"
            [moderator]
            kind = "http"
            url = "http://localhost:9/m"
            auth_header = "Authorization"
            auth_env = "MOD_TOKEN"
            "#,
        )
        .unwrap();
        match c.moderator {
            ModeratorConfig::Http { endpoint } => {
                assert_eq!(endpoint.auth_env.as_deref(), Some("MOD_TOKEN"))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_values() {
        let base = "[ocr]\nkind = \"null\"\n[moderator]\nkind = \"blocklist\"\nwords = [\"x\"]\n";
        assert!(PipelineConfig::from_toml_str(&format!("threshold = 1.0\n{base}")).is_err());
        assert!(PipelineConfig::from_toml_str(&format!("threshold = 0.0\n{base}")).is_err());
        assert!(PipelineConfig::from_toml_str(&format!("timeout_ms = 0\n{base}")).is_err());
        assert!(PipelineConfig::from_toml_str(&format!("bogus = 1\n{base}")).is_err());
        assert!(PipelineConfig::from_toml_str(base).is_ok());
    }

    #[test]
    fn echo_needs_manifest() {
        assert!(Pipeline::build(PipelineConfig::mock(&["hate"]), None).is_err());
        let mut c = PipelineConfig::mock(&["hate"]);
        c.ocr = OcrConfig::Null;
        assert!(Pipeline::build(c, None).is_ok());
    }

    #[test]
    fn blocklist_file_resolves_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("block.txt"), "hate\nkill\n").unwrap();
        std::fs::write(
            dir.path().join("p.toml"),
            "[ocr]\nkind = \"null\"\n[moderator]\nkind = \"blocklist\"\nfile = \"block.txt\"\n",
        )
        .unwrap();
        let c = PipelineConfig::load(&dir.path().join("p.toml")).unwrap();
        let p = Pipeline::build(c, None).unwrap();
        assert_eq!(p.text.score("KILL").unwrap()["offensive"], 1.0);
    }
}
