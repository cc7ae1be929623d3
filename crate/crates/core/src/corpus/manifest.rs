use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CorpusError;
use crate::captcha::AppliedStep;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Captcha,
    Benign,
}

/// One sample of a corpus: a generated captcha or an ingested benign image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    /// Relative to the manifest's directory unless absolute.
    pub path: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_log: Option<Vec<AppliedStep>>,
}

impl ManifestRecord {
    pub fn benign(id: impl Into<String>, path: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            path: path.into(),
            label: Label::Benign,
            style: None,
            text: None,
            seed: None,
            source: None,
            width: None,
            height: None,
            step_log: None,
        }
    }

    pub fn captcha(
        id: impl Into<String>,
        path: impl Into<String>,
        style: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        Self {
            label: Label::Captcha,
            style: Some(style.into()),
            text: Some(text.into()),
            ..Self::benign(id, path)
        }
    }
}

/// Ordered set of records plus the directory relative paths resolve against.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(records: Vec<ManifestRecord>, base_dir: impl Into<PathBuf>) -> Self {
        Self {
            records,
            base_dir: base_dir.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn resolve(&self, record: &ManifestRecord) -> PathBuf {
        let p = Path::new(&record.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Ids are unique, captchas carry style and text, benign records carry
    /// no style.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut ids = HashSet::new();
        for r in &self.records {
            if !ids.insert(r.id.as_str()) {
                return Err(CorpusError::DuplicateId(r.id.clone()));
            }
            match r.label {
                Label::Captcha => {
                    if r.style.is_none() || r.text.as_deref().is_none_or(str::is_empty) {
                        return Err(CorpusError::InvalidRecord {
                            id: r.id.clone(),
                            reason: "captcha record without style or text".into(),
                        });
                    }
                }
                Label::Benign => {
                    if r.style.is_some() {
                        return Err(CorpusError::InvalidRecord {
                            id: r.id.clone(),
                            reason: "benign record carries a style".into(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Canonical JSON-lines bytes (one record per line, trailing newline).
    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r).expect("records serialize");
            out.push(b'\n');
        }
        out
    }

    /// Hex SHA-256 of [`Manifest::to_jsonl`].
    pub fn digest(&self) -> String {
        hex_digest(&self.to_jsonl())
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let mut f = std::fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
        f.write_all(&self.to_jsonl())
            .map_err(|e| CorpusError::io(path, e))?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self, CorpusError> {
        let f = std::fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| CorpusError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord =
                serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            records.push(rec);
        }
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let m = Self { records, base_dir };
        m.validate()?;
        Ok(m)
    }

    /// Distinct styles of captcha records, in first-appearance order.
    pub fn styles(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for r in &self.records {
            if let Some(s) = &r.style {
                if !seen.contains(s) {
                    seen.push(s.clone());
                }
            }
        }
        seen
    }

    /// Concatenates manifests, rebasing relative paths onto absolute ones.
    pub fn merge(parts: &[&Manifest]) -> Result<Manifest, CorpusError> {
        let mut records = Vec::new();
        for m in parts {
            for r in &m.records {
                let mut r = r.clone();
                r.path = m.resolve(&r).to_string_lossy().into_owned();
                records.push(r);
            }
        }
        let m = Manifest::new(records, ".");
        m.validate()?;
        Ok(m)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest::new(
            vec![
                ManifestRecord::captcha("c1", "images/c1.png", "clean", "hate"),
                ManifestRecord::benign("b1", "/abs/b1.png"),
            ],
            dir.path(),
        );
        let p = dir.path().join("m.jsonl");
        m.write_jsonl(&p).unwrap();
        let back = Manifest::read_jsonl(&p).unwrap();
        assert_eq!(back.records, m.records);
        assert_eq!(back.digest(), m.digest());
        assert_eq!(back.resolve(&back.records[0]), dir.path().join("images/c1.png"));
        assert_eq!(back.resolve(&back.records[1]), PathBuf::from("/abs/b1.png"));
        assert_eq!(back.styles(), vec!["clean".to_string()]);
    }

    #[test]
    fn invariants_are_checked() {
        let dup = Manifest::new(
            vec![ManifestRecord::benign("x", "a"), ManifestRecord::benign("x", "b")],
            ".",
        );
        assert!(matches!(dup.validate(), Err(CorpusError::DuplicateId(_))));
        let mut styled = ManifestRecord::benign("x", "a");
        styled.style = Some("clean".into());
        assert!(Manifest::new(vec![styled], ".").validate().is_err());
        let mut textless = ManifestRecord::captcha("c", "a", "clean", "t");
        textless.text = None;
        assert!(Manifest::new(vec![textless], ".").validate().is_err());
    }
}
