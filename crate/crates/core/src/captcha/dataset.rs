use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::compose::compose_style;
use super::fonts::FontPool;
use super::layout::TextPayload;
use super::profile::StyleProfile;
use super::CaptchaError;
use crate::corpus::{Label, Manifest, ManifestRecord};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Clone, Debug, Serialize)]
pub struct DatasetSummary {
    pub images: usize,
    pub manifest_path: PathBuf,
    pub manifest_digest: String,
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Renders every payload in every profile into `out_dir/images/<style>/` and
/// writes `out_dir/manifest.jsonl`, ordered by profile then payload. On any
/// failure the images written so far are removed.
pub fn generate_dataset(
    payloads: &[TextPayload],
    profiles: &[StyleProfile],
    master_seed: u64,
    fonts: &FontPool,
    out_dir: &Path,
) -> Result<(Manifest, DatasetSummary), CaptchaError> {
    if payloads.is_empty() || profiles.is_empty() {
        return Err(CaptchaError::EmptyWordList);
    }
    let mut ids = std::collections::HashSet::new();
    for p in payloads {
        if !ids.insert(p.id.as_str()) {
            return Err(CaptchaError::InvalidProfile {
                profile: "<word list>".into(),
                reason: format!("duplicate payload id {:?}", p.id),
            });
        }
    }
    for p in profiles {
        p.validate()?;
    }
    let io = |e: std::io::Error| CaptchaError::Io(e.to_string());
    for p in profiles {
        std::fs::create_dir_all(out_dir.join("images").join(sanitize(&p.name))).map_err(io)?;
    }
    let jobs: Vec<(&StyleProfile, &TextPayload)> = profiles
        .iter()
        .flat_map(|prof| payloads.iter().map(move |p| (prof, p)))
        .collect();
    let results: Vec<Result<ManifestRecord, (Option<PathBuf>, CaptchaError)>> = jobs
        .par_iter()
        .map(|(profile, payload)| {
            let (img, rec) =
                compose_style(payload, profile, master_seed, fonts).map_err(|e| (None, e))?;
            let rel = format!(
                "images/{}/{}.png",
                sanitize(&profile.name),
                sanitize(&payload.id)
            );
            let path = out_dir.join(&rel);
            img.save_png(&path)
                .map_err(|e| (Some(path.clone()), CaptchaError::Io(e.to_string())))?;
            Ok(ManifestRecord {
                id: format!("{}-{}", profile.name, payload.id),
                path: rel,
                label: Label::Captcha,
                style: Some(profile.name.clone()),
                text: Some(payload.text.clone()),
                seed: Some(rec.seed),
                source: Some("generated".into()),
                width: Some(rec.width),
                height: Some(rec.height),
                step_log: Some(rec.step_log),
            })
        })
        .collect();

    let mut records = Vec::with_capacity(results.len());
    let mut failure = None;
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err((path, e)) => {
                if let Some(p) = path {
                    let _ = std::fs::remove_file(p);
                }
                failure.get_or_insert(e);
            }
        }
    }
    if let Some(e) = failure {
        for rec in &records {
            let _ = std::fs::remove_file(out_dir.join(&rec.path));
        }
        return Err(e);
    }
    let manifest = Manifest::new(records, out_dir);
    let manifest_path = out_dir.join(MANIFEST_FILE);
    if let Err(e) = manifest.write_jsonl(&manifest_path) {
        for rec in &manifest.records {
            let _ = std::fs::remove_file(out_dir.join(&rec.path));
        }
        return Err(CaptchaError::Io(e.to_string()));
    }
    let summary = DatasetSummary {
        images: manifest.len(),
        manifest_digest: manifest.digest(),
        manifest_path,
    };
    Ok((manifest, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::captcha::builtin_profiles;

    #[test]
    fn one_word_one_profile_gives_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let reg = builtin_profiles();
        let (m, s) = generate_dataset(
            &[TextPayload::new("w0000", "hate")],
            &reg.select("homemade").unwrap(),
            7,
            FontPool::bundled(),
            dir.path(),
        )
        .unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(s.images, 1);
        assert!(dir.path().join(&m.records[0].path).exists());
        let back = Manifest::read_jsonl(&s.manifest_path).unwrap();
        assert_eq!(back.records, m.records);
    }

    #[test]
    fn failures_remove_partial_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let reg = builtin_profiles();
        let payloads = [
            TextPayload::new("ok", "fine"),
            TextPayload::new("bad", "\u{E000}"),
        ];
        let err = generate_dataset(&payloads, &reg.select("clean").unwrap(), 1, FontPool::bundled(), dir.path());
        assert!(err.is_err());
        let leftover = std::fs::read_dir(dir.path().join("images/clean")).unwrap().count();
        assert_eq!(leftover, 0);
        assert!(!dir.path().join(MANIFEST_FILE).exists());
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(generate_dataset(&[], builtin_profiles().profiles(), 1, FontPool::bundled(), dir.path()).is_err());
    }
}
