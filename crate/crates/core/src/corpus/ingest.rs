use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use walkdir::WalkDir;

use super::{CorpusError, Manifest, ManifestRecord};
use crate::raster::RasterImage;

/// A file under the benign root that was not admitted, with the reason.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SkipEntry {
    pub path: String,
    pub reason: String,
}

/// Walks `root` in sorted order and admits every decodable image as a benign
/// record whose id is its `/`-separated path relative to `root`.
pub fn ingest_benign(root: &Path) -> Result<(Manifest, Vec<SkipEntry>), CorpusError> {
    let mut files = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| CorpusError::io(root, e))?;
        if entry.file_type().is_file() {
            files.push(entry.into_path());
        }
    }
    let rel_of = |p: &Path| -> String {
        p.strip_prefix(root)
            .unwrap_or(p)
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/")
    };
    let checked: Vec<Result<ManifestRecord, SkipEntry>> = files
        .par_iter()
        .map(|p| {
            let rel = rel_of(p);
            match RasterImage::open(p) {
                Ok(img) => {
                    let mut r = ManifestRecord::benign(rel.clone(), rel);
                    r.source = Some("benign".into());
                    r.width = Some(img.width());
                    r.height = Some(img.height());
                    Ok(r)
                }
                Err(e) => Err(SkipEntry {
                    path: rel,
                    reason: e.to_string(),
                }),
            }
        })
        .collect();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for c in checked {
        match c {
            Ok(r) => records.push(r),
            Err(s) => skipped.push(s),
        }
    }
    if records.is_empty() {
        return Err(CorpusError::EmptyDirectory(root.display().to_string()));
    }
    let m = Manifest::new(records, root);
    m.validate()?;
    Ok((m, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn admits_images_and_reports_skips() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        let img = RasterImage::filled(8, 6, [10, 20, 30]).unwrap();
        img.save_png(&dir.path().join("sub/b.png")).unwrap();
        img.save_png(&dir.path().join("a.png")).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "hello").unwrap();
        let (m, skipped) = ingest_benign(dir.path()).unwrap();
        let ids: Vec<_> = m.records.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a.png", "sub/b.png"]);
        assert_eq!(m.records[0].width, Some(8));
        assert_eq!(skipped.len(), 1);
        assert_eq!(skipped[0].path, "notes.txt");
        assert!(m.resolve(&m.records[1]).exists());
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x.txt"), "no").unwrap();
        assert!(matches!(ingest_benign(dir.path()), Err(CorpusError::EmptyDirectory(_))));
    }
}
