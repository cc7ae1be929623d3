use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Manifest};

/// One human transcription of one captcha.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub annotator_id: String,
    pub sample_id: String,
    pub transcription: String,
    /// Perceived difficulty, 1 (trivial) to 5 (unreadable).
    pub difficulty: u8,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnnotationSet {
    pub records: Vec<AnnotationRecord>,
}

impl AnnotationSet {
    pub fn by_sample(&self) -> BTreeMap<&str, Vec<&AnnotationRecord>> {
        let mut out: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.sample_id.as_str()).or_default().push(r);
        }
        out
    }

    /// Number of samples keyed by how many annotations each received.
    pub fn coverage(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for v in self.by_sample().values() {
            *out.entry(v.len()).or_insert(0) += 1;
        }
        out
    }
}

#[derive(Deserialize)]
struct Row {
    annotator_id: String,
    sample_id: String,
    transcription: String,
    difficulty: i64,
}

/// Parses `annotator_id,sample_id,transcription,difficulty` CSV. Every
/// sample id must exist in `manifest`.
pub fn parse_annotations<R: std::io::Read>(
    reader: R,
    source: &str,
    manifest: &Manifest,
) -> Result<AnnotationSet, CorpusError> {
    let known: std::collections::HashSet<&str> =
        manifest.records.iter().map(|r| r.id.as_str()).collect();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::Headers).from_reader(reader);
    let mut records = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| CorpusError::Parse {
            path: source.to_string(),
            line: i + 2,
            reason: e.to_string(),
        })?;
        if !known.contains(row.sample_id.as_str()) {
            return Err(CorpusError::DanglingReference(row.sample_id));
        }
        if !(1..=5).contains(&row.difficulty) {
            return Err(CorpusError::DifficultyOutOfRange {
                sample: row.sample_id,
                value: row.difficulty,
            });
        }
        records.push(AnnotationRecord {
            annotator_id: row.annotator_id,
            sample_id: row.sample_id,
            transcription: row.transcription,
            difficulty: row.difficulty as u8,
        });
    }
    Ok(AnnotationSet { records })
}

pub fn load_annotations(path: &Path, manifest: &Manifest) -> Result<AnnotationSet, CorpusError> {
    let f = std::fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    parse_annotations(f, &path.display().to_string(), manifest)
}
