use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::Deserialize;

use super::{DefenseError, FeatureMatrix, FeatureSet};
use crate::corpus::Manifest;

#[derive(Deserialize)]
struct JsonHeader {
    dim: usize,
}

#[derive(Deserialize)]
struct JsonRow {
    id: String,
    values: Vec<f64>,
}

fn parse_err(source: &str, line: usize, reason: impl Into<String>) -> DefenseError {
    DefenseError::Parse {
        path: source.to_string(),
        line,
        reason: reason.into(),
    }
}

/// Externally computed embeddings, either CSV with header `id,f0,...` or
/// JSON lines whose first line is `{"dim": d}` followed by
/// `{"id": ..., "values": [...]}` rows. Every id must exist in `manifest`.
pub fn load_embeddings(path: &Path, manifest: &Manifest) -> Result<FeatureSet, DefenseError> {
    let f = std::fs::File::open(path).map_err(|e| DefenseError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_embeddings(f, &path.display().to_string(), manifest)
}

pub fn parse_embeddings<R: Read>(reader: R, source: &str, manifest: &Manifest) -> Result<FeatureSet, DefenseError> {
    let mut reader = BufReader::new(reader);
    let first = {
        let buf = reader.fill_buf().map_err(|e| parse_err(source, 1, e.to_string()))?;
        buf.iter().copied().find(|b| !b.is_ascii_whitespace())
    };
    let (ids, rows) = if first == Some(b'{') {
        parse_jsonl(reader, source)?
    } else {
        parse_csv(reader, source)?
    };
    let known: HashSet<&str> = manifest.records.iter().map(|r| r.id.as_str()).collect();
    for id in &ids {
        if !known.contains(id.as_str()) {
            return Err(DefenseError::UnknownId(id.clone()));
        }
    }
    FeatureSet::new(ids, FeatureMatrix::from_rows(&rows)?)
}

type Parsed = (Vec<String>, Vec<Vec<f64>>);

fn parse_csv<R: Read>(reader: R, source: &str) -> Result<Parsed, DefenseError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_err(source, 1, e.to_string()))?;
    if header.get(0).map(str::trim) != Some("id") || header.len() < 2 {
        return Err(parse_err(source, 1, "header must be id,f0,f1,..."));
    }
    let dim = header.len() - 1;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(source, i + 2, e.to_string()))?;
        let id = rec.get(0).unwrap_or("").trim().to_string();
        if rec.len() - 1 != dim {
            return Err(DefenseError::DimensionMismatch {
                id,
                expected: dim,
                found: rec.len().saturating_sub(1),
            });
        }
        let row = rec
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| parse_err(source, i + 2, e.to_string()))?;
        ids.push(id);
        rows.push(row);
    }
    Ok((ids, rows))
}

fn parse_jsonl<R: BufRead>(reader: R, source: &str) -> Result<Parsed, DefenseError> {
    let mut lines = reader.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()));
    let (_, head) = lines.next().ok_or_else(|| parse_err(source, 1, "empty file"))?;
    let head = head.map_err(|e| parse_err(source, 1, e.to_string()))?;
    let dim = serde_json::from_str::<JsonHeader>(&head)
        .map_err(|e| parse_err(source, 1, format!("header: {e}")))?
        .dim;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| parse_err(source, i + 1, e.to_string()))?;
        let row: JsonRow = serde_json::from_str(&line).map_err(|e| parse_err(source, i + 1, e.to_string()))?;
        if row.values.len() != dim {
            return Err(DefenseError::DimensionMismatch {
                id: row.id,
                expected: dim,
                found: row.values.len(),
            });
        }
        ids.push(row.id);
        rows.push(row.values);
    }
    Ok((ids, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ManifestRecord;

    fn manifest() -> Manifest {
        Manifest::new(
            ["a", "b", "c"].iter().map(|id| ManifestRecord::benign(*id, "x.png")).collect(),
            ".",
        )
    }

    fn csv_of(rows: &[(&str, usize)]) -> String {
        let mut s = String::from("id");
        for j in 0..512 {
            s.push_str(&format!(",f{j}"));
        }
        s.push('\n');
        for (id, d) in rows {
            s.push_str(id);
            for j in 0..*d {
                s.push_str(&format!(",{}", j as f64 * 0.5));
            }
            s.push('\n');
        }
        s
    }

    #[test]
    fn csv_three_rows() {
        let set = parse_embeddings(csv_of(&[("a", 512), ("b", 512), ("c", 512)]).as_bytes(), "mem", &manifest()).unwrap();
        assert_eq!((set.len(), set.dim()), (3, 512));
        assert_eq!(set.get("b").unwrap()[3], 1.5);
    }

    #[test]
    fn short_row_rejected() {
        let r = parse_embeddings(csv_of(&[("a", 512), ("b", 511)]).as_bytes(), "mem", &manifest());
        assert!(matches!(r, Err(DefenseError::DimensionMismatch { expected: 512, found: 511, .. })));
    }

    #[test]
    fn unknown_id_named() {
        let r = parse_embeddings(csv_of(&[("zz", 512)]).as_bytes(), "mem", &manifest());
        assert!(matches!(r, Err(DefenseError::UnknownId(id)) if id == "zz"));
    }

    #[test]
    fn jsonl_format() {
        let text = "{\"dim\": 2}\n{\"id\": \"a\", \"values\": [1, 2]}\n\n{\"id\": \"c\", \"values\": [3, 4.5]}\n";
        let set = parse_embeddings(text.as_bytes(), "mem", &manifest()).unwrap();
        assert_eq!(set.ids, ["a", "c"]);
        assert_eq!(set.get("c").unwrap(), [3.0, 4.5]);
        let bad = "{\"dim\": 3}\n{\"id\": \"a\", \"values\": [1, 2]}\n";
        assert!(matches!(
            parse_embeddings(bad.as_bytes(), "mem", &manifest()),
            Err(DefenseError::DimensionMismatch { .. })
        ));
    }
}
