use std::collections::BTreeMap;

use serde::Serialize;

use super::{cer, MetricsError};
use crate::corpus::{AnnotationSet, Manifest};

/// Human-study statistics. `accuracy` and `mean_cer` are percentages,
/// agreement values are fractions of multiply-annotated samples.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnnotationSummary {
    pub annotations: usize,
    pub samples: usize,
    pub accuracy: f64,
    pub mean_cer: f64,
    /// Samples with at least two annotations.
    pub agreement_samples: usize,
    pub agreement_always_correct: f64,
    pub agreement_always_wrong: f64,
    pub difficulty_by_style: BTreeMap<String, f64>,
}

/// Case-folds, trims and collapses internal whitespace runs to one space.
pub fn normalize_transcription(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

pub fn annotation_summary(
    set: &AnnotationSet,
    truths: &Manifest,
) -> Result<AnnotationSummary, MetricsError> {
    if set.records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut correct = 0usize;
    let mut cer_sum = 0.0;
    let mut difficulty: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut per_sample: BTreeMap<&str, Vec<bool>> = BTreeMap::new();
    let index: std::collections::HashMap<&str, _> =
        truths.records.iter().map(|r| (r.id.as_str(), r)).collect();
    for r in &set.records {
        let rec = index
            .get(r.sample_id.as_str())
            .ok_or_else(|| MetricsError::DanglingReference(r.sample_id.clone()))?;
        let truth = normalize_transcription(rec.text.as_deref().unwrap_or(""));
        let hyp = normalize_transcription(&r.transcription);
        let ok = truth == hyp;
        correct += usize::from(ok);
        cer_sum += cer(&truth, &hyp)?;
        per_sample.entry(&r.sample_id).or_default().push(ok);
        let style = rec.style.clone().unwrap_or_default();
        let e = difficulty.entry(style).or_insert((0.0, 0));
        e.0 += f64::from(r.difficulty);
        e.1 += 1;
    }
    let n = set.records.len();
    let multi: Vec<&Vec<bool>> = per_sample.values().filter(|v| v.len() >= 2).collect();
    let frac = |k: usize| {
        if multi.is_empty() {
            0.0
        } else {
            k as f64 / multi.len() as f64
        }
    };
    Ok(AnnotationSummary {
        annotations: n,
        samples: per_sample.len(),
        accuracy: 100.0 * correct as f64 / n as f64,
        mean_cer: cer_sum / n as f64,
        agreement_samples: multi.len(),
        agreement_always_correct: frac(multi.iter().filter(|v| v.iter().all(|b| *b)).count()),
        agreement_always_wrong: frac(multi.iter().filter(|v| v.iter().all(|b| !*b)).count()),
        difficulty_by_style: difficulty
            .into_iter()
            .map(|(k, (s, c))| (k, s / c as f64))
            .collect(),
    })
}
