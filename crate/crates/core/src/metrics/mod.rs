//! Edit distances, attack success rate, annotation statistics and binary
//! classification scores.

mod annotation;
mod classification;
mod edit;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use annotation::{annotation_summary, normalize_transcription, AnnotationSummary};
pub use classification::{classification_scores, f1_macro, roc_auc, ClassificationScores, Prediction};
pub use edit::{cer, levenshtein, nld};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("ground-truth text is empty")]
    EmptyTruth,
    #[error("reference text is empty")]
    EmptyReference,
    #[error("no inputs")]
    EmptyInput,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("annotation references unknown sample {0:?}")]
    DanglingReference(String),
}

/// Result of submitting one captcha to a moderation pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub sample_id: String,
    pub style: String,
    pub ground_truth: String,
    pub extracted: String,
    pub flagged: bool,
}

/// Fraction of outcomes that went unflagged.
pub fn asr(outcomes: &[AttackOutcome]) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let missed = outcomes.iter().filter(|o| !o.flagged).count();
    Ok(missed as f64 / outcomes.len() as f64)
}

/// A named scalar with its ratio parts, when it has them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub metric: String,
    pub group: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub numerator: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub denominator: Option<f64>,
}

impl ScoreReport {
    pub fn ratio(metric: &str, group: &str, numerator: usize, denominator: usize) -> Self {
        Self {
            metric: metric.into(),
            group: group.into(),
            value: if denominator == 0 {
                0.0
            } else {
                numerator as f64 / denominator as f64
            },
            numerator: Some(numerator as f64),
            denominator: Some(denominator as f64),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcomes(flags: &[bool]) -> Vec<AttackOutcome> {
        flags
            .iter()
            .enumerate()
            .map(|(i, &flagged)| AttackOutcome {
                sample_id: i.to_string(),
                style: "clean".into(),
                ground_truth: "hate".into(),
                extracted: String::new(),
                flagged,
            })
            .collect()
    }

    #[test]
    fn attack_success_rate() {
        assert_eq!(asr(&outcomes(&[false; 5])).unwrap(), 1.0);
        assert_eq!(asr(&outcomes(&[true; 5])).unwrap(), 0.0);
        let mut v = vec![false; 48];
        v.extend([true, true]);
        assert!((asr(&outcomes(&v)).unwrap() - 0.96).abs() < 1e-12);
        assert_eq!(asr(&[]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn ratio_report() {
        let r = ScoreReport::ratio("asr", "clean", 3, 4);
        assert_eq!(r.value, 0.75);
        assert_eq!(ScoreReport::ratio("asr", "x", 0, 0).value, 0.0);
    }
}
