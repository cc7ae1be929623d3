use serde::{Deserialize, Serialize};

use super::MetricsError;

/// A binary decision plus the score it was thresholded from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: bool,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub f1_macro: f64,
    /// Precision and recall of the positive class.
    pub precision: f64,
    pub recall: f64,
    /// `None` when the truths contain a single class.
    pub roc_auc: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Confusion {
    tp: usize,
    fp: usize,
    fn_: usize,
    tn: usize,
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    ratio(2 * tp, 2 * tp + fp + fn_)
}

/// Macro F1 over both classes of a binary problem.
pub fn f1_macro(predicted: &[bool], truths: &[bool]) -> Result<f64, MetricsError> {
    let c = confusion(predicted, truths)?;
    Ok((f1(c.tp, c.fp, c.fn_) + f1(c.tn, c.fn_, c.fp)) / 2.0)
}

fn confusion(predicted: &[bool], truths: &[bool]) -> Result<Confusion, MetricsError> {
    if predicted.len() != truths.len() {
        return Err(MetricsError::LengthMismatch {
            left: predicted.len(),
            right: truths.len(),
        });
    }
    if truths.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut c = Confusion::default();
    for (&p, &t) in predicted.iter().zip(truths) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Area under the ROC curve via the rank statistic; tied scores count half.
pub fn roc_auc(scores: &[f64], truths: &[bool]) -> Result<Option<f64>, MetricsError> {
    if scores.len() != truths.len() {
        return Err(MetricsError::LengthMismatch {
            left: scores.len(),
            right: truths.len(),
        });
    }
    let pos = truths.iter().filter(|t| **t).count();
    let neg = truths.len() - pos;
    if pos == 0 || neg == 0 {
        return Ok(None);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks (1-based) summed over positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * idx[i..=j].iter().filter(|&&k| truths[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(Some(u / (pos as f64 * neg as f64)))
}

pub fn classification_scores(
    predictions: &[Prediction],
    truths: &[bool],
) -> Result<ClassificationScores, MetricsError> {
    let labels: Vec<bool> = predictions.iter().map(|p| p.label).collect();
    let scores: Vec<f64> = predictions.iter().map(|p| p.score).collect();
    let c = confusion(&labels, truths)?;
    Ok(ClassificationScores {
        f1_macro: (f1(c.tp, c.fp, c.fn_) + f1(c.tn, c.fn_, c.fp)) / 2.0,
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, c.tp + c.fn_),
        roc_auc: roc_auc(&scores, truths)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preds(v: &[(bool, f64)]) -> Vec<Prediction> {
        v.iter().map(|&(label, score)| Prediction { label, score }).collect()
    }

    #[test]
    fn perfect_predictor() {
        let p = preds(&[(true, 0.9), (true, 0.8), (false, 0.1), (false, 0.2)]);
        let s = classification_scores(&p, &[true, true, false, false]).unwrap();
        assert_eq!(s.f1_macro, 1.0);
        assert_eq!(s.roc_auc, Some(1.0));
        assert_eq!((s.precision, s.recall), (1.0, 1.0));
    }

    #[test]
    fn constant_scores_give_half() {
        let p = preds(&[(true, 0.3); 4]);
        let s = classification_scores(&p, &[true, false, true, false]).unwrap();
        assert_eq!(s.roc_auc, Some(0.5));
    }

    #[test]
    fn six_scores_match_pairwise_oracle() {
        let scores = [0.9, 0.4, 0.4, 0.7, 0.1, 0.4];
        let truths = [true, true, false, false, false, true];
        let mut credit = 0.0;
        let mut pairs = 0.0;
        for (i, &ti) in truths.iter().enumerate() {
            for (j, &tj) in truths.iter().enumerate() {
                if ti && !tj {
                    pairs += 1.0;
                    credit += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        let got = roc_auc(&scores, &truths).unwrap().unwrap();
        assert!((got - credit / pairs).abs() < 1e-12);
        // predicted = score > 0.5: tp=1 fp=1 fn=2 tn=2
        let labels: Vec<bool> = scores.iter().map(|s| *s > 0.5).collect();
        let f = f1_macro(&labels, &truths).unwrap();
        let expected = (2.0 / 5.0 + 4.0 / 7.0) / 2.0;
        assert!((f - expected).abs() < 1e-12);
    }

    #[test]
    fn single_class_auc_absent() {
        assert_eq!(roc_auc(&[0.1, 0.2], &[true, true]).unwrap(), None);
        assert!(roc_auc(&[0.1], &[true, false]).is_err());
    }
}
