use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::detector::DetectorKind;
use super::grid::{build_bank, Candidate, GridSpec};
use super::{DefenseError, FeatureSet};
use crate::corpus::{ExperimentPlan, Manifest, Partition};
use crate::metrics::{classification_scores, Prediction};

/// Test-set outcome of one detector on one style combination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinationResult {
    pub detector: DetectorKind,
    pub k: usize,
    pub combination: usize,
    pub known_styles: Vec<String>,
    pub unknown_styles: Vec<String>,
    pub selected: Candidate,
    pub validation_f1: f64,
    pub f1_macro: f64,
    pub precision: f64,
    pub recall: f64,
    pub roc_auc: Option<f64>,
    /// Share of known-style test captchas flagged as outliers.
    pub known_style_accuracy: f64,
    /// `None` when every style is known.
    pub unknown_style_accuracy: Option<f64>,
    pub benign_false_positive_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub detector: DetectorKind,
    /// `None` for the mean over every k.
    pub k: Option<usize>,
    pub runs: usize,
    pub mean_f1_macro: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_known_style_accuracy: f64,
    pub mean_unknown_style_accuracy: Option<f64>,
    pub mean_benign_false_positive_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseReport {
    pub plan_digest: String,
    pub grid: GridSpec,
    pub results: Vec<CombinationResult>,
    pub by_k: Vec<AggregateRow>,
    pub by_detector: Vec<AggregateRow>,
}

impl DefenseReport {
    /// Mean test F1 of `kind` over the runs whose k is in `ks` (all runs
    /// when `ks` is empty).
    pub fn mean_f1(&self, kind: DetectorKind, ks: &[usize]) -> Option<f64> {
        let v: Vec<f64> = self
            .results
            .iter()
            .filter(|r| r.detector == kind && (ks.is_empty() || ks.contains(&r.k)))
            .map(|r| r.f1_macro)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn aggregate(detector: DetectorKind, k: Option<usize>, rows: &[&CombinationResult]) -> AggregateRow {
    AggregateRow {
        detector,
        k,
        runs: rows.len(),
        mean_f1_macro: mean(rows.iter().map(|r| r.f1_macro)).unwrap_or(0.0),
        mean_precision: mean(rows.iter().map(|r| r.precision)).unwrap_or(0.0),
        mean_recall: mean(rows.iter().map(|r| r.recall)).unwrap_or(0.0),
        mean_known_style_accuracy: mean(rows.iter().map(|r| r.known_style_accuracy)).unwrap_or(0.0),
        mean_unknown_style_accuracy: mean(rows.iter().filter_map(|r| r.unknown_style_accuracy)),
        mean_benign_false_positive_rate: mean(rows.iter().map(|r| r.benign_false_positive_rate)).unwrap_or(0.0),
    }
}

/// Runs the k-known-styles protocol. Every detector configuration is fit
/// once on the shared benign training split; for each combination the grid
/// is searched on that combination's validation set and the winner is
/// scored on its test set. `features` must cover every id the plan names,
/// and `captchas` supplies the style of each captcha id.
pub fn run_outlier_experiment(
    plan: &ExperimentPlan,
    features: &FeatureSet,
    captchas: &Manifest,
    kinds: &[DetectorKind],
    grid: &GridSpec,
    seed: u64,
) -> Result<DefenseReport, DefenseError> {
    let max_k = plan.ks.iter().copied().max().unwrap_or(0);
    if max_k > plan.styles.len() || plan.combinations.is_empty() {
        return Err(DefenseError::InsufficientStyles {
            available: plan.styles.len(),
            needed: max_k,
        });
    }
    let style_of: HashMap<&str, &str> = captchas
        .records
        .iter()
        .filter_map(|r| r.style.as_deref().map(|s| (r.id.as_str(), s)))
        .collect();

    // Every id that any validation or test set can mention, scored once.
    let mut universe: Vec<&str> = plan.benign.ids(Partition::Validation);
    universe.extend(plan.benign.ids(Partition::Test));
    let benign_end = universe.len();
    let mut captcha_ids: Vec<&str> = plan
        .combinations
        .iter()
        .flat_map(|c| c.validation.iter().chain(&c.test).map(String::as_str))
        .collect();
    captcha_ids.sort_unstable();
    captcha_ids.dedup();
    universe.extend(captcha_ids);
    let position: HashMap<&str, usize> = universe.iter().enumerate().map(|(i, id)| (*id, i)).collect();

    let train = features.gather(&plan.train_ids())?;
    let points = features.gather(&universe)?;
    let bank = build_bank(kinds, grid, &train, &points, seed)?;

    let mut results = Vec::new();
    for combo in &plan.combinations {
        let val_idx: Vec<usize> = plan.validation_ids(combo).iter().map(|id| position[id]).collect();
        let val_y: Vec<bool> = val_idx.iter().map(|&i| i >= benign_end).collect();
        let test_idx: Vec<usize> = plan.test_ids(combo).iter().map(|id| position[id]).collect();
        let test_y: Vec<bool> = test_idx.iter().map(|&i| i >= benign_end).collect();
        for &kind in kinds {
            let (sel, e_idx, c_idx) = bank.select(kind, &val_idx, &val_y)?;
            let entry = &bank.entries[e_idx];
            let flagged = bank.predictions(entry, c_idx, &test_idx);
            let preds: Vec<Prediction> = flagged
                .iter()
                .zip(&test_idx)
                .map(|(&label, &i)| Prediction {
                    label,
                    score: entry.scores[i],
                })
                .collect();
            let scores = classification_scores(&preds, &test_y)?;
            let rate = |pick: &dyn Fn(usize) -> bool| {
                mean(test_idx.iter().zip(&flagged).filter(|(i, _)| pick(**i)).map(|(_, f)| f64::from(u8::from(*f))))
            };
            let known = |i: usize| {
                i >= benign_end
                    && style_of
                        .get(universe[i])
                        .is_some_and(|s| combo.known.iter().any(|k| k == s))
            };
            let unknown = |i: usize| i >= benign_end && !known(i);
            results.push(CombinationResult {
                detector: kind,
                k: combo.k,
                combination: combo.index,
                known_styles: combo.known.clone(),
                unknown_styles: combo.unknown.clone(),
                selected: sel.candidate,
                validation_f1: sel.validation_f1,
                f1_macro: scores.f1_macro,
                precision: scores.precision,
                recall: scores.recall,
                roc_auc: scores.roc_auc,
                known_style_accuracy: rate(&known).unwrap_or(0.0),
                unknown_style_accuracy: rate(&unknown),
                benign_false_positive_rate: rate(&|i| i < benign_end).unwrap_or(0.0),
            });
        }
    }

    let mut by_k = Vec::new();
    let mut by_detector = Vec::new();
    for &kind in kinds {
        let mut per_k: BTreeMap<usize, Vec<&CombinationResult>> = BTreeMap::new();
        for r in results.iter().filter(|r| r.detector == kind) {
            per_k.entry(r.k).or_default().push(r);
        }
        for (k, rows) in &per_k {
            by_k.push(aggregate(kind, Some(*k), rows));
        }
        let all: Vec<&CombinationResult> = per_k.into_values().flatten().collect();
        by_detector.push(aggregate(kind, None, &all));
    }
    Ok(DefenseReport {
        plan_digest: plan.digest(),
        grid: grid.clone(),
        results,
        by_k,
        by_detector,
    })
}
