use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ecod::EcodModel;
use super::iforest::IsolationForest;
use super::lof::LofModel;
use super::{DefenseError, FeatureMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    #[serde(rename = "iforest")]
    IForest,
    Lof,
    Ecod,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [DetectorKind::IForest, DetectorKind::Lof, DetectorKind::Ecod];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::IForest => "iforest",
            DetectorKind::Lof => "lof",
            DetectorKind::Ecod => "ecod",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s.trim()))
    }
}

/// Kind plus its own hyperparameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorParams {
    #[serde(rename = "iforest")]
    IForest { n_estimators: usize, seed: u64 },
    Lof { n_neighbors: usize },
    Ecod,
}

impl DetectorParams {
    pub fn kind(&self) -> DetectorKind {
        match self {
            DetectorParams::IForest { .. } => DetectorKind::IForest,
            DetectorParams::Lof { .. } => DetectorKind::Lof,
            DetectorParams::Ecod => DetectorKind::Ecod,
        }
    }

    /// The value the grid varies for this kind; ECOD has none.
    pub fn hyperparameter(&self) -> Option<usize> {
        match self {
            DetectorParams::IForest { n_estimators, .. } => Some(*n_estimators),
            DetectorParams::Lof { n_neighbors } => Some(*n_neighbors),
            DetectorParams::Ecod => None,
        }
    }
}

/// Fitted scoring state, before any threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scorer {
    #[serde(rename = "iforest")]
    IForest(IsolationForest),
    Lof(LofModel),
    Ecod(EcodModel),
}

impl Scorer {
    pub fn fit(params: &DetectorParams, x: &FeatureMatrix) -> Result<Self, DefenseError> {
        if x.is_empty() {
            return Err(DefenseError::TooFewTrainingPoints { needed: 1, found: 0 });
        }
        Ok(match *params {
            DetectorParams::IForest { n_estimators, seed } => {
                if n_estimators == 0 {
                    return Err(DefenseError::InvalidParameter("zero estimators".into()));
                }
                Scorer::IForest(IsolationForest::fit(x, n_estimators, seed))
            }
            DetectorParams::Lof { n_neighbors } => Scorer::Lof(LofModel::fit(x, n_neighbors)?),
            DetectorParams::Ecod => Scorer::Ecod(EcodModel::fit(x)),
        })
    }

    pub fn score_one(&self, point: &[f64]) -> f64 {
        match self {
            Scorer::IForest(m) => m.score_one(point),
            Scorer::Lof(m) => m.score_one(point),
            Scorer::Ecod(m) => m.score_one(point),
        }
    }

    pub fn score(&self, x: &FeatureMatrix) -> Vec<f64> {
        x.iter_rows().collect::<Vec<_>>().par_iter().map(|r| self.score_one(r)).collect()
    }

    /// Scores of the training points; LOF leaves each point out of its own
    /// neighborhood.
    pub fn training_scores(&self, train: &FeatureMatrix) -> Vec<f64> {
        match self {
            Scorer::Lof(m) => m.training_scores.clone(),
            _ => self.score(train),
        }
    }
}

/// Score above which a point is called an outlier, chosen so that a
/// `contamination` share of the training scores lies strictly above it.
pub fn contamination_threshold(training_scores: &[f64], contamination: f64) -> f64 {
    let mut s = training_scores.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let n = s.len();
    let m = ((contamination * n as f64).round() as usize).min(n.saturating_sub(1));
    s[m]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub params: DetectorParams,
    pub scorer: Scorer,
    pub contamination: f64,
    pub threshold: f64,
}

pub fn check_contamination(c: f64) -> Result<(), DefenseError> {
    if c > 0.0 && c < 0.5 {
        Ok(())
    } else {
        Err(DefenseError::InvalidParameter(format!("contamination {c} outside (0, 0.5)")))
    }
}

pub fn fit_detector(params: &DetectorParams, train: &FeatureMatrix, contamination: f64) -> Result<DetectorModel, DefenseError> {
    check_contamination(contamination)?;
    let scorer = Scorer::fit(params, train)?;
    let threshold = contamination_threshold(&scorer.training_scores(train), contamination);
    Ok(DetectorModel {
        params: *params,
        scorer,
        contamination,
        threshold,
    })
}

impl DetectorModel {
    /// Higher is more anomalous.
    pub fn score(&self, x: &FeatureMatrix) -> Vec<f64> {
        self.scorer.score(x)
    }

    /// `true` marks an outlier.
    pub fn predict(&self, x: &FeatureMatrix) -> Vec<bool> {
        self.score(x).into_iter().map(|s| s > self.threshold).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clusters_plus_far(seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for c in [[0.0, 0.0], [5.0, 5.0]] {
            for _ in 0..60 {
                rows.push(vec![c[0] + rng.gen_range(-0.3..0.3), c[1] + rng.gen_range(-0.3..0.3)]);
            }
        }
        rows.push(vec![20.0, -15.0]);
        FeatureMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn iforest_finds_far_point_for_most_seeds() {
        let x = clusters_plus_far(2);
        let far = x.rows() - 1;
        let hits = (0..5u64)
            .filter(|&seed| {
                let m = fit_detector(&DetectorParams::IForest { n_estimators: 64, seed }, &x, 0.05).unwrap();
                let s = m.score(&x);
                let top = s.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
                top == far
            })
            .count();
        assert!(hits >= 3, "{hits}/5");
    }

    #[test]
    fn threshold_calibration_within_one_point() {
        let x = clusters_plus_far(5);
        let n = x.rows() as f64;
        for params in [
            DetectorParams::IForest { n_estimators: 32, seed: 1 },
            DetectorParams::Lof { n_neighbors: 8 },
            DetectorParams::Ecod,
        ] {
            for c in [0.01, 0.05, 0.1] {
                let m = fit_detector(&params, &x, c).unwrap();
                let scores = m.scorer.training_scores(&x);
                let frac = scores.iter().filter(|s| **s > m.threshold).count() as f64 / n;
                assert!((frac - c).abs() <= 1.0 / n + 1e-12, "{params:?} c={c} frac={frac}");
            }
        }
    }

    #[test]
    fn scoring_does_not_mutate() {
        let x = clusters_plus_far(1);
        let m = fit_detector(&DetectorParams::Ecod, &x, 0.1).unwrap();
        let before = m.clone();
        let _ = m.predict(&x);
        assert_eq!(m, before);
    }

    #[test]
    fn bad_contamination_rejected() {
        let x = clusters_plus_far(1);
        assert!(fit_detector(&DetectorParams::Ecod, &x, 0.5).is_err());
        assert!(fit_detector(&DetectorParams::Ecod, &x, 0.0).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in DetectorKind::ALL {
            assert_eq!(DetectorKind::parse(k.name()), Some(k));
        }
        assert_eq!(DetectorKind::parse("LOF"), Some(DetectorKind::Lof));
    }
}
