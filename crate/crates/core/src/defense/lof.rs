use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matrix::sq_dist;
use super::{DefenseError, FeatureMatrix};

/// Floor on the reachability mean, reached only by exact duplicates.
const LRD_EPS: f64 = 1e-10;

/// Sorted (distance, index) pairs of the nearest training points.
pub type Neighbors = Vec<(f64, usize)>;

fn insert_nearest(best: &mut Neighbors, k: usize, d: f64, i: usize) {
    if best.len() == k && d >= best[k - 1].0 {
        return;
    }
    let pos = best.partition_point(|&(bd, bi)| bd < d || (bd == d && bi < i));
    best.insert(pos, (d, i));
    best.truncate(k);
}

/// Exact k nearest training points of `point`, optionally skipping one
/// training index (the point itself).
pub fn nearest(train: &FeatureMatrix, point: &[f64], k: usize, skip: Option<usize>) -> Neighbors {
    let mut best = Vec::with_capacity(k + 1);
    for (i, r) in train.iter_rows().enumerate() {
        if Some(i) == skip {
            continue;
        }
        insert_nearest(&mut best, k, sq_dist(point, r), i);
    }
    best.into_iter().map(|(d, i)| (d.sqrt(), i)).collect()
}

/// Training-set neighbor lists up to some `k_max`, reusable for any
/// smaller neighbor count.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    pub k_max: usize,
    pub train: FeatureMatrix,
    pub train_neighbors: Vec<Neighbors>,
}

impl NeighborIndex {
    pub fn build(train: &FeatureMatrix, k_max: usize) -> Result<Self, DefenseError> {
        if train.rows() <= k_max {
            return Err(DefenseError::TooFewTrainingPoints {
                needed: k_max + 1,
                found: train.rows(),
            });
        }
        let train_neighbors = (0..train.rows())
            .into_par_iter()
            .map(|i| nearest(train, train.row(i), k_max, Some(i)))
            .collect();
        Ok(Self {
            k_max,
            train: train.clone(),
            train_neighbors,
        })
    }

    pub fn query(&self, x: &FeatureMatrix) -> Vec<Neighbors> {
        x.iter_rows()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|r| nearest(&self.train, r, self.k_max, None))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LofModel {
    pub k: usize,
    pub train: FeatureMatrix,
    pub k_distance: Vec<f64>,
    pub lrd: Vec<f64>,
    /// Outlier factors of the training points, each excluding itself.
    pub training_scores: Vec<f64>,
}

impl LofModel {
    pub fn fit(train: &FeatureMatrix, k: usize) -> Result<Self, DefenseError> {
        Self::from_index(&NeighborIndex::build(train, k)?, k)
    }

    pub fn from_index(index: &NeighborIndex, k: usize) -> Result<Self, DefenseError> {
        if k == 0 || k > index.k_max {
            return Err(DefenseError::InvalidParameter(format!(
                "neighbor count {k} outside 1..={}",
                index.k_max
            )));
        }
        let nb: Vec<&[(f64, usize)]> = index.train_neighbors.iter().map(|n| &n[..k]).collect();
        let k_distance: Vec<f64> = nb.iter().map(|n| n[k - 1].0).collect();
        let lrd_of = |n: &[(f64, usize)]| {
            let reach: f64 = n.iter().map(|&(d, o)| d.max(k_distance[o])).sum::<f64>() / k as f64;
            1.0 / reach.max(LRD_EPS)
        };
        let lrd: Vec<f64> = nb.iter().map(|n| lrd_of(n)).collect();
        let training_scores = nb
            .iter()
            .zip(&lrd)
            .map(|(n, l)| n.iter().map(|&(_, o)| lrd[o]).sum::<f64>() / k as f64 / l)
            .collect();
        Ok(Self {
            k,
            train: index.train.clone(),
            k_distance,
            lrd,
            training_scores,
        })
    }

    /// Outlier factor from precomputed neighbors (at least `k` of them).
    pub fn score_neighbors(&self, n: &[(f64, usize)]) -> f64 {
        let n = &n[..self.k];
        let reach = n.iter().map(|&(d, o)| d.max(self.k_distance[o])).sum::<f64>() / self.k as f64;
        let lrd = 1.0 / reach.max(LRD_EPS);
        n.iter().map(|&(_, o)| self.lrd[o]).sum::<f64>() / self.k as f64 / lrd
    }

    pub fn score_one(&self, point: &[f64]) -> f64 {
        self.score_neighbors(&nearest(&self.train, point, self.k, None))
    }
}
