use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;

pub const MAX_SUBSAMPLE: usize = 256;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Average path length of an unsuccessful search in a binary search tree of
/// `n` points.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    pub nodes: Vec<Node>,
}

impl IsolationTree {
    fn grow(x: &FeatureMatrix, idx: &mut [usize], depth: usize, limit: usize, rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>) -> usize {
        let me = nodes.len();
        nodes.push(Node::Leaf { size: idx.len() });
        if depth >= limit || idx.len() <= 1 {
            return me;
        }
        let splittable: Vec<(usize, f64, f64)> = (0..x.cols())
            .filter_map(|f| {
                let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = x.row(i)[f];
                    (lo.min(v), hi.max(v))
                });
                (hi > lo).then_some((f, lo, hi))
            })
            .collect();
        if splittable.is_empty() {
            return me;
        }
        let (feature, lo, hi) = splittable[rng.gen_range(0..splittable.len())];
        let mut threshold = rng.gen_range(lo..hi);
        if threshold <= lo {
            threshold = lo + (hi - lo) / 2.0;
        }
        // partition: values < threshold go left
        let mut k = 0;
        for j in 0..idx.len() {
            if x.row(idx[j])[feature] < threshold {
                idx.swap(j, k);
                k += 1;
            }
        }
        let (l, r) = idx.split_at_mut(k);
        let left = Self::grow(x, l, depth + 1, limit, rng, nodes);
        let right = Self::grow(x, r, depth + 1, limit, rng, nodes);
        nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }

    pub fn path_length(&self, point: &[f64]) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match &self.nodes[node] {
                Node::Leaf { size } => return depth + average_path_length(*size),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if point[*feature] < *threshold { *left } else { *right };
                    depth += 1.0;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    pub trees: Vec<IsolationTree>,
    pub subsample: usize,
}

impl IsolationForest {
    /// Each tree sees `min(256, n)` points drawn without replacement and is
    /// grown to depth `ceil(log2(subsample))`.
    pub fn fit(x: &FeatureMatrix, n_estimators: usize, seed: u64) -> Self {
        let n = x.rows();
        let subsample = n.min(MAX_SUBSAMPLE);
        let limit = (subsample.max(2) as f64).log2().ceil() as usize;
        let trees = (0..n_estimators)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let mut idx = sample(&mut rng, n, subsample).into_vec();
                let mut nodes = Vec::new();
                IsolationTree::grow(x, &mut idx, 0, limit, &mut rng, &mut nodes);
                IsolationTree { nodes }
            })
            .collect();
        Self { trees, subsample }
    }

    /// `2^(-E[h(x)] / c(subsample))`, in (0, 1]; higher is more anomalous.
    pub fn score_one(&self, point: &[f64]) -> f64 {
        let mean = self.trees.iter().map(|t| t.path_length(point)).sum::<f64>() / self.trees.len() as f64;
        let c = average_path_length(self.subsample).max(f64::MIN_POSITIVE);
        2f64.powf(-mean / c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_normalization() {
        assert_eq!(average_path_length(1), 0.0);
        assert_eq!(average_path_length(2), 1.0);
        // 2 H(255) - 2 * 255/256, with H(255) summed directly
        let h: f64 = (1..=255).map(|i| 1.0 / i as f64).sum();
        let exact = 2.0 * h - 2.0 * 255.0 / 256.0;
        assert!((average_path_length(256) - exact).abs() < 0.01);
    }

    #[test]
    fn trees_respect_depth_limit() {
        let rows: Vec<Vec<f64>> = (0..300).map(|i| vec![(i * 7 % 300) as f64, (i * 13 % 300) as f64]).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let f = IsolationForest::fit(&x, 4, 1);
        assert_eq!(f.subsample, 256);
        fn depth(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + depth(nodes, *left).max(depth(nodes, *right)),
            }
        }
        for t in &f.trees {
            assert!(depth(&t.nodes, 0) <= 8);
        }
    }
}
