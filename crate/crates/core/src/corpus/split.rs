use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CorpusError, Label, Manifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Validation, Partition::Test];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for Fractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
        }
    }
}

impl Fractions {
    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let a = self.as_array();
        if a.iter().any(|f| !f.is_finite() || *f < 0.0) || (a.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CorpusError::BadFractions(a));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n` items; every share is within one
/// item of its exact quota and the shares sum to `n`.
pub fn apportion(n: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut shares: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = shares.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    // stable: earlier partitions win ties
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        shares[i] += 1;
    }
    shares
}

/// Assignment of every manifest id to a partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub fractions: Fractions,
    pub assignments: BTreeMap<String, Partition>,
}

impl SplitPlan {
    pub fn ids(&self, partition: Partition) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, p)| **p == partition)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn count(&self, partition: Partition) -> usize {
        self.assignments.values().filter(|p| **p == partition).count()
    }

    /// Every manifest id is assigned exactly once and nothing else is.
    pub fn check_against(&self, manifest: &Manifest) -> Result<(), CorpusError> {
        if self.assignments.len() != manifest.len() {
            return Err(CorpusError::HygieneViolation(format!(
                "plan assigns {} ids, manifest has {}",
                self.assignments.len(),
                manifest.len()
            )));
        }
        for r in &manifest.records {
            if !self.assignments.contains_key(&r.id) {
                return Err(CorpusError::HygieneViolation(format!("{} unassigned", r.id)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

pub(crate) fn mixed_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("32-byte digest"))
}

/// Seeded, label-stratified shuffle-then-slice. A pure function of the
/// manifest contents and the seed.
pub fn make_splits(
    manifest: &Manifest,
    fractions: Fractions,
    seed: u64,
) -> Result<SplitPlan, CorpusError> {
    fractions.validate()?;
    let digest = manifest.digest();
    let mut by_label: BTreeMap<Label, Vec<&str>> = BTreeMap::new();
    for r in &manifest.records {
        by_label.entry(r.label).or_default().push(&r.id);
    }
    let mut assignments = BTreeMap::new();
    for (label, mut ids) in by_label {
        ids.sort_unstable();
        let label_name = format!("{label:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(mixed_seed(seed, &[&digest, &label_name]));
        ids.shuffle(&mut rng);
        let shares = apportion(ids.len(), &fractions.as_array());
        let mut it = ids.into_iter();
        for (partition, n) in Partition::ALL.into_iter().zip(shares) {
            for id in it.by_ref().take(n) {
                if assignments.insert(id.to_string(), partition).is_some() {
                    return Err(CorpusError::DuplicateId(id.to_string()));
                }
            }
        }
    }
    Ok(SplitPlan {
        seed,
        fractions,
        assignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ManifestRecord;

    fn benign(n: usize) -> Manifest {
        Manifest::new(
            (0..n)
                .map(|i| ManifestRecord::benign(format!("b{i:03}"), format!("{i}.png")))
                .collect(),
            ".",
        )
    }

    #[test]
    fn hundred_samples_split_exactly() {
        let plan = make_splits(&benign(100), Fractions::default(), 3).unwrap();
        assert_eq!(
            Partition::ALL.map(|p| plan.count(p)),
            [70, 10, 20]
        );
        plan.check_against(&benign(100)).unwrap();
    }

    #[test]
    fn seven_samples_within_one_of_quota() {
        // enumeration oracle: every integer triple summing to 7 that lies
        // within one of (4.9, 0.7, 1.4)
        let mut admissible = Vec::new();
        for a in 0..=7usize {
            for b in 0..=7 - a {
                let c = 7 - a - b;
                let q = [4.9, 0.7, 1.4];
                if [a, b, c].iter().zip(q).all(|(&s, q)| (s as f64 - q).abs() <= 1.0) {
                    admissible.push([a, b, c]);
                }
            }
        }
        let plan = make_splits(&benign(7), Fractions::default(), 11).unwrap();
        let got = Partition::ALL.map(|p| plan.count(p));
        assert!(admissible.contains(&got), "{got:?} not in {admissible:?}");
        plan.check_against(&benign(7)).unwrap();
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let m = benign(50);
        let a = make_splits(&m, Fractions::default(), 1).unwrap();
        assert_eq!(a, make_splits(&m, Fractions::default(), 1).unwrap());
        assert_eq!(a.to_json(), make_splits(&m, Fractions::default(), 1).unwrap().to_json());
        assert_ne!(a, make_splits(&m, Fractions::default(), 2).unwrap());
    }

    #[test]
    fn stratifies_by_label() {
        let mut m = benign(90);
        for i in 0..10 {
            m.records.push(ManifestRecord::captcha(format!("c{i}"), "x.png", "s", "t"));
        }
        let plan = make_splits(&m, Fractions::default(), 5).unwrap();
        let captcha_in = |p| plan.ids(p).iter().filter(|id| id.starts_with('c')).count();
        assert_eq!(captcha_in(Partition::Train), 7);
        assert_eq!(captcha_in(Partition::Validation), 1);
        assert_eq!(captcha_in(Partition::Test), 2);
    }

    #[test]
    fn bad_fractions_rejected() {
        let f = Fractions {
            train: 0.7,
            validation: 0.2,
            test: 0.2,
        };
        assert!(matches!(make_splits(&benign(3), f, 1), Err(CorpusError::BadFractions(_))));
    }
}
