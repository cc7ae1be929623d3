use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::split::mixed_seed;
use super::{apportion, hex_digest, make_splits, CorpusError, Fractions, Label, Manifest, Partition, SplitPlan};

/// Largest benign subset an experiment uses.
pub const BENIGN_CAP: usize = 50_000;

/// One draw of known styles for a given k, with its captcha partitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleCombination {
    pub k: usize,
    pub index: usize,
    pub seed: u64,
    pub known: Vec<String>,
    pub unknown: Vec<String>,
    /// Captcha ids only; benign validation ids come from the benign split.
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// The k-known-styles protocol: a benign-only train split shared by every
/// combination, and per-combination captcha validation/test sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub seed: u64,
    pub benign_available: usize,
    pub benign: SplitPlan,
    pub styles: Vec<String>,
    pub ks: Vec<usize>,
    pub combinations: Vec<StyleCombination>,
}

impl ExperimentPlan {
    pub fn train_ids(&self) -> Vec<&str> {
        self.benign.ids(Partition::Train)
    }

    pub fn validation_ids<'a>(&'a self, combo: &'a StyleCombination) -> Vec<&'a str> {
        let mut ids = self.benign.ids(Partition::Validation);
        ids.extend(combo.validation.iter().map(String::as_str));
        ids
    }

    pub fn test_ids<'a>(&'a self, combo: &'a StyleCombination) -> Vec<&'a str> {
        let mut ids = self.benign.ids(Partition::Test);
        ids.extend(combo.test.iter().map(String::as_str));
        ids
    }

    /// Checks that train holds benign ids only, that validation holds only
    /// benign or known-style ids, and that validation and test are disjoint.
    pub fn check_hygiene(&self, captchas: &Manifest) -> Result<(), CorpusError> {
        let style_of: BTreeMap<&str, &str> = captchas
            .records
            .iter()
            .filter_map(|r| r.style.as_deref().map(|s| (r.id.as_str(), s)))
            .collect();
        let fail = |m: String| Err(CorpusError::HygieneViolation(m));
        for id in self.benign.assignments.keys() {
            if style_of.contains_key(id.as_str()) {
                return fail(format!("captcha {id} in the benign split"));
            }
        }
        for c in &self.combinations {
            let known: HashSet<&str> = c.known.iter().map(String::as_str).collect();
            let val: HashSet<&str> = c.validation.iter().map(String::as_str).collect();
            for id in &c.validation {
                match style_of.get(id.as_str()) {
                    Some(s) if known.contains(s) => {}
                    Some(s) => {
                        return fail(format!("k={} #{}: unknown style {s} sample {id} in validation", c.k, c.index))
                    }
                    None => return fail(format!("validation id {id} is not a captcha")),
                }
            }
            for id in &c.test {
                if val.contains(id.as_str()) {
                    return fail(format!("{id} in both validation and test"));
                }
            }
            for u in &c.unknown {
                if known.contains(u.as_str()) {
                    return fail(format!("style {u} both known and unknown"));
                }
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the plan's JSON form.
    pub fn digest(&self) -> String {
        hex_digest(&serde_json::to_vec(self).expect("plan serializes"))
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn all_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] < n - k + i) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Distinct k-subsets of `0..n`: all of them when there are at most
/// `combos`, otherwise `combos` seeded draws.
fn draw_subsets(n: usize, k: usize, combos: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    if binomial(n, k) <= combos as u128 {
        return all_subsets(n, k);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    while out.len() < combos {
        let mut s = rand::seq::index::sample(rng, n, k).into_vec();
        s.sort_unstable();
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

/// Builds the k-known-styles plan. Benign records are capped at
/// [`BENIGN_CAP`] by seeded sampling and split 70/10/20; for each k and
/// combination the known styles' samples are halved between validation and
/// test while unknown styles go entirely to test.
pub fn make_outlier_plan(
    benign: &Manifest,
    captchas: &Manifest,
    ks: &[usize],
    combos: usize,
    seed: u64,
) -> Result<ExperimentPlan, CorpusError> {
    let mut styles = captchas.styles();
    styles.sort();
    let max_k = ks.iter().copied().max().unwrap_or(0);
    if ks.is_empty() || ks.contains(&0) || max_k > styles.len() || combos == 0 {
        return Err(CorpusError::TooFewStyles {
            available: styles.len(),
            needed: max_k,
        });
    }
    let mut benign_records: Vec<_> = benign
        .records
        .iter()
        .filter(|r| r.label == Label::Benign)
        .cloned()
        .collect();
    let benign_available = benign_records.len();
    if benign_available == 0 {
        return Err(CorpusError::EmptyDirectory("benign manifest".into()));
    }
    if benign_available > BENIGN_CAP {
        benign_records.sort_by(|a, b| a.id.cmp(&b.id));
        let mut rng = ChaCha8Rng::seed_from_u64(mixed_seed(seed, &["benign-cap"]));
        benign_records.shuffle(&mut rng);
        benign_records.truncate(BENIGN_CAP);
    }
    let benign_split = make_splits(
        &Manifest::new(benign_records, &benign.base_dir),
        Fractions::default(),
        seed,
    )?;

    let mut by_style: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in &captchas.records {
        if let (Label::Captcha, Some(s)) = (r.label, r.style.as_deref()) {
            by_style.entry(s).or_default().push(&r.id);
        }
    }
    for ids in by_style.values_mut() {
        ids.sort_unstable();
    }

    let mut combinations = Vec::new();
    for &k in ks {
        let mut rng = ChaCha8Rng::seed_from_u64(mixed_seed(seed, &["known-styles", &k.to_string()]));
        for (index, subset) in draw_subsets(styles.len(), k, combos, &mut rng).into_iter().enumerate() {
            let combo_seed = mixed_seed(seed, &["combination", &k.to_string(), &index.to_string()]);
            let known: Vec<String> = subset.iter().map(|&i| styles[i].clone()).collect();
            let unknown: Vec<String> = styles.iter().filter(|s| !known.contains(s)).cloned().collect();
            let mut validation = Vec::new();
            let mut test = Vec::new();
            for s in &known {
                let mut ids = by_style[s.as_str()].clone();
                let mut r = ChaCha8Rng::seed_from_u64(mixed_seed(combo_seed, &[s]));
                ids.shuffle(&mut r);
                let half = apportion(ids.len(), &[0.5, 0.5])[0];
                validation.extend(ids[..half].iter().map(|s| s.to_string()));
                test.extend(ids[half..].iter().map(|s| s.to_string()));
            }
            for s in &unknown {
                test.extend(by_style[s.as_str()].iter().map(|s| s.to_string()));
            }
            combinations.push(StyleCombination {
                k,
                index,
                seed: combo_seed,
                known,
                unknown,
                validation,
                test,
            });
        }
    }
    Ok(ExperimentPlan {
        seed,
        benign_available,
        benign: benign_split,
        styles,
        ks: ks.to_vec(),
        combinations,
    })
}
