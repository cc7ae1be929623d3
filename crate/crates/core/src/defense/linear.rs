use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DefenseError, FeatureMatrix, FeatureSet};
use crate::corpus::apportion;
use crate::metrics::{classification_scores, ClassificationScores, Prediction};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearOptions {
    /// L2 penalty on the weights (the bias is not penalized).
    pub lambda: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LinearOptions {
    fn default() -> Self {
        Self {
            lambda: 1e-2,
            tolerance: 1e-6,
            max_iterations: 10_000,
        }
    }
}

/// Logistic model over standardized features; `true` is the captcha class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub model: LinearModel,
    /// `false` when the iteration cap was hit first; the model is then the
    /// last iterate.
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean logistic loss plus `lambda / 2 * |w|^2` and its gradient, for
/// parameters laid out as `[w_0, .., w_{d-1}, bias]`.
pub fn logistic_loss_grad(params: &[f64], x: &FeatureMatrix, y: &[bool], lambda: f64) -> (f64, Vec<f64>) {
    let d = x.cols();
    let n = x.rows() as f64;
    let (w, b) = (&params[..d], params[d]);
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for (r, &t) in x.iter_rows().zip(y) {
        let z = r.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
        let s = if t { 1.0 } else { -1.0 };
        loss += log1p_exp(-s * z);
        let g = sigmoid(z) - if t { 1.0 } else { 0.0 };
        for (gj, xj) in grad.iter_mut().zip(r) {
            *gj += g * xj;
        }
        grad[d] += g;
    }
    loss /= n;
    for g in &mut grad {
        *g /= n;
    }
    loss += 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    for (g, wj) in grad.iter_mut().zip(w) {
        *g += lambda * wj;
    }
    (loss, grad)
}

/// Largest eigenvalue of `[X 1]^T [X 1] / n` by power iteration.
fn gram_top_eigenvalue(x: &FeatureMatrix) -> f64 {
    let d = x.cols() + 1;
    let n = x.rows() as f64;
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..200 {
        let mut next = vec![0.0; d];
        for r in x.iter_rows() {
            let dot = r.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[d - 1];
            for (o, a) in next.iter_mut().zip(r) {
                *o += dot * a;
            }
            next[d - 1] += dot;
        }
        let norm = next.iter().map(|a| a * a).sum::<f64>().sqrt() / n;
        if norm == 0.0 {
            return 0.0;
        }
        let converged = (norm - lambda).abs() <= 1e-9 * norm;
        lambda = norm;
        v = next.iter().map(|a| a / (norm * n)).collect();
        if converged {
            break;
        }
    }
    lambda
}

fn standardize(x: &FeatureMatrix, mean: &[f64], scale: &[f64]) -> FeatureMatrix {
    let data = x
        .iter_rows()
        .flat_map(|r| r.iter().zip(mean).zip(scale).map(|((v, m), s)| (v - m) / s))
        .collect();
    FeatureMatrix::new(x.rows(), x.cols(), data).expect("shape preserved")
}

/// Trains by accelerated gradient descent with step `1/L`, `L` being the
/// loss's smoothness constant, restarting momentum whenever the loss rises.
pub fn fit_linear_classifier(x: &FeatureMatrix, labels: &[bool], opts: &LinearOptions) -> Result<LinearFit, DefenseError> {
    if labels.len() != x.rows() {
        return Err(DefenseError::InvalidParameter(format!("{} labels for {} rows", labels.len(), x.rows())));
    }
    if !(labels.contains(&true) && labels.contains(&false)) {
        return Err(DefenseError::SingleClassValidation);
    }
    if !(opts.lambda >= 0.0 && opts.tolerance > 0.0) {
        return Err(DefenseError::InvalidParameter("negative penalty or tolerance".into()));
    }
    let (n, d) = (x.rows() as f64, x.cols());
    let mut mean = vec![0.0; d];
    for r in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut scale = vec![0.0; d];
    for r in x.iter_rows() {
        for ((s, v), m) in scale.iter_mut().zip(r).zip(&mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    for s in &mut scale {
        *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
    }
    let xs = standardize(x, &mean, &scale);
    let step = 1.0 / (0.25 * gram_top_eigenvalue(&xs) * 1.01 + opts.lambda).max(1e-12);

    let mut params = vec![0.0; d + 1];
    let mut prev = params.clone();
    let mut momentum_t = 1.0f64;
    let (mut loss, mut grad) = logistic_loss_grad(&params, &xs, labels, opts.lambda);
    let norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut iterations = 0;
    while norm(&grad) >= opts.tolerance && iterations < opts.max_iterations {
        iterations += 1;
        let next_t = (1.0 + (1.0 + 4.0 * momentum_t * momentum_t).sqrt()) / 2.0;
        let beta = (momentum_t - 1.0) / next_t;
        let look: Vec<f64> = params.iter().zip(&prev).map(|(p, q)| p + beta * (p - q)).collect();
        let (_, g_look) = logistic_loss_grad(&look, &xs, labels, opts.lambda);
        let cand: Vec<f64> = look.iter().zip(&g_look).map(|(p, g)| p - step * g).collect();
        let (l_cand, g_cand) = logistic_loss_grad(&cand, &xs, labels, opts.lambda);
        if l_cand > loss {
            // restart from a plain gradient step
            momentum_t = 1.0;
            prev = params.clone();
            params = params.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
            (loss, grad) = logistic_loss_grad(&params, &xs, labels, opts.lambda);
            continue;
        }
        prev = std::mem::replace(&mut params, cand);
        loss = l_cand;
        grad = g_cand;
        momentum_t = next_t;
    }
    let grad_norm = norm(&grad);
    let bias = params.pop().expect("bias");
    Ok(LinearFit {
        model: LinearModel {
            mean,
            scale,
            weights: params,
            bias,
        },
        converged: grad_norm < opts.tolerance,
        iterations,
        grad_norm,
    })
}

impl LinearModel {
    pub fn decision(&self, point: &[f64]) -> f64 {
        point
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .zip(&self.weights)
            .map(|(((v, m), s), w)| (v - m) / s * w)
            .sum::<f64>()
            + self.bias
    }

    pub fn probability(&self, point: &[f64]) -> f64 {
        sigmoid(self.decision(point))
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Vec<bool> {
        x.iter_rows().map(|r| self.decision(r) > 0.0).collect()
    }

    pub fn evaluate(&self, x: &FeatureMatrix, labels: &[bool]) -> Result<ClassificationScores, DefenseError> {
        let preds: Vec<Prediction> = x
            .iter_rows()
            .map(|r| {
                let z = self.decision(r);
                Prediction { label: z > 0.0, score: z }
            })
            .collect();
        Ok(classification_scores(&preds, labels)?)
    }

    /// Share of rows predicted as captchas.
    pub fn detection_rate(&self, x: &FeatureMatrix) -> f64 {
        if x.is_empty() {
            return 0.0;
        }
        self.predict(x).iter().filter(|p| **p).count() as f64 / x.rows() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationRow {
    pub model: String,
    pub options: LinearOptions,
    pub converged: bool,
    pub validation: ClassificationScores,
    /// Test-split scores on benign plus the training styles.
    pub in_distribution: ClassificationScores,
    /// Percent of test-split training-style captchas detected.
    pub in_style_rate: f64,
    /// Percent detected per held-out style, in `held_out_styles` order.
    pub held_out_rates: Vec<f64>,
}

/// Detection of styles never seen in training: one row per model, one
/// column per held-out style, values in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationTable {
    pub training_styles: Vec<String>,
    pub held_out_styles: Vec<String>,
    pub rows: Vec<GeneralizationRow>,
}

impl GeneralizationTable {
    /// Held-out cells at or below `fraction` of their row's in-style rate.
    pub fn collapsed_cells(&self, fraction: f64) -> usize {
        self.rows
            .iter()
            .map(|r| r.held_out_rates.iter().filter(|&&h| h <= fraction * r.in_style_rate).count())
            .sum()
    }
}

/// Labelled samples for the supervised baseline, by id.
#[derive(Clone, Debug, Default)]
pub struct StyleCorpus {
    pub benign: Vec<String>,
    /// Captcha ids per style used in training.
    pub training: BTreeMap<String, Vec<String>>,
    /// Captcha ids per style never shown to the model.
    pub held_out: BTreeMap<String, Vec<String>>,
}

/// Splits benign and training-style ids 70/10/20 (per class, seeded),
/// fits every model on the training split and reports validation and
/// test scores plus detection on each held-out style.
pub fn cross_style_generalization(
    features: &FeatureSet,
    corpus: &StyleCorpus,
    models: &[(String, LinearOptions)],
    seed: u64,
) -> Result<GeneralizationTable, DefenseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [(Vec<String>, Vec<bool>); 3] = Default::default();
    let captcha_ids: Vec<String> = corpus.training.values().flatten().cloned().collect();
    for (ids, label) in [(&corpus.benign, false), (&captcha_ids, true)] {
        let mut ids = ids.clone();
        ids.shuffle(&mut rng);
        let counts = apportion(ids.len(), &[0.7, 0.1, 0.2]);
        let mut it = ids.into_iter();
        for (part, c) in parts.iter_mut().zip(counts) {
            for id in it.by_ref().take(c) {
                part.0.push(id);
                part.1.push(label);
            }
        }
    }
    let [train, val, test] = parts;
    let xtr = features.gather(&train.0)?;
    let xva = features.gather(&val.0)?;
    let xte = features.gather(&test.0)?;
    let test_captchas: Vec<usize> = (0..test.1.len()).filter(|&i| test.1[i]).collect();
    let xte_captcha = xte.select(&test_captchas);
    let held: Vec<FeatureMatrix> = corpus
        .held_out
        .values()
        .map(|ids| features.gather(ids))
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    for (name, opts) in models {
        let fit = fit_linear_classifier(&xtr, &train.1, opts)?;
        if !fit.converged {
            log::warn!(
                "{name}: stopped after {} iterations with gradient norm {:.3e}",
                fit.iterations,
                fit.grad_norm
            );
        }
        let m = &fit.model;
        rows.push(GeneralizationRow {
            model: name.clone(),
            options: *opts,
            converged: fit.converged,
            validation: m.evaluate(&xva, &val.1)?,
            in_distribution: m.evaluate(&xte, &test.1)?,
            in_style_rate: 100.0 * m.detection_rate(&xte_captcha),
            held_out_rates: held.iter().map(|h| 100.0 * m.detection_rate(h)).collect(),
        });
    }
    Ok(GeneralizationTable {
        training_styles: corpus.training.keys().cloned().collect(),
        held_out_styles: corpus.held_out.keys().cloned().collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_instance(seed: u64, n: usize, d: usize) -> (FeatureMatrix, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let y = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        (FeatureMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..5 {
            let (x, y) = random_instance(seed, 15, 4);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let p: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (_, g) = logistic_loss_grad(&p, &x, &y, 0.3);
            let h = 1e-5;
            for j in 0..p.len() {
                let mut up = p.clone();
                let mut dn = p.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (logistic_loss_grad(&up, &x, &y, 0.3).0 - logistic_loss_grad(&dn, &x, &y, 0.3).0) / (2.0 * h);
                assert!((fd - g[j]).abs() < 1e-5, "seed {seed} j {j}: {fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn separable_fixture_is_fit_exactly() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y: Vec<bool> = (0..40).map(|i| i >= 20).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let fit = fit_linear_classifier(&x, &y, &LinearOptions::default()).unwrap();
        assert!(fit.converged, "{} {}", fit.iterations, fit.grad_norm);
        assert_eq!(fit.model.predict(&x), y);
    }

    #[test]
    fn iteration_cap_returns_partial_model() {
        let (x, y) = random_instance(3, 50, 6);
        let opts = LinearOptions {
            max_iterations: 2,
            ..Default::default()
        };
        let fit = fit_linear_classifier(&x, &y, &opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 2);
        assert_eq!(fit.model.weights.len(), 6);
    }

    #[test]
    fn single_class_rejected() {
        let (x, _) = random_instance(1, 10, 2);
        assert!(fit_linear_classifier(&x, &[true; 10], &LinearOptions::default()).is_err());
    }

    #[test]
    fn unseen_style_in_new_direction_is_missed() {
        // benign near 0, training style along +x, held-out style along +y
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        let mut corpus = StyleCorpus::default();
        let mut add = |prefix: &str, c: [f64; 2], n: usize, ids: &mut Vec<String>, rows: &mut Vec<Vec<f64>>| {
            (0..n)
                .map(|i| {
                    let id = format!("{prefix}{i}");
                    rows.push(vec![c[0] + rng.gen_range(-1.0..1.0), c[1] + rng.gen_range(-1.0..1.0)]);
                    ids.push(id.clone());
                    id
                })
                .collect::<Vec<_>>()
        };
        corpus.benign = add("b", [0.0, 0.0], 100, &mut ids, &mut rows);
        corpus.training.insert("east".into(), add("e", [6.0, 0.0], 100, &mut ids, &mut rows));
        corpus.held_out.insert("north".into(), add("n", [0.0, 6.0], 50, &mut ids, &mut rows));
        let fs = FeatureSet::new(ids, FeatureMatrix::from_rows(&rows).unwrap()).unwrap();
        let t = cross_style_generalization(&fs, &corpus, &[("logistic".into(), LinearOptions::default())], 1).unwrap();
        let row = &t.rows[0];
        assert!(row.in_distribution.f1_macro > 0.95);
        assert!(row.in_style_rate > 95.0);
        assert!(row.held_out_rates[0] < 20.0, "{row:?}");
        assert_eq!(t.collapsed_cells(0.5), 1);
    }
}
