use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use textcap::captcha::{builtin_profiles, generate_dataset, FontPool, StyleProfile, TextPayload};
use textcap::corpus::{
    ingest_benign, load_annotations, load_wordlist, make_outlier_plan, make_splits, random_payloads,
    synthesize_surrogate_styles, Fractions, Label, Manifest, Partition,
};
use textcap::defense::{
    cross_style_generalization, export_projection_2d, extract_manifest_features, fit_detector, fit_pca,
    grid_search, load_embeddings, run_outlier_experiment, DetectorKind, DetectorModel, DetectorParams,
    FeatureSet, GridSelection, GridSpec, LinearOptions, PcaModel, StyleCorpus,
};
use textcap::metrics::{annotation_summary, classification_scores, ClassificationScores, Prediction};
use textcap::pipeline::{evaluate_attack, HttpEndpoint, ModeratorConfig, OcrConfig, Pipeline, PipelineConfig};

use crate::args::{
    AnnotateArgs, AttackArgs, CorpusArgs, DetectorArg, EvalArgs, FitArgs, GenArgs, ProjectArgs, Protocol,
};
use crate::error::CliError;
use crate::report::{ensure_dir, Context};

/// Credentials for HTTP adapters named on the command line.
pub const OCR_TOKEN_ENV: &str = "TEXTCAP_OCR_TOKEN";
pub const MODERATOR_TOKEN_ENV: &str = "TEXTCAP_MODERATOR_TOKEN";

fn kind_of(d: DetectorArg) -> DetectorKind {
    match d {
        DetectorArg::Lof => DetectorKind::Lof,
        DetectorArg::Iforest => DetectorKind::IForest,
        DetectorArg::Ecod => DetectorKind::Ecod,
    }
}

#[derive(Serialize)]
struct StyleListing {
    name: String,
    steps: Vec<StepListing>,
}

#[derive(Serialize)]
struct StepListing {
    label: &'static str,
    name: &'static str,
}

fn listing(p: &StyleProfile) -> StyleListing {
    StyleListing {
        name: p.name.clone(),
        steps: p
            .step_kinds()
            .into_iter()
            .map(|k| StepListing {
                label: k.label(),
                name: k.name(),
            })
            .collect(),
    }
}

pub fn profiles(ctx: &Context) -> Result<(), CliError> {
    let registry = builtin_profiles();
    let styles: Vec<StyleListing> = registry.profiles().iter().map(listing).collect();
    let body = ctx.render(serde_json::json!({ "styles": styles }))?;
    std::io::stdout()
        .write_all(body.as_bytes())
        .map_err(|e| CliError::runtime("io", e.to_string()))
}

#[derive(Serialize)]
struct GenResult {
    images: usize,
    payloads: usize,
    blank_lines: usize,
    duplicate_lines: usize,
    manifest: PathBuf,
    manifest_digest: String,
    styles: Vec<StyleListing>,
}

pub fn gen(ctx: &Context, a: &GenArgs) -> Result<(), CliError> {
    let (payloads, blank_lines, duplicates): (Vec<TextPayload>, usize, usize) = match (&a.words, a.random) {
        (Some(path), None) => {
            let list = load_wordlist(path)?;
            (list.payloads, list.blank_lines, list.duplicates)
        }
        (None, Some(n)) if n > 0 => (random_payloads(n, ctx.seed, "r"), 0, 0),
        (None, Some(_)) => return Err(CliError::usage("--random must be positive")),
        _ => return Err(CliError::usage("one of --words or --random is required")),
    };
    let profiles = match a.surrogates {
        Some(0) => return Err(CliError::usage("--synthesize-c11-like needs a positive count")),
        Some(n) => synthesize_surrogate_styles(n, ctx.seed),
        None => builtin_profiles().select(&a.styles)?,
    };
    if profiles.is_empty() {
        return Err(CliError::usage("no styles selected"));
    }
    let custom;
    let fonts = match &a.fonts {
        Some(dir) => {
            custom = FontPool::from_dir(dir)?;
            &custom
        }
        None => FontPool::bundled(),
    };
    ensure_dir(&ctx.out)?;
    let (_, summary) = generate_dataset(&payloads, &profiles, ctx.seed, fonts, &ctx.out)?;
    let result = GenResult {
        images: summary.images,
        payloads: payloads.len(),
        blank_lines,
        duplicate_lines: duplicates,
        manifest: summary.manifest_path.clone(),
        manifest_digest: summary.manifest_digest,
        styles: profiles.iter().map(listing).collect(),
    };
    ctx.write("gen_report.json", &result)?;
    println!("{} images, manifest {}", result.images, result.manifest.display());
    Ok(())
}

fn endpoint(url: &str, env: &str) -> HttpEndpoint {
    let credential = std::env::var_os(env).is_some();
    HttpEndpoint {
        url: url.to_string(),
        auth_header: credential.then(|| "Authorization".to_string()),
        auth_env: credential.then(|| env.to_string()),
    }
}

fn parse_ocr(arg: &str) -> Result<OcrConfig, CliError> {
    Ok(match arg {
        "echo" | "mock-echo" => OcrConfig::Echo,
        "null" | "mock-null" => OcrConfig::Null,
        s if s.starts_with("command:") => {
            let command: Vec<String> = s["command:".len()..].split_whitespace().map(String::from).collect();
            if command.is_empty() {
                return Err(CliError::usage("empty OCR command"));
            }
            OcrConfig::Command { command }
        }
        s if s.starts_with("http:") || s.starts_with("https:") => OcrConfig::Http {
            endpoint: endpoint(s.strip_prefix("http:").filter(|u| u.contains("://")).unwrap_or(s), OCR_TOKEN_ENV),
        },
        other => return Err(CliError::usage(format!("unknown OCR engine {other:?}"))),
    })
}

fn parse_moderator(arg: &str) -> Result<ModeratorConfig, CliError> {
    if let Some(file) = arg.strip_prefix("blocklist:") {
        if file.is_empty() {
            return Err(CliError::usage("blocklist needs a file"));
        }
        return Ok(ModeratorConfig::Blocklist {
            words: Vec::new(),
            file: Some(PathBuf::from(file)),
        });
    }
    if arg.starts_with("http:") || arg.starts_with("https:") {
        let url = arg.strip_prefix("http:").filter(|u| u.contains("://")).unwrap_or(arg);
        return Ok(ModeratorConfig::Http {
            endpoint: endpoint(url, MODERATOR_TOKEN_ENV),
        });
    }
    Err(CliError::usage(format!("unknown moderator {arg:?}")))
}

fn pipeline_config(config: Option<&Path>, a: &AttackArgs) -> Result<PipelineConfig, CliError> {
    let mut c = match config {
        Some(path) => PipelineConfig::load(path)?,
        None => {
            let (Some(ocr), Some(moderator)) = (&a.ocr, &a.moderator) else {
                return Err(CliError::usage("--ocr and --moderator are required without --config"));
            };
            let mut c = PipelineConfig::mock(&[]);
            c.ocr = parse_ocr(ocr)?;
            c.moderator = parse_moderator(moderator)?;
            c
        }
    };
    if config.is_some() {
        if let Some(ocr) = &a.ocr {
            c.ocr = parse_ocr(ocr)?;
        }
        if let Some(m) = &a.moderator {
            c.moderator = parse_moderator(m)?;
        }
    }
    if let Some(t) = a.threshold {
        c.threshold = t;
    }
    if let Some(t) = a.timeout_ms {
        c.timeout_ms = t;
    }
    if a.no_ocr_stage {
        c.ocr_stage_enabled = false;
    }
    c.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(c)
}

pub fn attack_eval(ctx: &Context, config: Option<&Path>, a: &AttackArgs) -> Result<(), CliError> {
    let cfg = pipeline_config(config, a)?;
    let manifest = Manifest::read_jsonl(&a.manifest)?;
    let pipeline = Pipeline::build(cfg, Some(&manifest))?;
    let mut report = evaluate_attack(&manifest, &pipeline)?;
    for s in &report.styles {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        println!(
            "{:<16} n={:<5} asr={} mean_nld={} indeterminate={}",
            s.style,
            s.n,
            fmt(s.asr),
            fmt(s.mean_nld),
            s.indeterminate
        );
    }
    if a.summary_only {
        report.samples.clear();
    }
    let result = serde_json::json!({
        "manifest": a.manifest,
        "manifest_digest": manifest.digest(),
        "pipeline": pipeline.config,
        "report": report,
    });
    ctx.write("attack_report.json", result)?;
    Ok(())
}

/// Benign and captcha manifests plus a descriptor for every record.
struct Corpus {
    benign: Option<Manifest>,
    captchas: Option<Manifest>,
    features: FeatureSet,
    source: &'static str,
}

fn load_corpus(c: &CorpusArgs) -> Result<Corpus, CliError> {
    let benign = match (&c.benign, &c.benign_dir) {
        (Some(p), _) => Some(Manifest::read_jsonl(p)?),
        (None, Some(dir)) => {
            let (m, skipped) = ingest_benign(dir)?;
            for s in &skipped {
                log::warn!("skipped {}: {}", s.path, s.reason);
            }
            Some(m)
        }
        (None, None) => None,
    };
    let captchas = c.captchas.as_deref().map(Manifest::read_jsonl).transpose()?;
    let parts: Vec<&Manifest> = benign.iter().chain(captchas.iter()).collect();
    if parts.is_empty() {
        return Err(CliError::usage("no images given: pass --benign, --benign-dir or --captchas"));
    }
    let merged = Manifest::merge(&parts)?;
    let (features, source) = match &c.embeddings {
        Some(path) => (load_embeddings(path, &merged)?, "embeddings"),
        None => {
            log::info!("describing {} images", merged.len());
            (extract_manifest_features(&merged)?, "builtin")
        }
    };
    Ok(Corpus {
        benign,
        captchas,
        features,
        source,
    })
}

fn load_grid(config: Option<&Path>) -> Result<GridSpec, CliError> {
    match config {
        None => Ok(GridSpec::default()),
        Some(path) => {
            let s = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            toml::from_str(&s).map_err(|e| CliError::runtime("config", format!("{}: {e}", path.display())))
        }
    }
}

/// Drops PCA sizes the training data cannot support.
fn fit_grid_to(mut grid: GridSpec, max_components: usize) -> Result<GridSpec, CliError> {
    let before = grid.pca_components.len();
    grid.pca_components.retain(|&p| p <= max_components);
    if grid.pca_components.len() < before {
        log::warn!("PCA sizes above {max_components} dropped from the grid");
    }
    if grid.pca_components.is_empty() {
        return Err(CliError::runtime("defense", format!("no PCA size in the grid is at most {max_components}")));
    }
    Ok(grid)
}

/// Everything needed to score new images.
#[derive(Serialize, Deserialize)]
struct FittedModel {
    features: String,
    dim: usize,
    training_images: usize,
    selection: Option<GridSelection>,
    pca: PcaModel,
    detector: DetectorModel,
}

fn ids_with_label(m: &Manifest, label: Label) -> Vec<&str> {
    m.records.iter().filter(|r| r.label == label).map(|r| r.id.as_str()).collect()
}

pub fn defense_fit(ctx: &Context, config: Option<&Path>, a: &FitArgs) -> Result<(), CliError> {
    if a.corpus.benign.is_none() && a.corpus.benign_dir.is_none() {
        return Err(CliError::usage("--benign or --benign-dir is required"));
    }
    let corpus = load_corpus(&a.corpus)?;
    let benign = corpus.benign.as_ref().expect("checked above");
    let split = make_splits(benign, Fractions::default(), ctx.seed)?;
    let train = corpus.features.gather(&split.ids(Partition::Train))?;
    let kind = kind_of(a.detector);
    let max_components = corpus.features.dim().min(train.rows().saturating_sub(1));

    let (selection, params, components, contamination) = match &corpus.captchas {
        Some(captchas) => {
            let grid = fit_grid_to(load_grid(config)?, max_components)?;
            let mut ids = split.ids(Partition::Validation);
            let negatives = ids.len();
            ids.extend(ids_with_label(captchas, Label::Captcha));
            let labels: Vec<bool> = (0..ids.len()).map(|i| i >= negatives).collect();
            let validation = corpus.features.gather(&ids)?;
            let sel = grid_search(&[kind], &grid, &train, &validation, &labels, ctx.seed)?
                .pop()
                .expect("one selection per kind");
            let c = sel.candidate;
            (Some(sel), c.params(ctx.seed), c.pca_components, c.contamination)
        }
        None => {
            let params = match kind {
                DetectorKind::Lof => DetectorParams::Lof {
                    n_neighbors: a.param.unwrap_or(16),
                },
                DetectorKind::IForest => DetectorParams::IForest {
                    n_estimators: a.param.unwrap_or(128),
                    seed: ctx.seed,
                },
                DetectorKind::Ecod => DetectorParams::Ecod,
            };
            if a.pca == 0 || a.pca > max_components {
                return Err(CliError::usage(format!("--pca must be in 1..={max_components}")));
            }
            (None, params, a.pca, a.contamination)
        }
    };
    let pca = fit_pca(&train, components)?;
    let detector = fit_detector(&params, &pca.transform(&train)?, contamination)?;
    let model = FittedModel {
        features: corpus.source.to_string(),
        dim: corpus.features.dim(),
        training_images: train.rows(),
        selection,
        pca,
        detector,
    };
    let path = ctx.write(&a.model, &model)?;
    println!(
        "{} with {} components, contamination {}, fitted on {} images: {}",
        kind.name(),
        components,
        contamination,
        model.training_images,
        path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ScoredSample {
    id: String,
    label: Label,
    style: Option<String>,
    score: f64,
    outlier: bool,
}

fn load_model(path: &Path) -> Result<FittedModel, CliError> {
    let s = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let v: serde_json::Value = serde_json::from_str(&s).map_err(|e| CliError::runtime("model", e.to_string()))?;
    serde_json::from_value(v["result"].clone())
        .map_err(|e| CliError::runtime("model", format!("{}: {e}", path.display())))
}

fn score_with_model(ctx: &Context, a: &EvalArgs, model_path: &Path) -> Result<(), CliError> {
    let manifest_path = a.manifest.as_ref().expect("clap requires --manifest with --model");
    let model = load_model(model_path)?;
    let manifest = Manifest::read_jsonl(manifest_path)?;
    let (features, source) = match &a.corpus.embeddings {
        Some(p) => (load_embeddings(p, &manifest)?, "embeddings"),
        None => (extract_manifest_features(&manifest)?, "builtin"),
    };
    if source != model.features || features.dim() != model.dim {
        return Err(CliError::runtime(
            "model",
            format!(
                "model expects {} features of dimension {}, got {} of dimension {}",
                model.features,
                model.dim,
                source,
                features.dim()
            ),
        ));
    }
    let z = model.pca.transform(&features.matrix)?;
    let scores = model.detector.score(&z);
    let samples: Vec<ScoredSample> = manifest
        .records
        .iter()
        .zip(&scores)
        .map(|(r, &s)| ScoredSample {
            id: r.id.clone(),
            label: r.label,
            style: r.style.clone(),
            score: s,
            outlier: s > model.detector.threshold,
        })
        .collect();
    let truths: Vec<bool> = samples.iter().map(|s| s.label == Label::Captcha).collect();
    let both = truths.iter().any(|&t| t) && truths.iter().any(|&t| !t);
    let scores: Option<ClassificationScores> = if both {
        let preds: Vec<Prediction> = samples
            .iter()
            .map(|s| Prediction {
                label: s.outlier,
                score: s.score,
            })
            .collect();
        Some(classification_scores(&preds, &truths)?)
    } else {
        None
    };
    let flagged = samples.iter().filter(|s| s.outlier).count();
    println!("{flagged} of {} images flagged as outliers", samples.len());
    if let Some(s) = &scores {
        println!("f1_macro={:.4} precision={:.4} recall={:.4}", s.f1_macro, s.precision, s.recall);
    }
    let result = serde_json::json!({
        "model": model_path,
        "manifest": manifest_path,
        "threshold": model.detector.threshold,
        "flagged": flagged,
        "scores": scores,
        "samples": samples,
    });
    ctx.write("defense_eval_report.json", result)?;
    Ok(())
}

fn outlier_protocol(ctx: &Context, config: Option<&Path>, a: &EvalArgs, corpus: &Corpus) -> Result<(), CliError> {
    let (Some(benign), Some(captchas)) = (&corpus.benign, &corpus.captchas) else {
        return Err(CliError::usage("the outlier protocol needs benign images and --captchas"));
    };
    let n_styles = captchas.styles().len();
    let ks: Vec<usize> = if a.ks.is_empty() { (1..=n_styles).collect() } else { a.ks.clone() };
    let kinds: Vec<DetectorKind> = if a.detectors.is_empty() {
        DetectorKind::ALL.to_vec()
    } else {
        a.detectors.iter().copied().map(kind_of).collect()
    };
    let plan = make_outlier_plan(benign, captchas, &ks, a.combinations, ctx.seed)?;
    plan.check_hygiene(captchas)?;
    let train_rows = plan.benign.count(Partition::Train);
    let grid = fit_grid_to(load_grid(config)?, corpus.features.dim().min(train_rows.saturating_sub(1)))?;
    let report = run_outlier_experiment(&plan, &corpus.features, captchas, &kinds, &grid, ctx.seed)?;
    for row in &report.by_detector {
        println!("{:<8} mean_f1_macro={:.4} runs={}", row.detector.name(), row.mean_f1_macro, row.runs);
    }
    ctx.write("outlier_plan.json", &plan)?;
    let result = serde_json::json!({
        "protocol": "outlier",
        "features": corpus.source,
        "hygiene": true,
        "report": report,
    });
    ctx.write("defense_eval_report.json", result)?;
    Ok(())
}

fn supervised_protocol(ctx: &Context, a: &EvalArgs, corpus: &Corpus) -> Result<(), CliError> {
    let (Some(benign), Some(captchas)) = (&corpus.benign, &corpus.captchas) else {
        return Err(CliError::usage("the supervised protocol needs benign images and --captchas"));
    };
    if a.held_out.is_empty() {
        return Err(CliError::usage("--held-out is required for the supervised protocol"));
    }
    let styles = captchas.styles();
    for h in &a.held_out {
        if !styles.contains(h) {
            return Err(CliError::usage(format!("held-out style {h:?} is not in the captcha manifest")));
        }
    }
    let mut sc = StyleCorpus {
        benign: ids_with_label(benign, Label::Benign).into_iter().map(String::from).collect(),
        ..StyleCorpus::default()
    };
    for r in captchas.records.iter().filter(|r| r.label == Label::Captcha) {
        let style = r.style.clone().unwrap_or_default();
        let bucket = if a.held_out.contains(&style) { &mut sc.held_out } else { &mut sc.training };
        bucket.entry(style).or_default().push(r.id.clone());
    }
    if sc.training.is_empty() {
        return Err(CliError::usage("every style is held out"));
    }
    let models: Vec<(String, LinearOptions)> = a
        .lambda
        .iter()
        .map(|&lambda| {
            (
                format!("logistic lambda={lambda}"),
                LinearOptions {
                    lambda,
                    ..LinearOptions::default()
                },
            )
        })
        .collect();
    let table = cross_style_generalization(&corpus.features, &sc, &models, ctx.seed)?;
    println!("{:<24} {:>8} {}", "model", "in-style", table.held_out_styles.join(" "));
    for r in &table.rows {
        let cells: Vec<String> = r.held_out_rates.iter().map(|h| format!("{h:.1}")).collect();
        println!("{:<24} {:>8.1} {}", r.model, r.in_style_rate, cells.join(" "));
    }
    let result = serde_json::json!({
        "protocol": "supervised",
        "features": corpus.source,
        "collapsed_cells": table.collapsed_cells(0.5),
        "table": table,
    });
    ctx.write("defense_eval_report.json", result)?;
    Ok(())
}

pub fn defense_eval(ctx: &Context, config: Option<&Path>, a: &EvalArgs) -> Result<(), CliError> {
    if let Some(model) = &a.model {
        return score_with_model(ctx, a, model);
    }
    let corpus = load_corpus(&a.corpus)?;
    match a.protocol {
        Protocol::Outlier => outlier_protocol(ctx, config, a, &corpus),
        Protocol::Supervised => supervised_protocol(ctx, a, &corpus),
    }
}

pub fn annotate_score(ctx: &Context, a: &AnnotateArgs) -> Result<(), CliError> {
    let manifest = Manifest::read_jsonl(&a.manifest)?;
    let set = load_annotations(&a.annotations, &manifest)?;
    let summary = annotation_summary(&set, &manifest)?;
    println!(
        "accuracy={:.2}% mean_cer={:.2}% always_correct={:.3} always_wrong={:.3}",
        summary.accuracy, summary.mean_cer, summary.agreement_always_correct, summary.agreement_always_wrong
    );
    let coverage: BTreeMap<String, usize> = set.coverage().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    let result = serde_json::json!({
        "annotations": a.annotations,
        "summary": summary,
        "coverage": coverage,
    });
    ctx.write("annotation_report.json", result)?;
    Ok(())
}

pub fn project_2d(ctx: &Context, a: &ProjectArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&a.corpus)?;
    let labels: BTreeMap<&str, String> = corpus
        .benign
        .iter()
        .chain(corpus.captchas.iter())
        .flat_map(|m| &m.records)
        .map(|r| {
            let label = match (r.label, &r.style) {
                (Label::Captcha, Some(s)) => s.clone(),
                (Label::Captcha, None) => "captcha".to_string(),
                (Label::Benign, _) => "benign".to_string(),
            };
            (r.id.as_str(), label)
        })
        .collect();
    let ids = &corpus.features.ids;
    let label_list: Vec<String> = ids.iter().map(|id| labels[id.as_str()].clone()).collect();
    let output = a.output.clone().unwrap_or_else(|| ctx.out.join("projection.csv"));
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    let n = export_projection_2d(ids, &label_list, &corpus.features.matrix, &output)?;
    println!("{n} points written to {}", output.display());
    let result = serde_json::json!({
        "features": corpus.source,
        "points": n,
        "output": output,
    });
    ctx.write("projection_report.json", result)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ocr_specs() {
        assert_eq!(parse_ocr("mock-null").unwrap(), OcrConfig::Null);
        assert_eq!(parse_ocr("echo").unwrap(), OcrConfig::Echo);
        assert_eq!(
            parse_ocr("command:tesseract {image} stdout").unwrap(),
            OcrConfig::Command {
                command: vec!["tesseract".into(), "{image}".into(), "stdout".into()]
            }
        );
        match parse_ocr("http:https://ocr.example/v1").unwrap() {
            OcrConfig::Http { endpoint } => assert_eq!(endpoint.url, "https://ocr.example/v1"),
            other => panic!("{other:?}"),
        }
        assert!(parse_ocr("command:").is_err());
        assert!(parse_ocr("tesseract").is_err());
    }

    #[test]
    fn moderator_specs() {
        assert_eq!(
            parse_moderator("blocklist:words.txt").unwrap(),
            ModeratorConfig::Blocklist {
                words: vec![],
                file: Some("words.txt".into())
            }
        );
        assert!(parse_moderator("blocklist:").is_err());
        assert!(parse_moderator("perspective").is_err());
    }

    #[test]
    fn grid_drops_unsupported_sizes() {
        let g = fit_grid_to(GridSpec::default(), 10).unwrap();
        assert_eq!(g.pca_components, vec![2, 8]);
        assert!(fit_grid_to(GridSpec::default(), 1).is_err());
    }
}
