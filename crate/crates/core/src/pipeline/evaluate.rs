use rayon::prelude::*;
use serde::Serialize;

use super::{moderate, ContentItem, ImageInput, Pipeline, PipelineError};
use crate::corpus::{Label, Manifest};
use crate::metrics::{asr, nld, AttackOutcome};

/// Outcome for one captcha. `flagged` is `None` when the verdict was
/// indeterminate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleResult {
    pub sample_id: String,
    pub style: String,
    pub ground_truth: String,
    pub extracted: Option<String>,
    pub flagged: Option<bool>,
    pub nld: Option<f64>,
    /// Verdict on the same payload submitted as plain text.
    pub plain_text_flagged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub indeterminate_reason: Option<String>,
}

impl SampleResult {
    /// Moderated as plain text but not as an image.
    pub fn is_evasion_witness(&self) -> bool {
        self.plain_text_flagged == Some(true) && self.flagged == Some(false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StyleReport {
    pub style: String,
    pub n: usize,
    pub flagged: usize,
    pub unflagged: usize,
    pub indeterminate: usize,
    /// Over determinate samples only; `None` when there are none.
    pub asr: Option<f64>,
    /// `None` when the OCR stage is disabled or nothing was extracted.
    pub mean_nld: Option<f64>,
    pub plain_text_flagged: usize,
    pub evasion_witnesses: usize,
}

impl StyleReport {
    /// A success rate of 1 means every payload the moderator flags as plain
    /// text escaped it as an image.
    pub fn evasion_implication_holds(&self) -> bool {
        self.asr != Some(1.0) || self.evasion_witnesses == self.plain_text_flagged
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackReport {
    pub ocr: String,
    pub text_moderator: String,
    pub image_moderator: String,
    pub threshold: f64,
    pub ocr_stage_enabled: bool,
    pub styles: Vec<StyleReport>,
    pub samples: Vec<SampleResult>,
}

fn evaluate_one(
    manifest: &Manifest,
    r: &crate::corpus::ManifestRecord,
    pipeline: &Pipeline,
) -> Result<SampleResult, PipelineError> {
    let truth = r.text.clone().unwrap_or_default();
    let image = ImageInput::from_path(&manifest.resolve(r))?;
    let item = ContentItem::image_with_text(r.id.clone(), image, truth.clone());
    let v = moderate(&item, pipeline)?;
    let plain = moderate(&ContentItem::text(r.id.clone(), truth.clone()), pipeline)?;
    let determinate = v.indeterminate.is_none();
    let nld = match (&v.extracted_text, determinate) {
        (Some(x), true) => Some(nld(&truth, x).map_err(|_| PipelineError::EmptyManifest)?),
        _ => None,
    };
    Ok(SampleResult {
        sample_id: r.id.clone(),
        style: r.style.clone().unwrap_or_default(),
        ground_truth: truth,
        extracted: v.extracted_text.clone(),
        flagged: determinate.then_some(v.flagged),
        nld,
        plain_text_flagged: plain.indeterminate.is_none().then_some(plain.flagged),
        indeterminate_reason: v.indeterminate.map(|i| i.reason),
    })
}

/// Submits every captcha of `manifest` as an image carrying text and
/// groups success rate and extraction distance by style.
pub fn evaluate_attack(manifest: &Manifest, pipeline: &Pipeline) -> Result<AttackReport, PipelineError> {
    let records: Vec<_> = manifest
        .records
        .iter()
        .filter(|r| r.label == Label::Captcha && r.text.as_deref().is_some_and(|t| !t.is_empty()))
        .collect();
    if records.is_empty() {
        return Err(PipelineError::EmptyManifest);
    }
    let samples: Vec<SampleResult> = if pipeline.serial_only() {
        records
            .iter()
            .map(|r| evaluate_one(manifest, r, pipeline))
            .collect::<Result<_, _>>()?
    } else {
        records
            .par_iter()
            .map(|r| evaluate_one(manifest, r, pipeline))
            .collect::<Result<_, _>>()?
    };
    let indeterminate = samples.iter().filter(|s| s.flagged.is_none()).count();
    if indeterminate > 0 {
        log::warn!("{indeterminate} of {} verdicts indeterminate", samples.len());
    }
    let mut styles = Vec::new();
    for style in manifest.styles() {
        let group: Vec<&SampleResult> = samples.iter().filter(|s| s.style == style).collect();
        if group.is_empty() {
            continue;
        }
        let outcomes: Vec<AttackOutcome> = group
            .iter()
            .filter_map(|s| {
                s.flagged.map(|flagged| AttackOutcome {
                    sample_id: s.sample_id.clone(),
                    style: s.style.clone(),
                    ground_truth: s.ground_truth.clone(),
                    extracted: s.extracted.clone().unwrap_or_default(),
                    flagged,
                })
            })
            .collect();
        let nlds: Vec<f64> = group.iter().filter_map(|s| s.nld).collect();
        let flagged = outcomes.iter().filter(|o| o.flagged).count();
        styles.push(StyleReport {
            n: group.len(),
            flagged,
            unflagged: outcomes.len() - flagged,
            indeterminate: group.len() - outcomes.len(),
            asr: asr(&outcomes).ok(),
            mean_nld: (!nlds.is_empty()).then(|| nlds.iter().sum::<f64>() / nlds.len() as f64),
            plain_text_flagged: group
                .iter()
                .filter(|s| s.flagged.is_some() && s.plain_text_flagged == Some(true))
                .count(),
            evasion_witnesses: group.iter().filter(|s| s.is_evasion_witness()).count(),
            style,
        });
    }
    Ok(AttackReport {
        ocr: pipeline.ocr.name().to_string(),
        text_moderator: pipeline.text.name().to_string(),
        image_moderator: pipeline.image.name().to_string(),
        threshold: pipeline.config.threshold,
        ocr_stage_enabled: pipeline.config.ocr_stage_enabled,
        styles,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::captcha::{builtin_profiles, generate_dataset, FontPool, TextPayload};
    use crate::pipeline::{OcrConfig, PipelineConfig};

    fn corpus(dir: &std::path::Path) -> Manifest {
        let payloads = [TextPayload::new("a", "hate"), TextPayload::new("b", "I hate you")];
        let reg = builtin_profiles();
        generate_dataset(&payloads, &reg.select("clean,claptcha").unwrap(), 3, FontPool::bundled(), dir)
            .unwrap()
            .0
    }

    #[test]
    fn echo_catches_everything() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path());
        let p = Pipeline::build(PipelineConfig::mock(&["hate"]), Some(&m)).unwrap();
        let r = evaluate_attack(&m, &p).unwrap();
        assert_eq!(r.styles.len(), 2);
        for s in &r.styles {
            assert_eq!(s.asr, Some(0.0));
            assert_eq!(s.mean_nld, Some(0.0));
            assert_eq!(s.flagged + s.unflagged + s.indeterminate, s.n);
            assert!(s.evasion_implication_holds());
        }
    }

    #[test]
    fn null_ocr_misses_everything() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path());
        let mut c = PipelineConfig::mock(&["hate"]);
        c.ocr = OcrConfig::Null;
        let r = evaluate_attack(&m, &Pipeline::build(c, None).unwrap()).unwrap();
        for s in &r.styles {
            assert_eq!(s.asr, Some(1.0));
            assert_eq!(s.mean_nld, Some(1.0));
            assert_eq!(s.evasion_witnesses, s.n);
            assert!(s.evasion_implication_holds());
        }
    }

    #[test]
    fn disabled_ocr_has_no_nld() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path());
        let mut c = PipelineConfig::mock(&["hate"]);
        c.ocr_stage_enabled = false;
        let r = evaluate_attack(&m, &Pipeline::build(c, Some(&m)).unwrap()).unwrap();
        assert!(r.styles.iter().all(|s| s.asr == Some(1.0) && s.mean_nld.is_none()));
    }

    #[test]
    fn empty_manifest_is_an_error() {
        let m = Manifest::new(vec![], ".");
        let mut c = PipelineConfig::mock(&["hate"]);
        c.ocr = OcrConfig::Null;
        assert!(matches!(
            evaluate_attack(&m, &Pipeline::build(c, None).unwrap()),
            Err(PipelineError::EmptyManifest)
        ));
    }
}
