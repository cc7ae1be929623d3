use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::fonts::{FontId, FontPool, MONO, SANS, SERIF};
use super::layout::{CanvasPolicy, DEFAULT_MARGIN};
use super::transform::{OccluderShape, Span, StageKind, StepKind, TransformStep};
use super::CaptchaError;
use crate::raster::MIN_GENERATED_SIDE;

pub const CLEAN: &str = "clean";
pub const CLAPTCHA: &str = "claptcha";
pub const MULTICOLOR: &str = "multicolor";
pub const HOMEMADE: &str = "homemade";

pub const DEFAULT_TEXT_SIZE: f32 = 40.0;

/// A named, ordered list of transformation steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleProfile {
    pub name: String,
    pub steps: Vec<TransformStep>,
    pub canvas: CanvasPolicy,
    /// Faces this style may use; the first is the default.
    pub font_pool: Vec<FontId>,
}

impl StyleProfile {
    pub fn step_kinds(&self) -> Vec<StepKind> {
        self.steps.iter().map(TransformStep::kind).collect()
    }

    /// Checks structure and parameters: the first step is domain transfer,
    /// no kind repeats except occluders, and every glyph-level step precedes
    /// every image-level step.
    pub fn validate(&self) -> Result<(), CaptchaError> {
        let invalid = |reason: String| CaptchaError::InvalidProfile {
            profile: self.name.clone(),
            reason,
        };
        if self.name.trim().is_empty() {
            return Err(invalid("empty name".into()));
        }
        match self.steps.first().map(TransformStep::kind) {
            Some(StepKind::DomainTransfer) => {}
            _ => return Err(invalid("first step must be domain transfer".into())),
        }
        let mut seen = BTreeSet::new();
        let mut in_image_stage = false;
        for (i, step) in self.steps.iter().enumerate() {
            let kind = step.kind();
            if kind != StepKind::OccludingSymbols && !seen.insert(kind) {
                return Err(invalid(format!("duplicate step {}", kind.name())));
            }
            match kind.stage() {
                StageKind::Text if i > 0 => {
                    return Err(invalid("domain transfer may only appear first".into()))
                }
                StageKind::Glyph if in_image_stage => {
                    return Err(invalid(format!(
                        "glyph-level step {} at index {i} follows an image-level step",
                        kind.name()
                    )))
                }
                StageKind::Image => in_image_stage = true,
                _ => {}
            }
            step.validate()
                .map_err(|e| CaptchaError::Step { index: i, source: Box::new(e) })?;
        }
        Ok(())
    }

    pub(crate) fn check_fonts(&self, fonts: &FontPool) -> Result<(), CaptchaError> {
        for f in &self.font_pool {
            if !fonts.contains(f) {
                return Err(CaptchaError::UnknownFont(f.to_string()));
            }
        }
        Ok(())
    }
}

/// Profiles by unique name, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProfileRegistry {
    profiles: Vec<StyleProfile>,
}

impl ProfileRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, profile: StyleProfile) -> Result<(), CaptchaError> {
        profile.validate()?;
        if self.get(&profile.name).is_some() {
            return Err(CaptchaError::InvalidProfile {
                profile: profile.name,
                reason: "name already registered".into(),
            });
        }
        self.profiles.push(profile);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&StyleProfile> {
        self.profiles.iter().find(|p| p.name.eq_ignore_ascii_case(name))
    }

    pub fn profiles(&self) -> &[StyleProfile] {
        &self.profiles
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Looks up a comma separated list of names.
    pub fn select(&self, names: &str) -> Result<Vec<StyleProfile>, CaptchaError> {
        names
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|n| {
                self.get(n)
                    .cloned()
                    .ok_or_else(|| CaptchaError::UnknownProfile(n.to_string()))
            })
            .collect()
    }
}

fn canvas() -> CanvasPolicy {
    CanvasPolicy::AutoFit {
        margin: DEFAULT_MARGIN,
        min_side: MIN_GENERATED_SIDE,
    }
}

fn text() -> TransformStep {
    TransformStep::DomainTransfer {
        font: None,
        size_px: DEFAULT_TEXT_SIZE,
    }
}

fn rotation() -> TransformStep {
    TransformStep::Rotation {
        degrees: Span::new(-25.0, 25.0),
    }
}

/// The four reference styles. Steps within a profile are ordered glyph-level
/// first, so the composition flattens exactly once.
pub fn builtin_profiles() -> ProfileRegistry {
    let mono = vec![FontId::new(MONO)];
    let mut reg = ProfileRegistry::new();
    let profiles = [
        StyleProfile {
            name: CLEAN.into(),
            steps: vec![text()],
            canvas: canvas(),
            font_pool: mono.clone(),
        },
        StyleProfile {
            name: CLAPTCHA.into(),
            steps: vec![
                text(),
                TransformStep::FontSizeVariation {
                    scale: Span::new(0.85, 1.2),
                    vary_font: false,
                },
                rotation(),
                TransformStep::Distortion {
                    max_displacement_px: 4.0,
                    grid: 4,
                },
                TransformStep::Waving {
                    amplitude_px: Span::new(2.0, 6.0),
                    wavelength_px: Span::new(20.0, 60.0),
                },
                TransformStep::NoisyBackground {
                    density: 0.15,
                    strokes: Span::new(4, 10),
                },
                TransformStep::OccludingSymbols {
                    count: Span::new(2, 5),
                    stroke_width: Span::new(1.0, 3.0),
                    shapes: vec![OccluderShape::Line, OccluderShape::Arc],
                },
            ],
            canvas: canvas(),
            font_pool: mono.clone(),
        },
        StyleProfile {
            name: MULTICOLOR.into(),
            steps: vec![
                text(),
                TransformStep::FontSizeVariation {
                    scale: Span::new(0.8, 1.25),
                    vary_font: true,
                },
                rotation(),
                TransformStep::ColorVariation {
                    channel: Span::new(0, 150),
                },
                TransformStep::SolidBackground {
                    channel: Span::new(170, 255),
                },
                TransformStep::OccludingSymbols {
                    count: Span::new(2, 5),
                    stroke_width: Span::new(1.0, 3.0),
                    shapes: vec![OccluderShape::Line, OccluderShape::Arc, OccluderShape::DotCluster],
                },
            ],
            canvas: canvas(),
            font_pool: vec![FontId::new(SANS), FontId::new(SERIF), FontId::new(MONO)],
        },
        StyleProfile {
            name: HOMEMADE.into(),
            steps: vec![
                text(),
                TransformStep::ColorVariation {
                    channel: Span::new(0, 120),
                },
                TransformStep::NoisyBackground {
                    density: 0.15,
                    strokes: Span::new(2, 6),
                },
                TransformStep::OccludingSymbols {
                    count: Span::new(2, 5),
                    stroke_width: Span::new(1.0, 2.0),
                    shapes: vec![OccluderShape::Line, OccluderShape::Arc],
                },
            ],
            canvas: canvas(),
            font_pool: mono,
        },
    ];
    for p in profiles {
        reg.register(p).expect("built-in profiles are valid");
    }
    reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use StepKind::*;

    fn kinds(name: &str) -> BTreeSet<StepKind> {
        builtin_profiles().get(name).unwrap().step_kinds().into_iter().collect()
    }

    #[test]
    fn builtin_step_sets_match_the_transformation_table() {
        assert_eq!(kinds(CLEAN), BTreeSet::from([DomainTransfer]));
        assert_eq!(
            kinds(CLAPTCHA),
            BTreeSet::from([
                DomainTransfer,
                Rotation,
                Distortion,
                Waving,
                NoisyBackground,
                FontSizeVariation,
                OccludingSymbols
            ])
        );
        assert_eq!(
            kinds(MULTICOLOR),
            BTreeSet::from([
                DomainTransfer,
                Rotation,
                SolidBackground,
                FontSizeVariation,
                ColorVariation,
                OccludingSymbols
            ])
        );
        assert_eq!(
            kinds(HOMEMADE),
            BTreeSet::from([DomainTransfer, NoisyBackground, ColorVariation, OccludingSymbols])
        );
        assert_eq!(builtin_profiles().get(CLEAN).unwrap().steps.len(), 1);
        assert!(!kinds(HOMEMADE).contains(&Rotation) && !kinds(HOMEMADE).contains(&Distortion));
        assert!(!kinds(MULTICOLOR).contains(&Waving));
    }

    #[test]
    fn structural_rules_are_enforced() {
        let base = builtin_profiles().get(CLAPTCHA).unwrap().clone();

        let mut no_t1 = base.clone();
        no_t1.steps.remove(0);
        assert!(no_t1.validate().is_err());

        let mut dup = base.clone();
        dup.steps.insert(2, rotation());
        assert!(dup.validate().is_err());

        let mut two_occluders = base.clone();
        two_occluders.steps.push(base.steps.last().unwrap().clone());
        assert!(two_occluders.validate().is_ok());

        let mut late_glyph = base.clone();
        late_glyph.steps.push(TransformStep::ColorVariation {
            channel: Span::new(0, 10),
        });
        assert!(late_glyph.validate().is_err());

        let mut reg = builtin_profiles();
        assert!(reg.register(base).is_err());
    }

    #[test]
    fn select_by_names() {
        let reg = builtin_profiles();
        let sel = reg.select("clean, Homemade").unwrap();
        assert_eq!(sel.len(), 2);
        assert!(matches!(reg.select("clean,fancy"), Err(CaptchaError::UnknownProfile(_))));
    }
}
