//! Generation of textual captchas from sentences, evaluation of content
//! moderation pipelines against them, and captcha-aware outlier defenses.

pub mod captcha;
pub mod corpus;
pub mod defense;
pub mod metrics;
pub mod pipeline;
pub mod raster;
