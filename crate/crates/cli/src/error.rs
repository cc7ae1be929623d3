use std::fmt;

use textcap::captcha::CaptchaError;
use textcap::corpus::CorpusError;
use textcap::defense::DefenseError;
use textcap::metrics::MetricsError;
use textcap::pipeline::PipelineError;

/// A failure with a stable machine-readable code.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
    usage: bool,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: "usage",
            message: message.into(),
            usage: true,
        }
    }

    pub fn runtime(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            usage: false,
        }
    }

    pub fn io(path: &std::path::Path, e: impl fmt::Display) -> Self {
        Self::runtime("io", format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        if self.usage {
            1
        } else {
            2
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ERROR:{}:{}", self.code, self.message)
    }
}

impl From<CaptchaError> for CliError {
    fn from(e: CaptchaError) -> Self {
        match e {
            CaptchaError::UnknownProfile(_) | CaptchaError::UnknownFont(_) => Self::usage(e.to_string()),
            _ => Self::runtime("generation", e.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let code = match e {
            CorpusError::Io { .. } => "io",
            _ => "corpus",
        };
        Self::runtime(code, e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match e {
            PipelineError::Config(_) => "config",
            PipelineError::Io { .. } => "io",
            _ => "pipeline",
        };
        Self::runtime(code, e.to_string())
    }
}

impl From<DefenseError> for CliError {
    fn from(e: DefenseError) -> Self {
        Self::runtime("defense", e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        Self::runtime("metrics", e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_and_exit_codes() {
        let u = CliError::usage("bad flag");
        assert_eq!(u.to_string(), "ERROR:usage:bad flag");
        assert_eq!(u.exit_code(), 1);
        let r: CliError = CorpusError::EmptyList.into();
        assert_eq!(r.code, "corpus");
        assert_eq!(r.exit_code(), 2);
        let c: CliError = CaptchaError::UnknownProfile("x".into()).into();
        assert_eq!(c.exit_code(), 1);
    }
}
