//! In-context-learning predictor: prompt construction, a pluggable text
//! model and response parsing.

pub mod mock;
pub mod parse;
pub mod prompt;

pub use mock::{MockPolicy, MockProvider, ScriptedEntry};
pub use parse::{format_answer, parse_response, ProviderResponse};
pub use prompt::{
    build_prompt, render_demographics, render_history, render_record, render_self_report, render_target,
    HistoryRecord, PromptSpec, Recommendation,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Catalog;
use crate::model::{PermissionRequest, Prediction, PredictionSource, UserProfile};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("provider timed out after {0} s")]
    Timeout(u64),
}

/// Prompt text in, completion text out.
pub trait TextModel: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError>;
}

impl<T: TextModel + ?Sized> TextModel for &T {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        (**self).complete(prompt)
    }
}

impl<T: TextModel + ?Sized> TextModel for std::sync::Arc<T> {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        (**self).complete(prompt)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum IclError {
    #[error("provider unavailable after {attempts} attempt(s): {message}")]
    ProviderUnavailable { attempts: u32, message: String, raw_text: String },
    #[error("unparseable provider response after {attempts} attempt(s)")]
    UnparseableResponse { attempts: u32, raw_text: String },
}

impl IclError {
    pub fn raw_text(&self) -> &str {
        match self {
            IclError::ProviderUnavailable { raw_text, .. } | IclError::UnparseableResponse { raw_text, .. } => raw_text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IclConfig {
    /// Provider calls per prediction before giving up.
    pub attempts: u32,
    /// Upper bound on rendered history characters; `None` keeps everything.
    pub max_history_chars: Option<usize>,
}

impl Default for IclConfig {
    fn default() -> Self {
        Self { attempts: 3, max_history_chars: None }
    }
}

/// Asks the provider until a response parses or the attempts run out.
pub fn predict(provider: &dyn TextModel, prompt: &PromptSpec, attempts: u32) -> Result<ProviderResponse, IclError> {
    let text = prompt.render();
    let attempts = attempts.max(1);
    let mut last_raw = String::new();
    let mut last_failure: Option<String> = None;
    for attempt in 1..=attempts {
        match provider.complete(&text) {
            Ok(raw) => {
                if let Some(r) = parse_response(&raw) {
                    return Ok(r);
                }
                log::debug!("attempt {attempt}: unparseable response");
                last_raw = raw;
                last_failure = None;
            }
            Err(e) => {
                log::debug!("attempt {attempt}: {e}");
                last_failure = Some(e.to_string());
            }
        }
    }
    Err(match last_failure {
        Some(message) => IclError::ProviderUnavailable { attempts, message, raw_text: last_raw },
        None => IclError::UnparseableResponse { attempts, raw_text: last_raw },
    })
}

/// Per-user in-context predictor without CF input.
pub struct IclPredictor<'a> {
    pub catalog: &'a Catalog,
    pub provider: &'a dyn TextModel,
    pub config: IclConfig,
    pub coverage_threshold: f64,
}

impl IclPredictor<'_> {
    pub fn prompt(&self, profile: &UserProfile, history: &[HistoryRecord], target: &PermissionRequest) -> PromptSpec {
        build_prompt(self.catalog, profile, history, &[], target, self.config.max_history_chars)
    }

    pub fn predict(
        &self,
        profile: &UserProfile,
        history: &[HistoryRecord],
        target: &PermissionRequest,
    ) -> Result<(Prediction, ProviderResponse), IclError> {
        let r = predict(self.provider, &self.prompt(profile, history, target), self.config.attempts)?;
        Ok((Prediction::new(r.label, r.confidence, PredictionSource::Icl, self.coverage_threshold), r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Label;
    use std::sync::Mutex;

    struct Replies(Mutex<Vec<Result<String, ProviderError>>>);

    impl TextModel for Replies {
        fn complete(&self, _: &str) -> Result<String, ProviderError> {
            self.0.lock().unwrap().remove(0)
        }
    }

    fn spec() -> PromptSpec {
        PromptSpec {
            role_preamble: String::new(),
            demographics_sentence: String::new(),
            self_report_sentences: String::new(),
            history_lines: vec![],
            cf_example_lines: vec![],
            target_request: "<Query: q; Tool: t; Data Type: d>".into(),
            output_instructions: String::new(),
            truncated_queries: 0,
        }
    }

    #[test]
    fn retries_then_succeeds() {
        let p = Replies(Mutex::new(vec![Ok("hmm".into()), Ok("DECISION: Allow CONFIDENCE: 0.9".into())]));
        let r = predict(&p, &spec(), 3).unwrap();
        assert_eq!((r.label, r.confidence), (Label::Allow, 0.9));
    }

    #[test]
    fn garbage_thrice_is_unparseable() {
        let p = Replies(Mutex::new(vec![Ok("a".into()), Ok("b".into()), Ok("c".into())]));
        assert_eq!(predict(&p, &spec(), 3), Err(IclError::UnparseableResponse { attempts: 3, raw_text: "c".into() }));
    }

    #[test]
    fn provider_failure_is_reported() {
        let p = Replies(Mutex::new(vec![Err(ProviderError::Timeout(5))]));
        let e = predict(&p, &spec(), 1).unwrap_err();
        assert!(matches!(e, IclError::ProviderUnavailable { attempts: 1, .. }));
        assert_eq!(e.raw_text(), "");
    }
}
