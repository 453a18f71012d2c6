//! Deterministic text models that answer by reading the prompt.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::parse::format_answer;
use super::prompt::{sections, HISTORY_HEADER, REQUEST_HEADER};
use super::{ProviderError, TextModel};
use crate::model::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedEntry {
    /// Matched as a substring of the target request line.
    pub pattern: String,
    pub label: Label,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MockPolicy {
    /// Majority label among history lines with the target's data type,
    /// falling back to the whole history; confidence is the majority share.
    /// Ties and an empty history answer Deny at 0.5.
    MajorityOfHistory,
    FixedLabel { label: Label, confidence: f64 },
    ScriptedTable { entries: Vec<ScriptedEntry>, default: (Label, f64) },
}

/// Text model backed by a [`MockPolicy`]. Counts its calls.
#[derive(Debug)]
pub struct MockProvider {
    pub policy: MockPolicy,
    calls: AtomicUsize,
}

impl MockProvider {
    pub fn new(policy: MockPolicy) -> Self {
        Self { policy, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn answer(&self, prompt: &str) -> (Label, f64) {
        let parts = sections(prompt);
        let target = parts.get(REQUEST_HEADER).and_then(|l| l.first().copied()).unwrap_or("");
        match &self.policy {
            MockPolicy::FixedLabel { label, confidence } => (*label, *confidence),
            MockPolicy::ScriptedTable { entries, default } => entries
                .iter()
                .find(|e| target.contains(&e.pattern))
                .map(|e| (e.label, e.confidence))
                .unwrap_or(*default),
            MockPolicy::MajorityOfHistory => {
                let history: Vec<(&str, Label)> =
                    parts.get(HISTORY_HEADER).into_iter().flatten().filter_map(|l| parse_history_line(l)).collect();
                let wanted = target_data_type(target);
                let same: Vec<Label> =
                    history.iter().filter(|(t, _)| Some(*t) == wanted).map(|(_, l)| *l).collect();
                let pool: Vec<Label> =
                    if same.is_empty() { history.iter().map(|(_, l)| *l).collect() } else { same };
                majority(&pool)
            }
        }
    }
}

impl TextModel for MockProvider {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let (label, confidence) = self.answer(prompt);
        Ok(format_answer(label, confidence))
    }
}

fn majority(labels: &[Label]) -> (Label, f64) {
    let allow = labels.iter().filter(|l| l.is_allow()).count();
    let deny = labels.len() - allow;
    if allow > deny {
        (Label::Allow, allow as f64 / labels.len() as f64)
    } else if deny > allow {
        (Label::Deny, deny as f64 / labels.len() as f64)
    } else {
        (Label::Deny, 0.5)
    }
}

/// `(data type, decision)` of a rendered history record. Fields are found
/// from the right so query text may contain separators.
fn parse_history_line(line: &str) -> Option<(&str, Label)> {
    let body = line.strip_prefix('<')?.strip_suffix('>')?;
    let (rest, decision) = body.rsplit_once("; Decision: ")?;
    let (_, dtype) = rest.rsplit_once("; Data Type: ")?;
    Some((dtype, decision.parse().ok()?))
}

fn target_data_type(line: &str) -> Option<&str> {
    let body = line.strip_prefix('<')?.strip_suffix('>')?;
    Some(body.rsplit_once("; Data Type: ")?.1)
}
