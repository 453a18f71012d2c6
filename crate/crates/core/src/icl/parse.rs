use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::Label;

static STRICT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)DECISION:\s*\**\s*(allow|deny)\b\W*CONFIDENCE:\s*\**\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:e[-+]?\d+)?)")
        .expect("valid regex")
});

static LENIENT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\W*(allow|deny)\b[\s,:;=]*([-+]?(?:\d+\.?\d*|\.\d+)(?:e[-+]?\d+)?)\W*$").expect("valid regex")
});

/// A parsed provider answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub label: Label,
    /// Clamped into `[0, 1]`.
    pub confidence: f64,
    /// The confidence exactly as the provider wrote it.
    pub raw_confidence: f64,
    pub raw_text: String,
}

impl ProviderResponse {
    pub fn was_clamped(&self) -> bool {
        self.confidence != self.raw_confidence
    }
}

/// Extracts the label and confidence from the last line that carries them.
///
/// The instructed form is `DECISION: Allow CONFIDENCE: 0.85`; a bare
/// `Allow 0.85` line is accepted as well.
pub fn parse_response(text: &str) -> Option<ProviderResponse> {
    for line in text.lines().rev() {
        let caps = STRICT.captures(line).or_else(|| LENIENT.captures(line.trim()));
        let Some(caps) = caps else { continue };
        let label: Label = caps[1].parse().ok()?;
        let raw: f64 = caps[2].parse().ok()?;
        if !raw.is_finite() {
            continue;
        }
        let confidence = raw.clamp(0.0, 1.0);
        if confidence != raw {
            log::warn!("provider confidence {raw} clamped to {confidence}");
        }
        return Some(ProviderResponse { label, confidence, raw_confidence: raw, raw_text: text.to_string() });
    }
    None
}

/// The instructed answer line.
pub fn format_answer(label: Label, confidence: f64) -> String {
    format!("DECISION: {label} CONFIDENCE: {confidence}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lenient_form() {
        let r = parse_response("Allow 0.9").unwrap();
        assert_eq!((r.label, r.confidence), (Label::Allow, 0.9));
    }

    #[test]
    fn strict_form_after_reasoning() {
        let text = "The user denied SSN before.\nDECISION: Allow CONFIDENCE: 0.2\nDECISION: Deny CONFIDENCE: 0.85";
        let r = parse_response(text).unwrap();
        assert_eq!((r.label, r.confidence), (Label::Deny, 0.85));
        assert_eq!(r.raw_text, text);
    }

    #[test]
    fn out_of_range_is_clamped_and_kept() {
        let r = parse_response("DECISION: allow CONFIDENCE: 1.7").unwrap();
        assert_eq!(r.confidence, 1.0);
        assert_eq!(r.raw_confidence, 1.7);
        assert!(r.was_clamped());
        assert_eq!(parse_response("Deny -0.5").unwrap().confidence, 0.0);
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(parse_response("I cannot help with that.").is_none());
        assert!(parse_response("").is_none());
        assert!(parse_response("DECISION: Maybe CONFIDENCE: 0.5").is_none());
    }

    proptest! {
        #[test]
        fn format_round_trips(allow in any::<bool>(), c in 0.0f64..=1.0) {
            let label = Label::from_allow(allow);
            let r = parse_response(&format_answer(label, c)).unwrap();
            prop_assert_eq!(r.label, label);
            prop_assert_eq!(r.confidence, c);
        }
    }
}
