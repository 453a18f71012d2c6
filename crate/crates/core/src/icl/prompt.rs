//! Prompt rendering: profile sentences, decision records and section layout.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::Catalog;
use crate::model::{Label, PermissionDecision, PermissionRequest, QueryId, Sex, UserProfile};

pub const ROLE_HEADER: &str = "## Role";
pub const PROFILE_HEADER: &str = "## User profile";
pub const HISTORY_HEADER: &str = "## Permission history";
pub const RECOMMENDATIONS_HEADER: &str = "## Recommendations";
pub const REQUEST_HEADER: &str = "## Permission request";
pub const INSTRUCTIONS_HEADER: &str = "## Answer format";

pub const ROLE_PREAMBLE: &str = "You are a permission assistant. You decide on a user's behalf whether an AI agent \
may access a piece of the user's data to answer one of the user's queries. Base your decision on \
the user's profile and on the permission decisions the user has made before.";

pub const EMPTY_HISTORY: &str = "The user has no prior decisions on record.";

pub const OUTPUT_INSTRUCTIONS: &str = "Decide whether the user would allow this request and how confident you are. \
End your reply with exactly one line of the form\nDECISION: <Allow|Deny> CONFIDENCE: <0.00-1.00>";

/// One past decision in prompt form, with display names already resolved.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub query_id: QueryId,
    pub query_text: String,
    pub tool: String,
    pub data_type: String,
    pub label: Label,
}

impl HistoryRecord {
    /// Resolves names through the catalog. One-time answers are rendered by
    /// what they granted, so they still count as evidence in the prompt.
    pub fn from_decision(catalog: &Catalog, d: &PermissionDecision) -> Self {
        Self {
            query_id: d.query_id.clone(),
            query_text: catalog.query(&d.query_id).map(|q| q.text.clone()).unwrap_or_else(|| d.query_id.to_string()),
            tool: catalog.tool_name(&d.tool_id).to_string(),
            data_type: catalog.data_type_name(&d.data_type_id).to_string(),
            label: d.option.share_label(),
        }
    }

    pub fn render(&self) -> String {
        render_record(&self.query_text, &self.tool, &self.data_type, Some(self.label))
    }
}

/// `<Query: ..; Tool: ..; Data Type: ..; Decision: ..>`, or the same without
/// the decision field for a request still to be answered.
pub fn render_record(query: &str, tool: &str, data_type: &str, label: Option<Label>) -> String {
    match label {
        Some(l) => format!("<Query: {query}; Tool: {tool}; Data Type: {data_type}; Decision: {l}>"),
        None => format!("<Query: {query}; Tool: {tool}; Data Type: {data_type}>"),
    }
}

pub fn render_target(catalog: &Catalog, r: &PermissionRequest) -> String {
    render_record(&r.query_text, catalog.tool_name(&r.tool_id), catalog.data_type_name(&r.data_type_id), None)
}

/// Sex, age bracket and education in one sentence.
pub fn render_demographics(p: &UserProfile) -> String {
    let who = match p.sex {
        Sex::M => "a male ",
        Sex::F => "a female ",
        Sex::Undisclosed => "",
    };
    format!("The user is {who}in the {} age group with {}.", p.age_group, p.education.phrase())
}

fn level_word(v: u8) -> &'static str {
    match v {
        1 => "low",
        2 => "moderate",
        3 => "high",
        _ => "very high",
    }
}

/// The four self-reported scales and the concerning domains.
pub fn render_self_report(p: &UserProfile) -> String {
    let scale = |v: u8| format!("{} ({v} of 4)", level_word(v));
    let mut s = format!(
        "On a four-level scale, the user reports {} familiarity with AI, {} frequency of AI use, {} trust in AI, and {} privacy concern",
        scale(p.ai_familiarity),
        scale(p.ai_usage_frequency),
        scale(p.ai_trust),
        scale(p.privacy_consciousness),
    );
    if p.privacy_consciousness >= UserProfile::SCALE_MAX {
        s.push_str(", the highest privacy concern level");
    }
    s.push('.');
    if p.concerning_domains.is_empty() {
        s.push_str(" The user did not mark any domain as concerning.");
    } else {
        let names: Vec<&str> = p.concerning_domains.iter().map(|d| d.label()).collect();
        let _ = write!(s, " The user marked these domains as concerning: {}.", names.join(", "));
    }
    s
}

/// History lines in a canonical order: by query, then tool and data type.
pub fn render_history(history: &[HistoryRecord]) -> Vec<String> {
    let mut sorted: Vec<&HistoryRecord> = history.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.query_id, &a.tool, &a.data_type, a.label).cmp(&(&b.query_id, &b.tool, &b.data_type, b.label))
    });
    sorted.into_iter().map(HistoryRecord::render).collect()
}

/// Drops whole queries, earliest first in input order, until the rendered
/// history fits in `max_chars`. Returns the kept records and how many
/// queries were dropped.
pub fn truncate_history(history: &[HistoryRecord], max_chars: usize) -> (Vec<HistoryRecord>, usize) {
    let size = |h: &[HistoryRecord]| h.iter().map(|r| r.render().len() + 1).sum::<usize>();
    let mut order: Vec<&QueryId> = Vec::new();
    for r in history {
        if !order.contains(&&r.query_id) {
            order.push(&r.query_id);
        }
    }
    let mut kept: Vec<HistoryRecord> = history.to_vec();
    let mut dropped = 0;
    for q in order {
        if size(&kept) <= max_chars {
            break;
        }
        kept.retain(|r| &r.query_id != q);
        dropped += 1;
    }
    (kept, dropped)
}

/// A CF recommendation ready for the prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub line: String,
    pub label: Label,
    pub confidence: f64,
}

/// The assembled prompt, section by section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub role_preamble: String,
    pub demographics_sentence: String,
    pub self_report_sentences: String,
    pub history_lines: Vec<String>,
    pub cf_example_lines: Vec<String>,
    pub target_request: String,
    pub output_instructions: String,
    /// Queries removed to respect the history budget.
    #[serde(default)]
    pub truncated_queries: usize,
}

impl PromptSpec {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{ROLE_HEADER}\n{}\n", self.role_preamble);
        let _ = writeln!(s, "{PROFILE_HEADER}\n{}\n{}\n", self.demographics_sentence, self.self_report_sentences);
        let _ = writeln!(s, "{HISTORY_HEADER}");
        if self.history_lines.is_empty() {
            let _ = writeln!(s, "{EMPTY_HISTORY}");
        }
        for line in &self.history_lines {
            let _ = writeln!(s, "{line}");
        }
        s.push('\n');
        if !self.cf_example_lines.is_empty() {
            let _ = writeln!(
                s,
                "{RECOMMENDATIONS_HEADER}\nA collaborative-filtering model trained on many users' decisions predicts with high confidence that this user would decide as follows:"
            );
            for line in &self.cf_example_lines {
                let _ = writeln!(s, "{line}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "{REQUEST_HEADER}\n{}\n", self.target_request);
        let _ = write!(s, "{INSTRUCTIONS_HEADER}\n{}\n", self.output_instructions);
        s
    }

    pub fn rendered_len(&self) -> usize {
        self.render().len()
    }
}

/// Assembles the prompt. `max_history_chars` bounds the rendered history.
pub fn build_prompt(
    catalog: &Catalog,
    profile: &UserProfile,
    history: &[HistoryRecord],
    recommendations: &[Recommendation],
    target: &PermissionRequest,
    max_history_chars: Option<usize>,
) -> PromptSpec {
    let (kept, truncated_queries) = match max_history_chars {
        Some(limit) => truncate_history(history, limit),
        None => (history.to_vec(), 0),
    };
    PromptSpec {
        role_preamble: ROLE_PREAMBLE.to_string(),
        demographics_sentence: render_demographics(profile),
        self_report_sentences: render_self_report(profile),
        history_lines: render_history(&kept),
        cf_example_lines: recommendations.iter().map(|r| r.line.clone()).collect(),
        target_request: render_target(catalog, target),
        output_instructions: OUTPUT_INSTRUCTIONS.to_string(),
        truncated_queries,
    }
}

/// Splits a rendered prompt into its sections by header.
pub fn sections(prompt: &str) -> BTreeMap<&str, Vec<&str>> {
    let headers = [
        ROLE_HEADER,
        PROFILE_HEADER,
        HISTORY_HEADER,
        RECOMMENDATIONS_HEADER,
        REQUEST_HEADER,
        INSTRUCTIONS_HEADER,
    ];
    let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut current: Option<&str> = None;
    for line in prompt.lines() {
        if let Some(h) = headers.iter().find(|h| **h == line) {
            current = Some(h);
            out.entry(h).or_default();
        } else if let Some(h) = current {
            if !line.is_empty() {
                out.entry(h).or_default().push(line);
            }
        }
    }
    out
}
