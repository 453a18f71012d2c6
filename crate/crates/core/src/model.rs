//! Shared vocabulary: identifiers, catalog entities, decisions, profiles and
//! predictions.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Normalizes an opaque identifier to lowercase-with-hyphens.
///
/// Runs of characters that are not ASCII alphanumerics collapse into a single
/// hyphen; leading and trailing hyphens are dropped.
pub fn normalize_id(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_hyphen = false;
    for ch in raw.chars() {
        if ch.is_alphanumeric() {
            if pending_hyphen && !out.is_empty() {
                out.push('-');
            }
            pending_hyphen = false;
            out.extend(ch.to_lowercase());
        } else {
            pending_hyphen = true;
        }
    }
    out
}

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(raw: impl AsRef<str>) -> Self {
                Self(normalize_id(raw.as_ref()))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl From<String> for $name {
            fn from(raw: String) -> Self {
                Self::new(raw)
            }
        }

        impl From<&str> for $name {
            fn from(raw: &str) -> Self {
                Self::new(raw)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

id_newtype!(
    /// Anonymous study participant / assistant user.
    ParticipantId
);
id_newtype!(QueryId);
id_newtype!(ToolId);
id_newtype!(DataTypeId);
id_newtype!(
    /// Group of semantically similar data types.
    GenericGroupId
);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} label `{label}`")]
pub struct ParseLabelError {
    pub kind: &'static str,
    pub label: String,
}

fn squash(label: &str) -> String {
    label
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

/// One of the eight usage domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Domain {
    Entertainment,
    HealthFitness,
    SmartHome,
    Travel,
    Shopping,
    WorkProductivity,
    Social,
    Finance,
}

impl Domain {
    pub const ALL: [Domain; 8] = [
        Domain::Entertainment,
        Domain::HealthFitness,
        Domain::SmartHome,
        Domain::Travel,
        Domain::Shopping,
        Domain::WorkProductivity,
        Domain::Social,
        Domain::Finance,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Domain::Entertainment => "Entertainment",
            Domain::HealthFitness => "Health & Fitness",
            Domain::SmartHome => "Smart Home",
            Domain::Travel => "Travel",
            Domain::Shopping => "Shopping",
            Domain::WorkProductivity => "Work & Productivity",
            Domain::Social => "Social",
            Domain::Finance => "Finance",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Domain {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = squash(s).replace("and", "");
        Domain::ALL
            .into_iter()
            .find(|d| squash(d.label()).replace("and", "") == key)
            .ok_or_else(|| ParseLabelError { kind: "domain", label: s.to_string() })
    }
}

impl TryFrom<String> for Domain {
    type Error = ParseLabelError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Domain> for String {
    fn from(d: Domain) -> String {
        d.label().to_string()
    }
}

/// The four answers a user can give to a data-access prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DecisionOption {
    /// Yes, always share.
    AlwaysShare,
    /// Yes, but ask me next time.
    YesOnce,
    /// No, but ask me next time.
    NoOnce,
    /// No, never share.
    NeverShare,
}

impl DecisionOption {
    pub const ALL: [DecisionOption; 4] = [
        DecisionOption::AlwaysShare,
        DecisionOption::YesOnce,
        DecisionOption::NoOnce,
        DecisionOption::NeverShare,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Model ground truth: only standing (always/never) answers count.
    pub fn binary_label(self) -> Option<Label> {
        match self {
            DecisionOption::AlwaysShare => Some(Label::Allow),
            DecisionOption::NeverShare => Some(Label::Deny),
            DecisionOption::YesOnce | DecisionOption::NoOnce => None,
        }
    }

    /// Whether the answer lets the data flow, once or permanently.
    pub fn shares(self) -> bool {
        matches!(self, DecisionOption::AlwaysShare | DecisionOption::YesOnce)
    }

    pub fn share_label(self) -> Label {
        if self.shares() {
            Label::Allow
        } else {
            Label::Deny
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            DecisionOption::AlwaysShare => "Yes, always share",
            DecisionOption::YesOnce => "Yes, but ask me next time",
            DecisionOption::NoOnce => "No, but ask me next time",
            DecisionOption::NeverShare => "No, never share",
        }
    }
}

/// Binary permission outcome; `Allow` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Allow,
    Deny,
}

impl Label {
    pub fn is_allow(self) -> bool {
        self == Label::Allow
    }

    pub fn from_allow(allow: bool) -> Self {
        if allow {
            Label::Allow
        } else {
            Label::Deny
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Label::Allow => 1.0,
            Label::Deny => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Allow => "Allow",
            Label::Deny => "Deny",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = ParseLabelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "allow" => Ok(Label::Allow),
            "deny" => Ok(Label::Deny),
            _ => Err(ParseLabelError { kind: "label", label: s.to_string() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tool {
    pub id: ToolId,
    pub display_name: String,
    pub domains: BTreeSet<Domain>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataType {
    pub id: DataTypeId,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generic_group: Option<GenericGroupId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenericGroup {
    pub id: GenericGroupId,
    pub display_name: String,
}

/// One data item an agent asks for while resolving a query. `necessary` is
/// false for deliberately injected, unneeded data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestedData {
    pub data_type_id: DataTypeId,
    pub necessary: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: QueryId,
    pub text: String,
    pub domain: Domain,
    pub tools: Vec<ToolId>,
    pub requested_data: Vec<RequestedData>,
}

impl Query {
    /// True when the agent asked for at least one unnecessary data type.
    pub fn has_injected_data(&self) -> bool {
        self.requested_data.iter().any(|r| !r.necessary)
    }
}

/// A recorded answer to one (query, tool, data type) request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionDecision {
    pub participant_id: ParticipantId,
    pub query_id: QueryId,
    pub tool_id: ToolId,
    pub data_type_id: DataTypeId,
    pub option: DecisionOption,
    /// Ground truth: whether the data is actually required for the query.
    pub necessary: bool,
    /// The participant's own judgement, when they performed data selection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perceived_necessary: Option<bool>,
}

impl PermissionDecision {
    pub fn key(&self) -> DecisionKey {
        DecisionKey {
            participant_id: self.participant_id.clone(),
            request: self.request_key(),
        }
    }

    pub fn request_key(&self) -> RequestKey {
        RequestKey {
            query_id: self.query_id.clone(),
            tool_id: self.tool_id.clone(),
            data_type_id: self.data_type_id.clone(),
        }
    }

    pub fn binary_label(&self) -> Option<Label> {
        self.option.binary_label()
    }
}

/// Identity of a permission request independent of the user: the finest
/// context granularity (query, tool, data type).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequestKey {
    pub query_id: QueryId,
    pub tool_id: ToolId,
    pub data_type_id: DataTypeId,
}

impl fmt::Display for RequestKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.query_id, self.tool_id, self.data_type_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DecisionKey {
    pub participant_id: ParticipantId,
    pub request: RequestKey,
}

/// Analysis buckets for age.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeGroup {
    Below25,
    From25To39,
    From40To55,
    Over55,
}

impl AgeGroup {
    pub const ALL: [AgeGroup; 4] =
        [AgeGroup::Below25, AgeGroup::From25To39, AgeGroup::From40To55, AgeGroup::Over55];

    pub fn label(self) -> &'static str {
        match self {
            AgeGroup::Below25 => "below 25",
            AgeGroup::From25To39 => "25-39",
            AgeGroup::From40To55 => "40-55",
            AgeGroup::Over55 => "over 55",
        }
    }
}

/// Age bracket as reported by the participant, e.g. `45-54`, `below 25`,
/// `65+`. Keeps the raw bracket for prompt rendering and maps it onto an
/// [`AgeGroup`] for analytics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AgeRange {
    pub low: u8,
    pub high: Option<u8>,
}

impl AgeRange {
    pub fn group(self) -> AgeGroup {
        match self.low {
            0..=24 => AgeGroup::Below25,
            25..=39 => AgeGroup::From25To39,
            40..=55 => AgeGroup::From40To55,
            _ => AgeGroup::Over55,
        }
    }
}

impl From<AgeGroup> for AgeRange {
    fn from(group: AgeGroup) -> Self {
        match group {
            AgeGroup::Below25 => AgeRange { low: 0, high: Some(24) },
            AgeGroup::From25To39 => AgeRange { low: 25, high: Some(39) },
            AgeGroup::From40To55 => AgeRange { low: 40, high: Some(55) },
            AgeGroup::Over55 => AgeRange { low: 56, high: None },
        }
    }
}

impl fmt::Display for AgeRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.low, self.high) {
            (0, Some(h)) => write!(f, "below {}", u16::from(h) + 1),
            (l, Some(h)) => write!(f, "{l}\u{2013}{h}"),
            (l, None) => write!(f, "over {}", l.saturating_sub(1)),
        }
    }
}

impl FromStr for AgeRange {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseLabelError { kind: "age range", label: s.to_string() };
        let lower = s.trim().to_ascii_lowercase();
        let numbers: Vec<u8> = lower
            .split(|c: char| !c.is_ascii_digit())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<u8>().map_err(|_| err()))
            .collect::<Result<_, _>>()?;
        let range = if lower.starts_with("below") || lower.starts_with("under") {
            let n = *numbers.first().ok_or_else(err)?;
            AgeRange { low: 0, high: Some(n.checked_sub(1).ok_or_else(err)?) }
        } else if lower.starts_with("over") || lower.starts_with("above") {
            let n = *numbers.first().ok_or_else(err)?;
            AgeRange { low: n.saturating_add(1), high: None }
        } else if lower.ends_with('+') && numbers.len() == 1 {
            AgeRange { low: numbers[0], high: None }
        } else if numbers.len() == 2 && numbers[0] <= numbers[1] {
            AgeRange { low: numbers[0], high: Some(numbers[1]) }
        } else {
            return Err(err());
        };
        Ok(range)
    }
}

impl TryFrom<String> for AgeRange {
    type Error = ParseLabelError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<AgeRange> for String {
    fn from(r: AgeRange) -> String {
        match (r.low, r.high) {
            (0, Some(h)) => format!("below {}", u16::from(h) + 1),
            (l, Some(h)) => format!("{l}-{h}"),
            (l, None) => format!("{l}+"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Education {
    /// High school or less.
    HS,
    BS,
    MS,
    /// PhD or other doctorate.
    PhD,
}

impl Education {
    pub const ALL: [Education; 4] = [Education::HS, Education::BS, Education::MS, Education::PhD];

    pub fn phrase(self) -> &'static str {
        match self {
            Education::HS => "a high school education or less",
            Education::BS => "a bachelor's degree",
            Education::MS => "a master's degree",
            Education::PhD => "a doctorate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    F,
    M,
    /// Other or not disclosed.
    Undisclosed,
}

impl Sex {
    pub const ALL: [Sex; 3] = [Sex::F, Sex::M, Sex::Undisclosed];
}

/// Demographics and self-reported attitudes. The four scales run 1..=4,
/// higher meaning more.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub participant_id: ParticipantId,
    pub age_group: AgeRange,
    pub education: Education,
    pub sex: Sex,
    pub ai_familiarity: u8,
    pub ai_usage_frequency: u8,
    pub ai_trust: u8,
    pub privacy_consciousness: u8,
    #[serde(default)]
    pub concerning_domains: BTreeSet<Domain>,
}

impl UserProfile {
    pub const SCALE_MIN: u8 = 1;
    pub const SCALE_MAX: u8 = 4;

    pub fn scales(&self) -> [(&'static str, u8); 4] {
        [
            ("ai_familiarity", self.ai_familiarity),
            ("ai_usage_frequency", self.ai_usage_frequency),
            ("ai_trust", self.ai_trust),
            ("privacy_consciousness", self.privacy_consciousness),
        ]
    }

    /// Names of scales outside 1..=4.
    pub fn out_of_range_scales(&self) -> Vec<(&'static str, u8)> {
        self.scales()
            .into_iter()
            .filter(|(_, v)| !(Self::SCALE_MIN..=Self::SCALE_MAX).contains(v))
            .collect()
    }
}

/// A data-access request awaiting a decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionRequest {
    pub participant_id: ParticipantId,
    pub query_id: QueryId,
    pub query_text: String,
    pub tool_id: ToolId,
    pub data_type_id: DataTypeId,
    pub domain: Domain,
}

impl PermissionRequest {
    pub fn request_key(&self) -> RequestKey {
        RequestKey {
            query_id: self.query_id.clone(),
            tool_id: self.tool_id.clone(),
            data_type_id: self.data_type_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PredictionSource {
    Cf,
    Icl,
    Hybrid,
}

/// A predictor's answer for one request.
///
/// Confidence is in `[0, 1]` for ICL and hybrid predictions; for CF it is the
/// non-negative distance between the score and the decision threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub confidence: f64,
    pub source: PredictionSource,
    pub covered: bool,
}

impl Prediction {
    pub fn new(label: Label, confidence: f64, source: PredictionSource, threshold: f64) -> Self {
        Self { label, confidence, source, covered: confidence >= threshold }
    }

    pub fn confidence_in_range(&self) -> bool {
        match self.source {
            PredictionSource::Cf => self.confidence >= 0.0,
            PredictionSource::Icl | PredictionSource::Hybrid => (0.0..=1.0).contains(&self.confidence),
        }
    }
}
