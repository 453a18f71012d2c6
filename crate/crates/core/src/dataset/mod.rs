//! Study dataset: catalog, profiles and decisions, plus loading, validation,
//! modeling filters, fold plans and synthetic fixtures.

mod folds;
mod synthetic;

pub use folds::{make_folds, sample_history, FoldPlan, HistoryBudget};
pub use synthetic::{generate_synthetic, Consistency, GroupSpec, SyntheticDataset, SyntheticSpec};

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{
    DataType, DataTypeId, DecisionKey, Domain, GenericGroup, GenericGroupId, Label, ParticipantId,
    PermissionDecision, PermissionRequest, Query, QueryId, Tool, ToolId, UserProfile,
};

/// Participants need standing answers on at least this many distinct queries
/// to be kept for modeling.
pub const MIN_MODELING_QUERIES: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed dataset: {0}")]
    Schema(String),
    #[error("integrity violations ({}): {}", .problems.len(), summarize(.problems))]
    Integrity { problems: Vec<String> },
    #[error("scale values outside 1-4 ({}): {}", .problems.len(), summarize(.problems))]
    Range { problems: Vec<String> },
    #[error("no participants survive filtering")]
    EmptyDataset,
    #[error("fold count must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("history ratio must lie in [0, 1], got {0}")]
    InvalidBudget(f64),
    #[error("fold {fold} out of range for {k} folds")]
    InvalidFold { fold: usize, k: usize },
    #[error("unknown user `{0}`")]
    UnknownUser(ParticipantId),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

fn summarize(problems: &[String]) -> String {
    const SHOWN: usize = 5;
    let mut s = problems.iter().take(SHOWN).cloned().collect::<Vec<_>>().join("; ");
    if problems.len() > SHOWN {
        s.push_str(&format!("; ... {} more", problems.len() - SHOWN));
    }
    s
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    #[serde(default = "all_domains")]
    pub domains: Vec<Domain>,
    pub tools: Vec<Tool>,
    pub data_types: Vec<DataType>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generic_groups: Vec<GenericGroup>,
    pub queries: Vec<Query>,
}

fn all_domains() -> Vec<Domain> {
    Domain::ALL.to_vec()
}

impl Catalog {
    pub fn tool(&self, id: &ToolId) -> Option<&Tool> {
        self.tools.iter().find(|t| &t.id == id)
    }

    pub fn data_type(&self, id: &DataTypeId) -> Option<&DataType> {
        self.data_types.iter().find(|t| &t.id == id)
    }

    pub fn query(&self, id: &QueryId) -> Option<&Query> {
        self.queries.iter().find(|q| &q.id == id)
    }

    pub fn tool_name<'a>(&'a self, id: &'a ToolId) -> &'a str {
        self.tool(id).map_or(id.as_str(), |t| t.display_name.as_str())
    }

    pub fn data_type_name<'a>(&'a self, id: &'a DataTypeId) -> &'a str {
        self.data_type(id).map_or(id.as_str(), |t| t.display_name.as_str())
    }

    /// Indexed view for hot loops.
    pub fn index(&self) -> CatalogIndex<'_> {
        CatalogIndex {
            tools: self.tools.iter().map(|t| (&t.id, t)).collect(),
            data_types: self.data_types.iter().map(|t| (&t.id, t)).collect(),
            queries: self.queries.iter().map(|q| (&q.id, q)).collect(),
        }
    }
}

pub struct CatalogIndex<'a> {
    pub tools: HashMap<&'a ToolId, &'a Tool>,
    pub data_types: HashMap<&'a DataTypeId, &'a DataType>,
    pub queries: HashMap<&'a QueryId, &'a Query>,
}

impl CatalogIndex<'_> {
    pub fn domain_of(&self, q: &QueryId) -> Option<Domain> {
        self.queries.get(q).map(|q| q.domain)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub catalog: Catalog,
    pub profiles: Vec<UserProfile>,
    pub decisions: Vec<PermissionDecision>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub participants: usize,
    pub decisions: usize,
    pub allow: usize,
    pub deny: usize,
    pub one_time: usize,
    pub queries: usize,
    pub tools: usize,
    pub data_types: usize,
    pub answered_queries: usize,
}

impl Dataset {
    /// Reads and validates a canonical JSON dataset.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let dataset: Dataset =
            serde_json::from_str(text).map_err(|e| DatasetError::Schema(e.to_string()))?;
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serializes")
    }

    /// Checks referential integrity, key uniqueness and scale ranges.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut problems = Vec::new();
        let c = &self.catalog;

        let mut seen = HashSet::new();
        for d in &c.domains {
            if !seen.insert(*d) {
                problems.push(format!("duplicate domain `{d}`"));
            }
        }
        let groups: HashSet<&GenericGroupId> = c.generic_groups.iter().map(|g| &g.id).collect();
        let mut tool_ids = HashSet::new();
        for t in &c.tools {
            if !tool_ids.insert(&t.id) {
                problems.push(format!("duplicate tool id `{}`", t.id));
            }
        }
        let mut type_ids = HashSet::new();
        for t in &c.data_types {
            if !type_ids.insert(&t.id) {
                problems.push(format!("duplicate data type id `{}`", t.id));
            }
            if let Some(g) = &t.generic_group {
                if !groups.contains(g) {
                    problems.push(format!("data type `{}` references unknown generic group `{g}`", t.id));
                }
            }
        }
        let mut query_ids = HashSet::new();
        for q in &c.queries {
            if !query_ids.insert(&q.id) {
                problems.push(format!("duplicate query id `{}`", q.id));
            }
            if q.requested_data.is_empty() {
                problems.push(format!("query `{}` requests no data", q.id));
            }
            for t in &q.tools {
                if !tool_ids.contains(t) {
                    problems.push(format!("query `{}` references unknown tool `{t}`", q.id));
                }
            }
            for r in &q.requested_data {
                if !type_ids.contains(&r.data_type_id) {
                    problems.push(format!(
                        "query `{}` references unknown data type `{}`",
                        q.id, r.data_type_id
                    ));
                }
            }
        }

        let mut participants = HashSet::new();
        let mut range_problems = Vec::new();
        for p in &self.profiles {
            if !participants.insert(&p.participant_id) {
                problems.push(format!("duplicate profile `{}`", p.participant_id));
            }
            for (name, value) in p.out_of_range_scales() {
                range_problems.push(format!("participant `{}` {name}={value}", p.participant_id));
            }
        }

        let queries = c.index().queries;
        let mut keys: HashSet<DecisionKey> = HashSet::with_capacity(self.decisions.len());
        for (i, d) in self.decisions.iter().enumerate() {
            if !participants.contains(&d.participant_id) {
                problems.push(format!("decision #{i} references unknown participant `{}`", d.participant_id));
            }
            if !tool_ids.contains(&d.tool_id) {
                problems.push(format!("decision #{i} references unknown tool `{}`", d.tool_id));
            }
            if !type_ids.contains(&d.data_type_id) {
                problems.push(format!("decision #{i} references unknown data type `{}`", d.data_type_id));
            }
            match queries.get(&d.query_id) {
                None => problems.push(format!("decision #{i} references unknown query `{}`", d.query_id)),
                Some(q) => {
                    if tool_ids.contains(&d.tool_id) && !q.tools.contains(&d.tool_id) {
                        problems.push(format!(
                            "decision #{i}: tool `{}` is not used by query `{}`",
                            d.tool_id, q.id
                        ));
                    }
                    match q.requested_data.iter().find(|r| r.data_type_id == d.data_type_id) {
                        None if type_ids.contains(&d.data_type_id) => problems.push(format!(
                            "decision #{i}: data type `{}` is not requested by query `{}`",
                            d.data_type_id, q.id
                        )),
                        Some(r) if r.necessary != d.necessary => problems.push(format!(
                            "decision #{i}: necessity flag disagrees with query `{}`",
                            q.id
                        )),
                        _ => {}
                    }
                }
            }
            if !keys.insert(d.key()) {
                problems.push(format!(
                    "duplicate decision key ({}, {}, {}, {})",
                    d.participant_id, d.query_id, d.tool_id, d.data_type_id
                ));
            }
        }

        if !problems.is_empty() {
            return Err(DatasetError::Integrity { problems });
        }
        if !range_problems.is_empty() {
            return Err(DatasetError::Range { problems: range_problems });
        }
        Ok(())
    }

    pub fn stats(&self) -> DatasetStats {
        let mut allow = 0;
        let mut deny = 0;
        for d in &self.decisions {
            match d.binary_label() {
                Some(Label::Allow) => allow += 1,
                Some(Label::Deny) => deny += 1,
                None => {}
            }
        }
        let answered: BTreeSet<_> =
            self.decisions.iter().map(|d| (&d.participant_id, &d.query_id)).collect();
        DatasetStats {
            participants: self.profiles.len(),
            decisions: self.decisions.len(),
            allow,
            deny,
            one_time: self.decisions.len() - allow - deny,
            queries: self.catalog.queries.len(),
            tools: self.catalog.tools.len(),
            data_types: self.catalog.data_types.len(),
            answered_queries: answered.len(),
        }
    }

    pub fn profile(&self, id: &ParticipantId) -> Option<&UserProfile> {
        self.profiles.iter().find(|p| &p.participant_id == id)
    }

    pub fn profiles_by_id(&self) -> HashMap<&ParticipantId, &UserProfile> {
        self.profiles.iter().map(|p| (&p.participant_id, p)).collect()
    }

    /// Decisions grouped per participant, in dataset order.
    pub fn decisions_by_user(&self) -> BTreeMap<&ParticipantId, Vec<&PermissionDecision>> {
        let mut out: BTreeMap<_, Vec<_>> = BTreeMap::new();
        for d in &self.decisions {
            out.entry(&d.participant_id).or_default().push(d);
        }
        out
    }

    /// Denormalized request view of a decision.
    pub fn request_for(&self, d: &PermissionDecision) -> Option<PermissionRequest> {
        let q = self.catalog.query(&d.query_id)?;
        Some(PermissionRequest {
            participant_id: d.participant_id.clone(),
            query_id: d.query_id.clone(),
            query_text: q.text.clone(),
            tool_id: d.tool_id.clone(),
            data_type_id: d.data_type_id.clone(),
            domain: q.domain,
        })
    }
}

/// Keeps standing (always/never) decisions and drops participants with such
/// answers on fewer than [`MIN_MODELING_QUERIES`] distinct queries.
pub fn filter_for_modeling(d: &Dataset) -> Result<Dataset, DatasetError> {
    let binary: Vec<&PermissionDecision> =
        d.decisions.iter().filter(|x| x.binary_label().is_some()).collect();
    let mut queries_per_user: HashMap<&ParticipantId, HashSet<&QueryId>> = HashMap::new();
    for x in &binary {
        queries_per_user.entry(&x.participant_id).or_default().insert(&x.query_id);
    }
    let kept: HashSet<&ParticipantId> = queries_per_user
        .into_iter()
        .filter(|(_, qs)| qs.len() >= MIN_MODELING_QUERIES)
        .map(|(p, _)| p)
        .collect();
    if kept.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let out = Dataset {
        catalog: d.catalog.clone(),
        profiles: d.profiles.iter().filter(|p| kept.contains(&p.participant_id)).cloned().collect(),
        decisions: binary
            .into_iter()
            .filter(|x| kept.contains(&x.participant_id))
            .cloned()
            .collect(),
    };
    let s = out.stats();
    log::info!(
        "modeling filter kept {} participants, {} decisions ({} allow / {} deny)",
        s.participants,
        s.decisions,
        s.allow,
        s.deny
    );
    Ok(out)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::model::*;

    pub fn profile(id: &str) -> UserProfile {
        UserProfile {
            participant_id: ParticipantId::new(id),
            age_group: "25-39".parse().unwrap(),
            education: Education::BS,
            sex: Sex::F,
            ai_familiarity: 3,
            ai_usage_frequency: 2,
            ai_trust: 2,
            privacy_consciousness: 3,
            concerning_domains: [Domain::Finance].into_iter().collect(),
        }
    }

    /// Catalog with `n_queries` finance queries, each requesting `ssn`
    /// (necessary) and `hobbies` (unnecessary) through one tool.
    pub fn catalog(n_queries: usize) -> Catalog {
        Catalog {
            domains: Domain::ALL.to_vec(),
            tools: vec![Tool {
                id: ToolId::new("tax-management"),
                display_name: "Tax Management".into(),
                domains: [Domain::Finance].into_iter().collect(),
            }],
            data_types: vec![
                DataType { id: DataTypeId::new("ssn"), display_name: "SSN".into(), generic_group: None },
                DataType { id: DataTypeId::new("hobbies"), display_name: "Hobbies".into(), generic_group: None },
            ],
            generic_groups: vec![],
            queries: (0..n_queries)
                .map(|i| Query {
                    id: QueryId::new(format!("q{i}")),
                    text: format!("Question number {i}?"),
                    domain: Domain::Finance,
                    tools: vec![ToolId::new("tax-management")],
                    requested_data: vec![
                        RequestedData { data_type_id: DataTypeId::new("ssn"), necessary: true },
                        RequestedData { data_type_id: DataTypeId::new("hobbies"), necessary: false },
                    ],
                })
                .collect(),
        }
    }

    pub fn decision(user: &str, query: usize, dtype: &str, option: DecisionOption) -> PermissionDecision {
        PermissionDecision {
            participant_id: ParticipantId::new(user),
            query_id: QueryId::new(format!("q{query}")),
            tool_id: ToolId::new("tax-management"),
            data_type_id: DataTypeId::new(dtype),
            option,
            necessary: dtype == "ssn",
            perceived_necessary: None,
        }
    }
}
