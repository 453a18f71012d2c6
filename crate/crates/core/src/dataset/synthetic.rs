//! Planted-structure populations for oracle tests and demos.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Catalog, Dataset, DatasetError};
use crate::model::{
    normalize_id, AgeGroup, DataType, DataTypeId, DecisionKey, DecisionOption, Domain, Education,
    Label, ParticipantId, PermissionDecision, Query, QueryId, RequestedData, Sex, Tool, ToolId,
    UserProfile,
};
use crate::rng;

/// How often a user's planted preference is re-drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Consistency {
    /// Each (user, request) cell is drawn independently.
    PerDecision,
    /// One draw per (user, data type); every request for that type agrees.
    PerDataType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub users: usize,
    /// Probability of an allow preference in each domain.
    pub allow_probability: BTreeMap<Domain, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub groups: Vec<GroupSpec>,
    pub domains: Vec<Domain>,
    pub queries_per_domain: usize,
    pub tools_per_domain: usize,
    /// Size of each domain's data-type pool.
    pub data_types_per_domain: usize,
    pub data_per_query: usize,
    /// Trailing entries of each query flagged as unnecessary.
    pub unnecessary_per_query: usize,
    pub consistency: Consistency,
    /// Probability that a preference is voiced as a one-time answer.
    #[serde(default)]
    pub one_time_rate: f64,
    /// Probability that a user answers a given query at all.
    #[serde(default = "one")]
    pub answer_rate: f64,
    /// Probability that the user's perceived necessity flips the truth.
    #[serde(default)]
    pub perception_noise: f64,
}

fn one() -> f64 {
    1.0
}

impl SyntheticSpec {
    /// Two opposite groups over the given domains: group 0 allows with
    /// probability `p`, group 1 with `1 - p`.
    pub fn two_groups(users_per_group: usize, domains: &[Domain], p: f64) -> Self {
        let probs = |q: f64| domains.iter().map(|d| (*d, q)).collect::<BTreeMap<_, _>>();
        Self {
            groups: vec![
                GroupSpec { users: users_per_group, allow_probability: probs(p) },
                GroupSpec { users: users_per_group, allow_probability: probs(1.0 - p) },
            ],
            domains: domains.to_vec(),
            queries_per_domain: 8,
            tools_per_domain: 2,
            data_types_per_domain: 6,
            data_per_query: 3,
            unnecessary_per_query: 0,
            consistency: Consistency::PerDataType,
            one_time_rate: 0.0,
            answer_rate: 1.0,
            perception_noise: 0.0,
        }
    }

    fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidSpec(m));
        if self.groups.is_empty() {
            return bad("at least one group is required".into());
        }
        let distinct: BTreeSet<_> = self.domains.iter().collect();
        if self.domains.is_empty() || distinct.len() != self.domains.len() {
            return bad("domains must be non-empty and distinct".into());
        }
        if self.queries_per_domain == 0 || self.tools_per_domain == 0 {
            return bad("queries and tools per domain must be positive".into());
        }
        if self.data_per_query == 0 || self.data_per_query > self.data_types_per_domain {
            return bad(format!(
                "data_per_query {} must be in 1..={}",
                self.data_per_query, self.data_types_per_domain
            ));
        }
        if self.unnecessary_per_query >= self.data_per_query {
            return bad("each query needs at least one necessary data type".into());
        }
        for (name, rate) in [
            ("one_time_rate", self.one_time_rate),
            ("answer_rate", self.answer_rate),
            ("perception_noise", self.perception_noise),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("{name} must be in [0, 1]"));
            }
        }
        for (g, group) in self.groups.iter().enumerate() {
            if group.users == 0 {
                return bad(format!("group {g} has no users"));
            }
            for d in &self.domains {
                match group.allow_probability.get(d) {
                    Some(p) if (0.0..=1.0).contains(p) => {}
                    Some(p) => return bad(format!("group {g} probability {p} for {d} outside [0, 1]")),
                    None => return bad(format!("group {g} lacks a probability for {d}")),
                }
            }
        }
        Ok(())
    }
}

/// Generated dataset plus the hidden truth it was drawn from.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    /// Preference held by each user for every catalog request they could be
    /// asked about, answered or not.
    pub planted: BTreeMap<DecisionKey, Label>,
    pub group_of: BTreeMap<ParticipantId, usize>,
}

impl SyntheticDataset {
    pub fn planted_label(&self, key: &DecisionKey) -> Option<Label> {
        self.planted.get(key).copied()
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticDataset, DatasetError> {
    spec.validate()?;
    let mut r = rng::stream(seed, "synthetic/catalog");

    let mut tools = Vec::new();
    let mut data_types = Vec::new();
    let mut queries = Vec::new();
    let mut domain_of_type = BTreeMap::new();
    for &domain in &spec.domains {
        let slug = normalize_id(domain.label());
        let domain_tools: Vec<ToolId> = (0..spec.tools_per_domain)
            .map(|t| {
                let id = ToolId::new(format!("{slug}-tool-{t}"));
                tools.push(Tool {
                    id: id.clone(),
                    display_name: format!("{} Tool {t}", domain.label()),
                    domains: [domain].into_iter().collect(),
                });
                id
            })
            .collect();
        let pool: Vec<DataTypeId> = (0..spec.data_types_per_domain)
            .map(|t| {
                let id = DataTypeId::new(format!("{slug}-type-{t}"));
                data_types.push(DataType {
                    id: id.clone(),
                    display_name: format!("{} Data {t}", domain.label()),
                    generic_group: None,
                });
                domain_of_type.insert(id.clone(), domain);
                id
            })
            .collect();
        for q in 0..spec.queries_per_domain {
            let chosen: Vec<&DataTypeId> = pool.choose_multiple(&mut r, spec.data_per_query).collect();
            let necessary_count = spec.data_per_query - spec.unnecessary_per_query;
            queries.push(Query {
                id: QueryId::new(format!("{slug}-q{q}")),
                text: format!("Can you help me with {} task number {q}?", domain.label().to_lowercase()),
                domain,
                tools: vec![domain_tools[q % domain_tools.len()].clone()],
                requested_data: chosen
                    .into_iter()
                    .enumerate()
                    .map(|(i, t)| RequestedData { data_type_id: t.clone(), necessary: i < necessary_count })
                    .collect(),
            });
        }
    }

    let mut profiles = Vec::new();
    let mut decisions = Vec::new();
    let mut planted = BTreeMap::new();
    let mut group_of = BTreeMap::new();
    for (g, group) in spec.groups.iter().enumerate() {
        for i in 0..group.users {
            let user = ParticipantId::new(format!("g{g}-u{i}"));
            let mut ur = rng::stream(seed, &format!("synthetic/{user}"));
            let concerning = spec
                .domains
                .iter()
                .filter(|d| group.allow_probability[d] < 0.5)
                .copied()
                .collect();
            profiles.push(UserProfile {
                participant_id: user.clone(),
                age_group: (*AgeGroup::ALL.choose(&mut ur).expect("non-empty")).into(),
                education: *Education::ALL.choose(&mut ur).expect("non-empty"),
                sex: *Sex::ALL.choose(&mut ur).expect("non-empty"),
                ai_familiarity: ur.random_range(1..=4),
                ai_usage_frequency: ur.random_range(1..=4),
                ai_trust: ur.random_range(1..=4),
                privacy_consciousness: ur.random_range(1..=4),
                concerning_domains: concerning,
            });
            group_of.insert(user.clone(), g);

            let mut per_type: BTreeMap<DataTypeId, Label> = BTreeMap::new();
            for t in &data_types {
                let p = group.allow_probability[&domain_of_type[&t.id]];
                per_type.insert(t.id.clone(), Label::from_allow(ur.random_bool(p)));
            }
            for q in &queries {
                let answers = ur.random_bool(spec.answer_rate);
                let p = group.allow_probability[&q.domain];
                for tool in &q.tools {
                    for rd in &q.requested_data {
                        let label = match spec.consistency {
                            Consistency::PerDataType => per_type[&rd.data_type_id],
                            Consistency::PerDecision => Label::from_allow(ur.random_bool(p)),
                        };
                        let key = DecisionKey {
                            participant_id: user.clone(),
                            request: crate::model::RequestKey {
                                query_id: q.id.clone(),
                                tool_id: tool.clone(),
                                data_type_id: rd.data_type_id.clone(),
                            },
                        };
                        planted.insert(key, label);
                        let one_time = ur.random_bool(spec.one_time_rate);
                        let flip = ur.random_bool(spec.perception_noise);
                        if !answers {
                            continue;
                        }
                        let option = match (label, one_time) {
                            (Label::Allow, false) => DecisionOption::AlwaysShare,
                            (Label::Allow, true) => DecisionOption::YesOnce,
                            (Label::Deny, false) => DecisionOption::NeverShare,
                            (Label::Deny, true) => DecisionOption::NoOnce,
                        };
                        decisions.push(PermissionDecision {
                            participant_id: user.clone(),
                            query_id: q.id.clone(),
                            tool_id: tool.clone(),
                            data_type_id: rd.data_type_id.clone(),
                            option,
                            necessary: rd.necessary,
                            perceived_necessary: Some(rd.necessary != flip),
                        });
                    }
                }
            }
        }
    }

    let dataset = Dataset {
        catalog: Catalog { domains: spec.domains.clone(), tools, data_types, generic_groups: vec![], queries },
        profiles,
        decisions,
    };
    dataset.validate()?;
    Ok(SyntheticDataset { dataset, planted, group_of })
}
