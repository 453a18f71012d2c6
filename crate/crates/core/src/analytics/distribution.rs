//! Shares of the four decision options per group.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::model::{DecisionOption, ParticipantId, PermissionDecision, UserProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupBy {
    Domain,
    Tool,
    DataType,
}

/// How decisions are combined into a group's shares.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Averaging {
    /// Each participant's shares within the group, averaged over participants.
    #[default]
    PerParticipant,
    /// All decisions in the group counted together.
    Pooled,
}

/// Fractions of AlwaysShare, YesOnce, NoOnce, NeverShare in that order.
pub type OptionShares = [f64; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub group: String,
    pub label: String,
    pub decisions: usize,
    pub participants: usize,
    pub shares: OptionShares,
}

impl RateRow {
    pub fn share(&self, option: DecisionOption) -> f64 {
        self.shares[option.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermissionRateReport {
    pub group_by: GroupBy,
    pub concerning_only: bool,
    pub averaging: Averaging,
    pub rows: Vec<RateRow>,
}

impl PermissionRateReport {
    pub fn row(&self, group_or_label: &str) -> Option<&RateRow> {
        self.rows.iter().find(|r| r.group == group_or_label || r.label == group_or_label)
    }
}

fn shares_of<'a>(rows: impl IntoIterator<Item = &'a PermissionDecision>) -> (OptionShares, usize) {
    let mut counts = [0usize; 4];
    for d in rows {
        counts[d.option.index()] += 1;
    }
    let n: usize = counts.iter().sum();
    let mut s = [0.0; 4];
    if n > 0 {
        for (x, c) in s.iter_mut().zip(counts) {
            *x = c as f64 / n as f64;
        }
    }
    (s, n)
}

/// Shares for one group of decisions under an averaging rule.
pub(crate) fn group_shares(rows: &[&PermissionDecision], averaging: Averaging) -> OptionShares {
    match averaging {
        Averaging::Pooled => shares_of(rows.iter().copied()).0,
        Averaging::PerParticipant => {
            let mut by_user: BTreeMap<&ParticipantId, Vec<&PermissionDecision>> = BTreeMap::new();
            for d in rows {
                by_user.entry(&d.participant_id).or_default().push(d);
            }
            let mut acc = [0.0; 4];
            for user_rows in by_user.values() {
                let (s, _) = shares_of(user_rows.iter().copied());
                for (a, v) in acc.iter_mut().zip(s) {
                    *a += v;
                }
            }
            if !by_user.is_empty() {
                for a in &mut acc {
                    *a /= by_user.len() as f64;
                }
            }
            acc
        }
    }
}

fn build_rows(groups: BTreeMap<String, (String, Vec<&PermissionDecision>)>, averaging: Averaging) -> Vec<RateRow> {
    groups
        .into_iter()
        .filter(|(_, (_, rows))| !rows.is_empty())
        .map(|(group, (label, rows))| {
            let participants = rows.iter().map(|d| &d.participant_id).collect::<std::collections::BTreeSet<_>>().len();
            RateRow { group, label, decisions: rows.len(), participants, shares: group_shares(&rows, averaging) }
        })
        .collect()
}

/// Option shares per domain, tool or data type. With `concerning_only`, a
/// decision counts only if its participant marked the query's domain as
/// concerning. Groups without decisions are absent.
pub fn option_distribution(d: &Dataset, group_by: GroupBy, concerning_only: bool, averaging: Averaging) -> PermissionRateReport {
    let idx = d.catalog.index();
    let profiles = d.profiles_by_id();
    let mut groups: BTreeMap<String, (String, Vec<&PermissionDecision>)> = BTreeMap::new();
    for x in &d.decisions {
        let Some(domain) = idx.domain_of(&x.query_id) else { continue };
        if concerning_only {
            let marked = profiles.get(&x.participant_id).is_some_and(|p| p.concerning_domains.contains(&domain));
            if !marked {
                continue;
            }
        }
        let (key, label) = match group_by {
            GroupBy::Domain => (domain.label().to_string(), domain.label().to_string()),
            GroupBy::Tool => (x.tool_id.to_string(), d.catalog.tool_name(&x.tool_id).to_string()),
            GroupBy::DataType => (x.data_type_id.to_string(), d.catalog.data_type_name(&x.data_type_id).to_string()),
        };
        groups.entry(key).or_insert_with(|| (label, Vec::new())).1.push(x);
    }
    PermissionRateReport { group_by, concerning_only, averaging, rows: build_rows(groups, averaging) }
}

/// Option shares per demographic or self-reported bucket; one table per
/// attribute, keyed by attribute name.
pub fn demographic_breakdown(d: &Dataset, averaging: Averaging) -> BTreeMap<String, Vec<RateRow>> {
    type Key = fn(&UserProfile) -> String;
    let attributes: [(&str, Key); 7] = [
        ("age_group", |p| p.age_group.group().label().to_string()),
        ("education", |p| format!("{:?}", p.education)),
        ("sex", |p| format!("{:?}", p.sex)),
        ("ai_familiarity", |p| p.ai_familiarity.to_string()),
        ("ai_usage_frequency", |p| p.ai_usage_frequency.to_string()),
        ("ai_trust", |p| p.ai_trust.to_string()),
        ("privacy_consciousness", |p| p.privacy_consciousness.to_string()),
    ];
    let profiles = d.profiles_by_id();
    attributes
        .iter()
        .map(|(name, key)| {
            let mut groups: BTreeMap<String, (String, Vec<&PermissionDecision>)> = BTreeMap::new();
            for x in &d.decisions {
                if let Some(p) = profiles.get(&x.participant_id) {
                    let k = key(p);
                    groups.entry(k.clone()).or_insert_with(|| (k, Vec::new())).1.push(x);
                }
            }
            (name.to_string(), build_rows(groups, averaging))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentCell {
    pub ground_truth_necessary: bool,
    pub perceived_necessary: bool,
    pub decisions: usize,
    /// `None` for an empty cell.
    pub shares: Option<OptionShares>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTable {
    /// Cells in the order (GT, PA) = (T,T), (T,F), (F,T), (F,F).
    pub cells: Vec<AlignmentCell>,
    /// Decisions without a perceived-necessity answer.
    pub excluded: usize,
}

impl AlignmentTable {
    pub fn cell(&self, gt: bool, pa: bool) -> &AlignmentCell {
        self.cells.iter().find(|c| c.ground_truth_necessary == gt && c.perceived_necessary == pa).expect("all four cells")
    }
}

/// Pooled option shares per (ground-truth, perceived) necessity cell.
pub fn alignment_table(d: &Dataset) -> AlignmentTable {
    let mut cells = Vec::with_capacity(4);
    for gt in [true, false] {
        for pa in [true, false] {
            let rows: Vec<&PermissionDecision> =
                d.decisions.iter().filter(|x| x.necessary == gt && x.perceived_necessary == Some(pa)).collect();
            let (shares, n) = shares_of(rows.iter().copied());
            cells.push(AlignmentCell {
                ground_truth_necessary: gt,
                perceived_necessary: pa,
                decisions: n,
                shares: (n > 0).then_some(shares),
            });
        }
    }
    let excluded = d.decisions.iter().filter(|x| x.perceived_necessary.is_none()).count();
    AlignmentTable { cells, excluded }
}
