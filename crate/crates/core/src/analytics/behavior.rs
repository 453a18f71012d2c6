//! Per-participant sharing behavior: appropriateness and standing answers.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::model::{DecisionOption, ParticipantId, PermissionDecision, QueryId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppropriatenessRow {
    pub participant_id: ParticipantId,
    /// Answered (query, data type) rows; the denominator of all three rates.
    pub answered: usize,
    pub over_permission: f64,
    pub under_permission: f64,
    pub appropriate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppropriatenessReport {
    pub participants: Vec<AppropriatenessRow>,
    /// Fraction of participants with no over-permissioned row.
    pub never_over: Option<f64>,
    /// Fraction of participants with no under-permissioned row.
    pub never_under: Option<f64>,
}

/// Over-permission: sharing data the query did not need. Under-permission:
/// withholding data it did need. Appropriate: everything else.
pub fn appropriateness(d: &Dataset) -> AppropriatenessReport {
    let participants: Vec<AppropriatenessRow> = d
        .decisions_by_user()
        .into_iter()
        .map(|(user, rows)| {
            let n = rows.len() as f64;
            let over = rows.iter().filter(|x| x.option.shares() && !x.necessary).count() as f64 / n;
            let under = rows.iter().filter(|x| !x.option.shares() && x.necessary).count() as f64 / n;
            AppropriatenessRow {
                participant_id: user.clone(),
                answered: rows.len(),
                over_permission: over,
                under_permission: under,
                appropriate: 1.0 - over - under,
            }
        })
        .collect();
    let frac = |pred: &dyn Fn(&AppropriatenessRow) -> bool| {
        (!participants.is_empty())
            .then(|| participants.iter().filter(|r| pred(r)).count() as f64 / participants.len() as f64)
    };
    AppropriatenessReport {
        never_over: frac(&|r| r.over_permission == 0.0),
        never_under: frac(&|r| r.under_permission == 0.0),
        participants,
    }
}

/// Which queries a split covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuerySplit {
    All,
    /// Queries presenting only data the query needs.
    NecessaryOnly,
    /// Queries where unnecessary data was presented alongside the necessary.
    WithUnnecessary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtremeCounts {
    pub participant_id: ParticipantId,
    pub always_decisions: usize,
    pub never_decisions: usize,
    pub always_queries: usize,
    pub never_queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeSplit {
    pub split: QuerySplit,
    /// Participants who answered at least one query of the split.
    pub per_participant: Vec<ExtremeCounts>,
    pub with_any_always: Option<f64>,
    pub with_any_never: Option<f64>,
    pub without_always: Option<f64>,
    pub without_never: Option<f64>,
}

/// Per participant, how many AlwaysShare and NeverShare answers they gave,
/// counted by decision and by query, for all queries and for queries
/// without and with injected unnecessary data.
pub fn sharing_extremes(d: &Dataset) -> Vec<ExtremeSplit> {
    let injected: BTreeSet<&QueryId> =
        d.catalog.queries.iter().filter(|q| q.has_injected_data()).map(|q| &q.id).collect();
    let by_user = d.decisions_by_user();
    [QuerySplit::All, QuerySplit::NecessaryOnly, QuerySplit::WithUnnecessary]
        .into_iter()
        .map(|split| {
            let keep = |x: &PermissionDecision| match split {
                QuerySplit::All => true,
                QuerySplit::NecessaryOnly => !injected.contains(&x.query_id),
                QuerySplit::WithUnnecessary => injected.contains(&x.query_id),
            };
            let per_participant: Vec<ExtremeCounts> = by_user
                .iter()
                .filter_map(|(user, rows)| {
                    let rows: Vec<&&PermissionDecision> = rows.iter().filter(|x| keep(x)).collect();
                    if rows.is_empty() {
                        return None;
                    }
                    let count = |o: DecisionOption| rows.iter().filter(|x| x.option == o).count();
                    let queries = |o: DecisionOption| {
                        rows.iter().filter(|x| x.option == o).map(|x| &x.query_id).collect::<BTreeSet<_>>().len()
                    };
                    Some(ExtremeCounts {
                        participant_id: (*user).clone(),
                        always_decisions: count(DecisionOption::AlwaysShare),
                        never_decisions: count(DecisionOption::NeverShare),
                        always_queries: queries(DecisionOption::AlwaysShare),
                        never_queries: queries(DecisionOption::NeverShare),
                    })
                })
                .collect();
            let n = per_participant.len();
            let frac = |pred: &dyn Fn(&ExtremeCounts) -> bool| {
                (n > 0).then(|| per_participant.iter().filter(|c| pred(c)).count() as f64 / n as f64)
            };
            ExtremeSplit {
                split,
                with_any_always: frac(&|c| c.always_decisions > 0),
                with_any_never: frac(&|c| c.never_decisions > 0),
                without_always: frac(&|c| c.always_decisions == 0),
                without_never: frac(&|c| c.never_decisions == 0),
                per_participant,
            }
        })
        .collect()
}

/// Empirical CDF points `(x, fraction of values <= x)` at each distinct value.
pub fn cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == x => last.1 = f,
            _ => points.push((x, f)),
        }
    }
    points
}
