use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError};
use crate::model::{ParticipantId, PermissionDecision, QueryId};
use crate::rng;

/// Per-participant assignment of answered queries to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<ParticipantId, BTreeMap<QueryId, usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FoldPlan {
    pub fn fold_of(&self, user: &ParticipantId, query: &QueryId) -> Option<usize> {
        self.assignment.get(user)?.get(query).copied()
    }

    pub fn is_test(&self, d: &PermissionDecision, fold: usize) -> bool {
        self.fold_of(&d.participant_id, &d.query_id) == Some(fold)
    }

    /// A decision is training data for `fold` when its query sits in another
    /// fold. Decisions of unplanned queries are neither.
    pub fn is_train(&self, d: &PermissionDecision, fold: usize) -> bool {
        matches!(self.fold_of(&d.participant_id, &d.query_id), Some(f) if f != fold)
    }

    pub fn queries_in(&self, user: &ParticipantId, fold: usize) -> Vec<&QueryId> {
        self.assignment
            .get(user)
            .map(|m| m.iter().filter(|(_, f)| **f == fold).map(|(q, _)| q).collect())
            .unwrap_or_default()
    }

    pub fn training_queries(&self, user: &ParticipantId, test_fold: usize) -> Vec<&QueryId> {
        self.assignment
            .get(user)
            .map(|m| m.iter().filter(|(_, f)| **f != test_fold).map(|(q, _)| q).collect())
            .unwrap_or_default()
    }

    pub fn split<'a>(
        &self,
        d: &'a Dataset,
        test_fold: usize,
    ) -> (Vec<&'a PermissionDecision>, Vec<&'a PermissionDecision>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for x in &d.decisions {
            match self.fold_of(&x.participant_id, &x.query_id) {
                Some(f) if f == test_fold => test.push(x),
                Some(_) => train.push(x),
                None => {}
            }
        }
        (train, test)
    }
}

/// Splits every participant's answered queries into `k` folds.
///
/// Queries are shuffled per participant and dealt round-robin, so fold sizes
/// differ by at most one. Participants with fewer than `k` queries leave some
/// folds empty and are listed in `warnings`.
pub fn make_folds(d: &Dataset, k: usize, seed: u64) -> Result<FoldPlan, DatasetError> {
    if k < 2 {
        return Err(DatasetError::InvalidK(k));
    }
    let mut per_user: BTreeMap<&ParticipantId, BTreeSet<&QueryId>> = BTreeMap::new();
    for x in &d.decisions {
        per_user.entry(&x.participant_id).or_default().insert(&x.query_id);
    }
    let mut assignment = BTreeMap::new();
    let mut warnings = Vec::new();
    for (user, queries) in per_user {
        let mut order: Vec<&QueryId> = queries.into_iter().collect();
        let mut r = rng::stream(seed, &format!("folds/{user}"));
        order.shuffle(&mut r);
        if order.len() < k {
            let msg = format!("participant `{user}` has {} queries for {k} folds", order.len());
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let folds = order.into_iter().enumerate().map(|(i, q)| (q.clone(), i % k)).collect();
        assignment.insert(user.clone(), folds);
    }
    Ok(FoldPlan { k, seed, assignment, warnings })
}

/// How much of a user's training history the in-context predictor sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryBudget {
    pub ratio: f64,
    pub selection_seed: u64,
}

impl HistoryBudget {
    pub const PAPER_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

    pub fn new(ratio: f64, selection_seed: u64) -> Result<Self, DatasetError> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(DatasetError::InvalidBudget(ratio));
        }
        Ok(Self { ratio, selection_seed })
    }

    /// Whole queries granted out of `available`, rounded down.
    pub fn query_count(&self, available: usize) -> usize {
        ((self.ratio * available as f64) + 1e-9).floor() as usize
    }
}

/// Training-fold decisions of `user` covering a budgeted number of whole
/// queries. The selection order is a fixed permutation per (seed, user), so a
/// smaller ratio always yields a subset of a larger one.
pub fn sample_history<'a>(
    d: &'a Dataset,
    plan: &FoldPlan,
    test_fold: usize,
    budget: HistoryBudget,
    user: &ParticipantId,
) -> Result<Vec<&'a PermissionDecision>, DatasetError> {
    if test_fold >= plan.k {
        return Err(DatasetError::InvalidFold { fold: test_fold, k: plan.k });
    }
    if !(0.0..=1.0).contains(&budget.ratio) {
        return Err(DatasetError::InvalidBudget(budget.ratio));
    }
    if !plan.assignment.contains_key(user) {
        return Err(DatasetError::UnknownUser(user.clone()));
    }
    let mut candidates = plan.training_queries(user, test_fold);
    let n = budget.query_count(candidates.len());
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut r = rng::stream(budget.selection_seed, &format!("history/{user}"));
    candidates.shuffle(&mut r);
    let chosen: BTreeSet<&QueryId> = candidates.into_iter().take(n).collect();
    Ok(d.decisions
        .iter()
        .filter(|x| &x.participant_id == user && chosen.contains(&x.query_id))
        .collect())
}
