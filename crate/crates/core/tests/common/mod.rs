//! Independent oracles shared by the integration tests. Nothing here calls
//! the routine it is used to check.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use permassist_core::cf::{loss, loss_and_gradient, Embeddings, InteractionGraph};
use permassist_core::dataset::{generate_synthetic, make_folds, sample_history, GroupSpec, HistoryBudget, SyntheticDataset, SyntheticSpec};
use permassist_core::{DataTypeId, DecisionOption, Domain, Label, ParticipantId, PermissionDecision, QueryId, ToolId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn decision(user: &str, query: &str, tool: &str, dtype: &str, option: DecisionOption) -> PermissionDecision {
    PermissionDecision {
        participant_id: ParticipantId::new(user),
        query_id: QueryId::new(query),
        tool_id: ToolId::new(tool),
        data_type_id: DataTypeId::new(dtype),
        option,
        necessary: true,
        perceived_necessary: None,
    }
}

/// A random signed bipartite graph with `users + requests <= 10` nodes.
pub fn random_graph(seed: u64) -> InteractionGraph {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let users = r.random_range(1..=5);
    let requests = r.random_range(1..=(10 - users).min(5));
    let mut rows = Vec::new();
    for u in 0..users {
        for q in 0..requests {
            // every user keeps at least one edge
            if q == u % requests || r.random_bool(0.6) {
                let o = if r.random_bool(0.5) { DecisionOption::AlwaysShare } else { DecisionOption::NeverShare };
                rows.push(decision(&format!("u{u}"), &format!("q{q}"), "t", "d", o));
            }
        }
    }
    InteractionGraph::build(&rows).expect("valid graph")
}

pub fn random_embeddings(rows: usize, dim: usize, seed: u64) -> Embeddings {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    Embeddings { dim, data: (0..rows * dim).map(|_| r.random_range(-0.8..0.8)).collect() }
}

/// `||analytic - numeric|| / max(||analytic||, ||numeric||)` with central
/// differences of step `h` on the scalar loss.
pub fn gradient_relative_error(g: &InteractionGraph, e0: &Embeddings, layers: usize, l2: f64, h: f64) -> f64 {
    let (_, analytic) = loss_and_gradient(g, e0, layers, l2);
    let mut numeric = vec![0.0; e0.data.len()];
    for (i, slot) in numeric.iter_mut().enumerate() {
        let mut plus = e0.clone();
        plus.data[i] += h;
        let mut minus = e0.clone();
        minus.data[i] -= h;
        *slot = (loss(g, &plus, layers, l2) - loss(g, &minus, layers, l2)) / (2.0 * h);
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.data.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    let scale = norm(&analytic.data).max(norm(&numeric));
    if scale == 0.0 {
        return 0.0;
    }
    norm(&diff) / scale
}

/// Error rates of `score > t` by direct counting.
pub fn brute_rates(scored: &[(f64, Label)], t: f64) -> (f64, f64) {
    let neg: Vec<f64> = scored.iter().filter(|(_, l)| !l.is_allow()).map(|(s, _)| *s).collect();
    let pos: Vec<f64> = scored.iter().filter(|(_, l)| l.is_allow()).map(|(s, _)| *s).collect();
    let fpr = if neg.is_empty() { 0.0 } else { neg.iter().filter(|s| **s > t).count() as f64 / neg.len() as f64 };
    let fnr = if pos.is_empty() { 0.0 } else { pos.iter().filter(|s| **s <= t).count() as f64 / pos.len() as f64 };
    (fpr, fnr)
}

/// Smallest achievable `|FPR - FNR|` over every distinct threshold position:
/// below all scores, at each score, and above all scores.
pub fn brute_min_gap(scored: &[(f64, Label)]) -> f64 {
    let mut candidates: Vec<f64> = scored.iter().map(|(s, _)| *s).collect();
    let lo = candidates.iter().copied().fold(f64::INFINITY, f64::min);
    candidates.push(lo - 1.0);
    candidates
        .into_iter()
        .map(|t| {
            let (fpr, fnr) = brute_rates(scored, t);
            (fpr - fnr).abs()
        })
        .fold(f64::INFINITY, f64::min)
}

/// 20 users in two groups with opposite, deterministic preferences over two
/// domains: group 0 allows Finance and denies Travel, group 1 the reverse.
pub fn planted_two_groups(seed: u64) -> SyntheticDataset {
    let domains = [Domain::Finance, Domain::Travel];
    let mut spec = SyntheticSpec::two_groups(10, &domains, 1.0);
    spec.groups = vec![
        GroupSpec { users: 10, allow_probability: [(Domain::Finance, 1.0), (Domain::Travel, 0.0)].into() },
        GroupSpec { users: 10, allow_probability: [(Domain::Finance, 0.0), (Domain::Travel, 1.0)].into() },
    ];
    generate_synthetic(&spec, seed).expect("valid spec")
}

/// Data types each user saw in the history the harness hands the predictor
/// for a given fold, reconstructed from the public fold and budget rules.
pub fn history_data_types(
    d: &permassist_core::Dataset,
    k: usize,
    seed: u64,
    ratio: f64,
) -> BTreeMap<(usize, ParticipantId), BTreeSet<DataTypeId>> {
    let plan = make_folds(d, k, seed).expect("folds");
    let budget = HistoryBudget::new(ratio, seed).expect("budget");
    let mut out = BTreeMap::new();
    for fold in 0..k {
        for p in &d.profiles {
            let rows = sample_history(d, &plan, fold, budget, &p.participant_id).expect("history");
            out.insert((fold, p.participant_id.clone()), rows.iter().map(|x| x.data_type_id.clone()).collect());
        }
    }
    out
}
