//! End-to-end properties of the evaluation pipeline, all offline.

mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use permassist_core::cf::CfHyperparameters;
use permassist_core::dataset::{generate_synthetic, make_folds, sample_history, HistoryBudget, SyntheticSpec};
use permassist_core::eval::{compute_metrics, cross_validate, CfFactory, ConfusionCounts, CvConfig, HybridFactory, IclFactory};
use permassist_core::hybrid::HybridConfig;
use permassist_core::icl::prompt::{
    sections, HISTORY_HEADER, INSTRUCTIONS_HEADER, PROFILE_HEADER, RECOMMENDATIONS_HEADER, REQUEST_HEADER, ROLE_HEADER,
};
use permassist_core::icl::{build_prompt, HistoryRecord, IclConfig, MockPolicy, MockProvider, Recommendation};
use permassist_core::service::{AssistantState, DecisionSource, ServiceConfig, SubmitOutcome};
use permassist_core::{DecisionOption, Domain, Label};
use proptest::prelude::*;

fn small() -> permassist_core::Dataset {
    let spec = SyntheticSpec::two_groups(4, &[Domain::Finance, Domain::Travel], 0.85);
    generate_synthetic(&spec, 21).unwrap().dataset
}

proptest! {
    #[test]
    fn metric_identities(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 0..200)) {
        let labeled: Vec<(Label, Label)> = pairs.iter().map(|(t, p)| (Label::from_allow(*t), Label::from_allow(*p))).collect();
        let m = compute_metrics(ConfusionCounts::from_pairs(labeled));
        let tp = pairs.iter().filter(|(t, p)| *t && *p).count() as f64;
        let fp = pairs.iter().filter(|(t, p)| !*t && *p).count() as f64;
        let tn = pairs.iter().filter(|(t, p)| !*t && !*p).count() as f64;
        let fn_ = pairs.iter().filter(|(t, p)| *t && !*p).count() as f64;
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() < 1e-12,
            (None, None) => true,
            _ => false,
        };
        let div = |a: f64, b: f64| (b > 0.0).then(|| a / b);
        prop_assert!(close(m.accuracy, div(tp + tn, tp + tn + fp + fn_)));
        prop_assert!(close(m.precision, div(tp, tp + fp)));
        prop_assert!(close(m.recall, div(tp, tp + fn_)));
        prop_assert!(close(m.fpr, div(fp, fp + tn)));
        prop_assert!(close(m.fnr, div(fn_, fn_ + tp)));
        if let (Some(r), Some(f)) = (m.recall, m.fnr) {
            prop_assert!((r + f - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn folds_partition_every_user_and_query() {
    let d = small();
    for seed in [0, 1, 2] {
        let plan = make_folds(&d, 5, seed).unwrap();
        for x in &d.decisions {
            let test_in: Vec<usize> = (0..5).filter(|f| plan.is_test(x, *f)).collect();
            assert_eq!(test_in.len(), 1, "{:?}", x.key());
            for f in 0..5 {
                assert_ne!(plan.is_test(x, f), plan.is_train(x, f));
            }
        }
        // whole queries move together
        for (user, queries) in &plan.assignment {
            for x in d.decisions.iter().filter(|x| &x.participant_id == user) {
                assert_eq!(plan.fold_of(user, &x.query_id), queries.get(&x.query_id).copied());
            }
        }
    }
}

#[test]
fn audits_are_clean_for_every_predictor() {
    let d = small();
    let hyper = CfHyperparameters { dim: 8, epochs: 60, ..Default::default() };
    let provider: Arc<dyn permassist_core::icl::TextModel> = Arc::new(MockProvider::new(MockPolicy::MajorityOfHistory));
    let cf = CfFactory { hyper, ..Default::default() };
    let icl = IclFactory { provider: Arc::clone(&provider), config: IclConfig::default(), coverage_threshold: 0.0 };
    let hybrid = HybridFactory {
        provider,
        hyper,
        calibration: Default::default(),
        config: HybridConfig::default(),
        icl: IclConfig::default(),
    };
    let factories: [&dyn permassist_core::eval::PredictorFactory; 3] = [&cf, &icl, &hybrid];
    for f in factories {
        let r = cross_validate(&d, f, &CvConfig { k: 4, history_ratio: 0.5, seed: 3 }).unwrap();
        assert_eq!(r.audit.len(), 4);
        let tested: usize = r.audit.iter().map(|a| a.test_items).sum();
        assert_eq!(tested, d.decisions.iter().filter(|x| x.binary_label().is_some()).count());
        assert!(r.audit.iter().all(|a| a.violations.is_empty()), "{}", f.name());
    }
}

#[test]
fn history_budgets_nest() {
    let d = small();
    let plan = make_folds(&d, 5, 9).unwrap();
    for p in &d.profiles {
        for fold in 0..5 {
            let mut previous: BTreeSet<_> = BTreeSet::new();
            for ratio in HistoryBudget::PAPER_GRID {
                let rows = sample_history(&d, &plan, fold, HistoryBudget::new(ratio, 9).unwrap(), &p.participant_id).unwrap();
                let current: BTreeSet<_> = rows.iter().map(|x| x.key()).collect();
                assert!(previous.is_subset(&current));
                assert!(rows.iter().all(|x| plan.is_train(x, fold)));
                previous = current;
            }
        }
    }
}

#[test]
fn prompts_are_deterministic_and_complete() {
    let d = small();
    let profile = &d.profiles[0];
    let rows: Vec<_> = d.decisions.iter().filter(|x| x.participant_id == profile.participant_id).collect();
    let history: Vec<HistoryRecord> = rows[1..].iter().map(|x| HistoryRecord::from_decision(&d.catalog, x)).collect();
    let target = d.request_for(rows[0]).unwrap();
    let recs = vec![Recommendation { line: "<Query: q; Tool: t; Data Type: x; Decision: Allow>".into(), label: Label::Allow, confidence: 0.99 }];
    let a = build_prompt(&d.catalog, profile, &history, &recs, &target, None).render();
    let b = build_prompt(&d.catalog, profile, &history, &recs, &target, None).render();
    assert_eq!(a, b);
    let s = sections(&a);
    for h in [ROLE_HEADER, PROFILE_HEADER, HISTORY_HEADER, RECOMMENDATIONS_HEADER, REQUEST_HEADER, INSTRUCTIONS_HEADER] {
        assert!(s.get(h).is_some_and(|lines| !lines.is_empty()), "missing {h}");
    }
    assert_eq!(s[HISTORY_HEADER].len(), history.len());
    let no_recs = build_prompt(&d.catalog, profile, &history, &[], &target, None).render();
    assert!(!sections(&no_recs).contains_key(RECOMMENDATIONS_HEADER));
}

#[test]
fn standing_rules_precede_any_model_output() {
    let d = small();
    let mut state = AssistantState::new(d.catalog.clone(), ServiceConfig::default());
    state.import(&d, Utc.timestamp_opt(0, 0).unwrap()).unwrap();
    let confident_allow = MockProvider::new(MockPolicy::FixedLabel { label: Label::Allow, confidence: 1.0 });
    let mut checked = 0;
    for x in d.decisions.iter().filter(|x| x.option == DecisionOption::NeverShare).take(20) {
        let request = d.request_for(x).unwrap();
        match state.submit(request, &confident_allow, Utc.timestamp_opt(1, 0).unwrap()).unwrap() {
            SubmitOutcome::Decided { label, source, .. } => {
                // the latest standing answer for this (tool, data type) wins, whatever the model says
                assert_eq!(source, DecisionSource::StandingRule);
                let rule = state.standing_rule(&d.request_for(x).unwrap()).unwrap();
                assert_eq!(label, rule.label);
            }
            other => panic!("expected rule decision, got {other:?}"),
        }
        checked += 1;
    }
    assert!(checked > 0);
    assert_eq!(confident_allow.calls(), 0);
}
