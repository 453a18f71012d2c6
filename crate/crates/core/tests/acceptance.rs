//! Acceptance report: one PASS/FAIL line per headline criterion.
//!
//! Criteria on the released study data read the canonical dataset JSON from
//! `PERMASSIST_DATASET`. Without it those criteria print FAIL with the reason.
//! The process exits non-zero when any offline criterion fails, or when any
//! criterion fails and `PERMASSIST_STRICT_ACCEPTANCE=1` is set.

mod common;

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use permassist_core::analytics::{jaccard_pairs, option_distribution, sharing_extremes, variance_report, Averaging, GroupBy};
use permassist_core::cf::{calibrate, CfHyperparameters, Region, RegionCaps};
use permassist_core::dataset::{filter_for_modeling, generate_synthetic, make_folds, sample_history, HistoryBudget, SyntheticSpec};
use permassist_core::eval::{
    compute_metrics, confidence_grid, cross_validate, repeat_cross_validation, row_near_coverage, sweep_thresholds, CfFactory,
    ConfusionCounts, CvConfig, HybridFactory, IclFactory, MetricReport, PredictorFactory,
};
use permassist_core::hybrid::HybridConfig;
use permassist_core::icl::prompt::{sections, HISTORY_HEADER, INSTRUCTIONS_HEADER, PROFILE_HEADER, REQUEST_HEADER, ROLE_HEADER};
use permassist_core::icl::{build_prompt, HistoryRecord, IclConfig, MockPolicy, MockProvider, TextModel};
use permassist_core::service::{AssistantState, DecisionSource, ServiceConfig, SubmitOutcome};
use permassist_core::{Dataset, DecisionOption, Domain, Label, DataTypeId};
use rand::{Rng, SeedableRng};

const DATASET_ENV: &str = "PERMASSIST_DATASET";

struct Outcome {
    pass: bool,
    detail: String,
    /// Failure caused only by the released data being absent.
    needs_data: bool,
}

fn pass_if(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail, needs_data: false }
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol + 1e-12
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

fn mock() -> Arc<dyn TextModel> {
    Arc::new(MockProvider::new(MockPolicy::MajorityOfHistory))
}

fn load_released() -> Result<Dataset, String> {
    let path = std::env::var(DATASET_ENV).map_err(|_| format!("released dataset not available (set {DATASET_ENV})"))?;
    Dataset::load(&path).map_err(|e| format!("cannot load {path}: {e}"))
}

fn released<F: FnOnce(&Dataset) -> Outcome>(data: &Result<Dataset, String>, f: F) -> Outcome {
    match data {
        Ok(d) => f(d),
        Err(e) => Outcome { pass: false, detail: e.clone(), needs_data: true },
    }
}

fn with_budget(name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> (String, Outcome) {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    if !o.needs_data {
        o.detail.push_str(&format!("; {:.1}s (budget {}s)", took.as_secs_f64(), budget.as_secs()));
        if took > budget {
            o.pass = false;
        }
    }
    (name.to_string(), o)
}

fn dataset_filter(d: &Dataset) -> Outcome {
    match filter_for_modeling(d) {
        Ok(m) => {
            let s = m.stats();
            let ok = (s.participants, s.decisions, s.allow, s.deny) == (181, 7563, 5244, 2319);
            pass_if(
                ok,
                format!("{} participants, {} decisions ({} allow / {} deny); expected 181, 7563 (5244 / 2319)", s.participants, s.decisions, s.allow, s.deny),
            )
        }
        Err(e) => pass_if(false, format!("filter failed: {e}")),
    }
}

fn analytics_golden(d: &Dataset) -> Outcome {
    let t1 = option_distribution(d, GroupBy::Domain, false, Averaging::PerParticipant);
    let ent_always = t1.row("Entertainment").map(|r| r.share(DecisionOption::AlwaysShare));
    let fin_never = t1.row("Finance").map(|r| r.share(DecisionOption::NeverShare));
    let any_always = sharing_extremes(d).first().and_then(|s| s.with_any_always);
    let v = variance_report(d);
    let creds = v.data_type("Account Credentials").map(|t| t.sd);
    let music = v.data_type("Music Listening History").map(|t| t.sd);
    let jac = jaccard_pairs(d).fraction_at_least(0.6);
    let checks = [
        ("Table I Entertainment Always", ent_always, 0.556, 0.001),
        ("Table I Finance Never", fin_never, 0.169, 0.001),
        ("Fig 2 any Always", any_always, 0.951, 0.001),
        ("Table IV Account Credentials SD", creds, 0.498, 0.002),
        ("Table IV Music Listening History SD", music, 0.125, 0.002),
        ("Fig 6 pairs >= 0.6", jac, 0.697, 0.005),
    ];
    let mut ok = true;
    let parts: Vec<String> = checks
        .iter()
        .map(|(name, got, target, tol)| {
            let hit = got.is_some_and(|g| within(g, *target, *tol));
            ok &= hit;
            format!("{name} {} (target {target}±{tol})", got.map_or("n/a".into(), |g| format!("{g:.4}")))
        })
        .collect();
    pass_if(ok, parts.join(", "))
}

fn cf_reports(d: &Dataset, seeds: &[u64]) -> Result<Vec<MetricReport>, String> {
    let m = filter_for_modeling(d).map_err(|e| e.to_string())?;
    let f = CfFactory::default();
    let rep = repeat_cross_validation(&m, &f, &CvConfig::default(), seeds).map_err(|e| e.to_string())?;
    Ok(rep.runs)
}

fn cf_accuracy(d: &Dataset) -> Outcome {
    match cf_reports(d, &[0, 1, 2, 3, 4]) {
        Ok(reports) => {
            let accs: Vec<f64> = reports.iter().filter_map(|r| r.pooled.accuracy).collect();
            let mean = accs.iter().sum::<f64>() / accs.len().max(1) as f64;
            pass_if(within(mean, 0.833, 0.03), format!("mean accuracy over {} seeds {} (target 83.3% ± 3 pp)", accs.len(), pct(mean)))
        }
        Err(e) => pass_if(false, e),
    }
}

/// Exhaustive-sweep oracle over every calibration set the suite produces:
/// random score sets and trained synthetic models.
fn calibration_oracle() -> Result<usize, String> {
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut sets: Vec<Vec<(f64, Label)>> = (0..200)
        .map(|_| {
            let n = r.random_range(2..60);
            (0..n).map(|_| (r.random_range(-8i32..8) as f64 / 4.0, Label::from_allow(r.random_bool(0.6)))).collect()
        })
        .collect();
    let hyper = CfHyperparameters { dim: 8, epochs: 150, ..Default::default() };
    for seed in 0..3 {
        let d = common::planted_two_groups(seed).dataset;
        let model = permassist_core::cf::CfModel::train(&d.decisions, hyper, Default::default(), RegionCaps::default())
            .map_err(|e| e.to_string())?;
        sets.push(model.score_decisions(&d.decisions));
    }
    for s in &sets {
        let c = calibrate(s, RegionCaps::default()).map_err(|e| e.to_string())?;
        if c.single_class {
            continue;
        }
        let (fpr, fnr) = common::brute_rates(s, c.t_eq);
        if ((fpr - fnr).abs() - common::brute_min_gap(s)).abs() > 1e-12 {
            return Err(format!("t_eq {} is not at the sweep optimum", c.t_eq));
        }
        if !(c.t_neg <= c.t_eq && c.t_eq <= c.t_pos) {
            return Err("region thresholds cross t_eq".into());
        }
    }
    Ok(sets.len())
}

fn region_coverage(reports: &[MetricReport]) -> f64 {
    let records: Vec<_> = reports.iter().flat_map(|r| &r.records).collect();
    let confident = records.iter().filter(|r| matches!(r.cf_region, Some(Region::Positive | Region::Negative))).count();
    confident as f64 / records.len().max(1) as f64
}

fn calibration_property(data: &Result<Dataset, String>) -> Outcome {
    let oracle = calibration_oracle();
    let oracle_detail = match &oracle {
        Ok(n) => format!("sweep oracle confirms t_eq on {n} calibration sets"),
        Err(e) => format!("sweep oracle: {e}"),
    };
    let mut o = released(data, |d| match cf_reports(d, &[0]) {
        Ok(reports) => {
            let cov = region_coverage(&reports);
            pass_if(within(cov, 0.35, 0.05), format!("5%-cap region covers {} (target 35.0% ± 5 pp)", pct(cov)))
        }
        Err(e) => pass_if(false, e),
    });
    o.pass &= oracle.is_ok();
    if oracle.is_err() {
        o.needs_data = false;
    }
    o.detail = format!("{oracle_detail}; {}", o.detail);
    o
}

fn coverage_non_increasing(report: &MetricReport) -> Result<Vec<permassist_core::eval::SweepRow>, String> {
    let grid = confidence_grid(&report.records, 200);
    let rows = sweep_thresholds(&report.records, &grid);
    for w in rows.windows(2) {
        if w[1].threshold > w[0].threshold && w[1].coverage > w[0].coverage {
            return Err(format!("coverage rises between thresholds {} and {}", w[0].threshold, w[1].threshold));
        }
    }
    Ok(rows)
}

fn curve_shape(data: &Result<Dataset, String>) -> Outcome {
    let synthetic = generate_synthetic(&SyntheticSpec::two_groups(8, &[Domain::Finance, Domain::Travel], 0.8), 5)
        .map_err(|e| e.to_string())
        .and_then(|s| {
            let f = CfFactory { hyper: CfHyperparameters { dim: 8, epochs: 120, ..Default::default() }, ..Default::default() };
            cross_validate(&s.dataset, &f, &CvConfig::default()).map_err(|e| e.to_string())
        })
        .and_then(|r| coverage_non_increasing(&r).map(|rows| rows.len()));
    let shape_detail = match &synthetic {
        Ok(n) => format!("coverage non-increasing over {n} synthetic thresholds"),
        Err(e) => e.clone(),
    };
    let mut o = released(data, |d| match cf_reports(d, &[0]) {
        Ok(reports) => match coverage_non_increasing(&reports[0]) {
            Ok(rows) => match row_near_coverage(&rows, 0.27) {
                Some(row) => {
                    let acc = row.metrics.accuracy.unwrap_or(0.0);
                    pass_if(
                        within(acc, 0.958, 0.03),
                        format!("accuracy {} at coverage {} (target 95.8% ± 3 pp near 27%)", pct(acc), pct(row.coverage)),
                    )
                }
                None => pass_if(false, "no sweep row".into()),
            },
            Err(e) => pass_if(false, e),
        },
        Err(e) => pass_if(false, e),
    });
    o.pass &= synthetic.is_ok();
    if synthetic.is_err() {
        o.needs_data = false;
    }
    o.detail = format!("{shape_detail}; {}", o.detail);
    o
}

fn oracle_equivalence() -> Outcome {
    let planted = common::planted_two_groups(42);
    let d = &planted.dataset;
    let cfg = CvConfig { k: 5, history_ratio: 1.0, seed: 42 };

    let cf = CfFactory { hyper: CfHyperparameters { dim: 16, epochs: 300, ..Default::default() }, ..Default::default() };
    let cf_acc = match cross_validate(d, &cf, &cfg) {
        Ok(r) => r.pooled.accuracy.unwrap_or(0.0),
        Err(e) => return pass_if(false, format!("cf evaluation failed: {e}")),
    };

    let hybrid = HybridFactory {
        provider: mock(),
        hyper: cf.hyper,
        calibration: Default::default(),
        config: HybridConfig::default(),
        icl: IclConfig::default(),
    };
    let report = match cross_validate(d, &hybrid, &cfg) {
        Ok(r) => r,
        Err(e) => return pass_if(false, format!("hybrid evaluation failed: {e}")),
    };
    let seen = common::history_data_types(d, cfg.k, cfg.seed, cfg.history_ratio);
    let covered: Vec<_> = report
        .records
        .iter()
        .filter(|r| {
            seen.get(&(r.fold, r.request.participant_id.clone()))
                .is_some_and(|types: &BTreeSet<DataTypeId>| types.contains(&r.request.data_type_id))
        })
        .collect();
    let hybrid_correct = covered.iter().filter(|r| r.prediction.is_some_and(|p| p.label == r.truth)).count();
    let hybrid_acc = hybrid_correct as f64 / covered.len().max(1) as f64;

    let worst = (0..20u64)
        .map(|seed| {
            let g = common::random_graph(seed);
            let e0 = common::random_embeddings(g.node_count(), 1 + (seed as usize % 4), seed);
            common::gradient_relative_error(&g, &e0, (seed % 4) as usize, 1e-3, 1e-5)
        })
        .fold(0.0, f64::max);

    pass_if(
        cf_acc >= 0.95 && hybrid_acc == 1.0 && !covered.is_empty() && worst < 1e-4,
        format!(
            "cf held-out accuracy {} (>= 95%); hybrid on {} history-covered requests {} (= 100%); gradient max rel err {worst:.2e} on 20 graphs (< 1e-4)",
            pct(cf_acc),
            covered.len(),
            pct(hybrid_acc)
        ),
    )
}

fn property_suite() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };

    // metric identities on random confusion data
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut identities = true;
    for _ in 0..200 {
        let pairs: Vec<(Label, Label)> =
            (0..r.random_range(1..50)).map(|_| (Label::from_allow(r.random_bool(0.5)), Label::from_allow(r.random_bool(0.5)))).collect();
        let m = compute_metrics(ConfusionCounts::from_pairs(pairs.iter().copied()));
        let correct = pairs.iter().filter(|(t, p)| t == p).count() as f64 / pairs.len() as f64;
        identities &= m.accuracy.is_some_and(|a| (a - correct).abs() < 1e-12);
        if let (Some(rec), Some(fnr)) = (m.recall, m.fnr) {
            identities &= (rec + fnr - 1.0).abs() < 1e-12;
        }
    }
    check("metric identities", identities);

    let d = generate_synthetic(&SyntheticSpec::two_groups(4, &[Domain::Finance, Domain::Travel], 0.85), 21)
        .expect("valid spec")
        .dataset;
    let plan = make_folds(&d, 5, 1).expect("folds");
    check(
        "fold partition",
        d.decisions.iter().all(|x| (0..5).filter(|f| plan.is_test(x, *f)).count() == 1),
    );

    let factories: Vec<Box<dyn PredictorFactory>> = vec![
        Box::new(CfFactory { hyper: CfHyperparameters { dim: 8, epochs: 60, ..Default::default() }, ..Default::default() }),
        Box::new(IclFactory { provider: mock(), config: IclConfig::default(), coverage_threshold: 0.0 }),
    ];
    let audits_clean = factories.iter().all(|f| {
        cross_validate(&d, f.as_ref(), &CvConfig { k: 5, history_ratio: 0.5, seed: 1 })
            .is_ok_and(|r| r.audit.iter().all(|a| a.violations.is_empty()))
    });
    check("no-leakage audit", audits_clean);

    let p = &d.profiles[0];
    let rows: Vec<_> = d.decisions.iter().filter(|x| x.participant_id == p.participant_id).collect();
    let history: Vec<HistoryRecord> = rows[1..].iter().map(|x| HistoryRecord::from_decision(&d.catalog, x)).collect();
    let target = d.request_for(rows[0]).expect("request");
    let a = build_prompt(&d.catalog, p, &history, &[], &target, None).render();
    let b = build_prompt(&d.catalog, p, &history, &[], &target, None).render();
    let s = sections(&a);
    check("prompt determinism", a == b);
    check(
        "prompt sections",
        [ROLE_HEADER, PROFILE_HEADER, HISTORY_HEADER, REQUEST_HEADER, INSTRUCTIONS_HEADER]
            .iter()
            .all(|h| s.get(h).is_some_and(|l| !l.is_empty())),
    );

    let nested = d.profiles.iter().all(|p| {
        (0..5).all(|fold| {
            let sets: Vec<BTreeSet<_>> = HistoryBudget::PAPER_GRID
                .iter()
                .map(|ratio| {
                    sample_history(&d, &plan, fold, HistoryBudget::new(*ratio, 1).expect("ratio"), &p.participant_id)
                        .expect("history")
                        .iter()
                        .map(|x| x.key())
                        .collect()
                })
                .collect();
            sets.windows(2).all(|w| w[0].is_subset(&w[1]))
        })
    });
    check("history-ratio nesting", nested);

    let mut state = AssistantState::new(d.catalog.clone(), ServiceConfig::default());
    let now = Utc.timestamp_opt(0, 0).unwrap();
    let precedence = state.import(&d, now).is_ok() && {
        let allow = MockProvider::new(MockPolicy::FixedLabel { label: Label::Allow, confidence: 1.0 });
        let ok = d.decisions.iter().filter(|x| x.option == DecisionOption::NeverShare).take(10).all(|x| {
            let req = d.request_for(x).expect("request");
            let rule = state.standing_rule(&req).map(|r| r.label);
            matches!(state.submit(req, &allow, now), Ok(SubmitOutcome::Decided { source: DecisionSource::StandingRule, label, .. }) if Some(label) == rule)
        });
        ok && allow.calls() == 0
    };
    check("standing-rule precedence", precedence);

    let ok = failures.is_empty();
    pass_if(
        ok,
        if ok {
            "metric identities, fold partition, leakage audit, prompt determinism and sections, history nesting, standing-rule precedence".into()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

fn history_ablation() -> Outcome {
    let spec = SyntheticSpec::two_groups(10, &[Domain::Finance, Domain::Travel, Domain::Shopping], 0.8);
    let d = match generate_synthetic(&spec, 8) {
        Ok(s) => s.dataset,
        Err(e) => return pass_if(false, e.to_string()),
    };
    let f = IclFactory { provider: mock(), config: IclConfig::default(), coverage_threshold: 0.0 };
    let acc = |ratio: f64| {
        cross_validate(&d, &f, &CvConfig { k: 5, history_ratio: ratio, seed: 8 }).map(|r| r.pooled.accuracy.unwrap_or(0.0))
    };
    match (acc(0.0), acc(0.25)) {
        (Ok(a0), Ok(a25)) => pass_if(
            a25 - a0 >= 0.05,
            format!("accuracy {} at ratio 0 -> {} at ratio 0.25 (gain {:.1} pp, need >= 5 pp)", pct(a0), pct(a25), 100.0 * (a25 - a0)),
        ),
        (Err(e), _) | (_, Err(e)) => pass_if(false, e.to_string()),
    }
}

fn main() {
    // `cargo test` passes harness flags such as `--quiet`; none apply here.
    let data = load_released();
    let results = vec![
        with_budget("dataset-filter-exactness", Duration::from_secs(5), || released(&data, dataset_filter)),
        with_budget("analytics-golden-numbers", Duration::from_secs(30), || released(&data, analytics_golden)),
        with_budget("cf-full-coverage-accuracy", Duration::from_secs(600), || released(&data, cf_accuracy)),
        with_budget("cf-calibration-property", Duration::from_secs(600), || calibration_property(&data)),
        with_budget("coverage-accuracy-curve", Duration::from_secs(600), || curve_shape(&data)),
        with_budget("oracle-equivalence", Duration::from_secs(120), oracle_equivalence),
        with_budget("pipeline-property-suite", Duration::from_secs(120), property_suite),
        with_budget("history-ablation-trend", Duration::from_secs(120), history_ablation),
    ];
    let strict = std::env::var("PERMASSIST_STRICT_ACCEPTANCE").is_ok_and(|v| v == "1");
    let mut exit = 0;
    for (name, o) in &results {
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass && (strict || !o.needs_data) {
            exit = 1;
        }
    }
    let passed = results.iter().filter(|(_, o)| o.pass).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    std::process::exit(exit);
}
