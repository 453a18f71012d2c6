//! Browser demo over a synthetic two-group population.
//!
//! Each export takes plain numbers and returns a JSON string, so the page
//! needs no bindings beyond `JSON.parse`. The same functions are callable
//! natively, which is how they are tested.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use permassist_core::cf::{score_curve, score_grid, Calibration, CfHyperparameters, CfModel, ScoreCurveRow};
use permassist_core::dataset::{generate_synthetic, SyntheticSpec};
use permassist_core::eval::{confidence_grid, cross_validate, row_near_coverage, sweep_thresholds, CfFactory, CvConfig, SweepRow};
use permassist_core::hybrid::{HybridConfig, HybridPredictor};
use permassist_core::icl::{HistoryRecord, IclConfig, MockPolicy, MockProvider};
use permassist_core::{Dataset, Domain};

fn population(users_per_group: u32, allow_probability: f64, seed: u64) -> Result<Dataset, String> {
    if users_per_group == 0 {
        return Err("users_per_group must be positive".into());
    }
    let spec = SyntheticSpec::two_groups(users_per_group as usize, &[Domain::Finance, Domain::Travel], allow_probability);
    generate_synthetic(&spec, seed).map(|s| s.dataset).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct TrainingCurves {
    pub loss: Vec<f64>,
    pub score_curve: Vec<ScoreCurveRow>,
    pub calibration: Calibration,
}

pub fn training_curves_native(
    users_per_group: u32,
    allow_probability: f64,
    epochs: u32,
    dim: u32,
    seed: u64,
) -> Result<TrainingCurves, String> {
    let d = population(users_per_group, allow_probability, seed)?;
    let hyper = CfHyperparameters { epochs: epochs as usize, dim: dim as usize, seed, ..Default::default() };
    let model = CfModel::train(&d.decisions, hyper, Default::default(), HybridConfig::default().caps()).map_err(|e| e.to_string())?;
    let scored = model.score_decisions(&d.decisions);
    Ok(TrainingCurves {
        loss: model.loss_history.clone(),
        score_curve: score_curve(&scored, &score_grid(&scored, 50)),
        calibration: model.calibration,
    })
}

/// Cross-validated coverage/accuracy trade-off of the CF predictor.
pub fn coverage_curve_native(users_per_group: u32, allow_probability: f64, seed: u64, steps: u32) -> Result<Vec<SweepRow>, String> {
    let d = population(users_per_group, allow_probability, seed)?;
    let factory = CfFactory { hyper: CfHyperparameters { epochs: 150, seed, ..Default::default() }, ..Default::default() };
    let report = cross_validate(&d, &factory, &CvConfig { k: 5, history_ratio: 1.0, seed }).map_err(|e| e.to_string())?;
    Ok(sweep_thresholds(&report.records, &confidence_grid(&report.records, steps.max(2) as usize)))
}

/// Hybrid prompt for one user's first query, with CF trained on everything else.
pub fn render_prompt_native(users_per_group: u32, seed: u64, user_index: u32, with_recommendations: bool) -> Result<String, String> {
    let d = population(users_per_group, 0.9, seed)?;
    let profile = d.profiles.get(user_index as usize).ok_or("user_index out of range")?;
    let mine: Vec<_> = d.decisions.iter().filter(|x| x.participant_id == profile.participant_id).collect();
    let first = *mine.first().ok_or("user has no decisions")?;
    let target = d.request_for(first).ok_or("query missing from catalog")?;
    let history: Vec<HistoryRecord> =
        mine.iter().filter(|x| x.query_id != first.query_id).map(|x| HistoryRecord::from_decision(&d.catalog, x)).collect();
    let pool: Vec<_> = mine
        .iter()
        .filter(|x| x.query_id == first.query_id && x.key() != first.key())
        .filter_map(|x| d.request_for(x))
        .collect();
    let train = d.decisions.iter().filter(|x| !(x.participant_id == first.participant_id && x.query_id == first.query_id));
    let hyper = CfHyperparameters { epochs: 150, seed, ..Default::default() };
    let config = HybridConfig::default();
    let cf = CfModel::train(train, hyper, Default::default(), config.caps()).map_err(|e| e.to_string())?;
    let provider = MockProvider::new(MockPolicy::MajorityOfHistory);
    let predictor = HybridPredictor { catalog: &d.catalog, cf: &cf, provider: &provider, config, icl: IclConfig::default() };
    let pool = if with_recommendations { pool } else { Vec::new() };
    Ok(predictor.prompt(profile, &history, &target, &pool).0.render())
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

/// `{loss, score_curve, calibration}` as JSON.
#[wasm_bindgen]
pub fn training_curves(users_per_group: u32, allow_probability: f64, epochs: u32, dim: u32, seed: u32) -> Result<String, JsError> {
    to_js(training_curves_native(users_per_group, allow_probability, epochs, dim, seed.into()))
}

/// Sweep rows (threshold, coverage, metrics) as a JSON array.
#[wasm_bindgen]
pub fn coverage_curve(users_per_group: u32, allow_probability: f64, seed: u32, steps: u32) -> Result<String, JsError> {
    to_js(coverage_curve_native(users_per_group, allow_probability, seed.into(), steps))
}

/// The sweep row whose coverage is closest to `target`, from `coverage_curve` output.
#[wasm_bindgen]
pub fn row_at_coverage(rows_json: &str, target: f64) -> Result<String, JsError> {
    let rows: Vec<SweepRow> = serde_json::from_str(rows_json).map_err(|e| JsError::new(&e.to_string()))?;
    to_js(row_near_coverage(&rows, target).cloned().ok_or_else(|| "no rows".to_string()))
}

#[wasm_bindgen]
pub fn render_prompt(users_per_group: u32, seed: u32, user_index: u32, with_recommendations: bool) -> Result<String, JsError> {
    render_prompt_native(users_per_group, seed.into(), user_index, with_recommendations).map_err(|e| JsError::new(&e))
}
