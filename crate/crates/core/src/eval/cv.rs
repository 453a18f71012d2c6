//! K-fold cross-validation over pluggable predictors.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, ConfusionCounts, MeanSd, MetricRow};
use super::EvalError;
use crate::cf::{CalibrationMode, CfHyperparameters, CfModel, Region, RegionCaps};
use crate::dataset::{make_folds, sample_history, Catalog, Dataset, FoldPlan, HistoryBudget};
use crate::hybrid::{HybridConfig, HybridPredictor};
use crate::icl::{HistoryRecord, IclConfig, IclPredictor, TextModel};
use crate::model::{DecisionKey, Label, PermissionDecision, PermissionRequest, Prediction, UserProfile};

/// Everything a predictor may learn from in one fold.
pub struct FoldContext<'a> {
    pub dataset: &'a Dataset,
    pub fold: usize,
    pub seed: u64,
    /// All users' training-fold decisions.
    pub train: &'a [&'a PermissionDecision],
}

/// One request to label, with the user's sampled history.
pub struct PredictQuery<'a> {
    pub profile: &'a UserProfile,
    pub history: &'a [HistoryRecord],
    pub target: &'a PermissionRequest,
    /// The user's other requests in the same test fold.
    pub pool: &'a [PermissionRequest],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictOutcome {
    /// `None` when the predictor has no recommendation; counted as uncovered.
    pub prediction: Option<Prediction>,
    /// CF region of the target, for predictors that consult CF.
    pub cf_region: Option<Region>,
}

pub trait FoldPredictor {
    fn predict(&self, q: &PredictQuery<'_>) -> Result<PredictOutcome, EvalError>;
}

/// Builds a fresh predictor for each fold.
pub trait PredictorFactory: Sync {
    fn name(&self) -> &'static str;
    /// Whether predictions depend on per-user history.
    fn uses_history(&self) -> bool;
    fn fit<'a>(&'a self, ctx: &FoldContext<'a>) -> Result<Box<dyn FoldPredictor + 'a>, EvalError>;
}

fn fold_hyper(hyper: &CfHyperparameters, ctx: &FoldContext<'_>) -> CfHyperparameters {
    CfHyperparameters { seed: hyper.seed ^ ctx.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ctx.fold as u64, ..*hyper }
}

fn train_cf(
    hyper: &CfHyperparameters,
    mode: CalibrationMode,
    caps: RegionCaps,
    ctx: &FoldContext<'_>,
) -> Result<CfModel, EvalError> {
    CfModel::train(ctx.train.iter().copied(), fold_hyper(hyper, ctx), mode, caps)
        .map_err(|source| EvalError::Cf { fold: ctx.fold, source })
}

/// Graph CF trained once per fold on every user's training decisions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CfFactory {
    pub hyper: CfHyperparameters,
    pub calibration: CalibrationMode,
    pub caps: RegionCaps,
    pub coverage_threshold: f64,
}

impl Default for CfFactory {
    fn default() -> Self {
        Self {
            hyper: CfHyperparameters::default(),
            calibration: CalibrationMode::TrainingEdges,
            caps: RegionCaps::default(),
            coverage_threshold: 0.0,
        }
    }
}

struct CfFold {
    model: CfModel,
    threshold: f64,
}

impl FoldPredictor for CfFold {
    fn predict(&self, q: &PredictQuery<'_>) -> Result<PredictOutcome, EvalError> {
        let p = self.model.predict(&q.target.participant_id, &q.target.request_key());
        Ok(PredictOutcome { prediction: p.map(|p| p.to_prediction(self.threshold)), cf_region: p.map(|p| p.region) })
    }
}

impl PredictorFactory for CfFactory {
    fn name(&self) -> &'static str {
        "cf"
    }
    fn uses_history(&self) -> bool {
        false
    }
    fn fit<'a>(&'a self, ctx: &FoldContext<'a>) -> Result<Box<dyn FoldPredictor + 'a>, EvalError> {
        let model = train_cf(&self.hyper, self.calibration, self.caps, ctx)?;
        Ok(Box::new(CfFold { model, threshold: self.coverage_threshold }))
    }
}

/// Per-user in-context prediction from profile and sampled history.
#[derive(Clone)]
pub struct IclFactory {
    pub provider: Arc<dyn TextModel>,
    pub config: IclConfig,
    pub coverage_threshold: f64,
}

struct IclFold<'a> {
    catalog: &'a Catalog,
    factory: &'a IclFactory,
}

impl FoldPredictor for IclFold<'_> {
    fn predict(&self, q: &PredictQuery<'_>) -> Result<PredictOutcome, EvalError> {
        let p = IclPredictor {
            catalog: self.catalog,
            provider: self.factory.provider.as_ref(),
            config: self.factory.config,
            coverage_threshold: self.factory.coverage_threshold,
        };
        let (prediction, _) = p.predict(q.profile, q.history, q.target).map_err(|source| EvalError::Icl {
            user: q.target.participant_id.to_string(),
            source,
        })?;
        Ok(PredictOutcome { prediction: Some(prediction), cf_region: None })
    }
}

impl PredictorFactory for IclFactory {
    fn name(&self) -> &'static str {
        "icl"
    }
    fn uses_history(&self) -> bool {
        true
    }
    fn fit<'a>(&'a self, ctx: &FoldContext<'a>) -> Result<Box<dyn FoldPredictor + 'a>, EvalError> {
        Ok(Box::new(IclFold { catalog: &ctx.dataset.catalog, factory: self }))
    }
}

/// In-context prediction with high-confidence CF examples in the prompt.
#[derive(Clone)]
pub struct HybridFactory {
    pub provider: Arc<dyn TextModel>,
    pub hyper: CfHyperparameters,
    pub calibration: CalibrationMode,
    pub config: HybridConfig,
    pub icl: IclConfig,
}

struct HybridFold<'a> {
    catalog: &'a Catalog,
    factory: &'a HybridFactory,
    model: CfModel,
}

impl FoldPredictor for HybridFold<'_> {
    fn predict(&self, q: &PredictQuery<'_>) -> Result<PredictOutcome, EvalError> {
        let p = HybridPredictor {
            catalog: self.catalog,
            cf: &self.model,
            provider: self.factory.provider.as_ref(),
            config: self.factory.config,
            icl: self.factory.icl,
        };
        let out = p.predict(q.profile, q.history, q.target, q.pool).map_err(|source| EvalError::Icl {
            user: q.target.participant_id.to_string(),
            source,
        })?;
        let cf_region = self.model.predict(&q.target.participant_id, &q.target.request_key()).map(|c| c.region);
        Ok(PredictOutcome { prediction: Some(out.prediction), cf_region })
    }
}

impl PredictorFactory for HybridFactory {
    fn name(&self) -> &'static str {
        "hybrid"
    }
    fn uses_history(&self) -> bool {
        true
    }
    fn fit<'a>(&'a self, ctx: &FoldContext<'a>) -> Result<Box<dyn FoldPredictor + 'a>, EvalError> {
        self.config.validate().map_err(EvalError::Hybrid)?;
        let model = train_cf(&self.hyper, self.calibration, self.config.caps(), ctx)?;
        Ok(Box::new(HybridFold { catalog: &ctx.dataset.catalog, factory: self, model }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub history_ratio: f64,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { k: 5, history_ratio: 1.0, seed: 0 }
    }
}

/// One evaluated test decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub fold: usize,
    pub request: PermissionRequest,
    pub truth: Label,
    pub prediction: Option<Prediction>,
    pub cf_region: Option<Region>,
    /// Whole queries of history the predictor saw for this user.
    pub history_queries: usize,
}

impl PredictionRecord {
    pub fn is_covered(&self) -> bool {
        self.prediction.is_some_and(|p| p.covered)
    }

    /// Covered at a different threshold.
    pub fn is_covered_at(&self, threshold: f64) -> bool {
        self.prediction.is_some_and(|p| p.confidence >= threshold)
    }
}

/// Provenance check for one fold: where every training item came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageAudit {
    pub fold: usize,
    pub test_items: usize,
    pub cf_training_items: usize,
    pub history_items: usize,
    /// Training items whose provenance fold is the test fold. Always empty
    /// in a report; a non-empty audit aborts evaluation.
    pub violations: Vec<DecisionKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub evaluated: usize,
    pub covered: usize,
    pub coverage: Option<f64>,
    pub metrics: MetricRow,
}

/// Cross-validation result: per-fold rows, the pooled row, and mean ± sample
/// SD across folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub predictor: String,
    pub config: CvConfig,
    pub folds: Vec<FoldMetrics>,
    pub pooled: MetricRow,
    pub pooled_coverage: Option<f64>,
    pub across_folds: BTreeMap<String, MeanSd>,
    pub audit: Vec<LeakageAudit>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<PredictionRecord>,
}

impl MetricReport {
    pub fn summary(&self, metric: &str) -> MeanSd {
        self.across_folds.get(metric).copied().unwrap_or(MeanSd { mean: None, sd: None, n: 0 })
    }
}

/// Confusion counts over covered records.
pub fn covered_counts<'a>(records: impl IntoIterator<Item = &'a PredictionRecord>) -> ConfusionCounts {
    ConfusionCounts::from_pairs(
        records.into_iter().filter(|r| r.is_covered()).map(|r| (r.truth, r.prediction.expect("covered").label)),
    )
}

fn fold_metrics(fold: usize, records: &[PredictionRecord]) -> FoldMetrics {
    let covered = records.iter().filter(|r| r.is_covered()).count();
    FoldMetrics {
        fold,
        evaluated: records.len(),
        covered,
        coverage: (!records.is_empty()).then(|| covered as f64 / records.len() as f64),
        metrics: compute_metrics(covered_counts(records)),
    }
}

struct FoldRun {
    records: Vec<PredictionRecord>,
    audit: LeakageAudit,
}

fn run_fold(
    d: &Dataset,
    plan: &FoldPlan,
    factory: &dyn PredictorFactory,
    cfg: &CvConfig,
    fold: usize,
) -> Result<FoldRun, EvalError> {
    let (train, test) = plan.split(d, fold);
    let ctx = FoldContext { dataset: d, fold, seed: cfg.seed, train: &train };
    let predictor = factory.fit(&ctx)?;
    let budget = HistoryBudget::new(cfg.history_ratio, cfg.seed)?;
    let profiles = d.profiles_by_id();

    let mut violations: Vec<DecisionKey> = train
        .iter()
        .filter(|x| plan.fold_of(&x.participant_id, &x.query_id) == Some(fold))
        .map(|x| x.key())
        .collect();
    let mut history_items = 0;
    let mut records = Vec::with_capacity(test.len());

    let mut by_user: BTreeMap<_, Vec<&PermissionDecision>> = BTreeMap::new();
    for x in &test {
        by_user.entry(&x.participant_id).or_default().push(*x);
    }
    for (user, rows) in by_user {
        let profile = profiles.get(user).copied().ok_or_else(|| EvalError::MissingProfile(user.to_string()))?;
        let sampled: Vec<&PermissionDecision> = if factory.uses_history() {
            sample_history(d, plan, fold, budget, user)?
        } else {
            Vec::new()
        };
        history_items += sampled.len();
        violations.extend(
            sampled.iter().filter(|x| plan.fold_of(&x.participant_id, &x.query_id) == Some(fold)).map(|x| x.key()),
        );
        let history_queries = sampled.iter().map(|x| &x.query_id).collect::<HashSet<_>>().len();
        let history: Vec<HistoryRecord> = sampled.iter().map(|x| HistoryRecord::from_decision(&d.catalog, x)).collect();
        let pool: Vec<PermissionRequest> = rows.iter().filter_map(|x| d.request_for(x)).collect();
        for x in rows {
            let truth = x.binary_label().ok_or_else(|| EvalError::UnlabeledTest(x.key()))?;
            let target = d.request_for(x).ok_or_else(|| EvalError::UnlabeledTest(x.key()))?;
            let q = PredictQuery { profile, history: &history, target: &target, pool: &pool };
            let out = predictor.predict(&q).map_err(|e| e.in_fold(fold))?;
            records.push(PredictionRecord {
                fold,
                request: target,
                truth,
                prediction: out.prediction,
                cf_region: out.cf_region,
                history_queries,
            });
        }
    }
    let audit = LeakageAudit { fold, test_items: test.len(), cf_training_items: train.len(), history_items, violations };
    if !audit.violations.is_empty() {
        return Err(EvalError::Leakage { fold, items: audit.violations.len() });
    }
    Ok(FoldRun { records, audit })
}

/// Runs k-fold cross-validation. Expects a dataset that already went through
/// the modeling filter; every test decision needs a binary label.
pub fn cross_validate(d: &Dataset, factory: &dyn PredictorFactory, cfg: &CvConfig) -> Result<MetricReport, EvalError> {
    let plan = make_folds(d, cfg.k, cfg.seed)?;
    HistoryBudget::new(cfg.history_ratio, cfg.seed)?;
    #[cfg(feature = "parallel")]
    let runs: Vec<Result<FoldRun, EvalError>> =
        (0..cfg.k).into_par_iter().map(|f| run_fold(d, &plan, factory, cfg, f)).collect();
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<Result<FoldRun, EvalError>> = (0..cfg.k).map(|f| run_fold(d, &plan, factory, cfg, f)).collect();

    let mut folds = Vec::with_capacity(cfg.k);
    let mut audit = Vec::with_capacity(cfg.k);
    let mut records = Vec::new();
    for (fold, run) in runs.into_iter().enumerate() {
        let run = run?;
        folds.push(fold_metrics(fold, &run.records));
        audit.push(run.audit);
        records.extend(run.records);
    }
    let total = records.len();
    let covered = records.iter().filter(|r| r.is_covered()).count();
    let pooled = compute_metrics(covered_counts(&records));
    let mut across_folds: BTreeMap<String, MeanSd> = MetricRow::NAMES
        .iter()
        .map(|m| (m.to_string(), MeanSd::of(folds.iter().map(|f| f.metrics.get(m)))))
        .collect();
    across_folds.insert("coverage".into(), MeanSd::of(folds.iter().map(|f| f.coverage)));
    Ok(MetricReport {
        predictor: factory.name().to_string(),
        config: *cfg,
        folds,
        pooled,
        pooled_coverage: (total > 0).then(|| covered as f64 / total as f64),
        across_folds,
        audit,
        warnings: plan.warnings.clone(),
        records,
    })
}

/// The same evaluation under several seeds, with dispersion across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionReport {
    pub runs: Vec<MetricReport>,
    /// Mean ± SD over seeds of each run's fold-mean metric.
    pub across_seeds: BTreeMap<String, MeanSd>,
}

pub fn repeat_cross_validation(
    d: &Dataset,
    factory: &dyn PredictorFactory,
    cfg: &CvConfig,
    seeds: &[u64],
) -> Result<RepetitionReport, EvalError> {
    let runs = seeds
        .iter()
        .map(|&seed| cross_validate(d, factory, &CvConfig { seed, ..*cfg }))
        .collect::<Result<Vec<_>, _>>()?;
    let mut across_seeds = BTreeMap::new();
    for m in MetricRow::NAMES.iter().chain(&["coverage"]) {
        across_seeds.insert(m.to_string(), MeanSd::of(runs.iter().map(|r| r.summary(m).mean)));
    }
    Ok(RepetitionReport { runs, across_seeds })
}
