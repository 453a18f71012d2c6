//! Cross-validated evaluation: metrics, threshold sweeps, breakdowns,
//! leakage audits and repetitions over seeds.

mod cv;
mod metrics;
mod sweep;

pub use cv::{
    covered_counts, cross_validate, repeat_cross_validation, CfFactory, CvConfig, FoldContext, FoldMetrics,
    FoldPredictor, HybridFactory, IclFactory, LeakageAudit, MetricReport, PredictOutcome, PredictQuery,
    PredictionRecord, PredictorFactory, RepetitionReport,
};
pub use metrics::{compute_metrics, ConfusionCounts, MeanSd, MetricRow};
pub use sweep::{breakdown, confidence_grid, row_near_coverage, sweep_csv, sweep_thresholds, Axis, GroupMetrics, SweepRow};

use thiserror::Error;

use crate::cf::CfError;
use crate::dataset::DatasetError;
use crate::hybrid::HybridError;
use crate::icl::IclError;
use crate::model::DecisionKey;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("fold {fold}: CF training failed: {source}")]
    Cf { fold: usize, source: CfError },
    #[error("user `{user}`: {source}")]
    Icl { user: String, source: IclError },
    #[error(transparent)]
    Hybrid(HybridError),
    #[error("fold {fold}: {source}")]
    InFold { fold: usize, source: Box<EvalError> },
    #[error("participant `{0}` has no profile")]
    MissingProfile(String),
    #[error("test decision {0:?} has no binary label or catalog entry")]
    UnlabeledTest(DecisionKey),
    #[error("fold {fold}: {items} training item(s) come from the test fold")]
    Leakage { fold: usize, items: usize },
}

impl EvalError {
    pub(crate) fn in_fold(self, fold: usize) -> Self {
        match self {
            e @ (EvalError::InFold { .. } | EvalError::Cf { .. } | EvalError::Leakage { .. }) => e,
            e => EvalError::InFold { fold, source: Box::new(e) },
        }
    }
}
