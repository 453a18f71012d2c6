//! Signed collaborative filtering over the user/request interaction graph.
//!
//! Users and (query, tool, data type) requests are nodes; every standing
//! allow/deny answer is an edge. Embeddings are propagated by light graph
//! convolution, scored by dot product, and trained with a logistic loss on
//! the edge sign. The decision threshold is calibrated where FPR equals FNR.

mod calibrate;
mod graph;
mod propagate;
mod train;

pub use calibrate::{
    calibrate, rates_at, score_curve, score_grid, threshold_placements, Calibration, RegionCaps,
    ScoreCurveRow,
};
pub use graph::{Edge, InteractionGraph};
pub use propagate::{aggregate, dot, propagate, Embeddings, LayerStack};
pub use train::{fit, init_embeddings, loss, loss_and_gradient, CfHyperparameters, Fitted};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::model::{
    Label, ParticipantId, PermissionDecision, Prediction, PredictionSource, RequestKey,
};
use crate::rng;

pub const MODEL_FORMAT: &str = "permassist.cf-model/1";

#[derive(Debug, thiserror::Error)]
pub enum CfError {
    #[error("conflicting labels for user `{user}` on request `{request}`")]
    DuplicateObservation { user: ParticipantId, request: RequestKey },
    #[error("interaction graph has no edges")]
    EmptyGraph,
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("non-finite score in calibration set")]
    NonFiniteScore,
    #[error("unsupported model format `{0}`")]
    Format(String),
    #[error("model file: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("stored final embeddings differ from the layer mean")]
    LayerMeanMismatch,
}

/// Where the thresholds are fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum CalibrationMode {
    /// Scores of the training edges themselves.
    #[default]
    TrainingEdges,
    /// A seeded fraction of edges is withheld from training and scored.
    HeldOut { fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Positive,
    Negative,
    Uncertain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfPrediction {
    pub score: f64,
    pub label: Label,
    /// Distance between the score and the decision threshold.
    pub confidence: f64,
    pub region: Region,
}

impl CfPrediction {
    pub fn to_prediction(self, coverage_threshold: f64) -> Prediction {
        Prediction::new(self.label, self.confidence, PredictionSource::Cf, coverage_threshold)
    }

    pub fn is_high_confidence(&self) -> bool {
        self.region != Region::Uncertain
    }
}

/// Trained embeddings with calibrated thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfModel {
    pub format: String,
    pub hyper: CfHyperparameters,
    pub calibration_mode: CalibrationMode,
    pub graph: InteractionGraph,
    /// Layer 0 is the trained input embedding; later layers are propagated.
    pub layers: LayerStack,
    pub final_embeddings: Embeddings,
    pub calibration: Calibration,
    pub loss_history: Vec<f64>,
}

impl CfModel {
    /// A model with no users or requests; every prediction is absent.
    pub fn empty(hyper: CfHyperparameters, caps: RegionCaps) -> Self {
        let graph = InteractionGraph::default();
        let layer0 = Embeddings::zeros(0, hyper.dim);
        Self {
            format: MODEL_FORMAT.to_string(),
            hyper,
            calibration_mode: CalibrationMode::TrainingEdges,
            graph,
            layers: LayerStack { layers: vec![layer0.clone()] },
            final_embeddings: layer0,
            calibration: Calibration::uncalibrated(caps),
            loss_history: Vec::new(),
        }
    }

    /// Builds the graph, trains embeddings and calibrates thresholds.
    pub fn train<'a, I>(
        decisions: I,
        hyper: CfHyperparameters,
        mode: CalibrationMode,
        caps: RegionCaps,
    ) -> Result<Self, CfError>
    where
        I: IntoIterator<Item = &'a PermissionDecision>,
    {
        let labeled: Vec<&PermissionDecision> =
            decisions.into_iter().filter(|d| d.binary_label().is_some()).collect();
        let (train_rows, calibration_rows) = match mode {
            CalibrationMode::TrainingEdges => (labeled, Vec::new()),
            CalibrationMode::HeldOut { fraction } => {
                if !(0.0..1.0).contains(&fraction) {
                    return Err(CfError::InvalidHyperparameters(format!(
                        "held-out fraction {fraction} outside [0, 1)"
                    )));
                }
                let mut shuffled = labeled;
                shuffled.shuffle(&mut rng::stream(hyper.seed, "cf/holdout"));
                let n_hold = (fraction * shuffled.len() as f64).round() as usize;
                let rest = shuffled.split_off(n_hold);
                (rest, shuffled)
            }
        };

        let graph = InteractionGraph::build(train_rows.iter().copied())?;
        let fitted = fit(&graph, &hyper)?;
        let final_embeddings = fitted.stack.mean();
        let mut model = Self {
            format: MODEL_FORMAT.to_string(),
            hyper,
            calibration_mode: mode,
            graph,
            layers: fitted.stack,
            final_embeddings,
            calibration: Calibration::uncalibrated(caps),
            loss_history: fitted.loss_history,
        };
        let source = if calibration_rows.is_empty() { train_rows } else { calibration_rows };
        let scored = model.score_decisions(source.iter().copied());
        model.calibration = calibrate(&scored, caps)?;
        Ok(model)
    }

    /// Raw dot-product score, if both nodes were seen in training.
    pub fn score(&self, user: &ParticipantId, request: &RequestKey) -> Option<f64> {
        let u = self.graph.user_node(user)?;
        let r = self.graph.request_node(request)?;
        Some(dot(self.final_embeddings.row(u), self.final_embeddings.row(r)))
    }

    /// (score, truth) pairs for decisions the model can score.
    pub fn score_decisions<'a, I>(&self, decisions: I) -> Vec<(f64, Label)>
    where
        I: IntoIterator<Item = &'a PermissionDecision>,
    {
        decisions
            .into_iter()
            .filter_map(|d| {
                let label = d.binary_label()?;
                Some((self.score(&d.participant_id, &d.request_key())?, label))
            })
            .collect()
    }

    pub fn classify(&self, score: f64) -> CfPrediction {
        let c = &self.calibration;
        let label = Label::from_allow(score > c.t_eq);
        let region = if label == Label::Allow && score >= c.t_pos {
            Region::Positive
        } else if score <= c.t_neg {
            Region::Negative
        } else {
            Region::Uncertain
        };
        CfPrediction { score, label, confidence: (score - c.t_eq).abs(), region }
    }

    /// `None` when the user or the request was never seen in training.
    pub fn predict(&self, user: &ParticipantId, request: &RequestKey) -> Option<CfPrediction> {
        self.score(user, request).map(|s| self.classify(s))
    }

    /// Replaces the thresholds using another labeled score set.
    pub fn recalibrate(&mut self, scored: &[(f64, Label)], caps: RegionCaps) -> Result<(), CfError> {
        self.calibration = calibrate(scored, caps)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, CfError> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses a stored model and checks it is self-consistent.
    pub fn from_json(text: &str) -> Result<Self, CfError> {
        let mut model: CfModel = serde_json::from_str(text)?;
        if model.format != MODEL_FORMAT {
            return Err(CfError::Format(model.format));
        }
        model.graph.reindex();
        if model.layers.mean() != model.final_embeddings {
            return Err(CfError::LayerMeanMismatch);
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticSpec};
    use crate::model::{DataTypeId, Domain, QueryId, ToolId};

    fn planted_model() -> (crate::dataset::SyntheticDataset, CfModel) {
        let spec = SyntheticSpec::two_groups(6, &[Domain::Finance, Domain::Travel], 1.0);
        let s = generate_synthetic(&spec, 1).unwrap();
        let hyper = CfHyperparameters { dim: 8, epochs: 150, ..Default::default() };
        let m = CfModel::train(&s.dataset.decisions, hyper, CalibrationMode::TrainingEdges, RegionCaps::default())
            .unwrap();
        (s, m)
    }

    #[test]
    fn final_embeddings_are_the_layer_mean() {
        let (_, m) = planted_model();
        assert_eq!(m.layers.mean(), m.final_embeddings);
        assert_eq!(m.layers.layers.len(), m.hyper.layers + 1);
        let c = m.calibration;
        assert!(c.t_neg <= c.t_eq && c.t_eq <= c.t_pos);
    }

    #[test]
    fn planted_preferences_are_recovered_in_sample() {
        let (s, m) = planted_model();
        for d in &s.dataset.decisions {
            let p = m.predict(&d.participant_id, &d.request_key()).unwrap();
            assert_eq!(Some(p.label), d.binary_label());
        }
    }

    #[test]
    fn unseen_request_has_no_recommendation() {
        let (s, m) = planted_model();
        let user = &s.dataset.profiles[0].participant_id;
        let unseen = RequestKey {
            query_id: QueryId::new("never-asked"),
            tool_id: ToolId::new("x"),
            data_type_id: DataTypeId::new("y"),
        };
        assert!(m.predict(user, &unseen).is_none());
        let known = s.dataset.decisions[0].request_key();
        assert!(m.predict(&"stranger".into(), &known).is_none());
    }

    #[test]
    fn zero_score_confidence_is_threshold_distance() {
        let (_, m) = planted_model();
        let p = m.classify(0.0);
        assert_eq!(p.confidence, m.calibration.t_eq.abs());
        assert_eq!(p.label, Label::from_allow(0.0 > m.calibration.t_eq));
        // ties go to Deny
        assert_eq!(m.classify(m.calibration.t_eq).label, Label::Deny);
    }

    #[test]
    fn regions_imply_labels() {
        let (_, m) = planted_model();
        let c = m.calibration;
        for i in -40..=40 {
            let s = c.t_eq + i as f64 * 0.25;
            let p = m.classify(s);
            match p.region {
                Region::Positive => assert_eq!(p.label, Label::Allow),
                Region::Negative => assert_eq!(p.label, Label::Deny),
                Region::Uncertain => assert!(s > c.t_neg && s < c.t_pos),
            }
        }
    }

    #[test]
    fn json_round_trip_and_tamper_detection() {
        let (s, m) = planted_model();
        let json = m.to_json().unwrap();
        let back = CfModel::from_json(&json).unwrap();
        let d = &s.dataset.decisions[3];
        assert_eq!(back.predict(&d.participant_id, &d.request_key()), m.predict(&d.participant_id, &d.request_key()));
        let mut tampered = m.clone();
        tampered.final_embeddings.data[0] += 1.0;
        assert!(matches!(
            CfModel::from_json(&tampered.to_json().unwrap()),
            Err(CfError::LayerMeanMismatch)
        ));
        let mut wrong = m;
        wrong.format = "other/9".into();
        assert!(matches!(CfModel::from_json(&wrong.to_json().unwrap()), Err(CfError::Format(_))));
    }

    #[test]
    fn held_out_calibration_trains_on_the_rest() {
        let spec = SyntheticSpec::two_groups(6, &[Domain::Finance], 1.0);
        let s = generate_synthetic(&spec, 2).unwrap();
        let hyper = CfHyperparameters { dim: 8, epochs: 60, ..Default::default() };
        let m = CfModel::train(
            &s.dataset.decisions,
            hyper,
            CalibrationMode::HeldOut { fraction: 0.1 },
            RegionCaps::default(),
        )
        .unwrap();
        let total = s.dataset.decisions.len();
        assert_eq!(m.graph.edges.len(), total - (0.1 * total as f64).round() as usize);
        assert!(CfModel::train(
            &s.dataset.decisions,
            hyper,
            CalibrationMode::HeldOut { fraction: 1.0 },
            RegionCaps::default()
        )
        .is_err());
    }
}
