//! CF-augmented in-context prediction.
//!
//! High-confidence CF predictions for the target and related requests are
//! rendered as example decisions inside the ICL prompt; the text model
//! arbitrates and its confidence drives the coverage gate.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cf::{CfModel, Region, RegionCaps};
use crate::dataset::Catalog;
use crate::icl::{self, build_prompt, render_record, HistoryRecord, IclConfig, IclError, PromptSpec, ProviderResponse, Recommendation, TextModel};
use crate::model::{Label, ParticipantId, PermissionRequest, Prediction, PredictionSource, UserProfile};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum HybridError {
    #[error("invalid hybrid configuration: {0}")]
    InvalidConfig(String),
    #[error("coverage of an empty prediction set")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HybridConfig {
    pub cf_region_fpr_cap: f64,
    pub cf_region_fnr_cap: f64,
    /// Predictions with confidence at or above this are decided automatically.
    pub coverage_threshold: f64,
    pub cf_neighbors_per_prompt: usize,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self { cf_region_fpr_cap: 0.05, cf_region_fnr_cap: 0.05, coverage_threshold: 0.0, cf_neighbors_per_prompt: 8 }
    }
}

impl HybridConfig {
    pub fn validate(&self) -> Result<(), HybridError> {
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(self.cf_region_fpr_cap) || !open_unit(self.cf_region_fnr_cap) {
            return Err(HybridError::InvalidConfig("region caps must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.coverage_threshold) {
            return Err(HybridError::InvalidConfig("coverage_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn caps(&self) -> RegionCaps {
        RegionCaps { fpr: self.cf_region_fpr_cap, fnr: self.cf_region_fnr_cap }
    }
}

/// Fraction of confidences at or above `threshold`.
pub fn coverage(confidences: &[f64], threshold: f64) -> Result<f64, HybridError> {
    if confidences.is_empty() {
        return Err(HybridError::EmptyInput);
    }
    Ok(confidences.iter().filter(|c| **c >= threshold).count() as f64 / confidences.len() as f64)
}

/// CF predictions inside the positive or negative region, rendered as
/// decision records, highest confidence first and at most `cap` of them.
/// Candidates are de-duplicated by request.
pub fn select_cf_examples(
    catalog: &Catalog,
    model: &CfModel,
    user: &ParticipantId,
    candidates: &[&PermissionRequest],
    cap: usize,
) -> Vec<Recommendation> {
    let mut seen = BTreeSet::new();
    let mut picked: Vec<Recommendation> = candidates
        .iter()
        .filter(|r| seen.insert(r.request_key()))
        .filter_map(|r| {
            let p = model.predict(user, &r.request_key())?;
            if p.region == Region::Uncertain {
                return None;
            }
            let line = render_record(
                &r.query_text,
                catalog.tool_name(&r.tool_id),
                catalog.data_type_name(&r.data_type_id),
                Some(p.label),
            );
            Some(Recommendation { line, label: p.label, confidence: p.confidence })
        })
        .collect();
    picked.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then_with(|| a.line.cmp(&b.line)));
    picked.truncate(cap);
    picked
}

/// The target followed by the user's other candidates sharing its tool or
/// data type.
pub fn related_requests<'a>(target: &'a PermissionRequest, pool: &'a [PermissionRequest]) -> Vec<&'a PermissionRequest> {
    let mut out = vec![target];
    out.extend(pool.iter().filter(|r| {
        r.participant_id == target.participant_id
            && r.request_key() != target.request_key()
            && (r.tool_id == target.tool_id || r.data_type_id == target.data_type_id)
    }));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridOutcome {
    pub prediction: Prediction,
    pub response: ProviderResponse,
    pub cf_examples: Vec<Recommendation>,
    /// CF's own label for the target, when it has one.
    pub cf_label: Option<Label>,
}

impl HybridOutcome {
    /// Whether the final label matches CF's, when CF had an opinion.
    pub fn agrees_with_cf(&self) -> Option<bool> {
        self.cf_label.map(|l| l == self.prediction.label)
    }
}

pub struct HybridPredictor<'a> {
    pub catalog: &'a Catalog,
    pub cf: &'a CfModel,
    pub provider: &'a dyn TextModel,
    pub config: HybridConfig,
    pub icl: IclConfig,
}

impl HybridPredictor<'_> {
    /// `pool` holds the user's other pending requests; those sharing the
    /// target's tool or data type are CF example candidates.
    pub fn prompt(
        &self,
        profile: &UserProfile,
        history: &[HistoryRecord],
        target: &PermissionRequest,
        pool: &[PermissionRequest],
    ) -> (PromptSpec, Vec<Recommendation>) {
        let candidates = related_requests(target, pool);
        let examples =
            select_cf_examples(self.catalog, self.cf, &target.participant_id, &candidates, self.config.cf_neighbors_per_prompt);
        let spec = build_prompt(self.catalog, profile, history, &examples, target, self.icl.max_history_chars);
        (spec, examples)
    }

    pub fn predict(
        &self,
        profile: &UserProfile,
        history: &[HistoryRecord],
        target: &PermissionRequest,
        pool: &[PermissionRequest],
    ) -> Result<HybridOutcome, IclError> {
        let (spec, cf_examples) = self.prompt(profile, history, target, pool);
        let response = icl::predict(self.provider, &spec, self.icl.attempts)?;
        let prediction =
            Prediction::new(response.label, response.confidence, PredictionSource::Hybrid, self.config.coverage_threshold);
        let cf_label = self.cf.predict(&target.participant_id, &target.request_key()).map(|p| p.label);
        Ok(HybridOutcome { prediction, response, cf_examples, cf_label })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cf::{CalibrationMode, CfHyperparameters};
    use crate::dataset::fixtures::*;
    use crate::icl::{IclPredictor, MockPolicy, MockProvider};
    use crate::model::{DataTypeId, DecisionOption::*, Domain, QueryId, ToolId};

    fn request(user: &str, q: usize, dtype: &str) -> PermissionRequest {
        PermissionRequest {
            participant_id: user.into(),
            query_id: QueryId::new(format!("q{q}")),
            query_text: format!("Question number {q}?"),
            tool_id: ToolId::new("tax-management"),
            data_type_id: DataTypeId::new(dtype),
            domain: Domain::Finance,
        }
    }

    fn trained() -> CfModel {
        let mut rows = Vec::new();
        for u in ["a", "b", "c", "d"] {
            for q in 0..6 {
                rows.push(decision(u, q, "ssn", NeverShare));
                rows.push(decision(u, q, "hobbies", AlwaysShare));
            }
        }
        let hyper = CfHyperparameters { dim: 8, epochs: 200, ..Default::default() };
        CfModel::train(&rows, hyper, CalibrationMode::TrainingEdges, RegionCaps::default()).unwrap()
    }

    #[test]
    fn coverage_examples() {
        assert_eq!(coverage(&[0.95, 0.5], 0.9).unwrap(), 0.5);
        assert_eq!(coverage(&[0.95, 0.5], 0.0).unwrap(), 1.0);
        assert_eq!(coverage(&[0.95, 0.5], 0.96).unwrap(), 0.0);
        assert_eq!(coverage(&[], 0.5), Err(HybridError::EmptyInput));
    }

    #[test]
    fn config_validation() {
        assert!(HybridConfig::default().validate().is_ok());
        assert!(HybridConfig { cf_region_fpr_cap: 0.0, ..Default::default() }.validate().is_err());
        assert!(HybridConfig { coverage_threshold: 1.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn examples_come_only_from_confident_regions() {
        let c = catalog(6);
        let m = trained();
        let reqs: Vec<PermissionRequest> = (0..6).flat_map(|q| [request("a", q, "ssn"), request("a", q, "hobbies")]).collect();
        let refs: Vec<&PermissionRequest> = reqs.iter().collect();
        let ex = select_cf_examples(&c, &m, &"a".into(), &refs, 100);
        assert!(!ex.is_empty());
        for r in &ex {
            let key = reqs.iter().find(|q| r.line.contains(&q.query_text)).unwrap();
            let p = m.predict(&"a".into(), &key.request_key()).unwrap();
            assert_ne!(p.region, Region::Uncertain);
        }
        let ssn = ex.iter().find(|r| r.line.contains("Data Type: SSN")).unwrap();
        assert!(ssn.line.ends_with("; Data Type: SSN; Decision: Deny>"));
        assert!(ex.windows(2).all(|w| w[0].confidence >= w[1].confidence));
        assert_eq!(select_cf_examples(&c, &m, &"a".into(), &refs, 3).len(), 3.min(ex.len()));
        assert!(select_cf_examples(&c, &m, &"a".into(), &[], 8).is_empty());
    }

    #[test]
    fn empty_cf_degrades_to_pure_icl_prompt() {
        let c = catalog(3);
        let empty = CfModel::empty(CfHyperparameters::default(), RegionCaps::default());
        let mock = MockProvider::new(MockPolicy::FixedLabel { label: Label::Deny, confidence: 0.5 });
        let hybrid = HybridPredictor {
            catalog: &c,
            cf: &empty,
            provider: &mock,
            config: HybridConfig { coverage_threshold: 0.9, ..Default::default() },
            icl: IclConfig::default(),
        };
        let icl = IclPredictor { catalog: &c, provider: &mock, config: IclConfig::default(), coverage_threshold: 0.9 };
        let hist = vec![HistoryRecord::from_decision(&c, &decision("a", 1, "ssn", NeverShare))];
        let target = request("a", 0, "ssn");
        let pool = vec![request("a", 2, "ssn")];
        let (h, ex) = hybrid.prompt(&profile("a"), &hist, &target, &pool);
        assert!(ex.is_empty());
        assert_eq!(h.render(), icl.prompt(&profile("a"), &hist, &target).render());
        let out = hybrid.predict(&profile("a"), &hist, &target, &pool).unwrap();
        assert_eq!(out.prediction.source, PredictionSource::Hybrid);
        assert!(!out.prediction.covered);
        assert_eq!(out.agrees_with_cf(), None);
    }

    #[test]
    fn related_requests_share_tool_or_type() {
        let target = request("a", 0, "ssn");
        let mut other_tool = request("a", 1, "hobbies");
        other_tool.tool_id = ToolId::new("other");
        let pool = vec![request("a", 1, "ssn"), other_tool, request("b", 2, "ssn"), target.clone()];
        let rel = related_requests(&target, &pool);
        assert_eq!(rel.len(), 2);
        assert_eq!(rel[1].query_id, QueryId::new("q1"));
    }
}
