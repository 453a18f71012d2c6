//! Decision-service state: registered users, an append-only decision log,
//! standing rules, the review queue and the serving CF model.
//!
//! The state is a plain value with explicit timestamps. Operations that call
//! the text model or train a model are split in two so that the slow part can
//! run without holding whatever lock guards the state: `plan_submit` /
//! `commit_submit` and `training_snapshot` / `install_model`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cf::{CalibrationMode, CfHyperparameters, CfModel};
use crate::dataset::{Catalog, Dataset};
use crate::hybrid::{HybridConfig, HybridPredictor};
use crate::icl::{HistoryRecord, IclConfig, IclError, TextModel};
use crate::model::{
    DataTypeId, DecisionKey, DecisionOption, Label, ParticipantId, PermissionDecision, PermissionRequest, Prediction,
    ToolId, UserProfile,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ServiceError {
    #[error("unknown user `{0}`")]
    UnknownUser(ParticipantId),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("unknown pending item {0}")]
    UnknownItem(u64),
    #[error("item {0} was already decided")]
    AlreadyDecided(u64),
    #[error("no standing rule for ({tool}, {data_type})")]
    NoSuchRule { tool: ToolId, data_type: DataTypeId },
    #[error("model training failed: {0}")]
    TrainingFailure(String),
}

impl ServiceError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownUser(_) => "unknown_user",
            ServiceError::InvalidProfile(_) => "invalid_profile",
            ServiceError::UnknownItem(_) => "unknown_item",
            ServiceError::AlreadyDecided(_) => "already_decided",
            ServiceError::NoSuchRule { .. } => "no_such_rule",
            ServiceError::TrainingFailure(_) => "training_failure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionSource {
    StandingRule,
    /// Decided automatically from a covered model prediction.
    Model,
    Human,
    /// Loaded from an imported dataset.
    Imported,
}

/// One entry of the append-only decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub seq: u64,
    pub request: PermissionRequest,
    pub label: Label,
    /// The four-way answer for human and imported decisions.
    pub option: Option<DecisionOption>,
    pub source: DecisionSource,
    pub confidence: Option<f64>,
    pub model_version: u64,
    pub timestamp: DateTime<Utc>,
    pub item_id: Option<u64>,
    #[serde(default)]
    pub revoked: bool,
}

impl DecisionRecord {
    /// Whether this record is evidence of the user's own preference.
    pub fn is_user_answer(&self) -> bool {
        matches!(self.source, DecisionSource::Human | DecisionSource::Imported) && !self.revoked
    }

    pub fn to_decision(&self) -> Option<PermissionDecision> {
        Some(PermissionDecision {
            participant_id: self.request.participant_id.clone(),
            query_id: self.request.query_id.clone(),
            tool_id: self.request.tool_id.clone(),
            data_type_id: self.request.data_type_id.clone(),
            option: self.option?,
            necessary: false,
            perceived_necessary: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", content = "option")]
pub enum ItemStatus {
    Pending,
    Decided(DecisionOption),
    Revoked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingItem {
    pub item_id: u64,
    pub request: PermissionRequest,
    /// `None` when no prediction could be obtained.
    pub prediction: Option<Prediction>,
    pub created_at: DateTime<Utc>,
    pub status: ItemStatus,
    pub model_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandingRule {
    pub label: Label,
    pub created_at: DateTime<Utc>,
    /// Log sequence number of the decision that created the rule.
    pub origin_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub profile: UserProfile,
    /// Keyed by `tool/data_type`.
    pub standing_rules: BTreeMap<String, StandingRule>,
}

fn rule_key(tool: &ToolId, data_type: &DataTypeId) -> String {
    format!("{tool}/{data_type}")
}

/// Result of a submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SubmitOutcome {
    Decided { label: Label, source: DecisionSource, confidence: Option<f64>, model_version: u64, seq: u64 },
    AskUser { item_id: u64, prediction: Option<Prediction>, model_version: u64 },
}

/// Everything needed to predict one request without touching the state.
pub struct PredictJob {
    pub catalog: Catalog,
    pub profile: UserProfile,
    pub history: Vec<HistoryRecord>,
    pub target: PermissionRequest,
    pub pool: Vec<PermissionRequest>,
    pub model: Arc<CfModel>,
    pub model_version: u64,
}

impl PredictJob {
    pub fn run(&self, provider: &dyn TextModel, hybrid: HybridConfig, icl: IclConfig) -> Result<Prediction, IclError> {
        let p = HybridPredictor { catalog: &self.catalog, cf: &self.model, provider, config: hybrid, icl };
        Ok(p.predict(&self.profile, &self.history, &self.target, &self.pool)?.prediction)
    }
}

pub enum SubmitPlan {
    Rule(Label),
    Predict(Box<PredictJob>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub hybrid: HybridConfig,
    pub icl: IclConfig,
    pub cf: CfHyperparameters,
    pub calibration: CalibrationMode,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            hybrid: HybridConfig { coverage_threshold: 0.91, ..Default::default() },
            icl: IclConfig::default(),
            cf: CfHyperparameters::default(),
            calibration: CalibrationMode::TrainingEdges,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub version: u64,
    pub edges: usize,
    pub trained_at: Option<DateTime<Utc>>,
    pub changed: bool,
}

/// Training rows and the fingerprint that identifies them.
pub struct TrainingSnapshot {
    pub rows: Vec<PermissionDecision>,
    pub fingerprint: BTreeSet<(DecisionKey, Label)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ServiceMetrics {
    pub users: usize,
    pub pending: usize,
    pub decisions_by_source: BTreeMap<String, usize>,
    /// Model-consulted submissions decided automatically.
    pub auto_decided: usize,
    pub queued: usize,
    pub model_version: u64,
    pub model_edges: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssistantState {
    pub config: ServiceConfig,
    pub catalog: Catalog,
    pub users: BTreeMap<ParticipantId, UserState>,
    pub log: Vec<DecisionRecord>,
    pub items: BTreeMap<u64, PendingItem>,
    pub next_item: u64,
    pub model_version: u64,
    pub model_trained_at: Option<DateTime<Utc>>,
    pub model_fingerprint: BTreeSet<(DecisionKey, Label)>,
    pub queued: usize,
    #[serde(skip, default = "empty_model")]
    model: Arc<CfModel>,
}

fn empty_model() -> Arc<CfModel> {
    Arc::new(CfModel::empty(CfHyperparameters::default(), Default::default()))
}

impl AssistantState {
    pub fn new(catalog: Catalog, config: ServiceConfig) -> Self {
        Self {
            config,
            catalog,
            users: BTreeMap::new(),
            log: Vec::new(),
            items: BTreeMap::new(),
            next_item: 1,
            model_version: 0,
            model_trained_at: None,
            model_fingerprint: BTreeSet::new(),
            queued: 0,
            model: Arc::new(CfModel::empty(config.cf, config.hybrid.caps())),
        }
    }

    pub fn model(&self) -> Arc<CfModel> {
        Arc::clone(&self.model)
    }

    /// Restores a model loaded from storage without changing the version.
    pub fn set_model(&mut self, model: Arc<CfModel>) {
        self.model = model;
    }

    pub fn register_user(&mut self, profile: UserProfile) -> Result<(), ServiceError> {
        let bad = profile.out_of_range_scales();
        if !bad.is_empty() {
            return Err(ServiceError::InvalidProfile(format!("scales outside 1-4: {bad:?}")));
        }
        let id = profile.participant_id.clone();
        match self.users.get_mut(&id) {
            Some(u) => u.profile = profile,
            None => {
                self.users.insert(id, UserState { profile, standing_rules: BTreeMap::new() });
            }
        }
        Ok(())
    }

    fn user(&self, id: &ParticipantId) -> Result<&UserState, ServiceError> {
        self.users.get(id).ok_or_else(|| ServiceError::UnknownUser(id.clone()))
    }

    fn append(&mut self, mut record: DecisionRecord) -> u64 {
        record.seq = self.log.len() as u64;
        let seq = record.seq;
        self.log.push(record);
        seq
    }

    fn set_rule_from(&mut self, seq: u64) {
        let r = &self.log[seq as usize];
        let Some(label) = r.option.and_then(DecisionOption::binary_label) else { return };
        let key = rule_key(&r.request.tool_id, &r.request.data_type_id);
        let rule = StandingRule { label, created_at: r.timestamp, origin_seq: seq };
        if let Some(u) = self.users.get_mut(&r.request.participant_id) {
            u.standing_rules.insert(key, rule);
        }
    }

    /// Loads a dataset's profiles and decisions as imported history. Standing
    /// answers become standing rules, later rows overriding earlier ones.
    pub fn import(&mut self, d: &Dataset, now: DateTime<Utc>) -> Result<usize, ServiceError> {
        for q in &d.catalog.queries {
            if self.catalog.query(&q.id).is_none() {
                self.catalog.queries.push(q.clone());
            }
        }
        for t in &d.catalog.tools {
            if self.catalog.tool(&t.id).is_none() {
                self.catalog.tools.push(t.clone());
            }
        }
        for t in &d.catalog.data_types {
            if self.catalog.data_type(&t.id).is_none() {
                self.catalog.data_types.push(t.clone());
            }
        }
        for p in &d.profiles {
            self.register_user(p.clone())?;
        }
        let mut n = 0;
        for x in &d.decisions {
            self.user(&x.participant_id)?;
            let Some(request) = d.request_for(x) else { continue };
            let seq = self.append(DecisionRecord {
                seq: 0,
                request,
                label: x.option.share_label(),
                option: Some(x.option),
                source: DecisionSource::Imported,
                confidence: None,
                model_version: self.model_version,
                timestamp: now,
                item_id: None,
                revoked: false,
            });
            self.set_rule_from(seq);
            n += 1;
        }
        Ok(n)
    }

    /// The user's own answers in prompt form, oldest first.
    pub fn history_records(&self, user: &ParticipantId) -> Vec<HistoryRecord> {
        self.log
            .iter()
            .filter(|r| &r.request.participant_id == user && r.is_user_answer())
            .map(|r| HistoryRecord {
                query_id: r.request.query_id.clone(),
                query_text: r.request.query_text.clone(),
                tool: self.catalog.tool_name(&r.request.tool_id).to_string(),
                data_type: self.catalog.data_type_name(&r.request.data_type_id).to_string(),
                label: r.label,
            })
            .collect()
    }

    pub fn history(&self, user: &ParticipantId) -> Result<Vec<&DecisionRecord>, ServiceError> {
        self.user(user)?;
        Ok(self.log.iter().filter(|r| &r.request.participant_id == user).collect())
    }

    pub fn standing_rule(&self, request: &PermissionRequest) -> Option<&StandingRule> {
        self.users
            .get(&request.participant_id)?
            .standing_rules
            .get(&rule_key(&request.tool_id, &request.data_type_id))
    }

    /// First phase of a submission: a rule hit, or a prediction job.
    pub fn plan_submit(&self, request: &PermissionRequest) -> Result<SubmitPlan, ServiceError> {
        let user = self.user(&request.participant_id)?;
        if let Some(rule) = self.standing_rule(request) {
            return Ok(SubmitPlan::Rule(rule.label));
        }
        let pool = self
            .items
            .values()
            .filter(|i| i.status == ItemStatus::Pending && i.request.participant_id == request.participant_id)
            .map(|i| i.request.clone())
            .collect();
        Ok(SubmitPlan::Predict(Box::new(PredictJob {
            catalog: self.catalog.clone(),
            profile: user.profile.clone(),
            history: self.history_records(&request.participant_id),
            target: request.clone(),
            pool,
            model: self.model(),
            model_version: self.model_version,
        })))
    }

    /// Second phase: records the outcome. A rule created in the meantime
    /// still takes precedence; a missing prediction always queues.
    pub fn commit_submit(
        &mut self,
        request: PermissionRequest,
        prediction: Option<Prediction>,
        model_version: u64,
        now: DateTime<Utc>,
    ) -> Result<SubmitOutcome, ServiceError> {
        self.user(&request.participant_id)?;
        if let Some(label) = self.standing_rule(&request).map(|r| r.label) {
            let seq = self.append(DecisionRecord {
                seq: 0,
                request,
                label,
                option: None,
                source: DecisionSource::StandingRule,
                confidence: None,
                model_version,
                timestamp: now,
                item_id: None,
                revoked: false,
            });
            return Ok(SubmitOutcome::Decided {
                label,
                source: DecisionSource::StandingRule,
                confidence: None,
                model_version,
                seq,
            });
        }
        match prediction {
            Some(p) if p.covered => {
                let seq = self.append(DecisionRecord {
                    seq: 0,
                    request,
                    label: p.label,
                    option: None,
                    source: DecisionSource::Model,
                    confidence: Some(p.confidence),
                    model_version,
                    timestamp: now,
                    item_id: None,
                    revoked: false,
                });
                Ok(SubmitOutcome::Decided {
                    label: p.label,
                    source: DecisionSource::Model,
                    confidence: Some(p.confidence),
                    model_version,
                    seq,
                })
            }
            _ => {
                let item_id = self.next_item;
                self.next_item += 1;
                self.queued += 1;
                self.items.insert(
                    item_id,
                    PendingItem { item_id, request, prediction, created_at: now, status: ItemStatus::Pending, model_version },
                );
                Ok(SubmitOutcome::AskUser { item_id, prediction, model_version })
            }
        }
    }

    /// Both phases in one call. Provider failures queue the request.
    pub fn submit(
        &mut self,
        request: PermissionRequest,
        provider: &dyn TextModel,
        now: DateTime<Utc>,
    ) -> Result<SubmitOutcome, ServiceError> {
        match self.plan_submit(&request)? {
            SubmitPlan::Rule(_) => self.commit_submit(request, None, self.model_version, now),
            SubmitPlan::Predict(job) => {
                let prediction = match job.run(provider, self.config.hybrid, self.config.icl) {
                    Ok(p) => Some(p),
                    Err(e) => {
                        log::warn!("prediction unavailable, queueing: {e}");
                        None
                    }
                };
                self.commit_submit(request, prediction, job.model_version, now)
            }
        }
    }

    /// Pending items of a user, most uncertain first, ties by creation time.
    pub fn pending(&self, user: &ParticipantId) -> Result<Vec<&PendingItem>, ServiceError> {
        self.user(user)?;
        let mut v: Vec<&PendingItem> = self
            .items
            .values()
            .filter(|i| &i.request.participant_id == user && i.status == ItemStatus::Pending)
            .collect();
        let conf = |i: &PendingItem| i.prediction.map_or(f64::NEG_INFINITY, |p| p.confidence);
        v.sort_by(|a, b| conf(a).total_cmp(&conf(b)).then(a.created_at.cmp(&b.created_at)).then(a.item_id.cmp(&b.item_id)));
        Ok(v)
    }

    /// Records the user's answer to a queued item. Standing answers also set
    /// the rule for the item's (tool, data type).
    pub fn decide(&mut self, item_id: u64, option: DecisionOption, now: DateTime<Utc>) -> Result<&DecisionRecord, ServiceError> {
        let item = self.items.get(&item_id).ok_or(ServiceError::UnknownItem(item_id))?;
        if item.status != ItemStatus::Pending {
            return Err(ServiceError::AlreadyDecided(item_id));
        }
        let request = item.request.clone();
        let confidence = item.prediction.map(|p| p.confidence);
        let seq = self.append(DecisionRecord {
            seq: 0,
            request,
            label: option.share_label(),
            option: Some(option),
            source: DecisionSource::Human,
            confidence,
            model_version: self.model_version,
            timestamp: now,
            item_id: Some(item_id),
            revoked: false,
        });
        self.items.get_mut(&item_id).expect("checked").status = ItemStatus::Decided(option);
        self.set_rule_from(seq);
        Ok(&self.log[seq as usize])
    }

    /// Removes a standing rule and marks the standing answers behind it as
    /// revoked. Returns the number of revoked log entries.
    pub fn revoke(&mut self, user: &ParticipantId, tool: &ToolId, data_type: &DataTypeId) -> Result<usize, ServiceError> {
        let state = self.users.get_mut(user).ok_or_else(|| ServiceError::UnknownUser(user.clone()))?;
        if state.standing_rules.remove(&rule_key(tool, data_type)).is_none() {
            return Err(ServiceError::NoSuchRule { tool: tool.clone(), data_type: data_type.clone() });
        }
        let mut revoked = 0;
        let mut items = Vec::new();
        for r in &mut self.log {
            let standing = r.option.is_some_and(|o| o.binary_label().is_some());
            if standing
                && !r.revoked
                && &r.request.participant_id == user
                && &r.request.tool_id == tool
                && &r.request.data_type_id == data_type
            {
                r.revoked = true;
                revoked += 1;
                items.extend(r.item_id);
            }
        }
        for id in items {
            if let Some(i) = self.items.get_mut(&id) {
                i.status = ItemStatus::Revoked;
            }
        }
        Ok(revoked)
    }

    /// Current standing answers for CF training: the latest non-revoked
    /// answer per (user, request).
    pub fn training_snapshot(&self) -> TrainingSnapshot {
        let mut latest: BTreeMap<DecisionKey, PermissionDecision> = BTreeMap::new();
        for r in self.log.iter().filter(|r| r.is_user_answer()) {
            if let Some(d) = r.to_decision().filter(|d| d.binary_label().is_some()) {
                latest.insert(d.key(), d);
            }
        }
        let fingerprint = latest.iter().map(|(k, d)| (k.clone(), d.binary_label().expect("filtered"))).collect();
        TrainingSnapshot { rows: latest.into_values().collect(), fingerprint }
    }

    pub fn model_info(&self, changed: bool) -> ModelInfo {
        ModelInfo {
            version: self.model_version,
            edges: self.model.graph.edges.len(),
            trained_at: self.model_trained_at,
            changed,
        }
    }

    /// Whether a snapshot differs from what the serving model was trained on.
    pub fn is_stale(&self, snapshot: &TrainingSnapshot) -> bool {
        snapshot.fingerprint != self.model_fingerprint
    }

    /// Swaps in a newly trained model and bumps the version.
    pub fn install_model(&mut self, model: CfModel, snapshot: TrainingSnapshot, now: DateTime<Utc>) -> ModelInfo {
        self.model = Arc::new(model);
        self.model_fingerprint = snapshot.fingerprint;
        self.model_version += 1;
        self.model_trained_at = Some(now);
        self.model_info(true)
    }

    /// Retrains CF on the current standing answers. An unchanged snapshot
    /// keeps the version; a failure keeps the previous model serving.
    pub fn refresh_models(&mut self, now: DateTime<Utc>) -> Result<ModelInfo, ServiceError> {
        let snapshot = self.training_snapshot();
        if !self.is_stale(&snapshot) {
            return Ok(self.model_info(false));
        }
        let model = train_snapshot(&snapshot, &self.config)?;
        Ok(self.install_model(model, snapshot, now))
    }

    pub fn metrics(&self) -> ServiceMetrics {
        let mut by_source = BTreeMap::new();
        for r in &self.log {
            *by_source.entry(format!("{:?}", r.source)).or_insert(0) += 1;
        }
        ServiceMetrics {
            users: self.users.len(),
            pending: self.items.values().filter(|i| i.status == ItemStatus::Pending).count(),
            auto_decided: by_source.get("Model").copied().unwrap_or(0),
            decisions_by_source: by_source,
            queued: self.queued,
            model_version: self.model_version,
            model_edges: self.model.graph.edges.len(),
        }
    }

    /// Profiles and the users' own current answers as a dataset.
    pub fn export(&self) -> Dataset {
        let decisions = self
            .log
            .iter()
            .filter(|r| r.is_user_answer())
            .filter_map(DecisionRecord::to_decision)
            .fold(BTreeMap::new(), |mut m, d| {
                m.insert(d.key(), d);
                m
            })
            .into_values()
            .collect();
        Dataset {
            catalog: self.catalog.clone(),
            profiles: self.users.values().map(|u| u.profile.clone()).collect(),
            decisions,
        }
    }
}

/// Trains a CF model on a snapshot; usable outside any lock.
pub fn train_snapshot(snapshot: &TrainingSnapshot, config: &ServiceConfig) -> Result<CfModel, ServiceError> {
    if snapshot.rows.is_empty() {
        return Ok(CfModel::empty(config.cf, config.hybrid.caps()));
    }
    CfModel::train(&snapshot.rows, config.cf, config.calibration, config.hybrid.caps())
        .map_err(|e| ServiceError::TrainingFailure(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::*;
    use crate::icl::{MockPolicy, MockProvider};
    use crate::model::{Domain, QueryId};
    use chrono::TimeZone;

    fn t(s: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(1_700_000_000 + s, 0).unwrap()
    }

    fn req(q: usize, dtype: &str) -> PermissionRequest {
        PermissionRequest {
            participant_id: "u1".into(),
            query_id: QueryId::new(format!("q{q}")),
            query_text: format!("Question number {q}?"),
            tool_id: ToolId::new("tax-management"),
            data_type_id: DataTypeId::new(dtype),
            domain: Domain::Finance,
        }
    }

    fn state() -> AssistantState {
        let mut s = AssistantState::new(catalog(6), ServiceConfig::default());
        s.register_user(profile("u1")).unwrap();
        s
    }

    fn fixed(label: Label, confidence: f64) -> MockProvider {
        MockProvider::new(MockPolicy::FixedLabel { label, confidence })
    }

    #[test]
    fn standing_rule_wins_without_provider_call() {
        let mut s = state();
        let p = fixed(Label::Allow, 0.99);
        let SubmitOutcome::AskUser { item_id, .. } = s.submit(req(0, "ssn"), &fixed(Label::Deny, 0.2), t(0)).unwrap() else {
            panic!("expected queueing")
        };
        s.decide(item_id, DecisionOption::NeverShare, t(1)).unwrap();
        let out = s.submit(req(1, "ssn"), &p, t(2)).unwrap();
        assert!(matches!(out, SubmitOutcome::Decided { label: Label::Deny, source: DecisionSource::StandingRule, .. }));
        assert_eq!(p.calls(), 0);
    }

    #[test]
    fn coverage_gate_decides_or_queues() {
        let mut s = state();
        let out = s.submit(req(0, "ssn"), &fixed(Label::Allow, 0.97), t(0)).unwrap();
        assert!(matches!(out, SubmitOutcome::Decided { label: Label::Allow, source: DecisionSource::Model, .. }));
        let out = s.submit(req(1, "ssn"), &fixed(Label::Allow, 0.6), t(1)).unwrap();
        assert!(matches!(out, SubmitOutcome::AskUser { .. }));
        assert_eq!(s.pending(&"u1".into()).unwrap().len(), 1);
        assert!(matches!(s.submit(PermissionRequest { participant_id: "nobody".into(), ..req(0, "ssn") }, &fixed(Label::Allow, 1.0), t(2)),
            Err(ServiceError::UnknownUser(_))));
    }

    #[test]
    fn provider_failure_queues() {
        struct Down;
        impl TextModel for Down {
            fn complete(&self, _: &str) -> Result<String, crate::icl::ProviderError> {
                Err(crate::icl::ProviderError::Unavailable("down".into()))
            }
        }
        let mut s = state();
        let out = s.submit(req(0, "ssn"), &Down, t(0)).unwrap();
        assert!(matches!(out, SubmitOutcome::AskUser { prediction: None, .. }));
    }

    #[test]
    fn decide_lifecycle() {
        let mut s = state();
        let low = fixed(Label::Allow, 0.1);
        let SubmitOutcome::AskUser { item_id, .. } = s.submit(req(0, "hobbies"), &low, t(0)).unwrap() else { panic!() };
        s.decide(item_id, DecisionOption::YesOnce, t(1)).unwrap();
        assert!(s.users[&ParticipantId::new("u1")].standing_rules.is_empty());
        assert_eq!(s.history_records(&"u1".into()).len(), 1);
        assert_eq!(s.decide(item_id, DecisionOption::AlwaysShare, t(2)).unwrap_err(), ServiceError::AlreadyDecided(item_id));
        assert_eq!(s.decide(999, DecisionOption::AlwaysShare, t(2)).unwrap_err(), ServiceError::UnknownItem(999));

        let SubmitOutcome::AskUser { item_id, .. } = s.submit(req(1, "hobbies"), &low, t(3)).unwrap() else { panic!() };
        s.decide(item_id, DecisionOption::AlwaysShare, t(4)).unwrap();
        assert_eq!(s.standing_rule(&req(2, "hobbies")).unwrap().label, Label::Allow);
    }

    #[test]
    fn revoke_lifecycle() {
        let mut s = state();
        let low = fixed(Label::Deny, 0.1);
        let SubmitOutcome::AskUser { item_id, .. } = s.submit(req(0, "ssn"), &low, t(0)).unwrap() else { panic!() };
        s.decide(item_id, DecisionOption::AlwaysShare, t(1)).unwrap();
        let n = s.revoke(&"u1".into(), &ToolId::new("tax-management"), &DataTypeId::new("ssn")).unwrap();
        assert_eq!(n, 1);
        assert!(s.log.iter().any(|r| r.revoked));
        assert_eq!(s.items[&item_id].status, ItemStatus::Revoked);
        assert!(s.history_records(&"u1".into()).is_empty());
        // next identical submission goes through the predictor again
        let again = s.submit(req(0, "ssn"), &low, t(2)).unwrap();
        let SubmitOutcome::AskUser { item_id, .. } = again else { panic!() };
        assert!(matches!(
            s.revoke(&"u1".into(), &ToolId::new("tax-management"), &DataTypeId::new("ssn")),
            Err(ServiceError::NoSuchRule { .. })
        ));
        s.decide(item_id, DecisionOption::AlwaysShare, t(3)).unwrap();
        assert!(s.standing_rule(&req(0, "ssn")).is_some());
    }

    #[test]
    fn refresh_counts_edges_and_skips_empty_delta() {
        let mut s = state();
        s.register_user(profile("u2")).unwrap();
        let mut d = Dataset { catalog: catalog(6), profiles: vec![], decisions: vec![] };
        for u in ["u1", "u2"] {
            for q in 0..3 {
                d.decisions.push(decision(u, q, "ssn", DecisionOption::NeverShare));
                d.decisions.push(decision(u, q, "hobbies", DecisionOption::AlwaysShare));
            }
        }
        assert_eq!(s.import(&d, t(0)).unwrap(), 12);
        s.config.cf.epochs = 20;
        let v1 = s.refresh_models(t(1)).unwrap();
        assert_eq!((v1.version, v1.edges, v1.changed), (1, 12, true));
        let same = s.refresh_models(t(2)).unwrap();
        assert_eq!((same.version, same.changed), (1, false));

        let low = fixed(Label::Deny, 0.1);
        s.revoke(&"u1".into(), &ToolId::new("tax-management"), &DataTypeId::new("ssn")).unwrap();
        let SubmitOutcome::AskUser { item_id, .. } = s.submit(req(4, "ssn"), &low, t(3)).unwrap() else { panic!() };
        s.decide(item_id, DecisionOption::NeverShare, t(4)).unwrap();
        let v2 = s.refresh_models(t(5)).unwrap();
        assert_eq!((v2.version, v2.edges), (2, 12 - 3 + 1));
    }

    #[test]
    fn failed_training_keeps_previous_model() {
        let mut s = state();
        let d = Dataset { catalog: catalog(6), profiles: vec![], decisions: vec![decision("u1", 0, "ssn", DecisionOption::NeverShare)] };
        s.import(&d, t(0)).unwrap();
        s.config.cf.learning_rate = f64::NAN;
        assert!(matches!(s.refresh_models(t(1)), Err(ServiceError::TrainingFailure(_))));
        assert_eq!(s.model_version, 0);
    }

    #[test]
    fn pending_sorted_by_confidence_then_time() {
        let mut s = state();
        s.submit(req(0, "ssn"), &fixed(Label::Allow, 0.5), t(0)).unwrap();
        s.submit(req(1, "ssn"), &fixed(Label::Allow, 0.2), t(1)).unwrap();
        s.submit(req(2, "ssn"), &fixed(Label::Allow, 0.5), t(2)).unwrap();
        let order: Vec<u64> = s.pending(&"u1".into()).unwrap().iter().map(|i| i.item_id).collect();
        assert_eq!(order, vec![2, 1, 3]);
    }

    #[test]
    fn state_round_trips_through_json() {
        let mut s = state();
        s.submit(req(0, "ssn"), &fixed(Label::Allow, 0.5), t(0)).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: AssistantState = serde_json::from_str(&json).unwrap();
        assert_eq!(back.items, s.items);
        assert_eq!(back.log, s.log);
    }
}
