//! How consistent preferences are within participants, across domains and
//! between participants.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::model::{DataTypeId, Domain, ParticipantId, PermissionDecision, RequestKey};

/// Population standard deviation.
pub fn population_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn allowed(x: &PermissionDecision) -> Option<f64> {
    x.binary_label().map(|l| if l.is_allow() { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WithinDomainSd {
    pub participant_id: ParticipantId,
    pub domain: Domain,
    pub observations: usize,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossDomainSd {
    pub participant_id: ParticipantId,
    pub domains: usize,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataTypeSd {
    pub data_type_id: DataTypeId,
    pub display_name: String,
    pub observations: usize,
    pub sd: f64,
}

/// Standard deviations of the binary allowance (AlwaysShare = 1,
/// NeverShare = 0; one-time answers are ignored). Groups with fewer than two
/// observations are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub within_domain: Vec<WithinDomainSd>,
    /// SD across a participant's per-domain allowance rates.
    pub cross_domain: Vec<CrossDomainSd>,
    /// Sorted by SD, highest first; ties by id.
    pub data_types: Vec<DataTypeSd>,
}

impl VarianceReport {
    pub fn data_type(&self, id_or_name: &str) -> Option<&DataTypeSd> {
        self.data_types.iter().find(|t| t.data_type_id.as_str() == id_or_name || t.display_name == id_or_name)
    }

    /// The `n` most and `n` least variable data types.
    pub fn extremes(&self, n: usize) -> (&[DataTypeSd], Vec<&DataTypeSd>) {
        let top = &self.data_types[..n.min(self.data_types.len())];
        let bottom = self.data_types.iter().rev().take(n).collect();
        (top, bottom)
    }

    /// Fraction of participants whose cross-domain SD is below `bound`.
    pub fn cross_domain_below(&self, bound: f64) -> Option<f64> {
        let n = self.cross_domain.len();
        (n > 0).then(|| self.cross_domain.iter().filter(|c| c.sd < bound).count() as f64 / n as f64)
    }
}

/// Per participant, allowance rate in each domain they have binary answers in.
pub fn domain_allowance_rates(d: &Dataset) -> BTreeMap<ParticipantId, BTreeMap<Domain, f64>> {
    let idx = d.catalog.index();
    let mut acc: BTreeMap<ParticipantId, BTreeMap<Domain, (f64, usize)>> = BTreeMap::new();
    for x in &d.decisions {
        let (Some(v), Some(domain)) = (allowed(x), idx.domain_of(&x.query_id)) else { continue };
        let e = acc.entry(x.participant_id.clone()).or_default().entry(domain).or_default();
        e.0 += v;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(u, m)| (u, m.into_iter().map(|(dom, (s, n))| (dom, s / n as f64)).collect()))
        .collect()
}

pub fn variance_report(d: &Dataset) -> VarianceReport {
    let idx = d.catalog.index();
    let mut per_user_domain: BTreeMap<(ParticipantId, Domain), Vec<f64>> = BTreeMap::new();
    let mut per_type: BTreeMap<DataTypeId, Vec<f64>> = BTreeMap::new();
    for x in &d.decisions {
        let Some(v) = allowed(x) else { continue };
        if let Some(domain) = idx.domain_of(&x.query_id) {
            per_user_domain.entry((x.participant_id.clone(), domain)).or_default().push(v);
        }
        per_type.entry(x.data_type_id.clone()).or_default().push(v);
    }
    let within_domain = per_user_domain
        .into_iter()
        .filter(|(_, v)| v.len() >= 2)
        .map(|((participant_id, domain), v)| WithinDomainSd {
            participant_id,
            domain,
            observations: v.len(),
            sd: population_sd(&v),
        })
        .collect();
    let cross_domain = domain_allowance_rates(d)
        .into_iter()
        .filter(|(_, m)| m.len() >= 2)
        .map(|(participant_id, m)| {
            let rates: Vec<f64> = m.values().copied().collect();
            CrossDomainSd { participant_id, domains: rates.len(), sd: population_sd(&rates) }
        })
        .collect();
    let mut data_types: Vec<DataTypeSd> = per_type
        .into_iter()
        .filter(|(_, v)| v.len() >= 2)
        .map(|(id, v)| DataTypeSd {
            display_name: d.catalog.data_type_name(&id).to_string(),
            data_type_id: id,
            observations: v.len(),
            sd: population_sd(&v),
        })
        .collect();
    data_types.sort_by(|a, b| b.sd.total_cmp(&a.sd).then_with(|| a.data_type_id.cmp(&b.data_type_id)));
    VarianceReport { within_domain, cross_domain, data_types }
}

/// |A ∩ B| / |A ∪ B|, with two empty sets counting as identical.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSimilarity {
    pub a: ParticipantId,
    pub b: ParticipantId,
    pub shared_requests: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JaccardReport {
    /// Groups of participants with identical answered request sets and at
    /// least two members.
    pub groups: usize,
    pub pairs: Vec<PairSimilarity>,
}

impl JaccardReport {
    pub fn fraction_at_least(&self, bound: f64) -> Option<f64> {
        let n = self.pairs.len();
        (n > 0).then(|| self.pairs.iter().filter(|p| p.similarity >= bound).count() as f64 / n as f64)
    }
}

/// Groups participants by the exact set of requests they answered, then
/// compares the sets of requests each pair always shares.
pub fn jaccard_pairs(d: &Dataset) -> JaccardReport {
    let mut answered: BTreeMap<&ParticipantId, (BTreeSet<RequestKey>, BTreeSet<RequestKey>)> = BTreeMap::new();
    for x in &d.decisions {
        let e = answered.entry(&x.participant_id).or_default();
        e.0.insert(x.request_key());
        if x.binary_label().is_some_and(|l| l.is_allow()) {
            e.1.insert(x.request_key());
        }
    }
    let mut groups: BTreeMap<&BTreeSet<RequestKey>, Vec<(&ParticipantId, &BTreeSet<RequestKey>)>> = BTreeMap::new();
    for (user, (all, allow)) in &answered {
        groups.entry(all).or_default().push((user, allow));
    }
    let mut pairs = Vec::new();
    let mut group_count = 0;
    for (requests, members) in groups {
        if members.len() < 2 {
            continue;
        }
        group_count += 1;
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                pairs.push(PairSimilarity {
                    a: members[i].0.clone(),
                    b: members[j].0.clone(),
                    shared_requests: requests.len(),
                    similarity: jaccard(members[i].1, members[j].1),
                });
            }
        }
    }
    JaccardReport { groups: group_count, pairs }
}
