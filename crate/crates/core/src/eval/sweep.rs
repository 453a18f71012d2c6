//! Confidence-threshold sweeps and grouped breakdowns.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::cv::PredictionRecord;
use super::metrics::{compute_metrics, ConfusionCounts, MetricRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub covered: usize,
    pub total: usize,
    pub coverage: f64,
    pub metrics: MetricRow,
}

/// Coverage and covered-only metrics at each threshold. Records without a
/// prediction count in the denominator but are never covered.
pub fn sweep_thresholds(records: &[PredictionRecord], grid: &[f64]) -> Vec<SweepRow> {
    let mut scored: Vec<(f64, bool)> = records
        .iter()
        .filter_map(|r| r.prediction.map(|p| (p.confidence, p.label == r.truth)))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = records.len();
    grid.iter()
        .map(|&t| {
            let start = scored.partition_point(|(c, _)| *c < t);
            let mut counts = ConfusionCounts::default();
            for r in records.iter().filter(|r| r.is_covered_at(t)) {
                counts.record(r.truth, r.prediction.expect("covered").label);
            }
            let covered = scored.len() - start;
            SweepRow {
                threshold: t,
                covered,
                total,
                coverage: if total == 0 { 0.0 } else { covered as f64 / total as f64 },
                metrics: compute_metrics(counts),
            }
        })
        .collect()
}

/// Evenly spaced thresholds from 0 to the largest observed confidence.
pub fn confidence_grid(records: &[PredictionRecord], steps: usize) -> Vec<f64> {
    let max = records.iter().filter_map(|r| r.prediction.map(|p| p.confidence)).fold(0.0, f64::max);
    let steps = steps.max(1);
    (0..=steps).map(|i| max * i as f64 / steps as f64).collect()
}

/// The row whose coverage is closest to `target`.
pub fn row_near_coverage(rows: &[SweepRow], target: f64) -> Option<&SweepRow> {
    rows.iter().min_by(|a, b| (a.coverage - target).abs().total_cmp(&(b.coverage - target).abs()))
}

/// Comma-separated plot series of a sweep.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("threshold,coverage,covered,total,accuracy,precision,recall,f1,fpr,fnr\n");
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            s,
            "{:.6},{:.6},{},{},{},{},{},{},{},{}",
            r.threshold,
            r.coverage,
            r.covered,
            r.total,
            cell(m.accuracy),
            cell(m.precision),
            cell(m.recall),
            cell(m.f1),
            cell(m.fpr),
            cell(m.fnr)
        );
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    User,
    Domain,
    Tool,
    DataType,
}

impl std::str::FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "user" => Ok(Axis::User),
            "domain" => Ok(Axis::Domain),
            "tool" => Ok(Axis::Tool),
            "datatype" => Ok(Axis::DataType),
            _ => Err(format!("unknown axis `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group: String,
    pub size: usize,
    pub metrics: MetricRow,
}

/// Covered-only metrics per group, ordered by group name.
pub fn breakdown(records: &[PredictionRecord], axis: Axis) -> Vec<GroupMetrics> {
    let mut groups: BTreeMap<String, (usize, ConfusionCounts)> = BTreeMap::new();
    for r in records {
        let key = match axis {
            Axis::User => r.request.participant_id.to_string(),
            Axis::Domain => r.request.domain.label().to_string(),
            Axis::Tool => r.request.tool_id.to_string(),
            Axis::DataType => r.request.data_type_id.to_string(),
        };
        let entry = groups.entry(key).or_default();
        entry.0 += 1;
        if let Some(p) = r.prediction.filter(|p| p.covered) {
            entry.1.record(r.truth, p.label);
        }
    }
    groups
        .into_iter()
        .map(|(group, (size, c))| GroupMetrics { group, size, metrics: compute_metrics(c) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Domain, Label, PermissionRequest, Prediction, PredictionSource};

    fn rec(user: &str, domain: Domain, truth: Label, label: Label, conf: f64) -> PredictionRecord {
        PredictionRecord {
            fold: 0,
            request: PermissionRequest {
                participant_id: user.into(),
                query_id: "q".into(),
                query_text: "q".into(),
                tool_id: "t".into(),
                data_type_id: "d".into(),
                domain,
            },
            truth,
            prediction: Some(Prediction::new(label, conf, PredictionSource::Icl, 0.0)),
            cf_region: None,
            history_queries: 0,
        }
    }

    fn sample() -> Vec<PredictionRecord> {
        use Label::*;
        vec![
            rec("a", Domain::Finance, Allow, Allow, 0.95),
            rec("a", Domain::Finance, Deny, Allow, 0.5),
            rec("b", Domain::Travel, Deny, Deny, 0.8),
            rec("b", Domain::Travel, Allow, Deny, 0.3),
        ]
    }

    #[test]
    fn threshold_zero_is_full_coverage_and_coverage_is_monotone() {
        let r = sample();
        let rows = sweep_thresholds(&r, &[0.0, 0.4, 0.6, 0.9, 1.0]);
        assert_eq!(rows[0].coverage, 1.0);
        assert_eq!(rows[0].metrics.accuracy, Some(0.5));
        assert_eq!(rows[3].coverage, 0.25);
        assert_eq!(rows[3].metrics.accuracy, Some(1.0));
        assert_eq!(rows[4].coverage, 0.0);
        assert!(rows.windows(2).all(|w| w[0].coverage >= w[1].coverage));
        assert_eq!(row_near_coverage(&rows, 0.3).unwrap().threshold, 0.9);
        assert!(sweep_csv(&rows).lines().count() == 6);
    }

    #[test]
    fn breakdown_groups_sum_to_total() {
        let r = sample();
        let by_user = breakdown(&r, Axis::User);
        assert_eq!(by_user.len(), 2);
        let total: ConfusionCounts = by_user.iter().map(|g| g.metrics.counts).sum();
        assert_eq!(total.total(), 4);
        let by_domain = breakdown(&r[..2], Axis::Domain);
        assert_eq!(by_domain.len(), 1);
        assert_eq!(by_domain[0].metrics.accuracy, Some(0.5));
        assert_eq!("data-type".parse::<Axis>().unwrap(), Axis::DataType);
    }
}
