//! Descriptive statistics of a study dataset: option distributions,
//! appropriateness, standing-answer extremes, necessity alignment,
//! consistency and similarity.
//!
//! Every report is deterministic for a given dataset.

mod behavior;
mod consistency;
mod distribution;

pub use behavior::{appropriateness, cdf, sharing_extremes, AppropriatenessReport, AppropriatenessRow, ExtremeCounts, ExtremeSplit, QuerySplit};
pub use consistency::{
    domain_allowance_rates, jaccard, jaccard_pairs, population_sd, variance_report, CrossDomainSd, DataTypeSd,
    JaccardReport, PairSimilarity, VarianceReport, WithinDomainSd,
};
pub use distribution::{
    alignment_table, demographic_breakdown, option_distribution, AlignmentCell, AlignmentTable, Averaging, GroupBy,
    OptionShares, PermissionRateReport, RateRow,
};

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};

/// Reports available by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportName {
    /// Option shares per domain, all participants and concerning-only.
    Table1,
    /// Option shares per tool.
    Table2,
    /// Necessity alignment cells.
    Table3,
    /// Data-type standard deviations.
    Table4,
    /// Standing-answer counts per participant.
    Fig2,
    /// Over/under/appropriate rates.
    Fig3,
    /// Within-domain standard deviations.
    Fig4,
    /// Cross-domain standard deviations.
    Fig5,
    /// Pairwise Jaccard similarities.
    Fig6,
    /// Option shares per demographic bucket.
    Demographics,
    /// Per-participant allowance rate per domain.
    DomainRates,
}

impl ReportName {
    pub const ALL: [ReportName; 11] = [
        ReportName::Table1,
        ReportName::Table2,
        ReportName::Table3,
        ReportName::Table4,
        ReportName::Fig2,
        ReportName::Fig3,
        ReportName::Fig4,
        ReportName::Fig5,
        ReportName::Fig6,
        ReportName::Demographics,
        ReportName::DomainRates,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReportName::Table1 => "table1",
            ReportName::Table2 => "table2",
            ReportName::Table3 => "table3",
            ReportName::Table4 => "table4",
            ReportName::Fig2 => "fig2",
            ReportName::Fig3 => "fig3",
            ReportName::Fig4 => "fig4",
            ReportName::Fig5 => "fig5",
            ReportName::Fig6 => "fig6",
            ReportName::Demographics => "demographics",
            ReportName::DomainRates => "domain-rates",
        }
    }
}

impl FromStr for ReportName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Self::ALL.into_iter().find(|r| r.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|r| r.as_str()).collect();
            format!("unknown report `{s}`; expected one of {}", names.join(", "))
        })
    }
}

/// A computed report: a JSON document plus an optional plot series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderedReport {
    pub name: &'static str,
    pub document: Value,
    #[serde(skip)]
    pub csv: Option<String>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn cdf_csv(series: &[(&str, Vec<f64>)]) -> String {
    let mut s = String::from("series,x,cdf\n");
    for (name, values) in series {
        for (x, f) in cdf(values) {
            let _ = writeln!(s, "{name},{x},{f}");
        }
    }
    s
}

fn rate_csv(rows: &[RateRow]) -> String {
    let mut s = String::from("group,label,decisions,participants,always,yes_once,no_once,never\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},\"{}\",{},{},{},{},{},{}",
            r.group, r.label, r.decisions, r.participants, r.shares[0], r.shares[1], r.shares[2], r.shares[3]
        );
    }
    s
}

pub fn run_report(name: ReportName, d: &crate::Dataset) -> RenderedReport {
    let (document, csv) = match name {
        ReportName::Table1 => {
            let all = option_distribution(d, GroupBy::Domain, false, Averaging::PerParticipant);
            let concerning = option_distribution(d, GroupBy::Domain, true, Averaging::PerParticipant);
            let csv = rate_csv(&all.rows);
            (json!({ "all": all, "concerning": concerning }), Some(csv))
        }
        ReportName::Table2 => {
            let r = option_distribution(d, GroupBy::Tool, false, Averaging::PerParticipant);
            let csv = rate_csv(&r.rows);
            (to_value(&r), Some(csv))
        }
        ReportName::Table3 => (to_value(&alignment_table(d)), None),
        ReportName::Table4 => {
            let v = variance_report(d);
            let (top, bottom) = v.extremes(10);
            (json!({ "top": top, "bottom": bottom, "all": v.data_types }), None)
        }
        ReportName::Fig2 => {
            let splits = sharing_extremes(d);
            let mut series = Vec::new();
            for s in &splits {
                let tag = format!("{:?}", s.split).to_lowercase();
                for (kind, f) in [
                    ("always_decisions", (|c: &ExtremeCounts| c.always_decisions) as fn(&ExtremeCounts) -> usize),
                    ("never_decisions", |c| c.never_decisions),
                    ("always_queries", |c| c.always_queries),
                    ("never_queries", |c| c.never_queries),
                ] {
                    let values: Vec<f64> = s.per_participant.iter().map(|c| f(c) as f64).collect();
                    series.push((format!("{tag}/{kind}"), values));
                }
            }
            let named: Vec<(&str, Vec<f64>)> = series.iter().map(|(n, v)| (n.as_str(), v.clone())).collect();
            (to_value(&splits), Some(cdf_csv(&named)))
        }
        ReportName::Fig3 => {
            let r = appropriateness(d);
            let col = |f: fn(&AppropriatenessRow) -> f64| r.participants.iter().map(f).collect::<Vec<_>>();
            let csv = cdf_csv(&[
                ("over", col(|p| p.over_permission)),
                ("under", col(|p| p.under_permission)),
                ("appropriate", col(|p| p.appropriate)),
            ]);
            (to_value(&r), Some(csv))
        }
        ReportName::Fig4 => {
            let v = variance_report(d);
            let mut by_domain: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
            for w in &v.within_domain {
                by_domain.entry(w.domain.label()).or_default().push(w.sd);
            }
            let named: Vec<(&str, Vec<f64>)> = by_domain.into_iter().collect();
            (to_value(&v.within_domain), Some(cdf_csv(&named)))
        }
        ReportName::Fig5 => {
            let v = variance_report(d);
            let sds: Vec<f64> = v.cross_domain.iter().map(|c| c.sd).collect();
            let doc = json!({
                "participants": v.cross_domain,
                "below_0_1": v.cross_domain_below(0.1),
                "below_0_2": v.cross_domain_below(0.2),
            });
            (doc, Some(cdf_csv(&[("cross_domain_sd", sds)])))
        }
        ReportName::Fig6 => {
            let r = jaccard_pairs(d);
            let sims: Vec<f64> = r.pairs.iter().map(|p| p.similarity).collect();
            let doc = json!({
                "groups": r.groups,
                "pairs": r.pairs.len(),
                "at_least_0_6": r.fraction_at_least(0.6),
                "similarities": r.pairs,
            });
            (doc, Some(cdf_csv(&[("jaccard", sims)])))
        }
        ReportName::Demographics => (to_value(&demographic_breakdown(d, Averaging::Pooled)), None),
        ReportName::DomainRates => (to_value(&domain_allowance_rates(d)), None),
    };
    RenderedReport { name: name.as_str(), document, csv }
}
