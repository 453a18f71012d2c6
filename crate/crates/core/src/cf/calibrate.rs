//! Decision threshold at equal error rates and the high-confidence regions.
//!
//! A threshold `t` labels a score Allow when `score > t`; a score exactly at
//! the threshold is denied.

use serde::{Deserialize, Serialize};

use super::CfError;
use crate::model::Label;

/// Error-rate caps that bound the positive and negative confidence regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionCaps {
    pub fpr: f64,
    pub fnr: f64,
}

impl Default for RegionCaps {
    fn default() -> Self {
        Self { fpr: 0.05, fnr: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub t_eq: f64,
    /// Scores at or above are in the positive region.
    pub t_pos: f64,
    /// Scores at or below are in the negative region.
    pub t_neg: f64,
    pub fpr_at_eq: f64,
    pub fnr_at_eq: f64,
    pub caps: RegionCaps,
    /// The calibration set held only one label; thresholds are placeholders.
    pub single_class: bool,
    pub samples: usize,
}

impl Calibration {
    /// Neutral thresholds for a model that has not been calibrated.
    pub fn uncalibrated(caps: RegionCaps) -> Self {
        Self {
            t_eq: 0.0,
            t_pos: f64::MAX,
            t_neg: f64::MIN,
            fpr_at_eq: 0.0,
            fnr_at_eq: 0.0,
            caps,
            single_class: true,
            samples: 0,
        }
    }
}

/// Error rates of the classifier `score > threshold`. Rates with an empty
/// denominator are reported as 0.
pub fn rates_at(scored: &[(f64, Label)], threshold: f64) -> (f64, f64) {
    let (mut fp, mut neg, mut fnn, mut pos) = (0usize, 0usize, 0usize, 0usize);
    for &(s, label) in scored {
        let allow = s > threshold;
        match label {
            Label::Allow => {
                pos += 1;
                if !allow {
                    fnn += 1;
                }
            }
            Label::Deny => {
                neg += 1;
                if allow {
                    fp += 1;
                }
            }
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (ratio(fp, neg), ratio(fnn, pos))
}

fn distinct_sorted(scored: &[(f64, Label)]) -> Vec<f64> {
    let mut s: Vec<f64> = scored.iter().map(|x| x.0).collect();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

fn padding(scores: &[f64]) -> f64 {
    (scores[scores.len() - 1] - scores[0]).max(1.0)
}

/// One representative threshold per distinct classification of the set:
/// below every score, between each pair of neighbors, and above every score.
pub fn threshold_placements(scored: &[(f64, Label)]) -> Vec<f64> {
    let s = distinct_sorted(scored);
    if s.is_empty() {
        return Vec::new();
    }
    let pad = padding(&s);
    let mut out = Vec::with_capacity(s.len() + 1);
    out.push(s[0] - pad);
    out.extend(s.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(s[s.len() - 1] + pad);
    out
}

/// Calibrates the decision threshold and confidence regions.
///
/// `t_eq` is the midpoint of the first contiguous run of threshold placements
/// minimizing `|FPR - FNR|`. `t_pos` is the smallest observed score `s` such
/// that labelling `score >= s` Allow keeps FPR within the cap; `t_neg` the
/// largest `s` such that labelling `score <= s` Deny keeps FNR within the
/// cap. Regions never cross `t_eq`.
pub fn calibrate(scored: &[(f64, Label)], caps: RegionCaps) -> Result<Calibration, CfError> {
    if scored.is_empty() {
        return Err(CfError::EmptyCalibration);
    }
    if scored.iter().any(|x| !x.0.is_finite()) {
        return Err(CfError::NonFiniteScore);
    }
    let s = distinct_sorted(scored);
    let pad = padding(&s);
    let n_pos = scored.iter().filter(|x| x.1 == Label::Allow).count();
    let n_neg = scored.len() - n_pos;

    if n_pos == 0 || n_neg == 0 {
        log::warn!(
            "calibration set holds a single label ({} samples); using the score-range midpoint",
            scored.len()
        );
        let t_eq = 0.5 * (s[0] + s[s.len() - 1]);
        let (fpr, fnr) = rates_at(scored, t_eq);
        return Ok(Calibration {
            t_eq,
            t_pos: s[s.len() - 1] + pad,
            t_neg: s[0] - pad,
            fpr_at_eq: fpr,
            fnr_at_eq: fnr,
            caps,
            single_class: true,
            samples: scored.len(),
        });
    }

    // Per distinct score: how many negatives / positives sit exactly there.
    let m = s.len();
    let mut neg_at = vec![0usize; m];
    let mut pos_at = vec![0usize; m];
    for &(score, label) in scored {
        let i = s.binary_search_by(|x| x.total_cmp(&score)).expect("score is listed");
        match label {
            Label::Allow => pos_at[i] += 1,
            Label::Deny => neg_at[i] += 1,
        }
    }

    // Placement i denies exactly the scores s[..i]; it spans [lo_i, hi_i).
    let bounds = |i: usize| -> (f64, f64) {
        let lo = if i == 0 { s[0] - pad } else { s[i - 1] };
        let hi = if i == m { s[m - 1] + pad } else { s[i] };
        (lo, hi)
    };
    let mut gaps = Vec::with_capacity(m + 1);
    let (mut neg_denied, mut pos_denied) = (0usize, 0usize);
    for i in 0..=m {
        if i > 0 {
            neg_denied += neg_at[i - 1];
            pos_denied += pos_at[i - 1];
        }
        let fpr = (n_neg - neg_denied) as f64 / n_neg as f64;
        let fnr = pos_denied as f64 / n_pos as f64;
        gaps.push((fpr - fnr).abs());
    }
    let best = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-12;
    let start = gaps.iter().position(|g| (g - best).abs() <= tol).expect("non-empty");
    let mut end = start;
    while end < m && (gaps[end + 1] - best).abs() <= tol {
        end += 1;
    }
    let t_eq = 0.5 * (bounds(start).0 + bounds(end).1);
    let (fpr_at_eq, fnr_at_eq) = rates_at(scored, t_eq);

    // Smallest cut whose negatives at or above stay within the FPR cap.
    let mut t_pos = s[m - 1] + pad;
    let mut neg_at_or_above = n_neg;
    for i in 0..m {
        if neg_at_or_above as f64 / n_neg as f64 <= caps.fpr {
            t_pos = s[i];
            break;
        }
        neg_at_or_above -= neg_at[i];
    }
    // Largest cut whose positives at or below stay within the FNR cap.
    let mut t_neg = s[0] - pad;
    let mut pos_at_or_below = n_pos;
    for i in (0..m).rev() {
        if pos_at_or_below as f64 / n_pos as f64 <= caps.fnr {
            t_neg = s[i];
            break;
        }
        pos_at_or_below -= pos_at[i];
    }

    Ok(Calibration {
        t_eq,
        t_pos: t_pos.max(t_eq),
        t_neg: t_neg.min(t_eq),
        fpr_at_eq,
        fnr_at_eq,
        caps,
        single_class: false,
        samples: scored.len(),
    })
}

/// Row of the metrics-versus-score-threshold curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreCurveRow {
    pub threshold: f64,
    pub accuracy: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub allow_rate: f64,
}

/// Classification metrics of `score > t` for each `t` in `grid`.
pub fn score_curve(scored: &[(f64, Label)], grid: &[f64]) -> Vec<ScoreCurveRow> {
    grid.iter()
        .map(|&t| {
            let correct = scored.iter().filter(|x| (x.0 > t) == x.1.is_allow()).count();
            let allowed = scored.iter().filter(|x| x.0 > t).count();
            let (fpr, fnr) = rates_at(scored, t);
            let n = scored.len().max(1) as f64;
            ScoreCurveRow {
                threshold: t,
                accuracy: correct as f64 / n,
                fpr,
                fnr,
                allow_rate: allowed as f64 / n,
            }
        })
        .collect()
}

/// `steps + 1` evenly spaced thresholds spanning the observed scores.
pub fn score_grid(scored: &[(f64, Label)], steps: usize) -> Vec<f64> {
    let s = distinct_sorted(scored);
    if s.is_empty() || steps == 0 {
        return s;
    }
    let (lo, hi) = (s[0], s[s.len() - 1]);
    (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::*;

    /// Exhaustive oracle: best |FPR - FNR| over every achievable placement.
    fn sweep_minimum(scored: &[(f64, Label)]) -> f64 {
        threshold_placements(scored)
            .into_iter()
            .map(|t| {
                let (a, b) = rates_at(scored, t);
                (a - b).abs()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn separable_set_calibrates_to_gap_midpoint() {
        let scored = [(0.9, Allow), (0.8, Allow), (0.2, Deny), (0.1, Deny)];
        // every t in (0.2, 0.8) gives zero error rates
        for t in [0.21, 0.5, 0.79] {
            assert_eq!(rates_at(&scored, t), (0.0, 0.0));
        }
        let c = calibrate(&scored, RegionCaps::default()).unwrap();
        assert!((c.t_eq - 0.5).abs() < 1e-12);
        assert_eq!((c.fpr_at_eq, c.fnr_at_eq), (0.0, 0.0));
        assert!(c.t_neg <= c.t_eq && c.t_eq <= c.t_pos);
        assert!(!c.single_class);
    }

    #[test]
    fn interleaved_scores_cross_at_half() {
        // + at 0.8, 0.6, 0.4, 0.2 and - at 0.7, 0.5, 0.3, 0.1
        let scored: Vec<(f64, Label)> = (1..=8)
            .map(|i| (i as f64 / 10.0, if i % 2 == 0 { Allow } else { Deny }))
            .collect();
        let c = calibrate(&scored, RegionCaps::default()).unwrap();
        let best = sweep_minimum(&scored);
        let (fpr, fnr) = rates_at(&scored, c.t_eq);
        assert!(((fpr - fnr).abs() - best).abs() < 1e-12);
        // sweep by hand: t in [0.4, 0.5) gives FPR = FNR = 0.5
        assert_eq!(best, 0.0);
        assert_eq!((fpr, fnr), (0.5, 0.5));
        assert!((0.4..0.5).contains(&c.t_eq));
    }

    #[test]
    fn single_class_takes_range_midpoint() {
        let scored = [(0.9, Allow), (0.3, Allow), (0.5, Allow)];
        let c = calibrate(&scored, RegionCaps::default()).unwrap();
        assert!(c.single_class);
        assert!((c.t_eq - 0.6).abs() < 1e-12);
        assert!(c.t_pos > 0.9 && c.t_neg < 0.3);
    }

    #[test]
    fn empty_and_non_finite_inputs_error() {
        assert!(matches!(calibrate(&[], RegionCaps::default()), Err(CfError::EmptyCalibration)));
        assert!(matches!(
            calibrate(&[(f64::NAN, Allow), (0.0, Deny)], RegionCaps::default()),
            Err(CfError::NonFiniteScore)
        ));
    }

    #[test]
    fn regions_respect_caps() {
        // 20 negatives uniformly in [0, 1), 20 positives in [0.5, 1.5)
        let mut scored = Vec::new();
        for i in 0..20 {
            scored.push((i as f64 / 20.0, Deny));
            scored.push((0.5 + i as f64 / 20.0, Allow));
        }
        let caps = RegionCaps { fpr: 0.05, fnr: 0.05 };
        let c = calibrate(&scored, caps).unwrap();
        let fp = scored.iter().filter(|x| x.1 == Deny && x.0 >= c.t_pos).count();
        let fnn = scored.iter().filter(|x| x.1 == Allow && x.0 <= c.t_neg).count();
        assert!(fp as f64 / 20.0 <= 0.05);
        assert!(fnn as f64 / 20.0 <= 0.05);
        // t_pos is the smallest such cut: one step lower breaks the cap
        let lower = scored.iter().map(|x| x.0).filter(|s| *s < c.t_pos).fold(f64::MIN, f64::max);
        let fp_lower = scored.iter().filter(|x| x.1 == Deny && x.0 >= lower).count();
        assert!(fp_lower as f64 / 20.0 > 0.05);
        assert!(c.t_neg <= c.t_eq && c.t_eq <= c.t_pos);
    }

    #[test]
    fn score_curve_edges() {
        let scored = [(0.9, Allow), (0.1, Deny)];
        let rows = score_curve(&scored, &[-1.0, 0.5, 2.0]);
        assert_eq!(rows[0].allow_rate, 1.0);
        assert_eq!(rows[1].accuracy, 1.0);
        assert_eq!(rows[2].fnr, 1.0);
        assert_eq!(score_grid(&scored, 4).len(), 5);
    }
}
