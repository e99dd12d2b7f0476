//! Residual-based fairness indicators and the standard rate metrics.
//!
//! `F_mean` compares re-centered group medians. `F_shift` and `F_acc`
//! compare where the groups' twin knees sit, horizontally (percentile) and
//! vertically (residual), relative to the global knees. Acc, DP and MD are
//! computed from hard predictions at a threshold.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, Result};
use crate::knee::{KneeAnalysis, KneePair, KneePoint};
use crate::residuals::{Group, MedianSummary, PredictionRecord, SortedCurve};

/// Guard for every division.
pub const EPSILON: f64 = 1e-9;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedReason {
    MissingGroup0,
    MissingGroup1,
    KneeNotDetected,
    TooFewPoints,
    ZeroNormalizer,
    ZeroBaseRate,
}

impl UndefinedReason {
    pub fn missing(group: Group) -> Self {
        match group {
            Group::NonSensitive => Self::MissingGroup0,
            Group::Sensitive => Self::MissingGroup1,
        }
    }
}

impl fmt::Display for UndefinedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MissingGroup0 => "missing group 0",
            Self::MissingGroup1 => "missing group 1",
            Self::KneeNotDetected => "knee not detected",
            Self::TooFewPoints => "too few points for knee detection",
            Self::ZeroNormalizer => "zero normalizer",
            Self::ZeroBaseRate => "zero base rate",
        })
    }
}

/// An indicator that may be undefined, or defined from only one knee side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorValue {
    pub value: Option<f64>,
    pub partial: bool,
    pub reason: Option<UndefinedReason>,
}

impl IndicatorValue {
    pub fn defined(value: f64) -> Self {
        Self {
            value: Some(value),
            partial: false,
            reason: None,
        }
    }

    pub fn partial(value: f64, missing: UndefinedReason) -> Self {
        Self {
            value: Some(value),
            partial: true,
            reason: Some(missing),
        }
    }

    pub fn undefined(reason: UndefinedReason) -> Self {
        Self {
            value: None,
            partial: false,
            reason: Some(reason),
        }
    }

    pub fn is_defined(&self) -> bool {
        self.value.is_some()
    }
}

/// `1 - |m~0 - m~1| / 2`.
pub fn f_mean(summary: &MedianSummary) -> f64 {
    1.0 - (summary.m_tilde0 - summary.m_tilde1).abs() / 2.0
}

/// Relative group-1 minus group-0 displacement at one knee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SideDisplacement {
    Valid { vertical: f64, horizontal: f64 },
    Invalid { reason: UndefinedReason },
}

impl SideDisplacement {
    pub fn vertical(&self) -> Option<f64> {
        match self {
            Self::Valid { vertical, .. } => Some(*vertical),
            Self::Invalid { .. } => None,
        }
    }

    pub fn horizontal(&self) -> Option<f64> {
        match self {
            Self::Valid { horizontal, .. } => Some(*horizontal),
            Self::Invalid { .. } => None,
        }
    }

    fn reason(&self) -> Option<UndefinedReason> {
        match self {
            Self::Valid { .. } => None,
            Self::Invalid { reason } => Some(*reason),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Displacements {
    pub left: SideDisplacement,
    pub right: SideDisplacement,
}

fn side(global: (&KneePair, &KneePoint), g0: (&KneePair, &KneePoint), g1: (&KneePair, &KneePoint)) -> SideDisplacement {
    let mut locs = [None; 3];
    for (slot, (pair, point)) in locs.iter_mut().zip([global, g0, g1]) {
        match point.location {
            Some(loc) => *slot = Some(loc),
            None => {
                let reason = if pair.too_few_points {
                    UndefinedReason::TooFewPoints
                } else {
                    UndefinedReason::KneeNotDetected
                };
                return SideDisplacement::Invalid { reason };
            }
        }
    }
    let [Some(g), Some(k0), Some(k1)] = locs else {
        unreachable!("all three locations were filled above")
    };
    if g.residual.abs() < EPSILON || g.percentile < EPSILON {
        return SideDisplacement::Invalid {
            reason: UndefinedReason::ZeroNormalizer,
        };
    }
    SideDisplacement::Valid {
        vertical: (k1.residual - k0.residual) / g.residual,
        horizontal: (k1.percentile - k0.percentile) / g.percentile,
    }
}

/// Group knees must already be in global rank space.
pub fn displacements(global: &KneePair, g0: &KneePair, g1: &KneePair) -> Displacements {
    Displacements {
        left: side((global, &global.left), (g0, &g0.left), (g1, &g1.left)),
        right: side((global, &global.right), (g0, &g0.right), (g1, &g1.right)),
    }
}

pub fn displacements_of(knees: &KneeAnalysis) -> Displacements {
    displacements(&knees.global, &knees.group0, &knees.group1)
}

fn half_abs_mean(disp: &Displacements, pick: fn(&SideDisplacement) -> Option<f64>) -> IndicatorValue {
    match (pick(&disp.left), pick(&disp.right)) {
        (Some(l), Some(r)) => IndicatorValue::defined(0.5 * l.abs() + 0.5 * r.abs()),
        (Some(l), None) => IndicatorValue::partial(l.abs(), disp.right.reason().expect("invalid side")),
        (None, Some(r)) => IndicatorValue::partial(r.abs(), disp.left.reason().expect("invalid side")),
        (None, None) => IndicatorValue::undefined(disp.left.reason().expect("invalid side")),
    }
}

/// Mean relative horizontal knee displacement.
pub fn f_shift(disp: &Displacements) -> IndicatorValue {
    half_abs_mean(disp, SideDisplacement::horizontal)
}

/// Mean relative vertical knee displacement.
pub fn f_acc(disp: &Displacements) -> IndicatorValue {
    half_abs_mean(disp, SideDisplacement::vertical)
}

/// Fraction of records whose hard prediction equals the label.
pub fn accuracy(records: &[PredictionRecord], threshold: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let correct = records
        .iter()
        .filter(|r| u8::from(r.predicted_positive(threshold)) == r.label)
        .count();
    Ok(correct as f64 / records.len() as f64)
}

/// Positive-prediction rate per group, indexed by [`Group::index`].
pub fn positive_rates(records: &[PredictionRecord], threshold: f64) -> Result<[f64; 2]> {
    let mut positives = [0usize; 2];
    let mut totals = [0usize; 2];
    for r in records {
        let g = r.group.index();
        totals[g] += 1;
        positives[g] += usize::from(r.predicted_positive(threshold));
    }
    for g in Group::BOTH {
        if totals[g.index()] == 0 {
            return Err(AnalysisError::MissingGroup(g));
        }
    }
    Ok([0, 1].map(|g| positives[g] as f64 / totals[g] as f64))
}

/// Sensitive-group positive rate over non-sensitive positive rate.
pub fn demographic_parity(records: &[PredictionRecord], threshold: f64) -> Result<IndicatorValue> {
    let [rate0, rate1] = positive_rates(records, threshold)?;
    if rate0 < EPSILON {
        return Ok(IndicatorValue::undefined(UndefinedReason::ZeroBaseRate));
    }
    Ok(IndicatorValue::defined(rate1 / rate0))
}

pub fn mean_difference(records: &[PredictionRecord], threshold: f64) -> Result<f64> {
    let [rate0, rate1] = positive_rates(records, threshold)?;
    Ok((rate1 - rate0).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Exclusive lower rank bound.
    pub lo: f64,
    /// Inclusive upper rank bound.
    pub hi: f64,
    pub count_group0: usize,
    pub count_group1: usize,
    pub mean_group0: Option<f64>,
    pub mean_group1: Option<f64>,
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub segments: Vec<Segment>,
}

/// `0`, the left knee, `mid_bins - 1` evenly spaced cuts between the knees,
/// the right knee, `1`. An undetected knee is replaced by the rank-axis end
/// on its side and contributes no boundary of its own.
pub fn segment_boundaries(knees: &KneePair, mid_bins: usize) -> Vec<f64> {
    let left = knees.left.location.map(|l| l.percentile);
    let right = knees.right.location.map(|l| l.percentile);
    let start = left.unwrap_or(0.0);
    let end = right.unwrap_or(1.0);
    let bins = mid_bins.max(1);

    let mut out = vec![0.0];
    out.extend(left);
    out.extend((1..bins).map(|k| start + (end - start) * k as f64 / bins as f64));
    out.extend(right);
    out.push(1.0);
    out.dedup();
    out
}

fn accumulate(curve: &SortedCurve, bounds: &[f64]) -> Vec<(usize, f64)> {
    let mut acc = vec![(0usize, 0.0f64); bounds.len() - 1];
    let mut seg = 0;
    for (&rank, &residual) in curve.rank_positions().iter().zip(curve.residuals()) {
        while seg + 1 < acc.len() && rank > bounds[seg + 1] {
            seg += 1;
        }
        acc[seg].0 += 1;
        acc[seg].1 += residual;
    }
    acc
}

/// Per-segment group means and gaps. Each group's samples are placed at
/// their own normalized rank, so segments compare the groups' curves at
/// matching quantiles.
pub fn adaptive_segments(global_knees: &KneePair, group0: &SortedCurve, group1: &SortedCurve, mid_bins: usize) -> SegmentStats {
    let bounds = segment_boundaries(global_knees, mid_bins);
    let a = accumulate(group0, &bounds);
    let b = accumulate(group1, &bounds);
    let mean = |(count, sum): (usize, f64)| (count > 0).then(|| sum / count as f64);
    let segments = bounds
        .windows(2)
        .zip(a.into_iter().zip(b))
        .map(|(w, (s0, s1))| {
            let (m0, m1) = (mean(s0), mean(s1));
            Segment {
                lo: w[0],
                hi: w[1],
                count_group0: s0.0,
                count_group1: s1.0,
                mean_group0: m0,
                mean_group1: m1,
                gap: m0.zip(m1).map(|(x, y)| (y - x).abs()),
            }
        })
        .collect();
    SegmentStats { segments }
}
