//! Kneedle knee detection and the twin knees of a sorted residual curve.
//!
//! A sorted residual curve is split at its median into a left half, where
//! the convex knee sits, and a right half, where the concave knee sits.
//! Each half is handed to [`kneedle`] with a sensitivity that starts at 1.0
//! and is halved on failure down to 0.125.

use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, Result};
use crate::residuals::SortedCurve;

/// Smallest curve for which both halves have at least three points.
pub const MIN_TWIN_KNEE_POINTS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveShape {
    ConvexIncreasing,
    ConcaveIncreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KneeKind {
    ConvexLeft,
    ConcaveRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Global,
    Group0,
    Group1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KneeLocation {
    pub residual: f64,
    /// Normalized rank in (0, 1].
    pub percentile: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KneePoint {
    pub kind: KneeKind,
    /// `None` when no knee survived the sensitivity back-off.
    pub location: Option<KneeLocation>,
    pub sensitivity_used: f64,
}

impl KneePoint {
    pub fn undetected(kind: KneeKind, sensitivity_used: f64) -> Self {
        Self {
            kind,
            location: None,
            sensitivity_used,
        }
    }

    pub fn detected(&self) -> bool {
        self.location.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KneePair {
    pub scope: Scope,
    pub left: KneePoint,
    pub right: KneePoint,
    /// Set when the curve was too short to look for knees at all.
    pub too_few_points: bool,
}

impl KneePair {
    fn undetected(scope: Scope, sensitivity: f64, too_few_points: bool) -> Self {
        Self {
            scope,
            left: KneePoint::undetected(KneeKind::ConvexLeft, sensitivity),
            right: KneePoint::undetected(KneeKind::ConcaveRight, sensitivity),
            too_few_points,
        }
    }

    pub fn detected_count(&self) -> usize {
        usize::from(self.left.detected()) + usize::from(self.right.detected())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KneeConfig {
    pub initial_sensitivity: f64,
    pub min_sensitivity: f64,
    /// Centered moving-average width applied to y before detection. Off by default.
    pub smoothing_window: Option<usize>,
}

impl Default for KneeConfig {
    fn default() -> Self {
        Self {
            initial_sensitivity: 1.0,
            min_sensitivity: 0.125,
            smoothing_window: None,
        }
    }
}

impl KneeConfig {
    /// Sensitivities tried in order: halving from the initial value down to the minimum.
    pub fn schedule(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut s = self.initial_sensitivity;
        while s >= self.min_sensitivity - 1e-12 && s > 0.0 {
            out.push(s);
            s /= 2.0;
        }
        out
    }
}

fn validate(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.len() < 3 {
        return Err(AnalysisError::TooFewPoints { needed: 3, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonMonotonicInput);
    }
    let x_ok = x.windows(2).all(|w| w[0] < w[1]);
    let y_ok = y.windows(2).all(|w| w[0] <= w[1]);
    if x_ok && y_ok {
        Ok(())
    } else {
        Err(AnalysisError::NonMonotonicInput)
    }
}

fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let lo = v[0];
    let span = v[v.len() - 1] - lo;
    if span <= 0.0 {
        return None;
    }
    Some(v.iter().map(|&t| (t - lo) / span).collect())
}

/// Difference curve whose maxima mark knees. Convex curves are rotated by
/// `(x, y) -> (1 - x, 1 - y)` so that the knee turns into a maximum; index
/// `j` of the returned curve then corresponds to input index `n - 1 - j`.
fn difference_curve(xn: &[f64], yn: &[f64], shape: CurveShape) -> Vec<f64> {
    match shape {
        CurveShape::ConcaveIncreasing => yn.iter().zip(xn).map(|(y, x)| y - x).collect(),
        CurveShape::ConvexIncreasing => yn
            .iter()
            .zip(xn)
            .rev()
            .map(|(y, x)| (1.0 - y) - (1.0 - x))
            .collect(),
    }
}

fn local_maxima(diff: &[f64]) -> Vec<usize> {
    (1..diff.len() - 1)
        .filter(|&i| diff[i] > diff[i - 1] && diff[i] >= diff[i + 1])
        .collect()
}

/// Kneedle on a monotone increasing curve.
///
/// Both axes are min-max normalized, so the result does not depend on axis
/// scale. Each local maximum of the difference curve gets the threshold
/// `height - sensitivity * mean_dx`; the first one whose difference curve
/// falls below its threshold before the next local maximum is the knee.
/// Returns `Ok(None)` for curves with no such maximum (including straight
/// lines and constant `y`).
pub fn kneedle(x: &[f64], y: &[f64], shape: CurveShape, sensitivity: f64) -> Result<Option<usize>> {
    validate(x, y)?;
    let (Some(xn), Some(yn)) = (normalize(x), normalize(y)) else {
        return Ok(None);
    };
    Ok(knee_on_normalized(&xn, &yn, shape, sensitivity))
}

fn knee_on_normalized(xn: &[f64], yn: &[f64], shape: CurveShape, sensitivity: f64) -> Option<usize> {
    let n = xn.len();
    let diff = difference_curve(xn, yn, shape);
    let maxima = local_maxima(&diff);
    // normalized x spans exactly [0, 1]
    let mean_dx = 1.0 / (n - 1) as f64;

    let found = maxima.iter().enumerate().find_map(|(k, &cand)| {
        let end = maxima.get(k + 1).copied().unwrap_or(n);
        let threshold = diff[cand] - sensitivity * mean_dx;
        diff[cand + 1..end].iter().any(|&d| d < threshold).then_some(cand)
    })?;

    Some(match shape {
        CurveShape::ConcaveIncreasing => found,
        CurveShape::ConvexIncreasing => n - 1 - found,
    })
}

fn moving_average(y: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let n = y.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Kneedle with geometric sensitivity back-off. Returns the index and the
/// sensitivity that found it, or `None` and the last sensitivity tried.
pub fn adaptive_kneedle(
    x: &[f64],
    y: &[f64],
    shape: CurveShape,
    config: &KneeConfig,
) -> Result<(Option<usize>, f64)> {
    validate(x, y)?;
    let smoothed;
    let y = match config.smoothing_window {
        Some(w) if w > 1 => {
            smoothed = moving_average(y, w);
            &smoothed[..]
        }
        _ => y,
    };
    let schedule = config.schedule();
    let last = schedule.last().copied().unwrap_or(config.min_sensitivity);
    let (Some(xn), Some(yn)) = (normalize(x), normalize(y)) else {
        return Ok((None, last));
    };
    for &s in &schedule {
        if let Some(i) = knee_on_normalized(&xn, &yn, shape, s) {
            return Ok((Some(i), s));
        }
    }
    Ok((None, last))
}

/// Index bounds of the two halves: the left half ends at the upper median
/// index, the right half starts at the lower one, so both reach the median.
fn halves(n: usize) -> (std::ops::RangeInclusive<usize>, std::ops::Range<usize>) {
    let lower = (n - 1) / 2;
    let upper = n / 2;
    (0..=upper, lower..n)
}

pub fn detect_twin_knees(curve: &SortedCurve) -> Result<KneePair> {
    detect_twin_knees_with(curve, &KneeConfig::default(), Scope::Global)
}

pub fn detect_twin_knees_with(curve: &SortedCurve, config: &KneeConfig, scope: Scope) -> Result<KneePair> {
    let n = curve.len();
    if n < MIN_TWIN_KNEE_POINTS {
        return Err(AnalysisError::TooFewPoints {
            needed: MIN_TWIN_KNEE_POINTS,
            got: n,
        });
    }
    let (left, right) = halves(n);
    let x = curve.rank_positions();
    let y = curve.residuals();

    let locate = |idx: Option<usize>, offset: usize| {
        idx.map(|i| KneeLocation {
            residual: y[offset + i],
            percentile: x[offset + i],
        })
    };

    let (li, ls) = adaptive_kneedle(&x[left.clone()], &y[left], CurveShape::ConvexIncreasing, config)?;
    let right_start = right.start;
    let (ri, rs) = adaptive_kneedle(&x[right.clone()], &y[right], CurveShape::ConcaveIncreasing, config)?;

    Ok(KneePair {
        scope,
        left: KneePoint {
            kind: KneeKind::ConvexLeft,
            location: locate(li, 0),
            sensitivity_used: ls,
        },
        right: KneePoint {
            kind: KneeKind::ConcaveRight,
            location: locate(ri, right_start),
            sensitivity_used: rs,
        },
        too_few_points: false,
    })
}

/// Re-express a subgroup knee in the global curve's rank space. The residual
/// is kept; the percentile becomes `#{global residuals <= d} / |D|`.
pub fn map_subgroup_knee_to_global(knee: &KneePoint, global: &SortedCurve) -> Result<KneePoint> {
    let loc = knee.location.ok_or(AnalysisError::NotDetected)?;
    let rank = global.rank_of(loc.residual);
    Ok(KneePoint {
        location: Some(KneeLocation {
            residual: loc.residual,
            percentile: rank as f64 / global.len() as f64,
        }),
        ..*knee
    })
}

/// Twin knees for the global curve and both groups, with group knees
/// already mapped into global rank space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KneeAnalysis {
    pub global: KneePair,
    pub group0: KneePair,
    pub group1: KneePair,
}

impl KneeAnalysis {
    pub fn pairs(&self) -> [&KneePair; 3] {
        [&self.global, &self.group0, &self.group1]
    }
}

fn pair_or_undetected(curve: &SortedCurve, config: &KneeConfig, scope: Scope) -> KneePair {
    match detect_twin_knees_with(curve, config, scope) {
        Ok(pair) => pair,
        Err(_) => KneePair::undetected(scope, config.initial_sensitivity, true),
    }
}

fn map_pair(pair: KneePair, global: &SortedCurve) -> KneePair {
    let map = |k: KneePoint| map_subgroup_knee_to_global(&k, global).unwrap_or(k);
    KneePair {
        left: map(pair.left),
        right: map(pair.right),
        ..pair
    }
}

pub fn knee_analysis(global: &SortedCurve, group0: &SortedCurve, group1: &SortedCurve) -> KneeAnalysis {
    knee_analysis_with(global, group0, group1, &KneeConfig::default())
}

pub fn knee_analysis_with(
    global: &SortedCurve,
    group0: &SortedCurve,
    group1: &SortedCurve,
    config: &KneeConfig,
) -> KneeAnalysis {
    KneeAnalysis {
        global: pair_or_undetected(global, config, Scope::Global),
        group0: map_pair(pair_or_undetected(group0, config, Scope::Group0), global),
        group1: map_pair(pair_or_undetected(group1, config, Scope::Group1), global),
    }
}
