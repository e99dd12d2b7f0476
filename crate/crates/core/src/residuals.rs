//! Signed residuals and the sorted residual curve.
//!
//! A residual is `prob_positive - label`, so positive values are
//! overestimates and negative values underestimates. Everything downstream
//! (medians, knees, indicators) works on the ascending arrangement of these
//! residuals plotted against normalized rank.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, Result};

/// Binary sensitive-attribute value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Group {
    /// Attribute value 0.
    NonSensitive,
    /// Attribute value 1.
    Sensitive,
}

impl Group {
    pub const BOTH: [Group; 2] = [Group::NonSensitive, Group::Sensitive];

    pub fn index(self) -> usize {
        match self {
            Group::NonSensitive => 0,
            Group::Sensitive => 1,
        }
    }

    pub fn other(self) -> Group {
        match self {
            Group::NonSensitive => Group::Sensitive,
            Group::Sensitive => Group::NonSensitive,
        }
    }
}

impl From<Group> for u8 {
    fn from(g: Group) -> u8 {
        g.index() as u8
    }
}

impl TryFrom<u8> for Group {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        match v {
            0 => Ok(Group::NonSensitive),
            1 => Ok(Group::Sensitive),
            other => Err(format!("group must be 0 or 1, got {other}")),
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// One sample's prediction, already projected onto a single binary attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub prob_positive: f64,
    pub label: u8,
    pub group: Group,
    pub environment: Arc<str>,
}

impl PredictionRecord {
    pub fn new(prob_positive: f64, label: u8, group: Group, environment: impl Into<Arc<str>>) -> Self {
        Self {
            prob_positive,
            label,
            group,
            environment: environment.into(),
        }
    }

    /// Hard prediction at `threshold` (`prob >= threshold` is positive).
    pub fn predicted_positive(&self, threshold: f64) -> bool {
        self.prob_positive >= threshold
    }

    fn check(&self, index: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.prob_positive) {
            return Err(AnalysisError::Domain {
                index,
                reason: format!("prob_positive {} outside [0, 1]", self.prob_positive),
            });
        }
        if self.label > 1 {
            return Err(AnalysisError::Domain {
                index,
                reason: format!("label {} is not 0 or 1", self.label),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub residual: f64,
    pub group: Group,
    pub environment: Arc<str>,
}

/// Signed residual `prob_positive - label` for every record, in input order.
pub fn compute_residuals(records: &[PredictionRecord]) -> Result<Vec<ResidualSample>> {
    if records.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.check(i)?;
            Ok(ResidualSample {
                residual: r.prob_positive - f64::from(r.label),
                group: r.group,
                environment: Arc::clone(&r.environment),
            })
        })
        .collect()
}

/// Residuals in ascending order against normalized rank `(i + 1) / n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SortedCurve {
    residuals: Vec<f64>,
    rank_positions: Vec<f64>,
    group_tags: Vec<Group>,
}

impl SortedCurve {
    /// Sorts by `(residual, group, input index)`, which makes the result
    /// independent of input order.
    pub fn build(samples: &[ResidualSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(AnalysisError::EmptyInput);
        }
        let mut keyed: Vec<(f64, Group, usize)> = samples
            .iter()
            .enumerate()
            .map(|(i, s)| (s.residual, s.group, i))
            .collect();
        keyed.sort_unstable_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let residuals = keyed.iter().map(|k| k.0).collect();
        let group_tags = keyed.iter().map(|k| k.1).collect();
        Ok(Self::from_parts(residuals, group_tags))
    }

    /// Curve over bare residual values that all belong to `group`.
    pub fn from_residuals(values: &[f64], group: Group) -> Result<Self> {
        let samples: Vec<ResidualSample> = values
            .iter()
            .map(|&residual| ResidualSample {
                residual,
                group,
                environment: Arc::from(""),
            })
            .collect();
        Self::build(&samples)
    }

    fn from_parts(residuals: Vec<f64>, group_tags: Vec<Group>) -> Self {
        let n = residuals.len();
        let rank_positions = (1..=n).map(|i| i as f64 / n as f64).collect();
        Self {
            residuals,
            rank_positions,
            group_tags,
        }
    }

    /// The points of one group, in curve order. Equivalent to building a
    /// curve from that group's samples alone.
    pub fn subgroup(&self, group: Group) -> Option<SortedCurve> {
        let (residuals, group_tags): (Vec<f64>, Vec<Group>) = self
            .residuals
            .iter()
            .zip(&self.group_tags)
            .filter(|(_, &g)| g == group)
            .map(|(&r, &g)| (r, g))
            .unzip();
        (!residuals.is_empty()).then(|| Self::from_parts(residuals, group_tags))
    }

    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn rank_positions(&self) -> &[f64] {
        &self.rank_positions
    }

    pub fn group_tags(&self) -> &[Group] {
        &self.group_tags
    }

    /// Count of residuals `<= value` (rightmost position among ties).
    pub fn rank_of(&self, value: f64) -> usize {
        self.residuals.partition_point(|&r| r <= value)
    }

    pub fn median(&self) -> f64 {
        // a built curve is non-empty and sorted
        median(&self.residuals).expect("sorted curve is non-empty and ascending")
    }
}

/// Alias kept for callers that think in terms of the operation name.
pub fn build_sorted_curve(samples: &[ResidualSample]) -> Result<SortedCurve> {
    SortedCurve::build(samples)
}

/// Partition samples by group, preserving input order inside each bucket.
/// Buckets for absent groups are not created.
pub fn split_by_group(samples: &[ResidualSample]) -> Result<BTreeMap<Group, Vec<ResidualSample>>> {
    if samples.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let mut buckets: BTreeMap<Group, Vec<ResidualSample>> = BTreeMap::new();
    for s in samples {
        buckets.entry(s.group).or_default().push(s.clone());
    }
    Ok(buckets)
}

/// Median of an ascending slice; even lengths average the two middle values.
pub fn median(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n == 0 {
        return Err(AnalysisError::EmptyInput);
    }
    if values.windows(2).any(|w| w[0] > w[1]) {
        return Err(AnalysisError::NotSorted);
    }
    let mid = n / 2;
    if n % 2 == 1 {
        Ok(values[mid])
    } else {
        Ok((values[mid - 1] + values[mid]) / 2.0)
    }
}

/// Global and per-group residual medians, plus group medians re-centered
/// on the global one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianSummary {
    pub m_global: f64,
    pub m_group0: f64,
    pub m_group1: f64,
    pub m_tilde0: f64,
    pub m_tilde1: f64,
}

impl MedianSummary {
    pub fn from_medians(m_global: f64, m_group0: f64, m_group1: f64) -> Self {
        Self {
            m_global,
            m_group0,
            m_group1,
            m_tilde0: m_group0 - m_global,
            m_tilde1: m_group1 - m_global,
        }
    }

    /// From already-built curves; the group curves must be non-empty.
    pub fn from_curves(global: &SortedCurve, group0: &SortedCurve, group1: &SortedCurve) -> Self {
        Self::from_medians(global.median(), group0.median(), group1.median())
    }
}

pub fn median_summary(samples: &[ResidualSample]) -> Result<MedianSummary> {
    if samples.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let sorted = |pred: &dyn Fn(&ResidualSample) -> bool| {
        let mut v: Vec<f64> = samples.iter().filter(|s| pred(s)).map(|s| s.residual).collect();
        v.sort_unstable_by(f64::total_cmp);
        v
    };
    let all = sorted(&|_| true);
    let g0 = sorted(&|s| s.group == Group::NonSensitive);
    let g1 = sorted(&|s| s.group == Group::Sensitive);
    if g0.is_empty() {
        return Err(AnalysisError::MissingGroup(Group::NonSensitive));
    }
    if g1.is_empty() {
        return Err(AnalysisError::MissingGroup(Group::Sensitive));
    }
    Ok(MedianSummary::from_medians(median(&all)?, median(&g0)?, median(&g1)?))
}
