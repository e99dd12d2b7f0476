//! The end-to-end pipeline for one selection: records in, curves, knees,
//! segments and an [`IndicatorReport`] out.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::AnalysisError;
use crate::indicators::{
    self, adaptive_segments, displacements_of, Displacements, IndicatorValue, SegmentStats,
};
use crate::knee::{knee_analysis_with, KneeAnalysis, KneeConfig, KneePair};
use crate::residuals::{compute_residuals, Group, MedianSummary, PredictionRecord, SortedCurve};

/// Environment filter that keeps every row.
pub const ALL_ENVIRONMENTS: &str = "all";

pub const DEFAULT_MID_BINS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Selection {
    pub run_id: String,
    pub attribute: String,
    pub environment: String,
}

impl Selection {
    pub fn new(run_id: impl Into<String>, attribute: impl Into<String>, environment: impl Into<String>) -> Self {
        Self {
            run_id: run_id.into(),
            attribute: attribute.into(),
            environment: environment.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub threshold: f64,
    pub mid_bins: usize,
    pub knees: KneeConfig,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            threshold: indicators::DEFAULT_THRESHOLD,
            mid_bins: DEFAULT_MID_BINS,
            knees: KneeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Residuals,
    Curves,
    Metrics,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Residuals => "residuals",
            Stage::Curves => "curves",
            Stage::Metrics => "metrics",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{stage} stage failed: {source}")]
pub struct ReportError {
    pub stage: Stage,
    #[source]
    pub source: AnalysisError,
}

impl ReportError {
    fn at(stage: Stage) -> impl FnOnce(AnalysisError) -> Self {
        move |source| Self { stage, source }
    }

    /// The absent group, when that is why the report failed.
    pub fn missing_group(&self) -> Option<Group> {
        match self.source {
            AnalysisError::MissingGroup(g) => Some(g),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideStatus {
    pub left_detected: bool,
    pub right_detected: bool,
    pub too_few_points: bool,
}

impl From<&KneePair> for SideStatus {
    fn from(p: &KneePair) -> Self {
        Self {
            left_detected: p.left.detected(),
            right_detected: p.right.detected(),
            too_few_points: p.too_few_points,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KneeStatus {
    pub global: SideStatus,
    pub group0: SideStatus,
    pub group1: SideStatus,
}

/// Acc, DP and MD for one selection. These are what the store precomputes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardMetrics {
    pub acc: f64,
    pub dp: IndicatorValue,
    pub md: IndicatorValue,
}

impl StandardMetrics {
    /// Accuracy always; DP and MD become undefined when a group is absent.
    pub fn compute(records: &[PredictionRecord], threshold: f64) -> Result<Self, AnalysisError> {
        let acc = indicators::accuracy(records, threshold)?;
        let (dp, md) = match indicators::demographic_parity(records, threshold) {
            Ok(dp) => (dp, IndicatorValue::defined(indicators::mean_difference(records, threshold)?)),
            Err(AnalysisError::MissingGroup(g)) => {
                let missing = IndicatorValue::undefined(indicators::UndefinedReason::missing(g));
                (missing, missing)
            }
            Err(e) => return Err(e),
        };
        Ok(Self { acc, dp, md })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorReport {
    pub selection: Selection,
    pub threshold: f64,
    pub n_total: usize,
    pub n_group0: usize,
    pub n_group1: usize,
    pub acc: f64,
    pub dp: IndicatorValue,
    pub md: IndicatorValue,
    pub f_mean: IndicatorValue,
    pub f_shift: IndicatorValue,
    pub f_acc: IndicatorValue,
    pub knee_status: KneeStatus,
    /// True when Acc/DP/MD were taken from the store instead of recomputed.
    pub precomputed_standard_metrics: bool,
}

impl IndicatorReport {
    pub fn standard_metrics(&self) -> StandardMetrics {
        StandardMetrics {
            acc: self.acc,
            dp: self.dp,
            md: self.md,
        }
    }

    /// Replace Acc/DP/MD with stored values.
    pub fn with_standard_metrics(mut self, stored: StandardMetrics) -> Self {
        self.acc = stored.acc;
        self.dp = stored.dp;
        self.md = stored.md;
        self.precomputed_standard_metrics = true;
        self
    }
}

/// Every intermediate of the pipeline, for callers that draw the curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub global: SortedCurve,
    pub group0: SortedCurve,
    pub group1: SortedCurve,
    pub medians: MedianSummary,
    pub knees: KneeAnalysis,
    pub displacements: Displacements,
    pub segments: SegmentStats,
    pub report: IndicatorReport,
}

pub fn analyze(selection: &Selection, records: &[PredictionRecord], options: &ReportOptions) -> Result<Analysis, ReportError> {
    let samples = compute_residuals(records).map_err(ReportError::at(Stage::Residuals))?;
    let global = SortedCurve::build(&samples).map_err(ReportError::at(Stage::Curves))?;
    let group = |g| {
        global
            .subgroup(g)
            .ok_or(AnalysisError::MissingGroup(g))
            .map_err(ReportError::at(Stage::Curves))
    };
    let group0 = group(Group::NonSensitive)?;
    let group1 = group(Group::Sensitive)?;

    let medians = MedianSummary::from_curves(&global, &group0, &group1);
    let knees = knee_analysis_with(&global, &group0, &group1, &options.knees);
    let displacements = displacements_of(&knees);
    let segments = adaptive_segments(&knees.global, &group0, &group1, options.mid_bins);
    let standard = StandardMetrics::compute(records, options.threshold).map_err(ReportError::at(Stage::Metrics))?;

    let report = IndicatorReport {
        selection: selection.clone(),
        threshold: options.threshold,
        n_total: global.len(),
        n_group0: group0.len(),
        n_group1: group1.len(),
        acc: standard.acc,
        dp: standard.dp,
        md: standard.md,
        f_mean: IndicatorValue::defined(indicators::f_mean(&medians)),
        f_shift: indicators::f_shift(&displacements),
        f_acc: indicators::f_acc(&displacements),
        knee_status: KneeStatus {
            global: (&knees.global).into(),
            group0: (&knees.group0).into(),
            group1: (&knees.group1).into(),
        },
        precomputed_standard_metrics: false,
    };

    Ok(Analysis {
        global,
        group0,
        group1,
        medians,
        knees,
        displacements,
        segments,
        report,
    })
}

/// Residual indicators computed on the fly plus Acc/DP/MD.
pub fn full_report(selection: &Selection, records: &[PredictionRecord], options: &ReportOptions) -> Result<IndicatorReport, ReportError> {
    analyze(selection, records, options).map(|a| a.report)
}
