use rise_core::indicators::SegmentStats;
use rise_core::knee::{KneeKind, KneePair, Scope};
use rise_core::render::{downsample_indices, MAX_CURVE_POINTS};
use rise_core::report::{Analysis, IndicatorReport};
use rise_core::residuals::{Group, MedianSummary};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub rank: f64,
    pub residual: f64,
    pub group: Group,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KneeMarker {
    pub scope: Scope,
    pub kind: KneeKind,
    pub detected: bool,
    /// Normalized rank in the global curve.
    pub rank: Option<f64>,
    pub residual: Option<f64>,
}

/// One rendered view. Points may be thinned; everything else is computed
/// on the full selection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePayload {
    pub n_points_total: usize,
    pub downsampled: bool,
    pub points: Vec<CurvePoint>,
    pub medians: MedianSummary,
    pub knees: Vec<KneeMarker>,
    pub segments: SegmentStats,
    pub report: IndicatorReport,
}

fn markers(pair: &KneePair) -> [KneeMarker; 2] {
    [pair.left, pair.right].map(|k| KneeMarker {
        scope: pair.scope,
        kind: k.kind,
        detected: k.detected(),
        rank: k.location.map(|l| l.percentile),
        residual: k.location.map(|l| l.residual),
    })
}

impl CurvePayload {
    pub fn from_analysis(a: Analysis, max_points: usize) -> Self {
        let g = &a.global;
        let idx = downsample_indices(g.len(), max_points);
        let points = idx
            .iter()
            .map(|&i| CurvePoint {
                rank: g.rank_positions()[i],
                residual: g.residuals()[i],
                group: g.group_tags()[i],
            })
            .collect();
        Self {
            n_points_total: g.len(),
            downsampled: idx.len() < g.len(),
            points,
            medians: a.medians,
            knees: a.knees.pairs().into_iter().flat_map(markers).collect(),
            segments: a.segments,
            report: a.report,
        }
    }
}

impl From<Analysis> for CurvePayload {
    fn from(a: Analysis) -> Self {
        Self::from_analysis(a, MAX_CURVE_POINTS)
    }
}
