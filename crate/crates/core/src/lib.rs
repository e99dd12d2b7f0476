//! Fairness diagnostics from sorted signed residuals.

pub mod error;
pub mod indicators;
pub mod knee;
pub mod render;
pub mod report;
pub mod residuals;
pub mod store;

pub use error::{AnalysisError, Result};
pub use report::{analyze, full_report, IndicatorReport, ReportOptions, Selection};
pub use residuals::{Group, PredictionRecord};
