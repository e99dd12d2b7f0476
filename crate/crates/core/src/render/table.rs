//! Plain-text and CSV indicator tables in the column order
//! Acc, DP, MD, F_mean, F_shift, F_acc.

use std::fmt::Write;
use std::io::Read;

use serde::Deserialize;

use crate::indicators::IndicatorValue;
use crate::report::IndicatorReport;

pub const COLUMNS: [&str; 6] = ["Acc", "DP", "MD", "F_mean", "F_shift", "F_acc"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub value: Option<f64>,
    pub partial: bool,
}

impl From<IndicatorValue> for Cell {
    fn from(v: IndicatorValue) -> Self {
        Self {
            value: v.value,
            partial: v.partial,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Self {
            value: Some(v),
            partial: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub cells: [Cell; 6],
    /// Free-form diagnostics for the CSV `notes` column.
    pub notes: Vec<String>,
}

impl ReportRow {
    pub fn from_report(label: impl Into<String>, r: &IndicatorReport) -> Self {
        let mut notes = Vec::new();
        for (name, v) in [("dp", r.dp), ("md", r.md), ("f_mean", r.f_mean), ("f_shift", r.f_shift), ("f_acc", r.f_acc)] {
            if let Some(reason) = v.reason {
                let kind = if v.partial { "partial" } else { "undefined" };
                notes.push(format!("{name} {kind}: {reason}"));
            }
        }
        Self {
            label: label.into(),
            cells: [r.acc.into(), r.dp.into(), r.md.into(), r.f_mean.into(), r.f_shift.into(), r.f_acc.into()],
            notes,
        }
    }
}

#[derive(Deserialize)]
struct StoredRow {
    algorithm: String,
    acc: Option<f64>,
    dp: Option<f64>,
    md: Option<f64>,
    f_mean: Option<f64>,
    f_shift: Option<f64>,
    f_acc: Option<f64>,
}

/// Rows stored as CSV with header
/// `algorithm,acc,dp,md,f_mean,f_shift,f_acc`; empty cells are undefined.
pub fn read_stored_rows<R: Read>(reader: R) -> Result<Vec<ReportRow>, csv::Error> {
    csv::Reader::from_reader(reader)
        .deserialize::<StoredRow>()
        .map(|row| {
            row.map(|r| ReportRow {
                label: r.algorithm,
                cells: [r.acc, r.dp, r.md, r.f_mean, r.f_shift, r.f_acc].map(|value| Cell { value, partial: false }),
                notes: Vec::new(),
            })
        })
        .collect()
}

fn table_cell(c: &Cell) -> String {
    match c.value {
        Some(v) if c.partial => format!("{v:.3}*"),
        Some(v) => format!("{v:.3}"),
        None => "n/a".to_string(),
    }
}

/// Aligned text table: labels left-aligned, values right-aligned at three
/// decimals. Partial values carry a `*` and a footnote.
pub fn render_table(label_header: &str, rows: &[ReportRow]) -> String {
    let cells: Vec<Vec<String>> = rows.iter().map(|r| r.cells.iter().map(table_cell).collect()).collect();
    let label_w = rows
        .iter()
        .map(|r| r.label.chars().count())
        .chain([label_header.chars().count()])
        .max()
        .unwrap_or(0);
    let widths: Vec<usize> = COLUMNS
        .iter()
        .enumerate()
        .map(|(i, h)| cells.iter().map(|c| c[i].len()).chain([h.len()]).max().unwrap_or(0))
        .collect();

    let mut out = String::new();
    let mut line = |label: &str, values: &[&str]| {
        let mut s = format!("{label:<label_w$}");
        for (v, w) in values.iter().zip(&widths) {
            let _ = write!(s, "  {v:>w$}");
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(label_header, &COLUMNS);
    for (row, c) in rows.iter().zip(&cells) {
        let refs: Vec<&str> = c.iter().map(String::as_str).collect();
        line(&row.label, &refs);
    }
    if rows.iter().any(|r| r.cells.iter().any(|c| c.partial)) {
        out.push_str("* partial: computed from one knee side only\n");
    }
    out
}

fn csv_cell(c: &Cell) -> String {
    c.value.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV with full-precision values, for exact comparisons.
pub fn render_csv(label_header: &str, rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![label_header.to_lowercase()];
    header.extend(COLUMNS.iter().map(|c| c.to_lowercase()));
    header.push("notes".into());
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let mut rec = vec![r.label.clone()];
        rec.extend(r.cells.iter().map(csv_cell));
        rec.push(r.notes.join("; "));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}
