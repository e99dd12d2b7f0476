//! Prediction CSV parsing and the on-disk run store.
//!
//! Layout under the store root:
//!
//! ```text
//! manifest.json               format_version + one entry per run
//! runs/<run_id>/predictions.csv
//! runs/<run_id>/metrics.json  precomputed Acc/DP/MD per environment
//! ```
//!
//! Registration is serialized through a writer lock. Readers take an
//! `Arc<Snapshot>` and never block each other. A snapshot is reloaded when
//! the manifest file changes on disk, so runs ingested by another process
//! show up without a restart.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::{analyze, Analysis, ReportError, ReportOptions, Selection, StandardMetrics, ALL_ENVIRONMENTS};
use crate::residuals::{Group, PredictionRecord};

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST_FILE: &str = "manifest.json";
const PREDICTIONS_FILE: &str = "predictions.csv";
const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}, column {column}: {reason}")]
    Parse { line: u64, column: usize, reason: String },

    #[error("line {line}, field `{field}`: {reason}")]
    Validation { line: u64, field: String, reason: String },

    #[error("file has no data rows")]
    EmptyFile,

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl IngestError {
    /// Source line the error points at, when there is one.
    pub fn line(&self) -> Option<u64> {
        match self {
            Self::Parse { line, .. } | Self::Validation { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store directory {0} does not exist")]
    MissingRoot(PathBuf),

    #[error("run `{0}` is already registered")]
    DuplicateRun(String),

    #[error("invalid run id `{0}` (use letters, digits, `.`, `_`, `-`)")]
    InvalidRunId(String),

    #[error("unknown run `{0}`")]
    UnknownRun(String),

    #[error("run `{run}` has no attribute `{attribute}`")]
    UnknownAttribute { run: String, attribute: String },

    #[error("run `{run}` has no environment `{environment}`")]
    UnknownEnvironment { run: String, environment: String },

    #[error("prediction file: {0}")]
    Ingest(#[from] IngestError),

    #[error("store is corrupt: {0}")]
    Corrupt(String),

    #[error("store i/o: {0}")]
    Io(#[from] io::Error),
}

/// One parsed prediction row. Attribute values follow
/// [`PredictionTable::attributes`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub prob: f64,
    pub label: u8,
    pub attributes: Vec<Group>,
    pub environment: Arc<str>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub attributes: Vec<String>,
    pub rows: Vec<PredictionRow>,
}

impl PredictionTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a == name)
    }

    /// Sorted distinct environment tags.
    pub fn environments(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.rows.iter().map(|r| &*r.environment).collect();
        set.into_iter().map(String::from).collect()
    }

    /// Rows matching `environment` (or all rows for `"all"`), projected
    /// onto one attribute column.
    pub fn project(&self, attribute: usize, environment: &str) -> Vec<PredictionRecord> {
        self.rows
            .iter()
            .filter(|r| environment == ALL_ENVIRONMENTS || &*r.environment == environment)
            .map(|r| PredictionRecord {
                prob_positive: r.prob,
                label: r.label,
                group: r.attributes[attribute],
                environment: Arc::clone(&r.environment),
            })
            .collect()
    }
}

fn parse_binary(raw: &str, line: u64, column: usize, field: &str) -> Result<u8, IngestError> {
    let value: i64 = raw.parse().map_err(|_| IngestError::Parse {
        line,
        column,
        reason: format!("`{raw}` is not an integer"),
    })?;
    match value {
        0 | 1 => Ok(value as u8),
        _ => Err(IngestError::Validation {
            line,
            field: field.to_string(),
            reason: format!("{value} is not 0 or 1"),
        }),
    }
}

/// Strict parse of a prediction CSV: header row with `prob`, `label`, `env`
/// and one 0/1 column per attribute, comma separated, LF or CRLF.
pub fn parse_predictions<R: Read>(reader: R) -> Result<PredictionTable, IngestError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = csv.records();

    let header = match records.next() {
        None => return Err(IngestError::EmptyFile),
        Some(r) => r.map_err(csv_error)?,
    };
    let header_line = header.position().map_or(1, |p| p.line());
    let mut prob = None;
    let mut label = None;
    let mut env = None;
    let mut attributes = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, name) in header.iter().enumerate() {
        if name.is_empty() || !seen.insert(name) {
            return Err(IngestError::Parse {
                line: header_line,
                column: i + 1,
                reason: format!("empty or duplicate column name `{name}`"),
            });
        }
        match name {
            "prob" => prob = Some(i),
            "label" => label = Some(i),
            "env" => env = Some(i),
            _ => attributes.push((i, name.to_string())),
        }
    }
    let (Some(prob), Some(label), Some(env)) = (prob, label, env) else {
        return Err(IngestError::Parse {
            line: header_line,
            column: 1,
            reason: "header must contain `prob`, `label` and `env` columns".into(),
        });
    };
    if attributes.is_empty() {
        return Err(IngestError::Parse {
            line: header_line,
            column: 1,
            reason: "header declares no attribute column".into(),
        });
    }

    let width = header.len();
    let mut rows = Vec::new();
    let mut envs: BTreeMap<String, Arc<str>> = BTreeMap::new();
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(IngestError::Parse {
                line,
                column: record.len().min(width) + 1,
                reason: format!("expected {width} fields, found {}", record.len()),
            });
        }

        let raw_prob = &record[prob];
        let p: f64 = raw_prob.parse().map_err(|_| IngestError::Parse {
            line,
            column: prob + 1,
            reason: format!("`{raw_prob}` is not a number"),
        })?;
        if !(0.0..=1.0).contains(&p) {
            return Err(IngestError::Validation {
                line,
                field: "prob".into(),
                reason: format!("{raw_prob} is outside [0, 1]"),
            });
        }
        let y = parse_binary(&record[label], line, label + 1, "label")?;
        let groups = attributes
            .iter()
            .map(|(col, name)| {
                parse_binary(&record[*col], line, col + 1, name)
                    .map(|g| Group::try_from(g).expect("binary value"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let raw_env = &record[env];
        if raw_env.is_empty() {
            return Err(IngestError::Validation {
                line,
                field: "env".into(),
                reason: "environment tag is empty".into(),
            });
        }
        if raw_env == ALL_ENVIRONMENTS {
            return Err(IngestError::Validation {
                line,
                field: "env".into(),
                reason: format!("`{ALL_ENVIRONMENTS}` is reserved"),
            });
        }
        let environment = Arc::clone(envs.entry(raw_env.to_string()).or_insert_with(|| Arc::from(raw_env)));
        rows.push(PredictionRow {
            prob: p,
            label: y,
            attributes: groups,
            environment,
        });
    }
    if rows.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    Ok(PredictionTable {
        attributes: attributes.into_iter().map(|(_, n)| n).collect(),
        rows,
    })
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IngestError::Io(io),
        csv::ErrorKind::Utf8 { err, .. } => IngestError::Parse {
            line,
            column: err.field() + 1,
            reason: "invalid UTF-8".into(),
        },
        other => IngestError::Parse {
            line,
            column: 1,
            reason: format!("{other:?}"),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub dataset: String,
    pub algorithm: String,
    pub attribute_names: Vec<String>,
    pub environments: Vec<String>,
    /// Relative to the store root.
    pub prediction_file: String,
    pub n_rows: usize,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestIndex {
    format_version: u32,
    runs: Vec<RunManifest>,
}

/// Acc/DP/MD for one environment filter, keyed by attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentMetrics {
    pub n: usize,
    pub by_attribute: BTreeMap<String, StandardMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub format_version: u32,
    pub threshold: f64,
    pub overall: EnvironmentMetrics,
    pub by_environment: BTreeMap<String, EnvironmentMetrics>,
}

impl RunMetrics {
    pub fn compute(table: &PredictionTable, attributes: &[String], threshold: f64) -> Self {
        let env_metrics = |env: &str| {
            let by_attribute = attributes
                .iter()
                .map(|a| {
                    let idx = table.attribute_index(a).expect("attribute validated");
                    let records = table.project(idx, env);
                    let m = StandardMetrics::compute(&records, threshold)
                        .expect("validated non-empty selection");
                    (a.clone(), m)
                })
                .collect();
            let n = table.project(0, env).len();
            EnvironmentMetrics { n, by_attribute }
        };
        Self {
            format_version: FORMAT_VERSION,
            threshold,
            overall: env_metrics(ALL_ENVIRONMENTS),
            by_environment: table.environments().iter().map(|e| (e.clone(), env_metrics(e))).collect(),
        }
    }

    pub fn lookup(&self, environment: &str, attribute: &str) -> Option<&StandardMetrics> {
        let env = if environment == ALL_ENVIRONMENTS {
            Some(&self.overall)
        } else {
            self.by_environment.get(environment)
        };
        env.and_then(|e| e.by_attribute.get(attribute))
    }
}

#[derive(Debug)]
pub struct StoredRun {
    pub manifest: RunManifest,
    pub metrics: RunMetrics,
    pub table: PredictionTable,
}

/// Immutable view of the store at one point in time.
#[derive(Debug, Default)]
pub struct Snapshot {
    runs: BTreeMap<String, Arc<StoredRun>>,
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error(transparent)]
    Selection(#[from] StoreError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl Snapshot {
    /// Manifests ordered by run id.
    pub fn runs(&self) -> impl Iterator<Item = &RunManifest> {
        self.runs.values().map(|r| &r.manifest)
    }

    pub fn run(&self, run_id: &str) -> Result<&Arc<StoredRun>, StoreError> {
        self.runs.get(run_id).ok_or_else(|| StoreError::UnknownRun(run_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn load_selection(&self, selection: &Selection) -> Result<Vec<PredictionRecord>, StoreError> {
        let run = self.run(&selection.run_id)?;
        let attr = run
            .manifest
            .attribute_names
            .contains(&selection.attribute)
            .then(|| run.table.attribute_index(&selection.attribute))
            .flatten()
            .ok_or_else(|| StoreError::UnknownAttribute {
                run: selection.run_id.clone(),
                attribute: selection.attribute.clone(),
            })?;
        let env = &selection.environment;
        if env != ALL_ENVIRONMENTS && !run.manifest.environments.contains(env) {
            return Err(StoreError::UnknownEnvironment {
                run: selection.run_id.clone(),
                environment: env.clone(),
            });
        }
        Ok(run.table.project(attr, env))
    }

    /// Full pipeline for a selection. Acc/DP/MD come from the stored
    /// metrics when they were computed at the requested threshold.
    pub fn analyze(&self, selection: &Selection, options: &ReportOptions) -> Result<Analysis, QueryError> {
        let records = self.load_selection(selection)?;
        let mut analysis = analyze(selection, &records, options)?;
        let run = self.run(&selection.run_id)?;
        if run.metrics.threshold == options.threshold {
            if let Some(stored) = run.metrics.lookup(&selection.environment, &selection.attribute) {
                analysis.report = analysis.report.with_standard_metrics(*stored);
            }
        }
        Ok(analysis)
    }
}

/// Fields supplied by the caller when registering a run.
#[derive(Debug, Clone, PartialEq)]
pub struct NewRun {
    pub run_id: String,
    pub dataset: String,
    pub algorithm: String,
    /// Attribute columns to expose; empty means every attribute column.
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct FileStamp {
    modified: Option<SystemTime>,
    len: u64,
}

fn stamp(path: &Path) -> Option<FileStamp> {
    fs::metadata(path).ok().map(|m| FileStamp {
        modified: m.modified().ok(),
        len: m.len(),
    })
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    current: RwLock<(Option<FileStamp>, Arc<Snapshot>)>,
    writer: Mutex<()>,
}

fn valid_run_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(tmp, path)
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("store types serialize");
    out.push(b'\n');
    out
}

impl Store {
    /// Open an existing store directory. A directory without a manifest is
    /// an empty store.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        if !root.is_dir() {
            return Err(StoreError::MissingRoot(root));
        }
        let manifest = root.join(MANIFEST_FILE);
        let st = stamp(&manifest);
        let snapshot = load_snapshot(&root)?;
        Ok(Self {
            root,
            current: RwLock::new((st, Arc::new(snapshot))),
            writer: Mutex::new(()),
        })
    }

    /// Open, creating the directory first if needed.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Self::open(root)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Current snapshot, reloading first if the manifest changed on disk.
    pub fn snapshot(&self) -> Result<Arc<Snapshot>, StoreError> {
        let on_disk = stamp(&self.root.join(MANIFEST_FILE));
        {
            let cur = self.current.read().expect("store lock poisoned");
            if cur.0 == on_disk {
                return Ok(Arc::clone(&cur.1));
            }
        }
        let fresh = Arc::new(load_snapshot(&self.root)?);
        let mut cur = self.current.write().expect("store lock poisoned");
        *cur = (on_disk, Arc::clone(&fresh));
        Ok(fresh)
    }

    /// Register a run from CSV bytes.
    pub fn register_run(&self, new: NewRun, csv: &[u8]) -> Result<String, StoreError> {
        self.register_run_at(new, csv, chrono::Utc::now())
    }

    pub fn register_run_at(
        &self,
        new: NewRun,
        csv: &[u8],
        created_at: chrono::DateTime<chrono::Utc>,
    ) -> Result<String, StoreError> {
        let _guard = self.writer.lock().expect("store writer poisoned");
        if !valid_run_id(&new.run_id) {
            return Err(StoreError::InvalidRunId(new.run_id));
        }
        let snapshot = self.snapshot()?;
        if snapshot.runs.contains_key(&new.run_id) {
            return Err(StoreError::DuplicateRun(new.run_id));
        }
        let table = parse_predictions(csv)?;
        let attributes = if new.attributes.is_empty() {
            table.attributes.clone()
        } else {
            new.attributes.clone()
        };
        for a in &attributes {
            if table.attribute_index(a).is_none() {
                return Err(StoreError::UnknownAttribute {
                    run: new.run_id.clone(),
                    attribute: a.clone(),
                });
            }
        }

        let metrics = RunMetrics::compute(&table, &attributes, crate::indicators::DEFAULT_THRESHOLD);
        let run_dir = self.root.join("runs").join(&new.run_id);
        fs::create_dir_all(&run_dir)?;
        fs::write(run_dir.join(PREDICTIONS_FILE), csv)?;
        write_atomic(&run_dir.join(METRICS_FILE), &to_json(&metrics))?;

        let manifest = RunManifest {
            run_id: new.run_id.clone(),
            dataset: new.dataset,
            algorithm: new.algorithm,
            attribute_names: attributes,
            environments: table.environments(),
            prediction_file: format!("runs/{}/{PREDICTIONS_FILE}", new.run_id),
            n_rows: table.len(),
            created_at: created_at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        let mut runs: Vec<RunManifest> = snapshot.runs().cloned().collect();
        runs.push(manifest);
        runs.sort_by(|a, b| a.run_id.cmp(&b.run_id));
        let index = ManifestIndex {
            format_version: FORMAT_VERSION,
            runs,
        };
        write_atomic(&self.root.join(MANIFEST_FILE), &to_json(&index))?;

        // reload so the new snapshot matches what a restart would see
        let fresh = Arc::new(load_snapshot(&self.root)?);
        let mut cur = self.current.write().expect("store lock poisoned");
        *cur = (stamp(&self.root.join(MANIFEST_FILE)), fresh);
        Ok(new.run_id)
    }
}

fn corrupt(path: &Path, e: impl std::fmt::Display) -> StoreError {
    StoreError::Corrupt(format!("{}: {e}", path.display()))
}

fn load_snapshot(root: &Path) -> Result<Snapshot, StoreError> {
    let manifest_path = root.join(MANIFEST_FILE);
    let bytes = match fs::read(&manifest_path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Snapshot::default()),
        Err(e) => return Err(e.into()),
    };
    let index: ManifestIndex = serde_json::from_slice(&bytes).map_err(|e| corrupt(&manifest_path, e))?;
    if index.format_version != FORMAT_VERSION {
        return Err(corrupt(
            &manifest_path,
            format!("unsupported format_version {}", index.format_version),
        ));
    }
    let mut runs = BTreeMap::new();
    for manifest in index.runs {
        let pred_path = root.join(&manifest.prediction_file);
        let file = fs::File::open(&pred_path).map_err(|e| corrupt(&pred_path, e))?;
        let table = parse_predictions(io::BufReader::new(file)).map_err(|e| corrupt(&pred_path, e))?;
        let metrics_path = root.join("runs").join(&manifest.run_id).join(METRICS_FILE);
        let metrics_bytes = fs::read(&metrics_path).map_err(|e| corrupt(&metrics_path, e))?;
        let metrics: RunMetrics = serde_json::from_slice(&metrics_bytes).map_err(|e| corrupt(&metrics_path, e))?;
        let id = manifest.run_id.clone();
        if runs
            .insert(id.clone(), Arc::new(StoredRun { manifest, metrics, table }))
            .is_some()
        {
            return Err(corrupt(&manifest_path, format!("run `{id}` listed twice")));
        }
    }
    Ok(Snapshot { runs })
}
