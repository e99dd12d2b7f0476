//! `rise` — ingest prediction files, print indicator tables, plot sorted
//! residual curves and run the HTTP service.
//!
//! Exit codes: 0 ok, 2 input or selection error, 3 duplicate run,
//! 4 I/O error, 5 cannot bind the listen address.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rise_core::render::svg::render_svg;
use rise_core::render::table::{read_stored_rows, render_csv, render_table, ReportRow};
use rise_core::report::{ReportOptions, Selection, ALL_ENVIRONMENTS};
use rise_core::store::{NewRun, QueryError, Snapshot, Store, StoreError};
use rise_server::{ServeConfig, ServeError};

const EXIT_INPUT: u8 = 2;
const EXIT_DUPLICATE: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_BIND: u8 = 5;

#[derive(Parser)]
#[command(name = "rise", version, about = "Sorted residual fairness diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StoreArg {
    /// Store directory.
    #[arg(long, visible_alias = "store-dir", env = "RISE_STORE_DIR")]
    store: PathBuf,
}

#[derive(Args)]
struct SelectionArgs {
    #[arg(long)]
    attribute: String,
    /// Environment to select, or `all`.
    #[arg(long, default_value = ALL_ENVIRONMENTS)]
    env: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a prediction CSV and register it as a run.
    Ingest {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long = "run")]
        run_id: String,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        algorithm: String,
        /// Comma-separated attribute columns to expose (default: all).
        #[arg(long, value_delimiter = ',')]
        attributes: Vec<String>,
        file: PathBuf,
    },
    /// Print Acc, DP, MD, F_mean, F_shift and F_acc, one row per run.
    Report {
        /// Store directory.
        #[arg(long, visible_alias = "store-dir", env = "RISE_STORE_DIR", required_unless_present = "rows")]
        store: Option<PathBuf>,
        /// Run to report; repeat for several rows.
        #[arg(long = "run", required_unless_present = "rows")]
        runs: Vec<String>,
        #[arg(long, required_unless_present = "rows")]
        attribute: Option<String>,
        #[arg(long, default_value = ALL_ENVIRONMENTS)]
        env: String,
        /// With `--env all`, one row per environment instead of per run.
        #[arg(long)]
        split: bool,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        /// Probability cut-off for Acc, DP and MD.
        #[arg(long)]
        threshold: Option<f64>,
        /// Render stored rows (CSV: algorithm,acc,dp,md,f_mean,f_shift,f_acc) instead of querying a store.
        #[arg(long, conflicts_with_all = ["store", "runs", "attribute", "split", "threshold"])]
        rows: Option<PathBuf>,
    },
    /// Write the sorted residual view of one selection as SVG.
    Plot {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long = "run")]
        run_id: String,
        #[command(flatten)]
        selection: SelectionArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Serve the HTTP API (and the UI bundle, if given).
    Serve {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Directory with a built UI bundle to serve at `/`.
        #[arg(long, env = "RISE_UI_DIR")]
        ui: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let code = match e {
            StoreError::DuplicateRun(_) => EXIT_DUPLICATE,
            StoreError::Io(_) | StoreError::Corrupt(_) => EXIT_IO,
            _ => EXIT_INPUT,
        };
        Self::new(code, e.to_string())
    }
}

impl From<QueryError> for Failure {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::Selection(s) => s.into(),
            QueryError::Report(r) => Self::new(EXIT_INPUT, r.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(EXIT_IO, format!("{}: {e}", path.display()))
}

fn snapshot(dir: &Path) -> Result<std::sync::Arc<Snapshot>, Failure> {
    Ok(Store::open(dir)?.snapshot()?)
}

fn emit(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Failure::new(EXIT_IO, format!("stdout: {e}")))
}

fn ingest(store: &Path, new: NewRun, file: &Path) -> Result<(), Failure> {
    let bytes = fs::read(file).map_err(|e| io_failure(file, e))?;
    let store = Store::create(store)?;
    let id = store.register_run(new, &bytes).map_err(|e| match e {
        StoreError::Ingest(ie) => Failure::new(EXIT_INPUT, format!("{}: {ie}", file.display())),
        other => other.into(),
    })?;
    emit(&format!("{id}\n"))
}

struct ReportRequest {
    runs: Vec<String>,
    attribute: String,
    env: String,
    split: bool,
    threshold: Option<f64>,
}

fn report_rows(snapshot: &Snapshot, req: &ReportRequest) -> Result<Vec<ReportRow>, Failure> {
    let mut options = ReportOptions::default();
    if let Some(t) = req.threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(Failure::new(EXIT_INPUT, format!("threshold {t} is outside [0, 1]")));
        }
        options.threshold = t;
    }
    if req.split && req.env != ALL_ENVIRONMENTS {
        return Err(Failure::new(EXIT_INPUT, "--split needs --env all"));
    }

    let mut targets = Vec::new();
    for id in &req.runs {
        let manifest = &snapshot.run(id)?.manifest;
        let duplicate_name = req
            .runs
            .iter()
            .filter(|other| *other != id)
            .any(|other| snapshot.run(other).map(|r| r.manifest.algorithm == manifest.algorithm).unwrap_or(false));
        let label = if duplicate_name {
            format!("{} ({id})", manifest.algorithm)
        } else {
            manifest.algorithm.clone()
        };
        if req.split {
            for env in &manifest.environments {
                targets.push((format!("{label}/{env}"), Selection::new(id, &req.attribute, env)));
            }
        } else {
            targets.push((label, Selection::new(id, &req.attribute, &req.env)));
        }
    }

    targets
        .into_iter()
        .map(|(label, sel)| {
            let analysis = snapshot.analyze(&sel, &options).map_err(|e| {
                let f = Failure::from(e);
                Failure::new(f.code, format!("{}/{}/{}: {}", sel.run_id, sel.attribute, sel.environment, f.message))
            })?;
            Ok(ReportRow::from_report(label, &analysis.report))
        })
        .collect()
}

fn render(rows: &[ReportRow], format: Format) -> String {
    match format {
        Format::Table => render_table("Algorithm", rows),
        Format::Csv => render_csv("Algorithm", rows),
    }
}

fn plot(store: &Path, selection: Selection, output: &Path) -> Result<(), Failure> {
    let snapshot = snapshot(store)?;
    let analysis = snapshot.analyze(&selection, &ReportOptions::default())?;
    fs::write(output, render_svg(&analysis)).map_err(|e| io_failure(output, e))
}

fn serve(config: ServeConfig) -> Result<(), Failure> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
    runtime.block_on(async {
        let (listener, app) = rise_server::bind(&config).await.map_err(|e| match e {
            ServeError::Store(s) => Failure::from(s),
            ServeError::Bind(b) => Failure::new(EXIT_BIND, format!("cannot bind {}:{}: {b}", config.host, config.port)),
            ServeError::Io(io) => Failure::new(EXIT_IO, io.to_string()),
        })?;
        let addr = rise_server::local_addr(&listener).map_or_else(|| "?".to_string(), |a| a.to_string());
        emit(&format!("rise serving {} on http://{addr}\n", config.store_dir.display()))?;
        rise_server::run(listener, app)
            .await
            .map_err(|e| Failure::new(EXIT_IO, e.to_string()))
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Ingest {
            store,
            run_id,
            dataset,
            algorithm,
            attributes,
            file,
        } => ingest(
            &store.store,
            NewRun {
                run_id,
                dataset,
                algorithm,
                attributes,
            },
            &file,
        ),
        Command::Report {
            store,
            runs,
            attribute,
            env,
            split,
            format,
            threshold,
            rows,
        } => {
            let rows = match rows {
                Some(path) => {
                    let file = fs::File::open(&path).map_err(|e| io_failure(&path, e))?;
                    read_stored_rows(file).map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())))?
                }
                None => {
                    let store = store.expect("clap requires --store");
                    let req = ReportRequest {
                        runs,
                        attribute: attribute.expect("clap requires --attribute"),
                        env,
                        split,
                        threshold,
                    };
                    report_rows(&*snapshot(&store)?, &req)?
                }
            };
            emit(&render(&rows, format))
        }
        Command::Plot {
            store,
            run_id,
            selection,
            output,
        } => plot(&store.store, Selection::new(run_id, selection.attribute, selection.env), &output),
        Command::Serve { store, host, port, ui } => serve(ServeConfig {
            host,
            port,
            store_dir: store.store,
            ui_dir: ui,
        }),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("rise: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
