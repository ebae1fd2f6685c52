//! Subcommands. Exit codes: 0 ok, 1 parse/evaluation error, 2 usage, 3 I/O.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tempoql::dataset::{search_concepts, Dataset};
use tempoql::eval::{evaluate_text, EvalError, QueryResult};
use tempoql::export::{metadata, write_csv};
use tempoql::lang::Span;
use tempoql::profile::profile_result;
use tempoql::store::QueryStore;
use tempoql_assistant::ProviderConfig;

use crate::api::{self, AppState, AssistantState};

#[derive(Parser)]
#[command(name = "tempoql", version, about = "Temporal queries over trajectory data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Browse the data elements of a dataset.
    Catalog {
        #[command(subcommand)]
        command: CatalogCommand,
    },
    /// Evaluate a query and export the result.
    Run {
        #[command(flatten)]
        source: QuerySource,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Evaluate a query and print its profile bundle as JSON.
    Profile {
        #[command(flatten)]
        source: QuerySource,
    },
    /// Manage the named-query store.
    Queries {
        #[arg(long)]
        store: PathBuf,
        #[command(subcommand)]
        command: QueriesCommand,
    },
    /// Start the HTTP API and workbench.
    Serve {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        provider_config: Option<PathBuf>,
        /// Directory holding the built workbench.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CatalogCommand {
    /// Search concept names (substring, or /regex/flags).
    Search {
        query: String,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        scope: Option<String>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum QueriesCommand {
    List {
        #[arg(long)]
        json: bool,
    },
    Add {
        name: String,
        query: String,
        #[arg(long)]
        description: Option<String>,
        /// Replace an existing query of the same name.
        #[arg(long)]
        force: bool,
    },
    Rm {
        name: String,
    },
}

#[derive(Args)]
struct QuerySource {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, required_unless_present = "name", conflicts_with = "name")]
    query: Option<String>,
    /// Name of a stored query (requires --store).
    #[arg(long, requires = "store")]
    name: Option<String>,
    #[arg(long)]
    store: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Query(String),
    Usage(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Query(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Query(m) | Failure::Usage(m) | Failure::Io(m) => m,
        }
    }
}

type Outcome = Result<(), Failure>;

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Outcome {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Io(e.to_string())),
        _ => Ok(()),
    }
}

fn io_err(what: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", what.display()))
}

/// Renders an error with a caret line under its span.
fn with_caret(src: &str, span: Span, message: &str) -> String {
    let line_start = src[..span.start.min(src.len())].rfind('\n').map_or(0, |i| i + 1);
    let line_end = src[line_start..].find('\n').map_or(src.len(), |i| line_start + i);
    let col = src[line_start..span.start.min(src.len())].chars().count();
    let width = src[span.start.min(line_end)..span.end.clamp(span.start, line_end)].chars().count().max(1);
    format!("error: {message}\n  {}\n  {}{}", &src[line_start..line_end], " ".repeat(col), "^".repeat(width))
}

fn query_error(src: &str, e: &EvalError) -> Failure {
    Failure::Query(with_caret(src, e.span, &format!("{} ({:?})", e.message, e.kind)))
}

fn load_store(path: &Path) -> Result<QueryStore, Failure> {
    if !path.exists() {
        return Ok(QueryStore::default());
    }
    QueryStore::load(path).map_err(|e| io_err(path, e))
}

fn open_dataset(path: &Path) -> Result<Dataset, Failure> {
    Dataset::open(path).map_err(|e| io_err(path, e))
}

fn evaluate_source(src: &QuerySource) -> Result<(Dataset, String, QueryResult), Failure> {
    let store = match &src.store {
        Some(p) => load_store(p)?,
        None => QueryStore::default(),
    };
    let text = match (&src.query, &src.name) {
        (Some(q), _) => q.clone(),
        (None, Some(n)) => {
            store.get(n).ok_or_else(|| Failure::Usage(format!("no stored query named '{n}'")))?.query.clone()
        }
        (None, None) => unreachable!("clap requires one of --query/--name"),
    };
    let ds = open_dataset(&src.dataset)?;
    let qr = evaluate_text(&text, &ds, &store.bindings()).map_err(|e| query_error(&text, &e))?;
    Ok((ds, text, qr))
}

fn run(source: &QuerySource, out: Option<&Path>, format: Format) -> Outcome {
    let (ds, text, qr) = evaluate_source(source)?;
    for d in &qr.diagnostics {
        eprintln!("warning: {d}");
    }
    let mut buf = Vec::new();
    match format {
        Format::Csv => write_csv(&qr.result, &mut buf).map_err(|e| Failure::Io(e.to_string()))?,
        Format::Json => {
            let doc = serde_json::json!({
                "metadata": metadata(&text, &ds.fingerprint, &qr.result, &qr.diagnostics),
                "rows": crate::rows::all_rows(&qr.result),
            });
            serde_json::to_writer_pretty(&mut buf, &doc).map_err(|e| Failure::Io(e.to_string()))?;
            buf.push(b'\n');
        }
    }
    match out {
        Some(path) => {
            std::fs::write(path, &buf).map_err(|e| io_err(path, e))?;
            if matches!(format, Format::Csv) {
                let side = PathBuf::from(format!("{}.meta.json", path.display()));
                let meta = metadata(&text, &ds.fingerprint, &qr.result, &qr.diagnostics);
                let json = serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n";
                std::fs::write(&side, json).map_err(|e| io_err(&side, e))?;
            }
            eprintln!("wrote {} rows to {}", qr.result.len(), path.display());
        }
        None => emit(&String::from_utf8_lossy(&buf))?,
    }
    Ok(())
}

fn catalog_search(dataset: &Path, query: &str, scope: Option<&str>, json: bool) -> Outcome {
    let ds = open_dataset(dataset)?;
    let r = search_concepts(&ds.catalog, query, scope).map_err(|e| Failure::Usage(e.to_string()))?;
    if json {
        return emit(&(serde_json::to_string_pretty(&r).expect("serializes") + "\n"));
    }
    let rows: Vec<[String; 5]> = r
        .entries
        .iter()
        .map(|e| {
            [
                e.name.clone(),
                e.concept_id.clone().unwrap_or_default(),
                e.scope.clone(),
                e.element_kind.label().to_string(),
                e.occurrence_count.to_string(),
            ]
        })
        .collect();
    let head = ["name", "id", "scope", "kind", "count"].map(String::from);
    let widths: Vec<usize> =
        (0..5).map(|c| rows.iter().chain([&head]).map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut text = String::new();
    for r in [&head].into_iter().chain(rows.iter()) {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        text += cells.join("  ").trim_end();
        text.push('\n');
    }
    if r.truncated {
        text += &format!("(showing the first {} matches)\n", r.entries.len());
    }
    emit(&text)
}

fn queries(path: &Path, cmd: QueriesCommand) -> Outcome {
    let mut store = load_store(path)?;
    match cmd {
        QueriesCommand::List { json } => {
            if json {
                return emit(&(serde_json::to_string_pretty(&store.queries).expect("serializes") + "\n"));
            }
            let lines: String = store.queries.iter().map(|q| format!("{}\t{}\n", q.name, q.query.replace('\n', " "))).collect();
            return emit(&lines);
        }
        QueriesCommand::Add { name, query, description, force } => {
            if store.get(&name).is_some() && !force {
                return Err(Failure::Usage(format!("a query named '{name}' already exists (use --force to replace it)")));
            }
            store.upsert(&name, &query, description).map_err(|e| match e {
                tempoql::store::StoreError::Parse { error, .. } => {
                    Failure::Query(with_caret(&query, error.span, &error.to_string()))
                }
                other => Failure::Usage(other.to_string()),
            })?;
        }
        QueriesCommand::Rm { name } => {
            store.remove(&name).map_err(|e| Failure::Usage(e.to_string()))?;
        }
    }
    store.save(path).map_err(|e| io_err(path, e))
}

fn serve(
    dataset: &Path,
    store: Option<PathBuf>,
    addr: SocketAddr,
    provider_config: Option<&Path>,
    assets: Option<PathBuf>,
) -> Outcome {
    let ds = open_dataset(dataset)?;
    let st = match &store {
        Some(p) => load_store(p)?,
        None => QueryStore::default(),
    };
    let mut state = AppState::new(ds, st, store);
    if let Some(p) = provider_config {
        let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
        let config = ProviderConfig::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
        let provider = config.build().map_err(|e| Failure::Usage(e.to_string()))?;
        state = state.with_assistant(AssistantState::new(config, Arc::from(provider)));
    }
    if let Some(dir) = assets {
        state = state.with_assets(dir);
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(e.to_string()))?;
    rt.block_on(api::serve(state, addr)).map_err(|e| Failure::Io(format!("{addr}: {e}")))
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.command {
        Command::Catalog { command: CatalogCommand::Search { query, dataset, scope, json } } => {
            catalog_search(&dataset, &query, scope.as_deref(), json)
        }
        Command::Run { source, out, format } => run(&source, out.as_deref(), format),
        Command::Profile { source } => {
            let (_, _, qr) = evaluate_source(&source)?;
            emit(&(serde_json::to_string_pretty(&profile_result(&qr)).expect("serializes") + "\n"))
        }
        Command::Queries { store, command } => queries(&store, command),
        Command::Serve { dataset, store, port, host, provider_config, assets } => {
            let addr: SocketAddr =
                format!("{host}:{port}").parse().map_err(|e| Failure::Usage(format!("bad --host/--port: {e}")))?;
            serve(&dataset, store, addr, provider_config.as_deref(), assets)
        }
    }
}

/// Entry point; returns the process exit code.
pub fn main(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.message());
            f.code()
        }
    }
}
