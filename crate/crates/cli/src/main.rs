use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use persearch_core::index::{read_corpus_dir, DocId};
use persearch_core::miner::{self, MinSupport, Weighting};
use persearch_core::ranker::{personalized_search, DEFAULT_FLOOR};
use persearch_core::service::{self, AppState, ServiceConfig};
use persearch_core::store::{NewEvent, Store, StoreConfig, StoreSnapshot, UserId};
use persearch_core::textstat::{text_statistics, Stopwords, DEFAULT_KEYWORDS};
use persearch_core::Timestamp;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "persearch",
    version,
    about = "Personalized search over a local corpus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Profile every file under CORPUS_DIR and add it to the store.
    Ingest {
        corpus_dir: PathBuf,
        store_dir: PathBuf,
        /// Keywords kept per document.
        #[arg(long, default_value_t = DEFAULT_KEYWORDS)]
        keywords: usize,
        /// Stopword list, one word per line (`#` starts a comment).
        #[arg(long)]
        stopwords: Option<PathBuf>,
    },
    /// Run the HTTP API over a store.
    Serve {
        store_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = DEFAULT_FLOOR)]
        floor: f64,
        #[arg(long, default_value_t = 30)]
        session_gap_min: u32,
        #[arg(long, default_value_t = 24)]
        token_ttl_hours: u32,
        /// Directory of static files to serve at `/`.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    /// Mine frequent click sequences and print them as NDJSON.
    Mine {
        store_dir: PathBuf,
        /// gsp, wtgsp or wmgsp.
        #[arg(long, default_value = "gsp")]
        algo: Weighting,
        /// Absolute support (`2`) or a share of the sessions (`50%`).
        #[arg(long)]
        min_sup: MinSupport,
        /// Restrict to one user (name or id); default is everyone.
        #[arg(long)]
        user: Option<String>,
        #[arg(long, default_value_t = 30)]
        session_gap_min: u32,
        #[arg(long, default_value_t = DEFAULT_FLOOR)]
        floor: f64,
    },
    /// Apply an event log to a throwaway copy of the store and print the
    /// ranking USER would get for QUERY.
    Replay {
        store_dir: PathBuf,
        events_file: PathBuf,
        query: String,
        /// Username or numeric user id.
        user: String,
        #[arg(long, default_value_t = DEFAULT_FLOOR)]
        floor: f64,
    },
    /// Print text statistics for a file.
    Stats { file: PathBuf },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_ansi(io::IsTerminal::is_terminal(&io::stderr()))
        .with_writer(io::stderr)
        .init();

    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest {
            corpus_dir,
            store_dir,
            keywords,
            stopwords,
        } => ingest(&corpus_dir, &store_dir, keywords, stopwords.as_deref()),
        Command::Serve {
            store_dir,
            host,
            port,
            floor,
            session_gap_min,
            token_ttl_hours,
            ui_dir,
        } => {
            let store = Store::open(
                &store_dir,
                StoreConfig {
                    token_ttl_secs: i64::from(token_ttl_hours) * 3600,
                },
            )?;
            let config = ServiceConfig {
                floor,
                session_gap_secs: i64::from(session_gap_min) * 60,
                ui_dir,
            };
            serve(store, config, &host, port)
        }
        Command::Mine {
            store_dir,
            algo,
            min_sup,
            user,
            session_gap_min,
            floor,
        } => {
            let store = Store::open(&store_dir, StoreConfig::default())?;
            let snapshot = store.snapshot();
            let user = user.map(|u| resolve_user(&snapshot, &u)).transpose()?;
            let sequences =
                miner::sequences_from_snapshot(&snapshot, user, i64::from(session_gap_min) * 60)?;
            let ctx = miner::snapshot_context(&snapshot, floor)?;
            let frequent = miner::mine(&sequences, min_sup.resolve(sequences.len()), algo, &ctx)?;
            write_stdout(&frequent.to_ndjson()?)
        }
        Command::Replay {
            store_dir,
            events_file,
            query,
            user,
            floor,
        } => write_stdout(&replay(&store_dir, &events_file, &query, &user, floor)?),
        Command::Stats { file } => {
            let bytes = fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
            let text = String::from_utf8(bytes)
                .with_context(|| format!("{} is not UTF-8 text", file.display()))?;
            write_stdout(&text_statistics(&text).to_string())
        }
    }
}

fn ingest(
    corpus_dir: &Path,
    store_dir: &Path,
    keywords: usize,
    stopwords: Option<&Path>,
) -> Result<()> {
    if keywords == 0 {
        bail!("--keywords must be at least 1");
    }
    let stopwords = stopwords.map(Stopwords::load).transpose()?;
    // Read everything first so a bad file leaves the store untouched.
    let docs = read_corpus_dir(corpus_dir)?;
    Store::init(store_dir, stopwords.as_ref())?;
    let store = Store::open(store_dir, StoreConfig::default())?;
    if docs.is_empty() {
        tracing::warn!("{} contains no documents", corpus_dir.display());
        return Ok(());
    }
    let records = store.ingest(&docs, keywords)?;
    tracing::info!(
        "ingested {} documents into {}",
        records.len(),
        store_dir.display()
    );
    Ok(())
}

fn serve(store: Store, config: ServiceConfig, host: &str, port: u16) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime.block_on(async move {
        let addr: SocketAddr = tokio::net::lookup_host((host, port))
            .await
            .with_context(|| format!("resolving {host}:{port}"))?
            .next()
            .with_context(|| format!("{host} has no address"))?;
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!("listening on http://{}", listener.local_addr()?);
        let state = AppState::new(Arc::new(store), config);
        service::serve(listener, state, service::shutdown_signal()).await?;
        tracing::info!("shut down");
        Ok(())
    })
}

/// One line of an events file. Same layout as the store's event log;
/// `event_id` may be present but is reassigned.
#[derive(Deserialize)]
struct EventLine {
    #[serde(default, rename = "event_id")]
    _event_id: Option<u64>,
    user_id: UserId,
    query: String,
    doc_id: Option<DocId>,
    clicked_at: Timestamp,
    left_at: Timestamp,
}

#[derive(Serialize)]
struct ReplayLine<'a> {
    rank: usize,
    doc_id: DocId,
    uri: &'a str,
    title: &'a str,
    score: f64,
    base_strength: u32,
}

fn replay(
    store_dir: &Path,
    events_file: &Path,
    query: &str,
    user: &str,
    floor: f64,
) -> Result<String> {
    let store = Store::open(store_dir, StoreConfig::default())?.fork();
    let text = fs::read_to_string(events_file)
        .with_context(|| format!("reading {}", events_file.display()))?;
    let mut events = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: EventLine = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", events_file.display(), n + 1))?;
        events.push(NewEvent {
            user_id: e.user_id,
            query: e.query,
            doc_id: e.doc_id,
            clicked_at: e.clicked_at,
            left_at: e.left_at,
        });
    }
    store.append_events(&events)?;

    let snapshot = store.snapshot();
    let user_id = resolve_user(&snapshot, user)?;
    let mut out = String::new();
    for (i, r) in personalized_search(&snapshot, user_id, query, floor)?
        .iter()
        .enumerate()
    {
        out.push_str(&serde_json::to_string(&ReplayLine {
            rank: i + 1,
            doc_id: r.doc_id,
            uri: &r.uri,
            title: &r.title,
            score: r.score,
            base_strength: r.base_strength,
        })?);
        out.push('\n');
    }
    Ok(out)
}

fn resolve_user(snapshot: &StoreSnapshot, user: &str) -> Result<UserId> {
    if let Some(profile) = snapshot.user_by_name(user) {
        return Ok(profile.user_id);
    }
    match user.parse::<u64>() {
        Ok(id) if snapshot.user(UserId(id)).is_some() => Ok(UserId(id)),
        _ => bail!("unknown user {user:?}"),
    }
}

fn write_stdout(s: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(s.as_bytes())?;
    out.flush()?;
    Ok(())
}
