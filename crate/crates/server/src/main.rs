use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::Parser;

use taskguide_core::segmenter::read_checkpoint;
use taskguide_core::session::{Engine, SessionConfig};
use taskguide_server::{load_spec_dir, router, AppState};

/// Serve Wizard-of-Oz task-guidance sessions over HTTP and WebSocket.
#[derive(Debug, Parser)]
#[command(name = "taskguide-server", version)]
struct Args {
    /// Session config (TOML). Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of spec JSON files.
    #[arg(long, default_value = "data/specs")]
    specs: PathBuf,
    /// Where session headers and JSONL logs are written.
    #[arg(long, default_value = "sessions")]
    logs: PathBuf,
    /// Optional action-segmenter checkpoint.
    #[arg(long)]
    segmenter: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let args = Args::parse();
    let config = match &args.config {
        Some(path) => SessionConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => SessionConfig::default(),
    };
    let library = load_spec_dir(&args.specs).with_context(|| format!("loading specs from {}", args.specs.display()))?;
    let mut engine = Engine::new(library, config)?;
    if let Some(path) = &args.segmenter {
        engine = engine.with_segmenter(Arc::new(read_checkpoint(path)?));
    }
    std::fs::create_dir_all(&args.logs)?;
    let state = Arc::new(AppState::new(engine, &args.logs));
    let listener = tokio::net::TcpListener::bind(args.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, specs = state.engine().library().len(), "listening");
    axum::serve(listener, router(state)).await?;
    Ok(())
}
