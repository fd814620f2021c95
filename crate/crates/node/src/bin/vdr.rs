use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use nfid_core::clock::system_clock;
use nfid_core::vdr::Registry;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "vdr", about = "Verifiable data registry server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the registry HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7000")]
        listen: String,
        /// JSON-lines log; the registry is in memory when omitted.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    match Cli::parse().command {
        Command::Serve { listen, log } => {
            let registry = match &log {
                Some(path) => Registry::open(path, system_clock())
                    .with_context(|| format!("opening registry log {}", path.display()))?,
                None => Registry::with_clock(system_clock()),
            };
            let listener = tokio::net::TcpListener::bind(&listen)
                .await
                .with_context(|| format!("binding {listen}"))?;
            tracing::info!(addr = %listener.local_addr()?, records = registry.record_count(), "registry serving");
            axum::serve(listener, nfid_node::vdr_http::router(Arc::new(registry)))
                .with_graceful_shutdown(async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await?;
        }
    }
    Ok(())
}
