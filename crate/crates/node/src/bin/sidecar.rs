use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use nfid_core::clock::system_clock;
use nfid_node::sidecar::{launch, SidecarConfig, SidecarDeps};
use nfid_node::transport::HttpTransport;
use nfid_node::vdr_http::HttpVdrClient;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "sidecar", about = "Per-NF identity and access-control proxy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the proxy.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    match Cli::parse().command {
        Command::Run { config } => {
            let config = SidecarConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let deps = SidecarDeps {
                vdr: Arc::new(HttpVdrClient::new(&config.registry_url)?),
                transport: Arc::new(HttpTransport::new()),
                clock: system_clock(),
            };
            let running = launch(config, deps).await?;
            let obtained = running.sidecar.obtain_credentials().await?;
            tracing::info!(
                intercept = %running.intercept_url(),
                peer = %running.peer_addr(),
                obtained,
                "sidecar ready"
            );
            tokio::signal::ctrl_c().await?;
            running.shutdown().await;
        }
    }
    Ok(())
}
