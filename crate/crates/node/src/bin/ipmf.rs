use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use nfid_core::clock::system_clock;
use nfid_core::credentials::RightSet;
use nfid_core::identity::Did;
use nfid_core::ipmf::load_config;
use nfid_node::ipmf_admin::{delegate, persist_provisioned, registry_client, revoke};
use nfid_node::ipmf_node::launch_ipmf;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "ipmf", about = "Identity and permission management function")]
struct Cli {
    /// IPMF config file (JSON).
    #[arg(long, global = true, default_value = "ipmf.json")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve issuance requests.
    Run,
    /// Issue a delegation credential to a child IPMF and print it as JSON.
    Delegate {
        #[arg(long)]
        child: Did,
        /// Comma-separated rights, e.g. `issue_authn,issue_authz`.
        #[arg(long)]
        rights: RightSet,
        /// Also write the child's parent chain to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Revoke a credential this IPMF issued.
    Revoke {
        #[arg(long)]
        cred: String,
    },
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let config = load_config(&cli.config).with_context(|| format!("loading {}", cli.config.display()))?;
    match cli.command {
        Command::Run => {
            let listen = config.listen.clone().unwrap_or_else(|| "127.0.0.1:0".to_string());
            let listener = tokio::net::TcpListener::bind(&listen)
                .await
                .with_context(|| format!("binding {listen}"))?;
            let vdr = registry_client(&config)?;
            let node = launch_ipmf(config.clone(), vdr, system_clock(), listener).await?;
            persist_provisioned(&config, &node, &cli.config)?;
            tokio::signal::ctrl_c().await?;
            node.shutdown().await;
        }
        Command::Delegate { child, rights, out } => {
            let (del, chain) = delegate(&cli.config, &child, rights).await?;
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_vec_pretty(&chain)?)?;
            }
            println!("{}", serde_json::to_string_pretty(&del)?);
        }
        Command::Revoke { cred } => {
            revoke(&cli.config, &cred).await?;
            println!("revoked {cred}");
        }
    }
    Ok(())
}
