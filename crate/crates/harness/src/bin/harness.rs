use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nfid_harness::{benchmark, run_scenario, Mode, Script, Topology, TopologyConfig};
use tracing_subscriber::EnvFilter;

/// Launches NF topologies and replays call scripts against them.
#[derive(Parser)]
#[command(name = "harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a topology and keep it running until interrupted.
    Up {
        /// Topology file; the bundled six-NF topology if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a script once and print the per-step outcome.
    Run {
        /// Script file; the bundled registration script if omitted.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value = "tunneled")]
        mode: Mode,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the run report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare plain and tunneled wall time over repeated runs.
    Bench {
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value_t = nfid_harness::bench::DEFAULT_ITERATIONS)]
        iterations: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
}

fn topology_config(path: Option<&Path>) -> Result<TopologyConfig> {
    match path {
        Some(p) => TopologyConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(TopologyConfig::bundled()),
    }
}

fn script(path: Option<&Path>) -> Result<Script> {
    match path {
        Some(p) => Script::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(Script::bundled()),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .init();
    match Cli::parse().command {
        Command::Up { config } => {
            let topology = Topology::launch(topology_config(config.as_deref())?).await?;
            println!("registry  {}", topology.registry_url());
            for ipmf in topology.ipmfs() {
                println!(
                    "ipmf      {:<16} {}  config {}",
                    ipmf.name,
                    ipmf.did(),
                    ipmf.config_path.display()
                );
            }
            for nf in topology.nfs() {
                println!(
                    "nf        {:<16} {}  intercept {}  nf {}",
                    nf.spec.name,
                    nf.did,
                    nf.intercept_url(),
                    nf.mock_url()
                );
            }
            println!("work dir  {}", topology.work_dir().display());
            tokio::signal::ctrl_c().await?;
            topology.shutdown().await;
        }
        Command::Run {
            script: script_path,
            mode,
            config,
            out,
        } => {
            let script = script(script_path.as_deref())?;
            let topology = Topology::launch(topology_config(config.as_deref())?).await?;
            let result = run_scenario(&topology, &script, mode).await;
            topology.shutdown().await;
            let report = result?;
            for s in &report.steps {
                println!(
                    "{:>3} {:<5} -> {:<5} {:<6} {:<60} {}",
                    s.index, s.caller, s.callee, s.method, s.path, s.status
                );
            }
            println!(
                "{} steps passed in {:.1} ms ({mode}); handshakes {}, envelopes {}",
                report.steps.len(),
                report.elapsed_micros as f64 / 1000.0,
                report.handshakes,
                report.envelopes
            );
            if let Some(out) = out {
                write_json(&out, &report)?;
            }
        }
        Command::Bench {
            script: script_path,
            iterations,
            config,
            out,
        } => {
            let script = script(script_path.as_deref())?;
            let topology = Topology::launch(topology_config(config.as_deref())?).await?;
            let result = benchmark(&topology, &script, iterations).await;
            topology.shutdown().await;
            let report = result?;
            print!("{}", report.table());
            write_json(&out, &report)?;
            if !report.mode_equivalent {
                bail!(
                    "tunneled runs differ from plain runs: {}",
                    report.differences.join("; ")
                );
            }
        }
    }
    Ok(())
}
