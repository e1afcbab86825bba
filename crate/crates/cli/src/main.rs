use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};

use sketchvox_cli::{commands, server};
use sketchvox_core::config::{ServiceConfig, CONFIG_ENV};

#[derive(Parser)]
#[command(name = "sketchvox", version, about = "Voice-and-sketch ideation sessions")]
struct Cli {
    /// Service config file (TOML).
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP/WebSocket server.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Replay a session log directory and print the snapshot JSON.
    Replay {
        log: PathBuf,
        /// Mock scripts to check logged provider replies against.
        scripts: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Write the canvas as of a log record to a PNG.
    Render {
        log: PathBuf,
        #[arg(long)]
        at: u64,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, short, default_value = "canvas.png")]
        out: PathBuf,
    },
    /// Run a scenario file against mock providers and persist its log.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        scripts: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&std::path::Path>) -> anyhow::Result<ServiceConfig> {
    // The flag already falls back to the environment variable.
    ServiceConfig::load(path, &|k| std::env::var(k).ok()).context("loading config")
}

fn write_or_print(out: Option<PathBuf>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Serve { host, port } => {
            let config = load_config(cli.config.as_deref())?;
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .with_context(|| format!("bad listen address {host}:{port}"))?;
            let state = Arc::new(server::AppState::new(config)?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                tracing::info!("listening on {}", listener.local_addr()?);
                server::serve(listener, state).await?;
                anyhow::Ok(())
            })
        }
        Command::Replay { log, scripts, out } => {
            let json = commands::replay_log(&log, scripts.as_deref())?;
            write_or_print(out, &json)
        }
        Command::Render { log, at, scale, out } => {
            let png = commands::render_at(&log, at, scale)?;
            std::fs::write(&out, png).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("wrote {}", out.display());
            Ok(())
        }
        Command::Simulate { scenario, scripts, out } => {
            let config = load_config(cli.config.as_deref())?;
            let snapshot = commands::simulate(&scenario, scripts.as_deref(), &out, config.session)?;
            println!("{}", snapshot.to_canonical_json());
            Ok(())
        }
    }
}
