use std::fs;
use std::io::{self, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result, bail};
use clap::{Parser, Subcommand};
use trajscope_client::Client;
use trajscope_core::script::{self, CommandSink};
use trajscope_core::session::{self, CommandLog};
use trajscope_core::Session;

#[derive(Parser)]
#[command(name = "trajscope", version, about = "Trajectory query engine")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve a session over HTTP and WebSocket.
    Serve {
        /// Dataset configuration loaded at startup.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 7878)]
        port: u16,
        /// Command log file.
        #[arg(long, default_value = "trajscope-session.jsonl")]
        log: PathBuf,
        /// Disable command logging.
        #[arg(long)]
        no_log: bool,
    },
    /// Execute a command script and print a report.
    Run {
        #[arg(long)]
        script: PathBuf,
        /// Dataset configuration loaded before the script (headless only).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run against an in-process session (the default).
        #[arg(long, conflicts_with = "server")]
        headless: bool,
        /// Base URL of a running service, e.g. http://127.0.0.1:7878.
        #[arg(long)]
        server: Option<String>,
        /// Directory for `export` outputs.
        #[arg(long, default_value = ".")]
        export_dir: PathBuf,
        /// Command log file (headless only).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Rebuild a session from a command log and print its final snapshot.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Configuration the logged session started from, if any.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the final snapshot JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn open_session(config: Option<&Path>) -> Result<Session> {
    match config {
        Some(c) => Session::open(c).with_context(|| format!("loading {}", c.display())),
        None => Ok(Session::new()),
    }
}

fn serve(config: Option<PathBuf>, host: String, port: u16, log: PathBuf, no_log: bool) -> Result<()> {
    tracing_subscriber::fmt().with_env_filter(tracing_subscriber::EnvFilter::from_default_env()).init();
    let mut session = open_session(config.as_deref())?;
    if !no_log {
        session.set_log(CommandLog::create(&log).with_context(|| format!("opening log {}", log.display()))?);
    }
    let addr: SocketAddr = format!("{host}:{port}").parse().with_context(|| format!("bad address {host}:{port}"))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(trajscope_server::serve(session, addr))?;
    Ok(())
}

fn run(
    script_path: PathBuf,
    config: Option<PathBuf>,
    server: Option<String>,
    export_dir: PathBuf,
    log: Option<PathBuf>,
) -> Result<()> {
    let text = fs::read_to_string(&script_path).with_context(|| format!("reading {}", script_path.display()))?;
    let base = script_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let lines = script::parse(&text, &base)?;
    let mut sink: Box<dyn CommandSink> = match server {
        Some(url) => {
            if config.is_some() || log.is_some() {
                bail!("--config and --log apply to headless runs; the server owns its dataset and log");
            }
            Box::new(Client::new(&url))
        }
        None => {
            let mut s = open_session(config.as_deref())?;
            if let Some(l) = &log {
                s.set_log(CommandLog::create(l).with_context(|| format!("opening log {}", l.display()))?);
            }
            Box::new(s)
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    script::run(sink.as_mut(), &lines, &export_dir, &mut out)?;
    out.flush()?;
    Ok(())
}

fn replay(log: PathBuf, config: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let file = fs::File::open(&log).with_context(|| format!("opening {}", log.display()))?;
    let entries = session::read_log(BufReader::new(file))?;
    let s = session::replay(config.as_deref(), &entries)?;
    let snap = s.snapshot();
    eprintln!("replayed {} commands: revision {} visible {}", entries.len(), snap.revision, snap.visible_count);
    match out {
        Some(p) => fs::write(&p, snap.to_json()).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{}", snap.to_json()),
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Cmd::Serve { config, host, port, log, no_log } => serve(config, host, port, log, no_log),
        Cmd::Run { script, config, headless: _, server, export_dir, log } => run(script, config, server, export_dir, log),
        Cmd::Replay { log, config, out } => replay(log, config, out),
    }
}
