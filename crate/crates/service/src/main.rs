use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;
use gcxgc_service::{build, ServiceConfig};

/// Alignment service for the analyst UI.
#[derive(Debug, Parser)]
#[command(name = "gcxgc-service", version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Session storage; sessions found here are resumed at start-up.
    #[arg(long, default_value = "sessions")]
    data_dir: PathBuf,
    /// Jobs executed concurrently.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Origin allowed by CORS; any origin when omitted.
    #[arg(long)]
    ui_origin: Option<String>,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args = Args::parse();
    let mut cfg = ServiceConfig::new(args.data_dir);
    cfg.workers = args.workers;
    cfg.ui_origin = args.ui_origin;
    let (router, _) = build(&cfg)?;
    let listener = tokio::net::TcpListener::bind(args.bind).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router).await?;
    Ok(())
}
