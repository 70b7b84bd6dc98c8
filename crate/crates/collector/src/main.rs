use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use qspy_collector::{Collector, CollectorConfig, Completeness, Label, Query, Report, Store};

#[derive(Parser)]
#[command(name = "collector", about = "Consolidated record collector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTPS ingestion endpoint.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// List stored records matching the filters.
    Query {
        #[arg(long, default_value = "collector.toml")]
        config: PathBuf,
        #[arg(long)]
        category: Option<Label>,
        #[arg(long)]
        min_qubits: Option<usize>,
        /// Milliseconds since the Unix epoch.
        #[arg(long)]
        since: Option<u64>,
        #[arg(long, value_parser = parse_completeness)]
        completeness: Option<Completeness>,
    },
    /// Print aggregate counts for the store.
    Report {
        #[arg(long, default_value = "collector.toml")]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

fn parse_completeness(s: &str) -> Result<Completeness, String> {
    Query::from_pairs([("completeness", s)])
        .map(|q| q.completeness.expect("set above"))
        .map_err(|e| e.to_string())
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve { config } => {
            let cfg = CollectorConfig::load(&config)?;
            let collector = Collector::start(&cfg).await?;
            println!("collector listening on {}", collector.local_addr());
            tokio::signal::ctrl_c().await?;
            collector.shutdown().await;
        }
        Command::Query {
            config,
            category,
            min_qubits,
            since,
            completeness,
        } => {
            let store = Store::open(&CollectorConfig::load(&config)?.store_path)?;
            let q = Query {
                category,
                min_qubits,
                since,
                completeness,
            };
            for s in q.run(store.records()) {
                println!("{}", serde_json::to_string(&s)?);
            }
        }
        Command::Report { config, format } => {
            let store = Store::open(&CollectorConfig::load(&config)?.store_path)?;
            let report = Report::build(store.records());
            match format {
                Format::Text => print!("{}", report.to_text()),
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
    }
    Ok(())
}
