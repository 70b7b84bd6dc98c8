use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use qspy_client::{prepare_workload, run_scenario, transcript_diff, Client, ClientConfig, ClientTranscript};

#[derive(Parser)]
#[command(name = "client", about = "Quantum job workload driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a workload and write the transcript as JSON lines.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workload: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        max_in_flight: usize,
        #[arg(long, default_value = "run")]
        label: String,
    },
    /// Compare two transcripts of the same workload.
    Diff { a: PathBuf, b: PathBuf },
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Run {
            config,
            workload,
            out,
            max_in_flight,
            label,
        } => {
            let cfg = ClientConfig::load(&config)?;
            let jobs = prepare_workload(&workload)?;
            let client = Arc::new(Client::new(&cfg)?);
            let run = run_scenario(client, &label, &jobs, max_in_flight).await;
            run.transcript.write_jsonl(&out)?;
            let failed = run.failures().count();
            for f in run.failures() {
                eprintln!("job {}: {}", f.job_index, f.error.as_ref().expect("failure has an error"));
            }
            println!("{} jobs, {} failed, {} exchanges", jobs.len(), failed, run.transcript.entries.len());
            if failed > 0 {
                std::process::exit(1);
            }
        }
        Command::Diff { a, b } => {
            let a = ClientTranscript::read_jsonl(&a, "a")?;
            let b = ClientTranscript::read_jsonl(&b, "b")?;
            let report = transcript_diff(&a, &b);
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}
