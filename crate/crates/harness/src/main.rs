use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use qspylab::{
    gen_ca, run, verify_correlation, verify_transparency, CaKind, CollectorFault, Lab, Mode, RunOptions,
    ScenarioResult, TokenMode, Verdicts,
};

#[derive(Parser)]
#[command(name = "qspylab", about = "Interception testbed harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a self-signed root certificate and key.
    GenCa {
        #[arg(long, value_enum)]
        kind: CaKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one scenario and save its artifacts.
    Run {
        #[arg(long, value_enum)]
        mode: Mode,
        /// e.g. "5x bell; 2x ghz(3) shots=500"
        #[arg(long)]
        workload: String,
        #[arg(long)]
        out: PathBuf,
        /// Existing lab directory to reuse; defaults to OUT/lab.
        #[arg(long)]
        lab: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        max_in_flight: usize,
        #[arg(long, default_value_t = 0)]
        queue_jitter_ms: u64,
        /// Leave the rogue root out of the client's trust roots.
        #[arg(long)]
        untrusted_rogue: bool,
        /// Send a token signed with the wrong secret.
        #[arg(long)]
        forged_token: bool,
        /// Never start the collector.
        #[arg(long)]
        collector_down: bool,
        /// Stop the collector once it holds this many records.
        #[arg(long)]
        kill_collector_after: Option<usize>,
        /// Start the collector again after the client finishes.
        #[arg(long)]
        restart_collector: bool,
        /// Test only: have the interceptor rewrite results.
        #[arg(long)]
        mutate_results: bool,
    },
    /// Compare a baseline run with an intercepted run.
    Verify {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        intercepted: PathBuf,
    },
}

fn print_verdicts(v: &Verdicts) {
    for (name, verdict) in v {
        println!("{name}: {verdict}");
    }
}

#[tokio::main]
async fn main() -> anyhow::Result<ExitCode> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let verdicts = match Cli::parse().command {
        Command::GenCa { kind, out } => {
            let (_, files) = gen_ca(kind, &out)?;
            println!("{}\n{}", files.cert.display(), files.key.display());
            return Ok(ExitCode::SUCCESS);
        }
        Command::Run {
            mode,
            workload,
            out,
            lab,
            seed,
            max_in_flight,
            queue_jitter_ms,
            untrusted_rogue,
            forged_token,
            collector_down,
            kill_collector_after,
            restart_collector,
            mutate_results,
        } => {
            let lab = Lab::create(&lab.unwrap_or_else(|| out.join("lab")))?;
            let mut opts = RunOptions::new(workload);
            opts.seed = seed;
            opts.max_in_flight = max_in_flight;
            opts.queue_jitter_ms = queue_jitter_ms;
            opts.trust_rogue_root = !untrusted_rogue;
            opts.token = if forged_token { TokenMode::Forged } else { TokenMode::Valid };
            opts.collector_fault = match (collector_down, kill_collector_after) {
                (true, _) => CollectorFault::Down,
                (false, Some(n)) => CollectorFault::KillAfter(n),
                (false, None) => CollectorFault::None,
            };
            opts.restart_collector = restart_collector;
            opts.mutate_results = mutate_results;
            let result = run(&lab, mode, &opts).await?;
            result.save(&out)?;
            result.verdicts
        }
        Command::Verify { baseline, intercepted } => {
            let b = ScenarioResult::load(&baseline).context("loading baseline")?;
            let i = ScenarioResult::load(&intercepted).context("loading intercepted run")?;
            let mut v = Verdicts::new();
            v.insert("transparency".into(), verify_transparency(&b, &i)?);
            v.insert("correlation".into(), verify_correlation(&i.cloud_job_log, &i.collector_snapshot));
            v
        }
    };
    print_verdicts(&verdicts);
    let ok = verdicts.values().all(|v| v.passed());
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
