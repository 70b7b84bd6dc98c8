use std::path::PathBuf;

use clap::{Parser, Subcommand};
use qspy_cloud::{issue_token, AuthClaims, CloudConfig, CloudService};

#[derive(Parser)]
#[command(name = "cloud", about = "Mock quantum cloud service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTPS job API.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print a bearer token signed with the configured secret.
    Token {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "testbed-user")]
        subject: String,
        #[arg(long, default_value_t = 3600)]
        ttl_secs: u64,
    },
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .init();
    match Cli::parse().command {
        Command::Serve { config } => {
            let cfg = CloudConfig::load(&config)?;
            let svc = CloudService::start(&cfg).await?;
            println!("cloud listening on {}", svc.local_addr());
            tokio::signal::ctrl_c().await?;
            svc.shutdown().await;
        }
        Command::Token { config, subject, ttl_secs } => {
            let cfg = CloudConfig::load(&config)?;
            let claims = AuthClaims {
                sub: subject,
                exp: qspy_wire::now_ms() / 1000 + ttl_secs,
                iss: cfg.jwt_issuer.unwrap_or_else(|| "qspy-testbed".into()),
            };
            println!("{}", issue_token(cfg.jwt_secret.as_bytes(), &claims));
        }
    }
    Ok(())
}
