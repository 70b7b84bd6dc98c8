use std::path::PathBuf;

use clap::Parser;
use qspy_interceptor::{Interceptor, InterceptorConfig};

#[derive(Parser)]
#[command(name = "interceptor", about = "TLS-intercepting CONNECT proxy")]
struct Cli {
    #[arg(long)]
    config: PathBuf,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .init();
    let cfg = InterceptorConfig::load(&Cli::parse().config)?;
    let proxy = Interceptor::start(&cfg).await?;
    println!("interceptor listening on {}", proxy.local_addr());
    tokio::signal::ctrl_c().await?;
    let stats = proxy.stats();
    proxy.shutdown().await;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}
