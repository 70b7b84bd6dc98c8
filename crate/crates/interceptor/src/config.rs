use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Proxy settings, read from TOML:
///
/// ```toml
/// port = 8080
/// bind_address = "127.0.0.1"
/// rogue_ca_cert = "pki/rogue-root.pem"
/// rogue_ca_key = "pki/rogue-root.key"
/// upstream_trust_roots = ["pki/legitimate-root.pem"]
/// target_hosts = ["cloud.local", "localhost"]
/// collector_url = "https://localhost:9555"
/// collector_trust_roots = ["pki/rogue-root.pem"]
/// spool_dir = "spool"
/// pending_ttl_ms = 10000
/// bound_ttl_ms = 300000
/// sweep_interval_ms = 1000
/// event_log = "events.jsonl"        # optional
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterceptorConfig {
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_bind")]
    pub bind_address: String,
    pub rogue_ca_cert: PathBuf,
    pub rogue_ca_key: PathBuf,
    pub upstream_trust_roots: Vec<PathBuf>,
    pub target_hosts: Vec<String>,
    pub collector_url: String,
    pub collector_trust_roots: Vec<PathBuf>,
    pub spool_dir: PathBuf,
    #[serde(default = "default_pending_ttl")]
    pub pending_ttl_ms: u64,
    #[serde(default = "default_bound_ttl")]
    pub bound_ttl_ms: u64,
    #[serde(default = "default_sweep")]
    pub sweep_interval_ms: u64,
    #[serde(default = "default_backoff_initial")]
    pub export_backoff_initial_ms: u64,
    #[serde(default = "default_backoff_max")]
    pub export_backoff_max_ms: u64,
    #[serde(default = "default_upstream_timeout")]
    pub upstream_timeout_ms: u64,
    #[serde(default)]
    pub event_log: Option<PathBuf>,
    /// Fault injection for negative tests: rewrite every 200 results body
    /// on its way to the client.
    #[serde(default)]
    pub mutate_results: bool,
}

fn default_port() -> u16 {
    8080
}
fn default_bind() -> String {
    "127.0.0.1".into()
}
fn default_pending_ttl() -> u64 {
    10_000
}
fn default_bound_ttl() -> u64 {
    300_000
}
fn default_sweep() -> u64 {
    1_000
}
fn default_backoff_initial() -> u64 {
    100
}
fn default_backoff_max() -> u64 {
    5_000
}
fn default_upstream_timeout() -> u64 {
    30_000
}

impl InterceptorConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }
}
