use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Collector configuration, read from a TOML file:
///
/// ```toml
/// port = 9444                 # 0 picks an ephemeral port
/// bind_address = "127.0.0.1"
/// tls_cert_path = "pki/collector.pem"
/// tls_key_path = "pki/collector.key"
/// store_path = "data/records.jsonl"
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollectorConfig {
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_bind")]
    pub bind_address: String,
    pub tls_cert_path: PathBuf,
    pub tls_key_path: PathBuf,
    #[serde(default = "default_store")]
    pub store_path: PathBuf,
}

fn default_port() -> u16 {
    9444
}

fn default_bind() -> String {
    "127.0.0.1".into()
}

fn default_store() -> PathBuf {
    "records.jsonl".into()
}

impl CollectorConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_apply() {
        let cfg: CollectorConfig = toml::from_str("tls_cert_path = \"c\"\ntls_key_path = \"k\"").unwrap();
        assert_eq!(cfg.port, 9444);
        assert_eq!(cfg.store_path, PathBuf::from("records.jsonl"));
    }
}
