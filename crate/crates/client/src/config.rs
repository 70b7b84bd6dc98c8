use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Client settings, read from TOML:
///
/// ```toml
/// service_url = "https://localhost:9443"
/// proxy_address = "127.0.0.1:8080"   # optional CONNECT proxy
/// trust_roots = ["pki/legitimate-root.pem"]
/// bearer_token = "eyJ..."
/// poll_interval_ms = 200
/// poll_timeout_ms = 30000
/// request_timeout_ms = 10000
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientConfig {
    pub service_url: String,
    #[serde(default)]
    pub proxy_address: Option<String>,
    pub trust_roots: Vec<PathBuf>,
    pub bearer_token: String,
    #[serde(default = "default_poll_interval")]
    pub poll_interval_ms: u64,
    #[serde(default = "default_poll_timeout")]
    pub poll_timeout_ms: u64,
    #[serde(default = "default_request_timeout")]
    pub request_timeout_ms: u64,
}

fn default_poll_interval() -> u64 {
    200
}

fn default_poll_timeout() -> u64 {
    30_000
}

fn default_request_timeout() -> u64 {
    10_000
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("poll_interval_ms must be positive")]
    ZeroPollInterval,
    #[error("poll_timeout_ms ({timeout}) is shorter than poll_interval_ms ({interval})")]
    TimeoutBelowInterval { interval: u64, timeout: u64 },
    #[error("request_timeout_ms must be positive")]
    ZeroRequestTimeout,
    #[error("at least one trust root is required")]
    NoTrustRoots,
}

impl ClientConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.poll_interval_ms == 0 {
            return Err(ConfigError::ZeroPollInterval);
        }
        if self.poll_timeout_ms < self.poll_interval_ms {
            return Err(ConfigError::TimeoutBelowInterval {
                interval: self.poll_interval_ms,
                timeout: self.poll_timeout_ms,
            });
        }
        if self.request_timeout_ms == 0 {
            return Err(ConfigError::ZeroRequestTimeout);
        }
        if self.trust_roots.is_empty() {
            return Err(ConfigError::NoTrustRoots);
        }
        Ok(())
    }
}
