use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Service configuration, read from a TOML file:
///
/// ```toml
/// port = 9443                 # 0 picks an ephemeral port
/// bind_address = "127.0.0.1"
/// tls_cert_path = "pki/cloud.pem"
/// tls_key_path = "pki/cloud.key"
/// jwt_secret = "change-me"
/// jwt_issuer = "qspy-testbed" # optional; checked against `iss` when set
/// queue_delay_ms = 50
/// queue_delay_jitter_ms = 0   # extra uniform delay in [0, jitter]
/// jitter_seed = 0
/// tick_ms = 5                 # execution loop period
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CloudConfig {
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_bind")]
    pub bind_address: String,
    pub tls_cert_path: PathBuf,
    pub tls_key_path: PathBuf,
    pub jwt_secret: String,
    #[serde(default)]
    pub jwt_issuer: Option<String>,
    #[serde(default)]
    pub queue_delay_ms: u64,
    #[serde(default)]
    pub queue_delay_jitter_ms: u64,
    #[serde(default)]
    pub jitter_seed: u64,
    #[serde(default = "default_tick")]
    pub tick_ms: u64,
}

fn default_port() -> u16 {
    9443
}

fn default_bind() -> String {
    "127.0.0.1".into()
}

fn default_tick() -> u64 {
    5
}

impl CloudConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_apply() {
        let cfg: CloudConfig = toml::from_str(
            r#"
            tls_cert_path = "c.pem"
            tls_key_path = "c.key"
            jwt_secret = "s"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.port, 9443);
        assert_eq!(cfg.queue_delay_ms, 0);
        assert_eq!(cfg.tick_ms, 5);
        assert!(cfg.jwt_issuer.is_none());
    }

    #[test]
    fn missing_secret_is_an_error() {
        assert!(toml::from_str::<CloudConfig>("tls_cert_path = \"a\"\ntls_key_path = \"b\"").is_err());
    }
}
