//! Leaf certificates minted on demand from the rogue root.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use qspy_net::{tls, CertificateAuthority, PkiError};
use rustls::ServerConfig;

#[derive(Clone)]
pub struct MintedLeaf {
    pub serial_hex: String,
    pub server_config: Arc<ServerConfig>,
}

pub struct RogueCa {
    ca: CertificateAuthority,
    leaf_validity: Duration,
    cache: Mutex<HashMap<String, MintedLeaf>>,
}

impl RogueCa {
    pub fn new(ca: CertificateAuthority, leaf_validity: Duration) -> Self {
        Self {
            ca,
            leaf_validity,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Loads the root and key; fails if either is unreadable or they do
    /// not belong together.
    pub fn load(cert: &Path, key: &Path, leaf_validity: Duration) -> Result<Self, PkiError> {
        Ok(Self::new(CertificateAuthority::load(cert, key)?, leaf_validity))
    }

    pub fn root(&self) -> &CertificateAuthority {
        &self.ca
    }

    /// Returns the cached leaf for `host`, minting one on first use.
    pub fn leaf_for(&self, host: &str) -> Result<MintedLeaf, PkiError> {
        let host = host.to_ascii_lowercase();
        let mut cache = self.cache.lock().expect("leaf cache lock");
        if let Some(leaf) = cache.get(&host) {
            return Ok(leaf.clone());
        }
        let issued = self.ca.issue_leaf(std::slice::from_ref(&host), self.leaf_validity)?;
        let chain = vec![issued.cert_der.clone()];
        let leaf = MintedLeaf {
            serial_hex: issued.serial_hex.clone(),
            server_config: tls::server_config(chain, issued.key_der())?,
        };
        tracing::info!(%host, serial = %leaf.serial_hex, "minted leaf");
        cache.insert(host, leaf.clone());
        Ok(leaf)
    }

    pub fn minted(&self) -> usize {
        self.cache.lock().expect("leaf cache lock").len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_hit_returns_same_serial() {
        let root = CertificateAuthority::generate("QSPY-TEST-ROGUE Root", "test", Duration::from_secs(86_400)).unwrap();
        let ca = RogueCa::new(root, Duration::from_secs(3600));
        let a = ca.leaf_for("cloud.local").unwrap();
        let b = ca.leaf_for("CLOUD.local").unwrap();
        assert_eq!(a.serial_hex, b.serial_hex);
        let c = ca.leaf_for("other.local").unwrap();
        assert_ne!(a.serial_hex, c.serial_hex);
        assert_eq!(ca.minted(), 2);
    }

    #[test]
    fn missing_key_fails_to_load() {
        let dir = tempfile::tempdir().unwrap();
        let root = CertificateAuthority::generate("R", "test", Duration::from_secs(60)).unwrap();
        let (cert, _) = root.write_to(dir.path(), "rogue").unwrap();
        assert!(RogueCa::load(&cert, &dir.path().join("absent.key"), Duration::from_secs(60)).is_err());
    }
}
