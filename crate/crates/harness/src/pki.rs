//! Test-network PKI: a legitimate root for the cloud and a rogue root for
//! the interceptor (which also signs the collector's certificate).

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::ValueEnum;
use qspy_net::{CertificateAuthority, PkiError};
use serde::{Deserialize, Serialize};

pub const CA_VALIDITY: Duration = Duration::from_secs(365 * 86_400);
const LEAF_VALIDITY: Duration = Duration::from_secs(30 * 86_400);
/// Name the services are addressed by; every leaf carries it.
pub const SERVICE_HOST: &str = "localhost";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CaKind {
    Legitimate,
    Rogue,
}

impl CaKind {
    pub fn subject(self) -> &'static str {
        match self {
            CaKind::Legitimate => "QSPY-TEST-LEGITIMATE Root CA",
            CaKind::Rogue => "QSPY-TEST-ROGUE Root CA",
        }
    }

    fn stem(self) -> &'static str {
        match self {
            CaKind::Legitimate => "legitimate-ca",
            CaKind::Rogue => "rogue-ca",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PemPair {
    pub cert: PathBuf,
    pub key: PathBuf,
}

/// Writes a fresh self-signed root of the given kind to `out_dir`. The key
/// file is created mode 0600.
pub fn gen_ca(kind: CaKind, out_dir: &Path) -> Result<(CertificateAuthority, PemPair), PkiError> {
    let ca = CertificateAuthority::generate(kind.subject(), "QSpy testbed", CA_VALIDITY)?;
    let (cert, key) = ca.write_to(out_dir, kind.stem())?;
    Ok((ca, PemPair { cert, key }))
}

/// Every credential a scenario needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabPki {
    pub legitimate: PemPair,
    pub rogue: PemPair,
    pub cloud: PemPair,
    pub collector: PemPair,
}

impl LabPki {
    pub fn provision(dir: &Path) -> Result<Self, PkiError> {
        let (legit, legitimate) = gen_ca(CaKind::Legitimate, dir)?;
        let (rogue_ca, rogue) = gen_ca(CaKind::Rogue, dir)?;
        let names = [SERVICE_HOST.to_string()];
        let (cert, key) = legit.issue_leaf(&names, LEAF_VALIDITY)?.write_to(dir, "cloud")?;
        let cloud = PemPair { cert, key };
        let (cert, key) = rogue_ca.issue_leaf(&names, LEAF_VALIDITY)?.write_to(dir, "collector")?;
        let collector = PemPair { cert, key };
        Ok(Self {
            legitimate,
            rogue,
            cloud,
            collector,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qspy_net::tls;

    #[test]
    fn roots_are_distinct_and_keys_private() {
        let dir = tempfile::tempdir().unwrap();
        let (rogue, files) = gen_ca(CaKind::Rogue, dir.path()).unwrap();
        let (legit, _) = gen_ca(CaKind::Legitimate, dir.path()).unwrap();
        assert!(std::fs::read_to_string(&files.cert).unwrap().contains("BEGIN CERTIFICATE"));
        let der = rogue.cert_der().as_ref();
        assert!(der.windows(15).any(|w| w == b"QSPY-TEST-ROGUE"));
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            let mode = std::fs::metadata(&files.key).unwrap().permissions().mode();
            assert_eq!(mode & 0o777, 0o600);
        }
        let leaf = rogue.issue_leaf(&["localhost".into()], LEAF_VALIDITY).unwrap();
        assert!(tls::verify_server_cert(&[rogue.cert_der().clone()], &leaf.cert_der, "localhost").is_ok());
        assert!(tls::verify_server_cert(&[legit.cert_der().clone()], &leaf.cert_der, "localhost").is_err());
    }
}
