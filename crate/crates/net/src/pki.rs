//! Root CA generation and leaf issuance.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rcgen::{
    BasicConstraints, CertificateParams, DistinguishedName, DnType, ExtendedKeyUsagePurpose, IsCa,
    KeyPair, KeyUsagePurpose, SerialNumber,
};
use rustls_pki_types::{CertificateDer, PrivateKeyDer, PrivatePkcs8KeyDer};
use thiserror::Error;
use time::OffsetDateTime;

#[derive(Debug, Error)]
pub enum PkiError {
    #[error("certificate generation failed: {0}")]
    Rcgen(#[from] rcgen::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PkiError + '_ {
    move |source| PkiError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A root certificate authority able to sign server leaves.
pub struct CertificateAuthority {
    cert_pem: String,
    cert_der: CertificateDer<'static>,
    key: KeyPair,
    /// Re-signed copy of the root used only as the issuer handle for
    /// rcgen; its subject and key identifier match the original.
    issuer: rcgen::Certificate,
    common_name: String,
    not_before: OffsetDateTime,
    not_after: OffsetDateTime,
}

/// A freshly signed leaf and its private key.
#[derive(Clone)]
pub struct IssuedCert {
    pub cert_der: CertificateDer<'static>,
    pub cert_pem: String,
    pub key_pem: String,
    key_der: Vec<u8>,
    pub serial_hex: String,
}

impl IssuedCert {
    pub fn key_der(&self) -> PrivateKeyDer<'static> {
        PrivateKeyDer::Pkcs8(PrivatePkcs8KeyDer::from(self.key_der.clone()))
    }

    /// Writes `<stem>.pem` and `<stem>.key` under `dir`; the key file is
    /// readable by the owner only.
    pub fn write_to(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf), PkiError> {
        write_pair(dir, stem, &self.cert_pem, &self.key_pem)
    }
}

impl CertificateAuthority {
    /// Self-signed root valid from one hour ago for `validity`.
    pub fn generate(common_name: &str, organization: &str, validity: Duration) -> Result<Self, PkiError> {
        let now = OffsetDateTime::now_utc();
        let mut params = CertificateParams::default();
        let mut dn = DistinguishedName::new();
        dn.push(DnType::CommonName, common_name);
        dn.push(DnType::OrganizationName, organization);
        params.distinguished_name = dn;
        params.is_ca = IsCa::Ca(BasicConstraints::Unconstrained);
        params.key_usages = vec![
            KeyUsagePurpose::KeyCertSign,
            KeyUsagePurpose::CrlSign,
            KeyUsagePurpose::DigitalSignature,
        ];
        params.not_before = now - time::Duration::hours(1);
        params.not_after = now + validity;
        params.serial_number = Some(random_serial());

        let key = KeyPair::generate()?;
        let cert = params.clone().self_signed(&key)?;
        Ok(Self {
            cert_pem: cert.pem(),
            cert_der: cert.der().clone(),
            common_name: common_name.to_string(),
            not_before: params.not_before,
            not_after: params.not_after,
            key,
            issuer: cert,
        })
    }

    pub fn from_pem(cert_pem: &str, key_pem: &str) -> Result<Self, PkiError> {
        let key = KeyPair::from_pem(key_pem)?;
        let params = CertificateParams::from_ca_cert_pem(cert_pem)?;
        if !matches!(params.is_ca, IsCa::Ca(_)) {
            return Err(PkiError::Invalid("certificate is not a CA".into()));
        }
        let cert_der = crate::tls::certs_from_pem(cert_pem)?
            .into_iter()
            .next()
            .ok_or_else(|| PkiError::Invalid("no certificate in PEM".into()))?;
        let common_name = params
            .distinguished_name
            .get(&DnType::CommonName)
            .map(|v| match v {
                rcgen::DnValue::PrintableString(s) => s.to_string(),
                rcgen::DnValue::Utf8String(s) => s.clone(),
                other => format!("{other:?}"),
            })
            .unwrap_or_default();
        let (not_before, not_after) = (params.not_before, params.not_after);
        let issuer = params.self_signed(&key)?;
        let ca = Self {
            cert_pem: cert_pem.to_string(),
            cert_der,
            key,
            issuer,
            common_name,
            not_before,
            not_after,
        };
        // A leaf signed with a foreign key would not verify against the root.
        let probe = ca.issue_leaf(&["ca-key-probe.invalid".into()], Duration::from_secs(60))?;
        crate::tls::verify_server_cert(std::slice::from_ref(&ca.cert_der), &probe.cert_der, "ca-key-probe.invalid")
            .map_err(|_| PkiError::Invalid("CA key does not match CA certificate".into()))?;
        Ok(ca)
    }

    pub fn load(cert_path: &Path, key_path: &Path) -> Result<Self, PkiError> {
        let cert = fs::read_to_string(cert_path).map_err(io_err(cert_path))?;
        let key = fs::read_to_string(key_path).map_err(io_err(key_path))?;
        Self::from_pem(&cert, &key)
    }

    pub fn cert_pem(&self) -> &str {
        &self.cert_pem
    }

    pub fn cert_der(&self) -> &CertificateDer<'static> {
        &self.cert_der
    }

    pub fn key_pem(&self) -> String {
        self.key.serialize_pem()
    }

    pub fn common_name(&self) -> &str {
        &self.common_name
    }

    pub fn validity(&self) -> (OffsetDateTime, OffsetDateTime) {
        (self.not_before, self.not_after)
    }

    /// Writes `<stem>.pem` and `<stem>.key` (mode 0600) under `dir`.
    pub fn write_to(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf), PkiError> {
        write_pair(dir, stem, &self.cert_pem, &self.key.serialize_pem())
    }

    /// Signs a server leaf for `names` (DNS names or IP literals). The
    /// leaf's validity is clipped to the root's.
    pub fn issue_leaf(&self, names: &[String], validity: Duration) -> Result<IssuedCert, PkiError> {
        let first = names
            .first()
            .ok_or_else(|| PkiError::Invalid("leaf needs at least one name".into()))?;
        let now = OffsetDateTime::now_utc();
        let mut params = CertificateParams::new(names.to_vec())?;
        let mut dn = DistinguishedName::new();
        dn.push(DnType::CommonName, first.as_str());
        params.distinguished_name = dn;
        params.is_ca = IsCa::ExplicitNoCa;
        params.key_usages = vec![KeyUsagePurpose::DigitalSignature, KeyUsagePurpose::KeyEncipherment];
        params.extended_key_usages = vec![ExtendedKeyUsagePurpose::ServerAuth];
        params.use_authority_key_identifier_extension = true;
        params.not_before = (now - time::Duration::hours(1)).max(self.not_before);
        params.not_after = (now + validity).min(self.not_after);
        let serial = random_serial();
        let serial_hex = hex::encode(serial.as_ref());
        params.serial_number = Some(serial);

        let key = KeyPair::generate()?;
        let cert = params.signed_by(&key, &self.issuer, &self.key)?;
        Ok(IssuedCert {
            cert_der: cert.der().clone(),
            cert_pem: cert.pem(),
            key_pem: key.serialize_pem(),
            key_der: key.serialize_der(),
            serial_hex,
        })
    }
}

fn random_serial() -> SerialNumber {
    let mut bytes: [u8; 16] = rand::random();
    // Positive and without a leading zero byte.
    bytes[0] = (bytes[0] & 0x7f) | 0x01;
    SerialNumber::from_slice(&bytes)
}

fn write_pair(dir: &Path, stem: &str, cert_pem: &str, key_pem: &str) -> Result<(PathBuf, PathBuf), PkiError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let cert_path = dir.join(format!("{stem}.pem"));
    let key_path = dir.join(format!("{stem}.key"));
    fs::write(&cert_path, cert_pem).map_err(io_err(&cert_path))?;
    write_private(&key_path, key_pem.as_bytes()).map_err(io_err(&key_path))?;
    Ok((cert_path, key_path))
}

#[cfg(unix)]
fn write_private(path: &Path, data: &[u8]) -> io::Result<()> {
    use std::io::Write;
    use std::os::unix::fs::{OpenOptionsExt, PermissionsExt};
    let mut f = fs::OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(true)
        .mode(0o600)
        .open(path)?;
    f.set_permissions(fs::Permissions::from_mode(0o600))?;
    f.write_all(data)
}

#[cfg(not(unix))]
fn write_private(path: &Path, data: &[u8]) -> io::Result<()> {
    fs::write(path, data)
}
