//! Transport plumbing shared by the testbed services: certificate
//! authorities, rustls configuration, an HTTPS accept loop and a one-shot
//! HTTPS client that can tunnel through a CONNECT proxy.

pub mod http;
pub mod pki;
pub mod tls;

pub use http::{Exchange, HttpsServer, RequestError, Route, ServerHandle, Target};
pub use pki::{CertificateAuthority, IssuedCert, PkiError};
