//! Minimal HTTPS server loop and one-shot HTTPS client.

use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use bytes::Bytes;
use http_body_util::{BodyExt, Full};
use hyper::body::Incoming;
use hyper::header::{HeaderValue, CONTENT_TYPE, HOST};
use hyper::{HeaderMap, Request, Response, StatusCode, Uri};
use hyper_util::rt::TokioIo;
use rustls::{ClientConfig, ServerConfig};
use rustls_pki_types::{CertificateDer, ServerName};
use serde::Serialize;
use thiserror::Error;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::watch;
use tokio::task::{JoinHandle, JoinSet};
use tokio_rustls::client::TlsStream;
use tokio_rustls::{TlsAcceptor, TlsConnector};

pub type Body = Full<Bytes>;

pub fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response<Body> {
    let bytes = serde_json::to_vec(body).expect("response body serializes");
    let mut resp = Response::new(Full::new(Bytes::from(bytes)));
    *resp.status_mut() = status;
    resp.headers_mut()
        .insert(CONTENT_TYPE, HeaderValue::from_static("application/json"));
    resp
}

pub fn text_response(status: StatusCode, body: impl Into<String>) -> Response<Body> {
    let mut resp = Response::new(Full::new(Bytes::from(body.into())));
    *resp.status_mut() = status;
    resp.headers_mut()
        .insert(CONTENT_TYPE, HeaderValue::from_static("text/plain; charset=utf-8"));
    resp
}

/// Handle to a running server. Dropping it leaves the server running;
/// call [`ServerHandle::shutdown`] to stop it.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: watch::Sender<bool>,
    task: JoinHandle<()>,
}

impl ServerHandle {
    pub fn new(addr: SocketAddr, stop: watch::Sender<bool>, task: JoinHandle<()>) -> Self {
        Self { addr, stop, task }
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, drops every open connection and waits for the
    /// accept loop to exit.
    pub async fn shutdown(self) {
        let _ = self.stop.send(true);
        let _ = self.task.await;
    }
}

pub struct HttpsServer;

impl HttpsServer {
    /// Serves `handler` over TLS on `listener`. Request bodies are read in
    /// full before the handler runs.
    pub fn spawn<H, F>(listener: TcpListener, tls: Arc<ServerConfig>, handler: H) -> io::Result<ServerHandle>
    where
        H: Fn(Request<Bytes>, SocketAddr) -> F + Send + Sync + 'static,
        F: Future<Output = Response<Body>> + Send + 'static,
    {
        let addr = listener.local_addr()?;
        let (stop, mut stopped) = watch::channel(false);
        let handler = Arc::new(handler);
        let acceptor = TlsAcceptor::from(tls);
        let task = tokio::spawn(async move {
            let mut conns = JoinSet::new();
            loop {
                tokio::select! {
                    _ = stopped.changed() => break,
                    accepted = listener.accept() => {
                        let Ok((tcp, peer)) = accepted else { continue };
                        let acceptor = acceptor.clone();
                        let handler = handler.clone();
                        conns.spawn(async move {
                            let tls = match tokio::time::timeout(Duration::from_secs(10), acceptor.accept(tcp)).await {
                                Ok(Ok(s)) => s,
                                Ok(Err(e)) => {
                                    tracing::debug!(%peer, error = %e, "tls accept failed");
                                    return;
                                }
                                Err(_) => return,
                            };
                            let service = hyper::service::service_fn(move |req: Request<Incoming>| {
                                let handler = handler.clone();
                                async move {
                                    let (parts, body) = req.into_parts();
                                    let resp = match body.collect().await {
                                        Ok(b) => handler(Request::from_parts(parts, b.to_bytes()), peer).await,
                                        Err(e) => text_response(StatusCode::BAD_REQUEST, format!("body: {e}")),
                                    };
                                    Ok::<_, hyper::Error>(resp)
                                }
                            });
                            let _ = hyper::server::conn::http1::Builder::new()
                                .serve_connection(TokioIo::new(tls), service)
                                .await;
                        });
                    }
                    Some(_) = conns.join_next(), if !conns.is_empty() => {}
                }
            }
            conns.abort_all();
            while conns.join_next().await.is_some() {}
        });
        Ok(ServerHandle { addr, stop, task })
    }
}

/// Where a request is ultimately addressed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    pub host: String,
    pub port: u16,
}

impl Target {
    pub fn new(host: impl Into<String>, port: u16) -> Self {
        Self { host: host.into(), port }
    }

    /// Parses `https://host[:port][/prefix]`, returning the target and the
    /// path prefix without a trailing slash.
    pub fn from_url(url: &str) -> Result<(Self, String), RequestError> {
        let uri: Uri = url
            .parse()
            .map_err(|e| RequestError::Http(format!("bad url `{url}`: {e}")))?;
        if uri.scheme_str() != Some("https") {
            return Err(RequestError::Http(format!("`{url}` is not an https url")));
        }
        let host = uri
            .host()
            .ok_or_else(|| RequestError::Http(format!("`{url}` has no host")))?
            .trim_start_matches('[')
            .trim_end_matches(']')
            .to_string();
        let port = uri.port_u16().unwrap_or(443);
        let prefix = uri.path().trim_end_matches('/').to_string();
        Ok((Self { host, port }, prefix))
    }

    pub fn authority(&self) -> String {
        if self.host.contains(':') {
            format!("[{}]:{}", self.host, self.port)
        } else {
            format!("{}:{}", self.host, self.port)
        }
    }
}

/// How to reach a [`Target`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Route {
    Direct,
    /// Tunnel through an HTTP CONNECT proxy at `host:port`.
    Proxy(String),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RequestError {
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("proxy refused tunnel: {0}")]
    Proxy(String),
    #[error("tls failure: {0}")]
    Tls(String),
    #[error("http failure: {0}")]
    Http(String),
    #[error("timed out")]
    Timeout,
}

impl RequestError {
    pub fn is_tls(&self) -> bool {
        matches!(self, RequestError::Tls(_))
    }
}

/// Response plus the certificate chain the server presented.
#[derive(Debug, Clone)]
pub struct Exchange {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Bytes,
    pub peer_chain: Vec<CertificateDer<'static>>,
}

async fn open_tunnel(proxy: &str, target: &Target) -> Result<TcpStream, RequestError> {
    let mut tcp = TcpStream::connect(proxy)
        .await
        .map_err(|e| RequestError::Connect(format!("proxy {proxy}: {e}")))?;
    let authority = target.authority();
    let hello = format!("CONNECT {authority} HTTP/1.1\r\nHost: {authority}\r\n\r\n");
    tcp.write_all(hello.as_bytes())
        .await
        .map_err(|e| RequestError::Proxy(e.to_string()))?;

    // Read byte-wise so nothing past the header block is consumed.
    let mut head = Vec::with_capacity(128);
    let mut byte = [0u8; 1];
    while !head.ends_with(b"\r\n\r\n") {
        if head.len() > 8192 {
            return Err(RequestError::Proxy("oversized CONNECT response".into()));
        }
        let n = tcp
            .read(&mut byte)
            .await
            .map_err(|e| RequestError::Proxy(e.to_string()))?;
        if n == 0 {
            return Err(RequestError::Proxy("proxy closed during CONNECT".into()));
        }
        head.push(byte[0]);
    }
    let status_line = String::from_utf8_lossy(&head);
    let status_line = status_line.lines().next().unwrap_or_default();
    let code = status_line.split_whitespace().nth(1).unwrap_or_default();
    if code != "200" {
        return Err(RequestError::Proxy(status_line.to_string()));
    }
    Ok(tcp)
}

fn classify_io(e: io::Error) -> RequestError {
    let is_tls = e
        .get_ref()
        .map(|inner| inner.downcast_ref::<rustls::Error>().is_some())
        .unwrap_or(false)
        || e.kind() == io::ErrorKind::InvalidData;
    if is_tls {
        RequestError::Tls(e.to_string())
    } else {
        RequestError::Connect(e.to_string())
    }
}

/// Opens a TLS session to `target`, validating its chain against the
/// roots in `tls`.
pub async fn connect_tls(
    target: &Target,
    route: &Route,
    tls: Arc<ClientConfig>,
) -> Result<(TlsStream<TcpStream>, Vec<CertificateDer<'static>>), RequestError> {
    let tcp = match route {
        Route::Direct => TcpStream::connect((target.host.as_str(), target.port))
            .await
            .map_err(|e| RequestError::Connect(format!("{}: {e}", target.authority())))?,
        Route::Proxy(proxy) => open_tunnel(proxy, target).await?,
    };
    let _ = tcp.set_nodelay(true);
    let name = ServerName::try_from(target.host.clone())
        .map_err(|e| RequestError::Tls(format!("bad server name: {e}")))?;
    let stream = TlsConnector::from(tls)
        .connect(name, tcp)
        .await
        .map_err(classify_io)?;
    let chain = stream
        .get_ref()
        .1
        .peer_certificates()
        .map(|c| c.iter().map(|d| d.clone().into_owned()).collect())
        .unwrap_or_default();
    Ok((stream, chain))
}

/// Sends `req` on a fresh connection and reads the whole response.
pub async fn request_once(
    target: &Target,
    route: &Route,
    tls: Arc<ClientConfig>,
    mut req: Request<Body>,
    timeout: Duration,
) -> Result<Exchange, RequestError> {
    let fut = async {
        let (stream, peer_chain) = connect_tls(target, route, tls).await?;
        let (mut sender, conn) = hyper::client::conn::http1::handshake(TokioIo::new(stream))
            .await
            .map_err(|e| RequestError::Http(e.to_string()))?;
        tokio::spawn(async move {
            let _ = conn.await;
        });
        if !req.headers().contains_key(HOST) {
            let host = HeaderValue::from_str(&target.authority())
                .map_err(|e| RequestError::Http(e.to_string()))?;
            req.headers_mut().insert(HOST, host);
        }
        let resp = sender
            .send_request(req)
            .await
            .map_err(|e| RequestError::Http(e.to_string()))?;
        let (parts, body) = resp.into_parts();
        let body = body
            .collect()
            .await
            .map_err(|e| RequestError::Http(e.to_string()))?
            .to_bytes();
        Ok(Exchange {
            status: parts.status,
            headers: parts.headers,
            body,
            peer_chain,
        })
    };
    tokio::time::timeout(timeout, fut)
        .await
        .map_err(|_| RequestError::Timeout)?
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_parsing() {
        let (t, prefix) = Target::from_url("https://cloud.local:9443").unwrap();
        assert_eq!(t, Target::new("cloud.local", 9443));
        assert_eq!(prefix, "");
        let (t, prefix) = Target::from_url("https://localhost/base/").unwrap();
        assert_eq!(t.port, 443);
        assert_eq!(prefix, "/base");
        assert!(Target::from_url("http://localhost:80").is_err());
        let (t, _) = Target::from_url("https://[::1]:8443").unwrap();
        assert_eq!(t.host, "::1");
        assert_eq!(t.authority(), "[::1]:8443");
    }
}
