//! The CONNECT proxy.
//!
//! CONNECT requests for target hosts are answered 200 and the tunnel is
//! terminated with a leaf minted for the requested host. Each decrypted
//! request is classified, captured if relevant, and forwarded upstream
//! over a fresh TLS connection validated against the upstream trust
//! roots. Other hosts get a plain byte tunnel.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use bytes::Bytes;
use http_body_util::{BodyExt, Empty, Full};
use hyper::body::Incoming;
use hyper::header::{HeaderName, AUTHORIZATION, CONNECTION, CONTENT_LENGTH};
use hyper::{HeaderMap, Method, Request, Response, StatusCode};
use hyper_util::rt::TokioIo;
use qspy_net::http::{request_once, Route, Target};
use qspy_wire::{now_ms, ResultsBody, SubmissionMetadata};
use rustls::ClientConfig;
use serde::Serialize;
use tokio::net::TcpStream;
use tokio::sync::watch;
use tokio_rustls::TlsAcceptor;

use crate::ca::RogueCa;
use crate::events::{Event, EventLog};
use crate::export::Exporter;
use crate::filter::{strip_port, FilterRule, FlowClass};
use crate::jwt::unverified_subject;
use crate::table::{BindOutcome, CorrelateOutcome, CorrelationTable};

type Body = http_body_util::combinators::BoxBody<Bytes, Infallible>;

fn full(b: impl Into<Bytes>) -> Body {
    Full::new(b.into()).boxed()
}

const HOP_BY_HOP: [&str; 8] = [
    "connection",
    "proxy-connection",
    "keep-alive",
    "proxy-authenticate",
    "proxy-authorization",
    "te",
    "trailer",
    "upgrade",
];

/// Headers recorded with a submission.
const RECORDED_HEADERS: [&str; 5] = ["host", "user-agent", "content-type", "content-length", "accept"];

#[derive(Debug, Default, Serialize)]
pub struct ProxyStats {
    pub submissions: AtomicU64,
    pub result_fetches: AtomicU64,
    pub status_polls: AtomicU64,
    pub pass_through: AtomicU64,
    pub tunnels_intercepted: AtomicU64,
    pub tunnels_blind: AtomicU64,
    pub client_handshake_failures: AtomicU64,
    pub upstream_failures: AtomicU64,
    pub records_complete: AtomicU64,
    pub records_partial: AtomicU64,
    pub evicted: AtomicU64,
}

impl ProxyStats {
    fn count(&self, class: FlowClass) {
        let c = match class {
            FlowClass::Submission => &self.submissions,
            FlowClass::ResultFetch => &self.result_fetches,
            FlowClass::StatusPoll => &self.status_polls,
            FlowClass::PassThrough => &self.pass_through,
        };
        c.fetch_add(1, Ordering::Relaxed);
    }
}

pub struct Shared {
    pub rule: FilterRule,
    pub ca: RogueCa,
    pub table: Mutex<CorrelationTable>,
    pub exporter: Exporter,
    pub events: EventLog,
    pub upstream_tls: Arc<ClientConfig>,
    pub upstream_timeout: Duration,
    pub mutate_results: bool,
    pub stats: ProxyStats,
    pub stop: watch::Receiver<bool>,
}

impl Shared {
    fn emit_record(&self, record: qspy_wire::ConsolidatedRecord) {
        if record.complete {
            self.stats.records_complete.fetch_add(1, Ordering::Relaxed);
        } else {
            self.stats.records_partial.fetch_add(1, Ordering::Relaxed);
        }
        self.events.emit(Event::RecordEmitted {
            job_id: record.job_id.clone(),
            complete: record.complete,
            partial_reason: record.partial_reason,
        });
        self.exporter.export(record);
    }

    /// Runs an eviction sweep and exports what it produced.
    pub fn sweep(&self, now: u64) -> usize {
        let records = self.table.lock().expect("table lock").evict_stale(now);
        let n = records.len();
        for r in records {
            self.stats.evicted.fetch_add(1, Ordering::Relaxed);
            self.events.emit(Event::EntryEvicted {
                flow_id: r.flow_id.clone(),
                job_id: r.job_id.clone(),
                reason: crate::table::EvictReason::TtlExpired,
            });
            self.emit_record(r);
        }
        n
    }
}

/// Entry point for one client TCP connection to the proxy.
pub async fn serve_client(shared: Arc<Shared>, tcp: TcpStream, peer: SocketAddr) {
    let service = hyper::service::service_fn(move |req| handle_connect(shared.clone(), req, peer));
    if let Err(e) = hyper::server::conn::http1::Builder::new()
        .serve_connection(TokioIo::new(tcp), service)
        .with_upgrades()
        .await
    {
        tracing::debug!(%peer, error = %e, "proxy connection ended with error");
    }
}

async fn handle_connect(shared: Arc<Shared>, req: Request<Incoming>, peer: SocketAddr) -> Result<Response<Body>, Infallible> {
    if req.method() != Method::CONNECT {
        let mut r = Response::new(full("only CONNECT is supported\n"));
        *r.status_mut() = StatusCode::METHOD_NOT_ALLOWED;
        return Ok(r);
    }
    let Some(authority) = req.uri().authority().map(|a| a.to_string()) else {
        let mut r = Response::new(full("CONNECT needs host:port\n"));
        *r.status_mut() = StatusCode::BAD_REQUEST;
        return Ok(r);
    };
    let host = strip_port(&authority).to_string();
    let intercepted = shared.rule.is_target(&host);
    shared.events.emit(Event::TunnelOpened {
        authority: authority.clone(),
        intercepted,
    });

    if intercepted {
        let leaf = match shared.ca.leaf_for(&host) {
            Ok(l) => l,
            Err(e) => {
                tracing::error!(%host, error = %e, "cannot mint leaf");
                return Ok(bad_gateway(format!("cannot mint certificate: {e}")));
            }
        };
        shared.stats.tunnels_intercepted.fetch_add(1, Ordering::Relaxed);
        let mut stop = shared.stop.clone();
        tokio::spawn(async move {
            let work = async {
                let upgraded = match hyper::upgrade::on(req).await {
                    Ok(u) => u,
                    Err(e) => return tracing::debug!(error = %e, "CONNECT upgrade failed"),
                };
                let tls = match TlsAcceptor::from(leaf.server_config).accept(TokioIo::new(upgraded)).await {
                    Ok(s) => s,
                    Err(e) => {
                        // The client refused our certificate.
                        shared.stats.client_handshake_failures.fetch_add(1, Ordering::Relaxed);
                        return tracing::info!(%host, error = %e, "client aborted TLS handshake");
                    }
                };
                let svc_shared = shared.clone();
                let service = hyper::service::service_fn(move |r| forward(svc_shared.clone(), r, authority.clone(), peer));
                let _ = hyper::server::conn::http1::Builder::new()
                    .serve_connection(TokioIo::new(tls), service)
                    .await;
            };
            tokio::select! {
                _ = stop.changed() => {}
                _ = work => {}
            }
        });
    } else {
        let mut upstream = match TcpStream::connect(&authority).await {
            Ok(s) => s,
            Err(e) => return Ok(bad_gateway(format!("cannot reach {authority}: {e}"))),
        };
        shared.stats.tunnels_blind.fetch_add(1, Ordering::Relaxed);
        let mut stop = shared.stop.clone();
        tokio::spawn(async move {
            let work = async {
                if let Ok(upgraded) = hyper::upgrade::on(req).await {
                    let _ = tokio::io::copy_bidirectional(&mut TokioIo::new(upgraded), &mut upstream).await;
                }
            };
            tokio::select! {
                _ = stop.changed() => {}
                _ = work => {}
            }
        });
    }
    Ok(Response::new(Empty::new().boxed()))
}

fn bad_gateway(msg: String) -> Response<Body> {
    let mut r = Response::new(full(msg + "\n"));
    *r.status_mut() = StatusCode::BAD_GATEWAY;
    r
}

fn strip_hop_by_hop(headers: &mut HeaderMap) {
    let listed: Vec<HeaderName> = headers
        .get_all(CONNECTION)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(','))
        .filter_map(|name| HeaderName::from_bytes(name.trim().as_bytes()).ok())
        .collect();
    for name in listed {
        headers.remove(name);
    }
    for name in HOP_BY_HOP {
        headers.remove(name);
    }
    // Bodies are relayed whole; framing is recomputed.
    headers.remove("transfer-encoding");
}

fn metadata(parts: &hyper::http::request::Parts, authority: &str, peer: SocketAddr) -> SubmissionMetadata {
    let headers = RECORDED_HEADERS
        .iter()
        .filter_map(|h| Some((h.to_string(), parts.headers.get(*h)?.to_str().ok()?.to_string())))
        .collect::<BTreeMap<_, _>>();
    SubmissionMetadata {
        host: authority.to_string(),
        path: parts.uri.path().to_string(),
        auth_subject: unverified_subject(parts.headers.get(AUTHORIZATION).and_then(|v| v.to_str().ok())),
        headers,
        client_addr: peer.to_string(),
    }
}

/// Inverts every measured bit; only used by the fault-injection flag.
fn mutate_results_body(body: &Bytes) -> Option<Bytes> {
    let ResultsBody::Ready { job_id, counts, shots, seed } = serde_json::from_slice(body).ok()? else {
        return None;
    };
    let counts = counts
        .into_iter()
        .map(|(k, v)| (k.chars().map(|c| if c == '0' { '1' } else { '0' }).collect(), v))
        .collect();
    serde_json::to_vec(&ResultsBody::Ready { job_id, counts, shots, seed })
        .ok()
        .map(Bytes::from)
}

async fn forward(
    shared: Arc<Shared>,
    req: Request<Incoming>,
    authority: String,
    peer: SocketAddr,
) -> Result<Response<Body>, Infallible> {
    let (mut parts, body) = req.into_parts();
    let body = match body.collect().await {
        Ok(b) => b.to_bytes(),
        Err(e) => return Ok(bad_gateway(format!("reading request body: {e}"))),
    };
    let host = strip_port(&authority).to_string();
    let port = authority
        .rsplit_once(':')
        .and_then(|(_, p)| p.parse().ok())
        .unwrap_or(443);
    let path_and_query = parts
        .uri
        .path_and_query()
        .map(|p| p.as_str().to_string())
        .unwrap_or_else(|| "/".into());
    let class = shared.rule.classify(parts.method.as_str(), &host, &path_and_query);
    let flow_id = uuid::Uuid::new_v4().to_string();
    shared.stats.count(class);
    shared.events.emit(Event::FlowClassified {
        flow_id: flow_id.clone(),
        class,
        method: parts.method.to_string(),
        host: authority.clone(),
        path: path_and_query.clone(),
    });

    if class == FlowClass::Submission {
        let meta = metadata(&parts, &authority, peer);
        shared
            .table
            .lock()
            .expect("table lock")
            .capture_submission(&flow_id, &body, meta, now_ms());
    }

    strip_hop_by_hop(&mut parts.headers);
    let mut upstream_req = Request::new(Full::new(body));
    *upstream_req.method_mut() = parts.method.clone();
    *upstream_req.uri_mut() = path_and_query.parse().expect("path came from a valid uri");
    *upstream_req.headers_mut() = parts.headers;

    let target = Target::new(host.clone(), port);
    let exchange = request_once(
        &target,
        &Route::Direct,
        shared.upstream_tls.clone(),
        upstream_req,
        shared.upstream_timeout,
    )
    .await;
    let ex = match exchange {
        Ok(ex) => ex,
        Err(e) => {
            shared.stats.upstream_failures.fetch_add(1, Ordering::Relaxed);
            shared.events.emit(Event::UpstreamFailed {
                flow_id: flow_id.clone(),
                error: e.to_string(),
            });
            tracing::warn!(%flow_id, %authority, error = %e, "upstream request failed");
            if class == FlowClass::Submission {
                let outcome = shared.table.lock().expect("table lock").bind_job_id(&flow_id, 502, b"", now_ms());
                log_bind(&shared, &flow_id, &outcome);
            }
            return Ok(bad_gateway(format!("upstream error: {e}")));
        }
    };

    let status = ex.status.as_u16();
    match class {
        FlowClass::Submission => {
            let outcome = shared.table.lock().expect("table lock").bind_job_id(&flow_id, status, &ex.body, now_ms());
            log_bind(&shared, &flow_id, &outcome);
        }
        FlowClass::ResultFetch => {
            if let Some(job_id) = shared.rule.results_job_id(&path_and_query) {
                let outcome = shared
                    .table
                    .lock()
                    .expect("table lock")
                    .correlate_result(job_id, status, &ex.body, now_ms());
                match outcome {
                    CorrelateOutcome::Complete(r) | CorrelateOutcome::Partial(r) => shared.emit_record(*r),
                    CorrelateOutcome::NotReady | CorrelateOutcome::AlreadyExported => {}
                }
            }
        }
        FlowClass::StatusPoll | FlowClass::PassThrough => {}
    }

    let mut headers = ex.headers;
    strip_hop_by_hop(&mut headers);
    let mut body = ex.body;
    if shared.mutate_results && class == FlowClass::ResultFetch && status == 200 {
        if let Some(m) = mutate_results_body(&body) {
            body = m;
            headers.remove(CONTENT_LENGTH);
        }
    }
    let mut resp = Response::new(full(body));
    *resp.status_mut() = ex.status;
    *resp.headers_mut() = headers;
    Ok(resp)
}

fn log_bind(shared: &Shared, flow_id: &str, outcome: &BindOutcome) {
    match outcome {
        BindOutcome::Bound { job_id } => shared.events.emit(Event::EntryBound {
            flow_id: flow_id.to_string(),
            job_id: job_id.clone(),
        }),
        BindOutcome::Evicted { reason, job_id } => {
            shared.stats.evicted.fetch_add(1, Ordering::Relaxed);
            shared.events.emit(Event::EntryEvicted {
                flow_id: Some(flow_id.to_string()),
                job_id: job_id.clone(),
                reason: *reason,
            })
        }
        BindOutcome::NoEntry => {}
    }
}

