//! Submitting jobs and polling for their results.

use std::sync::Arc;
use std::time::{Duration, Instant};

use bytes::Bytes;
use http_body_util::Full;
use hyper::header::{AUTHORIZATION, CONTENT_TYPE};
use hyper::{Method, Request, StatusCode};
use qspy_circuit::digest::sha256_hex;
use qspy_circuit::MeasurementResult;
use qspy_net::http::{request_once, Exchange, RequestError, Route, Target};
use qspy_net::tls;
use qspy_wire::{now_ms, ErrorBody, ResultsBody, SubmitResponse, JOBS_PATH};
use rustls::ClientConfig as TlsConfig;
use rustls_pki_types::CertificateDer;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;
use tokio::task::JoinSet;

use crate::config::ClientConfig;
use crate::transcript::{normalized_hash, ClientTranscript, Recorder, ResultShape, TranscriptEntry};
use crate::workload::PlannedJob;

#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum ClientError {
    #[error("tls: {0}")]
    Tls(String),
    #[error("connect: {0}")]
    Connect(String),
    #[error("timeout: {0}")]
    Timeout(String),
    #[error("http {status}: {reason}")]
    Http { status: u16, reason: String },
    #[error("job {job_id} failed: {error}")]
    JobFailed { job_id: String, error: String },
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("config: {0}")]
    Config(String),
}

impl From<RequestError> for ClientError {
    fn from(e: RequestError) -> Self {
        match e {
            RequestError::Tls(m) => ClientError::Tls(m),
            RequestError::Connect(m) => ClientError::Connect(m),
            RequestError::Proxy(m) => ClientError::Connect(format!("proxy: {m}")),
            RequestError::Timeout => ClientError::Timeout("request timed out".into()),
            RequestError::Http(m) => ClientError::Protocol(m),
        }
    }
}

/// What happened to one job of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobReport {
    pub job_index: usize,
    pub job_id: Option<String>,
    pub result: Option<MeasurementResult>,
    pub error: Option<ClientError>,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub transcript: ClientTranscript,
    /// One report per planned job, in workload order.
    pub jobs: Vec<JobReport>,
}

impl ScenarioRun {
    pub fn failures(&self) -> impl Iterator<Item = &JobReport> {
        self.jobs.iter().filter(|j| j.error.is_some())
    }
}

pub struct Client {
    target: Target,
    prefix: String,
    route: Route,
    tls: Arc<TlsConfig>,
    token: String,
    poll_interval: Duration,
    poll_timeout: Duration,
    request_timeout: Duration,
}

impl Client {
    pub fn new(cfg: &ClientConfig) -> Result<Self, ClientError> {
        let roots = tls::load_roots(&cfg.trust_roots).map_err(|e| ClientError::Config(e.to_string()))?;
        Self::with_roots(cfg, &roots)
    }

    pub fn with_roots(cfg: &ClientConfig, roots: &[CertificateDer<'static>]) -> Result<Self, ClientError> {
        cfg.validate().map_err(|e| ClientError::Config(e.to_string()))?;
        let (target, prefix) = Target::from_url(&cfg.service_url).map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(Self {
            target,
            prefix,
            route: cfg.proxy_address.clone().map_or(Route::Direct, Route::Proxy),
            tls: tls::client_config(roots).map_err(|e| ClientError::Config(e.to_string()))?,
            token: cfg.bearer_token.clone(),
            poll_interval: Duration::from_millis(cfg.poll_interval_ms),
            poll_timeout: Duration::from_millis(cfg.poll_timeout_ms),
            request_timeout: Duration::from_millis(cfg.request_timeout_ms),
        })
    }

    /// Sends one request and appends its transcript entry.
    async fn exchange(
        &self,
        rec: &Recorder,
        job_index: usize,
        job_id: Option<&str>,
        method: Method,
        path: String,
        body: Bytes,
    ) -> Result<Exchange, ClientError> {
        let mut builder = Request::builder()
            .method(method.clone())
            .uri(path.as_str())
            .header(AUTHORIZATION, format!("Bearer {}", self.token));
        if !body.is_empty() {
            builder = builder.header(CONTENT_TYPE, "application/json");
        }
        let req = builder
            .body(Full::new(body.clone()))
            .map_err(|e| ClientError::Protocol(e.to_string()))?;

        let started = Instant::now();
        let outcome = request_once(&self.target, &self.route, self.tls.clone(), req, self.request_timeout).await;
        let latency_ms = started.elapsed().as_secs_f64() * 1000.0;

        let mut entry = TranscriptEntry {
            sequence_no: 0,
            job_index,
            job_id: job_id.map(str::to_string),
            method: method.to_string(),
            path,
            request_body_hash: sha256_hex(&body),
            response_status: None,
            response_body_hash: None,
            normalized_body_hash: None,
            result_shape: None,
            tls_peer_chain_fingerprints: Vec::new(),
            latency_ms,
            error: None,
        };
        let result = match outcome {
            Ok(ex) => {
                // A fresh submission learns its id from this very response.
                let id = job_id.map(str::to_string).or_else(|| {
                    (ex.status == StatusCode::OK)
                        .then(|| serde_json::from_slice::<SubmitResponse>(&ex.body).ok())
                        .flatten()
                        .map(|r| r.job_id)
                });
                entry.job_id = id.clone();
                entry.response_status = Some(ex.status.as_u16());
                entry.response_body_hash = Some(sha256_hex(&ex.body));
                entry.normalized_body_hash = Some(normalized_hash(&ex.body, id.as_deref()));
                entry.tls_peer_chain_fingerprints = ex.peer_chain.iter().map(tls::cert_fingerprint).collect();
                if entry.path.ends_with("/results") {
                    entry.result_shape = Some(ResultShape::of(&ex.body));
                }
                Ok(ex)
            }
            Err(e) => {
                let e = ClientError::from(e);
                entry.error = Some(e.to_string());
                Err(e)
            }
        };
        rec.append(entry);
        result
    }

    /// Submits `job`, then (if the job asks for it) polls its results until
    /// a 200 arrives or the poll timeout passes.
    pub async fn submit_and_poll(&self, job: &PlannedJob, rec: &Recorder) -> JobReport {
        let mut report = JobReport {
            job_index: job.index,
            job_id: None,
            result: None,
            error: None,
        };
        match self.run_job(job, rec, &mut report).await {
            Ok(()) => {}
            Err(e) => {
                tracing::debug!(job = job.index, error = %e, "job did not complete");
                report.error = Some(e);
            }
        }
        report
    }

    async fn run_job(&self, job: &PlannedJob, rec: &Recorder, report: &mut JobReport) -> Result<(), ClientError> {
        let body = Bytes::from(job.payload.to_json());
        let submit_path = format!("{}{JOBS_PATH}", self.prefix);
        let ex = self.exchange(rec, job.index, None, Method::POST, submit_path, body).await?;
        if ex.status != StatusCode::OK {
            return Err(http_error(&ex));
        }
        let job_id = serde_json::from_slice::<SubmitResponse>(&ex.body)
            .map_err(|e| ClientError::Protocol(format!("submission response: {e}")))?
            .job_id;
        report.job_id = Some(job_id.clone());
        if !job.poll {
            return Ok(());
        }

        let results_path = format!("{}{JOBS_PATH}/{job_id}/results", self.prefix);
        let deadline = Instant::now() + self.poll_timeout;
        loop {
            tokio::time::sleep(self.poll_interval).await;
            let ex = self
                .exchange(rec, job.index, Some(&job_id), Method::GET, results_path.clone(), Bytes::new())
                .await?;
            match ex.status {
                StatusCode::OK => {
                    let body: ResultsBody = serde_json::from_slice(&ex.body)
                        .map_err(|e| ClientError::Protocol(format!("results response: {e}")))?;
                    return match body {
                        ResultsBody::Failed { error, .. } => Err(ClientError::JobFailed { job_id, error }),
                        ready => {
                            report.result = ready.measurement();
                            Ok(())
                        }
                    };
                }
                StatusCode::ACCEPTED if Instant::now() < deadline => {}
                StatusCode::ACCEPTED => {
                    return Err(ClientError::Timeout(format!(
                        "job {job_id} not finished after {} ms",
                        self.poll_timeout.as_millis()
                    )))
                }
                _ => return Err(http_error(&ex)),
            }
        }
    }
}

fn http_error(ex: &Exchange) -> ClientError {
    let reason = serde_json::from_slice::<ErrorBody>(&ex.body)
        .map(|b| b.reason)
        .unwrap_or_else(|_| String::from_utf8_lossy(&ex.body).chars().take(200).collect());
    ClientError::Http {
        status: ex.status.as_u16(),
        reason,
    }
}

/// Runs every job with at most `max_in_flight` outstanding at once. Jobs
/// start in workload order; per-job errors end up in the reports.
pub async fn run_scenario(client: Arc<Client>, label: &str, jobs: &[PlannedJob], max_in_flight: usize) -> ScenarioRun {
    let started_at = now_ms();
    let rec = Arc::new(Recorder::default());
    let permits = Arc::new(Semaphore::new(max_in_flight.max(1)));
    let mut set = JoinSet::new();
    for job in jobs {
        let job = job.clone();
        let permit = permits.clone().acquire_owned().await.expect("semaphore is never closed");
        let (client, rec) = (client.clone(), rec.clone());
        set.spawn(async move {
            let report = client.submit_and_poll(&job, &rec).await;
            drop(permit);
            report
        });
    }
    let mut reports = Vec::with_capacity(jobs.len());
    while let Some(r) = set.join_next().await {
        reports.push(r.expect("job task panicked"));
    }
    reports.sort_by_key(|r| r.job_index);
    let rec = Arc::into_inner(rec).expect("all job tasks finished");
    ScenarioRun {
        transcript: ClientTranscript {
            scenario_label: label.to_string(),
            started_at,
            entries: rec.into_entries(),
        },
        jobs: reports,
    }
}
