//! Record export to the collector.
//!
//! Records are handed to a single background task through an unbounded
//! channel, so the forwarding path never waits on the collector. A record
//! that cannot be delivered is appended to `spool.jsonl`; the spool is
//! retried oldest first with capped exponential backoff and survives
//! restarts. A 4xx answer means the collector will never take the record,
//! so it is dropped and logged instead of retried.

use std::collections::VecDeque;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use bytes::Bytes;
use http_body_util::Full;
use hyper::header::CONTENT_TYPE;
use hyper::Request;
use qspy_net::http::{request_once, RequestError, Route, Target};
use qspy_wire::{now_ms, ConsolidatedRecord, IDEMPOTENCY_HEADER, RECORDS_PATH};
use rustls::ClientConfig;
use tokio::sync::{mpsc, Notify};
use tokio::task::JoinHandle;

use crate::events::{Event, EventLog};

#[derive(Debug, Clone)]
pub struct ExportConfig {
    pub collector: Target,
    pub path_prefix: String,
    pub tls: Arc<ClientConfig>,
    pub spool_dir: PathBuf,
    pub backoff_initial: Duration,
    pub backoff_max: Duration,
    pub request_timeout: Duration,
}

#[derive(Debug, Default)]
pub struct ExportStats {
    pub delivered: AtomicU64,
    pub duplicates: AtomicU64,
    pub rejected: AtomicU64,
    pub failed_attempts: AtomicU64,
    /// Records accepted but not yet delivered or dropped.
    pub outstanding: AtomicUsize,
    pub spooled: AtomicUsize,
}

#[derive(Clone)]
pub struct Exporter {
    tx: mpsc::UnboundedSender<ConsolidatedRecord>,
    stats: Arc<ExportStats>,
    wake: Arc<Notify>,
}

enum Delivery {
    Stored { duplicate: bool },
    Rejected(String),
    Retry(String),
}

struct Worker {
    cfg: ExportConfig,
    stats: Arc<ExportStats>,
    events: EventLog,
    spool: VecDeque<ConsolidatedRecord>,
    spool_path: PathBuf,
}

fn read_spool(path: &Path) -> std::io::Result<VecDeque<ConsolidatedRecord>> {
    let mut out = VecDeque::new();
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(e),
    };
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => out.push_back(r),
            // A torn final line from a crash is the only expected cause.
            Err(e) => tracing::warn!(line = n + 1, error = %e, "skipping unreadable spool line"),
        }
    }
    Ok(out)
}

impl Exporter {
    /// Starts the export task, picking up anything left in the spool.
    pub fn start(cfg: ExportConfig, events: EventLog) -> std::io::Result<(Self, JoinHandle<()>)> {
        fs::create_dir_all(&cfg.spool_dir)?;
        let spool_path = cfg.spool_dir.join("spool.jsonl");
        let spool = read_spool(&spool_path)?;
        let stats = Arc::new(ExportStats::default());
        stats.outstanding.store(spool.len(), Ordering::SeqCst);
        stats.spooled.store(spool.len(), Ordering::SeqCst);
        let (tx, rx) = mpsc::unbounded_channel();
        let wake = Arc::new(Notify::new());
        let worker = Worker {
            cfg,
            stats: stats.clone(),
            events,
            spool,
            spool_path,
        };
        let task = tokio::spawn(worker.run(rx, wake.clone()));
        Ok((Self { tx, stats, wake }, task))
    }

    /// Queues a record. Never blocks.
    pub fn export(&self, record: ConsolidatedRecord) {
        self.stats.outstanding.fetch_add(1, Ordering::SeqCst);
        if self.tx.send(record).is_err() {
            self.stats.outstanding.fetch_sub(1, Ordering::SeqCst);
            tracing::error!("export task is gone; record dropped");
        }
    }

    /// Skips the current backoff wait and retries the spool now.
    pub fn retry_now(&self) {
        self.wake.notify_one();
    }

    pub fn stats(&self) -> &ExportStats {
        &self.stats
    }

    pub fn spool_len(&self) -> usize {
        self.stats.spooled.load(Ordering::SeqCst)
    }

    pub fn outstanding(&self) -> usize {
        self.stats.outstanding.load(Ordering::SeqCst)
    }

    /// Waits until every queued record is delivered or dropped.
    pub async fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = tokio::time::Instant::now() + timeout;
        while self.outstanding() > 0 {
            if tokio::time::Instant::now() >= deadline {
                return false;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        true
    }
}

impl Worker {
    async fn run(mut self, mut rx: mpsc::UnboundedReceiver<ConsolidatedRecord>, wake: Arc<Notify>) {
        let mut backoff = self.cfg.backoff_initial;
        let mut retry_at = tokio::time::Instant::now();
        loop {
            let spool_waiting = !self.spool.is_empty();
            tokio::select! {
                biased;
                received = rx.recv() => {
                    let Some(mut record) = received else { break };
                    record.timestamps.t_exported.get_or_insert_with(now_ms);
                    if self.spool.is_empty() {
                        match self.deliver(&record).await {
                            Delivery::Retry(why) => {
                                self.push_spool(record, &why);
                                retry_at = tokio::time::Instant::now() + backoff;
                            }
                            other => self.settle(&record, other),
                        }
                    } else {
                        // Keep delivery order: newer records queue behind the spool.
                        self.push_spool(record, "spool not empty");
                    }
                }
                _ = wake.notified() => {
                    retry_at = tokio::time::Instant::now();
                    backoff = self.cfg.backoff_initial;
                }
                _ = tokio::time::sleep_until(retry_at), if spool_waiting => {
                    if self.drain_spool().await {
                        backoff = self.cfg.backoff_initial;
                    } else {
                        backoff = (backoff * 2).min(self.cfg.backoff_max);
                        retry_at = tokio::time::Instant::now() + backoff;
                    }
                }
            }
        }
    }

    fn settle(&self, record: &ConsolidatedRecord, outcome: Delivery) {
        let key = record.idempotency_key();
        match outcome {
            Delivery::Stored { duplicate } => {
                self.stats.delivered.fetch_add(1, Ordering::SeqCst);
                if duplicate {
                    self.stats.duplicates.fetch_add(1, Ordering::SeqCst);
                }
                self.events.emit(Event::RecordExported {
                    job_id: record.job_id.clone(),
                    idempotency_key: key,
                    complete: record.complete,
                    duplicate,
                });
            }
            Delivery::Rejected(why) => {
                self.stats.rejected.fetch_add(1, Ordering::SeqCst);
                tracing::error!(idempotency_key = %key, %why, "collector rejected record; dropping it");
            }
            Delivery::Retry(_) => unreachable!("retries are spooled"),
        }
        self.stats.outstanding.fetch_sub(1, Ordering::SeqCst);
    }

    fn push_spool(&mut self, record: ConsolidatedRecord, why: &str) {
        self.stats.failed_attempts.fetch_add(1, Ordering::SeqCst);
        if let Err(e) = self.append_spool_file(&record) {
            tracing::error!(error = %e, "spool write failed; record held in memory only");
        }
        self.events.emit(Event::RecordSpooled {
            job_id: record.job_id.clone(),
            idempotency_key: record.idempotency_key(),
            reason: why.to_string(),
        });
        self.spool.push_back(record);
        self.stats.spooled.store(self.spool.len(), Ordering::SeqCst);
    }

    fn append_spool_file(&self, record: &ConsolidatedRecord) -> std::io::Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(&self.spool_path)?;
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        f.write_all(&line)?;
        f.sync_data()
    }

    fn rewrite_spool_file(&self) -> std::io::Result<()> {
        let tmp = self.spool_path.with_extension("jsonl.tmp");
        let mut f = fs::File::create(&tmp)?;
        for r in &self.spool {
            let mut line = serde_json::to_vec(r)?;
            line.push(b'\n');
            f.write_all(&line)?;
        }
        f.sync_data()?;
        fs::rename(&tmp, &self.spool_path)
    }

    /// Delivers spooled records in order; stops at the first retryable
    /// failure. Returns true when the spool is empty.
    async fn drain_spool(&mut self) -> bool {
        let mut progressed = false;
        while let Some(record) = self.spool.front().cloned() {
            match self.deliver(&record).await {
                Delivery::Retry(why) => {
                    self.stats.failed_attempts.fetch_add(1, Ordering::SeqCst);
                    tracing::debug!(%why, remaining = self.spool.len(), "spool retry failed");
                    break;
                }
                outcome => {
                    self.spool.pop_front();
                    self.stats.spooled.store(self.spool.len(), Ordering::SeqCst);
                    self.settle(&record, outcome);
                    progressed = true;
                }
            }
        }
        if progressed {
            if let Err(e) = self.rewrite_spool_file() {
                tracing::error!(error = %e, "spool rewrite failed");
            }
        }
        self.spool.is_empty()
    }

    async fn deliver(&self, record: &ConsolidatedRecord) -> Delivery {
        let body = match serde_json::to_vec(record) {
            Ok(b) => b,
            Err(e) => return Delivery::Rejected(e.to_string()),
        };
        let req = Request::post(format!("{}{RECORDS_PATH}", self.cfg.path_prefix))
            .header(CONTENT_TYPE, "application/json")
            .header(IDEMPOTENCY_HEADER, record.idempotency_key())
            .body(Full::new(Bytes::from(body)))
            .expect("static request parts are valid");
        match request_once(&self.cfg.collector, &Route::Direct, self.cfg.tls.clone(), req, self.cfg.request_timeout).await {
            Ok(ex) if ex.status.is_success() => Delivery::Stored {
                duplicate: ex.status.as_u16() == 200,
            },
            Ok(ex) if ex.status.is_client_error() => {
                Delivery::Rejected(format!("{}: {}", ex.status, String::from_utf8_lossy(&ex.body)))
            }
            Ok(ex) => Delivery::Retry(format!("collector answered {}", ex.status)),
            Err(e @ RequestError::Tls(_)) => Delivery::Retry(format!("collector tls: {e}")),
            Err(e) => Delivery::Retry(e.to_string()),
        }
    }
}
