//! Bringing the services up, running one workload through them, and
//! collecting everything needed to judge the run afterwards.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use clap::ValueEnum;
use qspy_client::{prepare_workload, run_scenario, Client, ClientConfig, ClientTranscript, JobReport};
use qspy_cloud::{issue_token, AuthClaims, CloudConfig, CloudService, JobLogEntry};
use qspy_collector::{Collector, CollectorConfig, Store, StoredRecord};
use qspy_interceptor::{Interceptor, InterceptorConfig, StatsSnapshot};
use qspy_wire::now_ms;
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;
use tokio::time::Instant;

use crate::pki::{LabPki, SERVICE_HOST};
use crate::verify::{run_verdicts, Verdicts};

const ISSUER: &str = "qspy-testbed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Intercepted,
}

impl Mode {
    fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Intercepted => "intercepted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenMode {
    Valid,
    /// Signed with the wrong secret; every request is answered 401.
    Forged,
}

/// Test-only collector faults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectorFault {
    None,
    /// Never started.
    Down,
    /// Stopped once it holds this many records.
    KillAfter(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub workload: String,
    /// Seeds the cloud's queue-delay jitter.
    pub seed: u64,
    pub max_in_flight: usize,
    pub queue_delay_ms: u64,
    pub queue_jitter_ms: u64,
    pub poll_interval_ms: u64,
    pub poll_timeout_ms: u64,
    pub token: TokenMode,
    /// Whether the client trusts the rogue root (intercepted runs only).
    pub trust_rogue_root: bool,
    pub collector_fault: CollectorFault,
    /// Bring a missing collector back after the client finishes and let
    /// the spool drain.
    pub restart_collector: bool,
    /// Test-only: the interceptor rewrites results bodies.
    pub mutate_results: bool,
    pub pending_ttl_ms: u64,
    pub bound_ttl_ms: u64,
    pub sweep_interval_ms: u64,
    pub quiesce_timeout_ms: u64,
}

impl RunOptions {
    pub fn new(workload: impl Into<String>) -> Self {
        Self {
            workload: workload.into(),
            seed: 0,
            max_in_flight: 4,
            queue_delay_ms: 20,
            queue_jitter_ms: 0,
            poll_interval_ms: 20,
            poll_timeout_ms: 30_000,
            token: TokenMode::Valid,
            trust_rogue_root: true,
            collector_fault: CollectorFault::None,
            restart_collector: false,
            mutate_results: false,
            pending_ttl_ms: 5_000,
            bound_ttl_ms: 2_000,
            sweep_interval_ms: 200,
            quiesce_timeout_ms: 15_000,
        }
    }
}

/// What the interceptor looked like once the run settled.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InterceptorObservation {
    pub stats: StatsSnapshot,
    pub collector_killed: bool,
    /// Records waiting in the spool after the client finished.
    pub spool_after_run: usize,
    /// Lines in `spool.jsonl` at the same moment.
    pub spool_file_lines_after_run: usize,
    pub spool_after_drain: usize,
    pub table_len_at_quiescence: usize,
    /// Deliveries the collector answered as duplicates.
    pub export_duplicates: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub mode: Mode,
    pub options: RunOptions,
    pub transcript: ClientTranscript,
    pub jobs: Vec<JobReport>,
    pub cloud_job_log: Vec<JobLogEntry>,
    pub collector_snapshot: Vec<StoredRecord>,
    pub interceptor: Option<InterceptorObservation>,
    pub verdicts: Verdicts,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    mode: Mode,
    options: RunOptions,
    jobs: Vec<JobReport>,
    interceptor: Option<InterceptorObservation>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

impl ScenarioResult {
    /// Writes `scenario.json`, `transcript.jsonl`, `cloud_job_log.json`,
    /// `collector_snapshot.json` and `verdicts.json` into `dir`.
    pub fn save(&self, dir: &Path) -> anyhow::Result<()> {
        fs::create_dir_all(dir)?;
        write_json(
            &dir.join("scenario.json"),
            &Meta {
                mode: self.mode,
                options: self.options.clone(),
                jobs: self.jobs.clone(),
                interceptor: self.interceptor.clone(),
            },
        )?;
        self.transcript.write_jsonl(&dir.join("transcript.jsonl"))?;
        write_json(&dir.join("cloud_job_log.json"), &self.cloud_job_log)?;
        write_json(&dir.join("collector_snapshot.json"), &self.collector_snapshot)?;
        write_json(&dir.join("verdicts.json"), &self.verdicts)
    }

    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let meta: Meta = read_json(&dir.join("scenario.json"))?;
        Ok(Self {
            transcript: ClientTranscript::read_jsonl(&dir.join("transcript.jsonl"), meta.mode.as_str())?,
            cloud_job_log: read_json(&dir.join("cloud_job_log.json"))?,
            collector_snapshot: read_json(&dir.join("collector_snapshot.json"))?,
            verdicts: read_json(&dir.join("verdicts.json"))?,
            mode: meta.mode,
            options: meta.options,
            jobs: meta.jobs,
            interceptor: meta.interceptor,
        })
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.values().all(|v| v.passed())
    }
}

/// A working directory with provisioned credentials. Each run gets its own
/// subdirectory for stores, spools and logs.
pub struct Lab {
    dir: PathBuf,
    pki: LabPki,
    jwt_secret: String,
    runs: AtomicUsize,
}

impl Lab {
    pub fn create(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir)?;
        let pki = LabPki::provision(&dir.join("pki")).context("provisioning PKI")?;
        let secret: [u8; 32] = rand::random();
        Ok(Self {
            dir: dir.to_path_buf(),
            pki,
            jwt_secret: secret.iter().map(|b| format!("{b:02x}")).collect(),
            runs: AtomicUsize::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn pki(&self) -> &LabPki {
        &self.pki
    }

    pub fn token(&self, mode: TokenMode) -> String {
        let claims = AuthClaims {
            sub: "testbed-user".into(),
            exp: now_ms() / 1000 + 3600,
            iss: ISSUER.into(),
        };
        match mode {
            TokenMode::Valid => issue_token(self.jwt_secret.as_bytes(), &claims),
            TokenMode::Forged => issue_token(b"not-the-cloud-secret", &claims),
        }
    }

    fn run_dir(&self, mode: Mode) -> std::io::Result<PathBuf> {
        let n = self.runs.fetch_add(1, Ordering::SeqCst);
        let dir = self.dir.join("runs").join(format!("{}-{n:03}", mode.as_str()));
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

/// Running services, torn down together whatever happens.
#[derive(Default)]
struct Stack {
    cloud: Option<CloudService>,
    collector: Option<Collector>,
    interceptor: Option<Interceptor>,
}

impl Stack {
    async fn stop(self) {
        if let Some(i) = self.interceptor {
            i.shutdown().await;
        }
        if let Some(c) = self.collector {
            c.shutdown().await;
        }
        if let Some(c) = self.cloud {
            c.shutdown().await;
        }
    }
}

fn free_port() -> std::io::Result<u16> {
    Ok(std::net::TcpListener::bind("127.0.0.1:0")?.local_addr()?.port())
}

fn count_lines(path: &Path) -> usize {
    fs::File::open(path)
        .map(|f| BufReader::new(f).lines().map_while(Result::ok).filter(|l| !l.trim().is_empty()).count())
        .unwrap_or(0)
}

async fn wait_until(deadline: Instant, mut done: impl FnMut() -> bool) -> bool {
    while !done() {
        if Instant::now() >= deadline {
            return false;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    true
}

pub async fn run_baseline(lab: &Lab, opts: &RunOptions) -> anyhow::Result<ScenarioResult> {
    run(lab, Mode::Baseline, opts).await
}

pub async fn run_intercepted(lab: &Lab, opts: &RunOptions) -> anyhow::Result<ScenarioResult> {
    run(lab, Mode::Intercepted, opts).await
}

/// Runs the workload and returns the result with its per-run verdicts.
/// Artifacts are also saved under the lab's run directory.
pub async fn run(lab: &Lab, mode: Mode, opts: &RunOptions) -> anyhow::Result<ScenarioResult> {
    let dir = lab.run_dir(mode)?;
    let mut stack = Stack::default();
    let result = drive(lab, mode, opts, &dir, &mut stack).await;
    stack.stop().await;
    let result = result?;
    result.save(&dir)?;
    Ok(result)
}

async fn drive(lab: &Lab, mode: Mode, opts: &RunOptions, dir: &Path, stack: &mut Stack) -> anyhow::Result<ScenarioResult> {
    let jobs = prepare_workload(&opts.workload)?;
    let pki = lab.pki();
    let quiesce = Duration::from_millis(opts.quiesce_timeout_ms);

    let cloud = CloudService::start(&CloudConfig {
        port: 0,
        bind_address: "127.0.0.1".into(),
        tls_cert_path: pki.cloud.cert.clone(),
        tls_key_path: pki.cloud.key.clone(),
        jwt_secret: lab.jwt_secret.clone(),
        jwt_issuer: Some(ISSUER.into()),
        queue_delay_ms: opts.queue_delay_ms,
        queue_delay_jitter_ms: opts.queue_jitter_ms,
        jitter_seed: opts.seed,
        tick_ms: 2,
    })
    .await
    .context("starting cloud")?;
    let cloud_port = cloud.local_addr().port();
    stack.cloud = Some(cloud);

    let collector_cfg = CollectorConfig {
        port: free_port()?,
        bind_address: "127.0.0.1".into(),
        tls_cert_path: pki.collector.cert.clone(),
        tls_key_path: pki.collector.key.clone(),
        store_path: dir.join("collector").join("records.jsonl"),
    };
    if opts.collector_fault != CollectorFault::Down {
        stack.collector = Some(Collector::start(&collector_cfg).await.context("starting collector")?);
    }

    let mut trust_roots = vec![pki.legitimate.cert.clone()];
    let mut proxy_address = None;
    if mode == Mode::Intercepted {
        let icfg = InterceptorConfig {
            port: 0,
            bind_address: "127.0.0.1".into(),
            rogue_ca_cert: pki.rogue.cert.clone(),
            rogue_ca_key: pki.rogue.key.clone(),
            upstream_trust_roots: vec![pki.legitimate.cert.clone()],
            target_hosts: vec![SERVICE_HOST.into()],
            collector_url: format!("https://{SERVICE_HOST}:{}", collector_cfg.port),
            collector_trust_roots: vec![pki.rogue.cert.clone()],
            spool_dir: dir.join("spool"),
            pending_ttl_ms: opts.pending_ttl_ms,
            bound_ttl_ms: opts.bound_ttl_ms,
            sweep_interval_ms: opts.sweep_interval_ms,
            export_backoff_initial_ms: 20,
            export_backoff_max_ms: 500,
            upstream_timeout_ms: 10_000,
            event_log: Some(dir.join("interceptor-events.jsonl")),
            mutate_results: opts.mutate_results,
        };
        let interceptor = Interceptor::start(&icfg).await.context("starting interceptor")?;
        proxy_address = Some(interceptor.local_addr().to_string());
        stack.interceptor = Some(interceptor);
        if opts.trust_rogue_root {
            trust_roots.push(pki.rogue.cert.clone());
        }
    }

    let client = Client::new(&ClientConfig {
        service_url: format!("https://{SERVICE_HOST}:{cloud_port}"),
        proxy_address,
        trust_roots,
        bearer_token: lab.token(opts.token),
        poll_interval_ms: opts.poll_interval_ms,
        poll_timeout_ms: opts.poll_timeout_ms,
        request_timeout_ms: 10_000,
    })?;

    // The kill switch owns the collector while the client runs.
    let killer = match (opts.collector_fault, stack.collector.take()) {
        (CollectorFault::KillAfter(n), Some(collector)) => {
            let (stop_tx, mut stop_rx) = oneshot::channel::<()>();
            let task = tokio::spawn(async move {
                loop {
                    if collector.len() >= n {
                        tracing::info!(records = collector.len(), "killing collector");
                        collector.shutdown().await;
                        return None;
                    }
                    tokio::select! {
                        _ = tokio::time::sleep(Duration::from_millis(1)) => {}
                        _ = &mut stop_rx => return Some(collector),
                    }
                }
            });
            Some((stop_tx, task))
        }
        (_, c) => {
            stack.collector = c;
            None
        }
    };

    let run = run_scenario(Arc::new(client), mode.as_str(), &jobs, opts.max_in_flight).await;

    let mut collector_killed = false;
    if let Some((stop_tx, task)) = killer {
        let _ = stop_tx.send(());
        match task.await? {
            Some(c) => stack.collector = Some(c),
            None => collector_killed = true,
        }
    }

    // Quiescence: every cloud job terminal, every table entry gone, every
    // record delivered or spooled.
    let cloud = stack.cloud.as_ref().expect("started above");
    wait_until(Instant::now() + quiesce, || cloud.pending_jobs() == 0).await;

    let mut interceptor = None;
    if let Some(ic) = &stack.interceptor {
        let ttl = opts.pending_ttl_ms.max(opts.bound_ttl_ms) + 2 * opts.sweep_interval_ms;
        wait_until(Instant::now() + Duration::from_millis(ttl) + quiesce, || ic.table_len() == 0).await;
        let exporter = ic.exporter();
        if stack.collector.is_some() {
            exporter.wait_idle(quiesce).await;
        } else {
            wait_until(Instant::now() + quiesce, || exporter.outstanding() == exporter.spool_len()).await;
        }
        let mut obs = InterceptorObservation {
            collector_killed,
            spool_after_run: exporter.spool_len(),
            spool_file_lines_after_run: count_lines(&dir.join("spool").join("spool.jsonl")),
            table_len_at_quiescence: ic.table_len(),
            ..Default::default()
        };
        if opts.restart_collector && stack.collector.is_none() {
            stack.collector = Some(Collector::start(&collector_cfg).await.context("restarting collector")?);
            exporter.retry_now();
            exporter.wait_idle(quiesce).await;
        }
        obs.spool_after_drain = exporter.spool_len();
        obs.export_duplicates = exporter.stats().duplicates.load(Ordering::SeqCst);
        obs.stats = ic.stats();
        interceptor = Some(obs);
    }

    let collector_snapshot = match &stack.collector {
        Some(c) => c.records(),
        None if collector_cfg.store_path.exists() => Store::open(&collector_cfg.store_path)?.records().to_vec(),
        None => Vec::new(),
    };
    let mut result = ScenarioResult {
        mode,
        options: opts.clone(),
        transcript: run.transcript.clone(),
        jobs: run.jobs.clone(),
        cloud_job_log: cloud.job_log(),
        collector_snapshot,
        interceptor,
        verdicts: Verdicts::new(),
    };
    result.verdicts = run_verdicts(mode, &run, &result);
    Ok(result)
}
