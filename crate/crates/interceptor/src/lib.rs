//! TLS-intercepting forward proxy that reconstructs quantum job records.
//!
//! The proxy sits between a client and the job API. It forwards every
//! byte unchanged, and on the side pairs each circuit submission with the
//! job id the server returned and later with the results fetched for that
//! id. Each completed triple becomes a [`ConsolidatedRecord`] that is
//! exported asynchronously to a collector.
//!
//! [`ConsolidatedRecord`]: qspy_wire::ConsolidatedRecord

pub mod ca;
pub mod config;
pub mod events;
pub mod export;
pub mod filter;
pub mod jwt;
pub mod proxy;
pub mod table;

use std::net::SocketAddr;
use std::sync::atomic::Ordering;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use qspy_net::http::Target;
use qspy_net::tls;
use qspy_wire::now_ms;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::watch;
use tokio::task::{JoinHandle, JoinSet};

pub use ca::RogueCa;
pub use config::InterceptorConfig;
pub use export::{ExportConfig, Exporter};
pub use filter::{classify_flow, FilterRule, FlowClass};
pub use table::{
    BindOutcome, CorrelateOutcome, CorrelationEntry, CorrelationTable, EntryState, EvictReason, TableConfig,
};

use events::EventLog;
use proxy::Shared;

const LEAF_VALIDITY: Duration = Duration::from_secs(30 * 86_400);

/// Point-in-time counters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsSnapshot {
    pub submissions: u64,
    pub result_fetches: u64,
    pub status_polls: u64,
    pub pass_through: u64,
    pub tunnels_intercepted: u64,
    pub tunnels_blind: u64,
    pub client_handshake_failures: u64,
    pub upstream_failures: u64,
    pub records_complete: u64,
    pub records_partial: u64,
    pub evicted: u64,
    pub exported: u64,
    pub spooled: usize,
    pub table_live: usize,
    pub leaves_minted: usize,
}

pub struct Interceptor {
    shared: Arc<Shared>,
    addr: SocketAddr,
    stop: watch::Sender<bool>,
    accept_task: JoinHandle<()>,
    sweep_task: JoinHandle<()>,
    export_task: JoinHandle<()>,
}

impl Interceptor {
    /// Loads the rogue CA and trust roots and starts listening. Refuses to
    /// start if any of them cannot be loaded.
    pub async fn start(cfg: &InterceptorConfig) -> anyhow::Result<Self> {
        let ca = RogueCa::load(&cfg.rogue_ca_cert, &cfg.rogue_ca_key, LEAF_VALIDITY)?;
        let upstream_tls = tls::client_config(&tls::load_roots(&cfg.upstream_trust_roots)?)?;
        let collector_tls = tls::client_config(&tls::load_roots(&cfg.collector_trust_roots)?)?;
        let (collector, path_prefix) = Target::from_url(&cfg.collector_url)?;
        let rule = FilterRule::for_hosts(&cfg.target_hosts)?;
        let events = match &cfg.event_log {
            Some(p) => EventLog::to_file(p)?,
            None => EventLog::default(),
        };

        let (exporter, export_task) = Exporter::start(
            ExportConfig {
                collector,
                path_prefix,
                tls: collector_tls,
                spool_dir: cfg.spool_dir.clone(),
                backoff_initial: Duration::from_millis(cfg.export_backoff_initial_ms.max(1)),
                backoff_max: Duration::from_millis(cfg.export_backoff_max_ms.max(cfg.export_backoff_initial_ms)),
                request_timeout: Duration::from_secs(5),
            },
            events.clone(),
        )?;

        let listener = TcpListener::bind((cfg.bind_address.as_str(), cfg.port)).await?;
        let addr = listener.local_addr()?;
        let (stop, stopped) = watch::channel(false);
        let shared = Arc::new(Shared {
            rule,
            ca,
            table: Mutex::new(CorrelationTable::new(TableConfig {
                pending_ttl_ms: cfg.pending_ttl_ms,
                bound_ttl_ms: cfg.bound_ttl_ms,
            })),
            exporter,
            events,
            upstream_tls,
            upstream_timeout: Duration::from_millis(cfg.upstream_timeout_ms),
            mutate_results: cfg.mutate_results,
            stats: Default::default(),
            stop: stopped.clone(),
        });
        if cfg.mutate_results {
            tracing::warn!("fault injection: results bodies will be rewritten");
        }

        let accept_task = tokio::spawn(accept_loop(listener, shared.clone(), stopped.clone()));
        let sweep_task = tokio::spawn(sweep_loop(
            shared.clone(),
            Duration::from_millis(cfg.sweep_interval_ms.max(1)),
            stopped,
        ));
        tracing::info!(%addr, "interceptor listening");
        Ok(Self {
            shared,
            addr,
            stop,
            accept_task,
            sweep_task,
            export_task,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn exporter(&self) -> &Exporter {
        &self.shared.exporter
    }

    /// Runs an eviction sweep now instead of waiting for the next tick.
    pub fn sweep_now(&self) -> usize {
        self.shared.sweep(now_ms())
    }

    pub fn table_len(&self) -> usize {
        self.shared.table.lock().expect("table lock").len()
    }

    pub fn leaf_serial(&self, host: &str) -> Option<String> {
        self.shared.ca.leaf_for(host).ok().map(|l| l.serial_hex)
    }

    pub fn stats(&self) -> StatsSnapshot {
        let s = &self.shared.stats;
        let get = |a: &std::sync::atomic::AtomicU64| a.load(Ordering::SeqCst);
        StatsSnapshot {
            submissions: get(&s.submissions),
            result_fetches: get(&s.result_fetches),
            status_polls: get(&s.status_polls),
            pass_through: get(&s.pass_through),
            tunnels_intercepted: get(&s.tunnels_intercepted),
            tunnels_blind: get(&s.tunnels_blind),
            client_handshake_failures: get(&s.client_handshake_failures),
            upstream_failures: get(&s.upstream_failures),
            records_complete: get(&s.records_complete),
            records_partial: get(&s.records_partial),
            evicted: get(&s.evicted),
            exported: self.shared.exporter.stats().delivered.load(Ordering::SeqCst),
            spooled: self.shared.exporter.spool_len(),
            table_live: self.table_len(),
            leaves_minted: self.shared.ca.minted(),
        }
    }

    /// Stops accepting, closes every tunnel and stops the export task.
    /// Undelivered records stay in the spool on disk.
    pub async fn shutdown(self) {
        let _ = self.stop.send(true);
        let _ = self.accept_task.await;
        let _ = self.sweep_task.await;
        self.export_task.abort();
        let _ = self.export_task.await;
    }
}

async fn accept_loop(listener: TcpListener, shared: Arc<Shared>, mut stopped: watch::Receiver<bool>) {
    let mut conns = JoinSet::new();
    loop {
        tokio::select! {
            _ = stopped.changed() => break,
            accepted = listener.accept() => {
                let Ok((tcp, peer)) = accepted else { continue };
                let _ = tcp.set_nodelay(true);
                conns.spawn(proxy::serve_client(shared.clone(), tcp, peer));
            }
            Some(_) = conns.join_next(), if !conns.is_empty() => {}
        }
    }
    conns.abort_all();
    while conns.join_next().await.is_some() {}
}

async fn sweep_loop(shared: Arc<Shared>, every: Duration, mut stopped: watch::Receiver<bool>) {
    let mut tick = tokio::time::interval(every);
    tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            _ = stopped.changed() => break,
            _ = tick.tick() => {
                shared.sweep(now_ms());
            }
        }
    }
}
