//! Mock quantum cloud.
//!
//! Jobs are submitted with `POST /api/v1/jobs`, which answers immediately
//! with a job id. A background loop moves each job QUEUED -> RUNNING after
//! the configured queue delay, runs the statevector simulator with a seed
//! derived from the job id, and marks it COMPLETED (or FAILED). Clients
//! poll `GET /api/v1/jobs/{id}/results`, which answers 202 until the job
//! is terminal. Every endpoint requires an HS256 bearer token.

pub mod auth;
pub mod config;
pub mod service;
pub mod store;

use std::sync::Arc;
use std::time::Duration;

use qspy_circuit::simulate;
use qspy_net::{tls, HttpsServer, ServerHandle};
use qspy_wire::now_ms;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub use auth::{issue_token, AuthClaims, AuthError, TokenVerifier};
pub use config::CloudConfig;
pub use store::{seed_for, JobLogEntry, JobStore, QueuePolicy};

use service::CloudState;

pub struct CloudService {
    state: Arc<CloudState>,
    server: ServerHandle,
    ticker: JoinHandle<()>,
}

impl CloudService {
    pub async fn start(cfg: &CloudConfig) -> anyhow::Result<Self> {
        let tls = tls::server_config_from_files(&cfg.tls_cert_path, &cfg.tls_key_path)?;
        let listener = TcpListener::bind((cfg.bind_address.as_str(), cfg.port)).await?;
        let state = Arc::new(CloudState {
            store: JobStore::new(QueuePolicy {
                delay_ms: cfg.queue_delay_ms,
                jitter_ms: cfg.queue_delay_jitter_ms,
                jitter_seed: cfg.jitter_seed,
            }),
            verifier: TokenVerifier::new(cfg.jwt_secret.as_bytes(), cfg.jwt_issuer.as_deref()),
        });

        let handler_state = state.clone();
        let server = HttpsServer::spawn(listener, tls, move |req, _peer| handler_state.clone().handle(req))?;
        let ticker = tokio::spawn(execution_loop(state.clone(), Duration::from_millis(cfg.tick_ms.max(1))));
        tracing::info!(addr = %server.local_addr(), "cloud listening");
        Ok(Self { state, server, ticker })
    }

    pub fn local_addr(&self) -> std::net::SocketAddr {
        self.server.local_addr()
    }

    pub fn job_log(&self) -> Vec<JobLogEntry> {
        self.state.store.log()
    }

    pub fn job_count(&self) -> usize {
        self.state.store.len()
    }

    pub fn pending_jobs(&self) -> usize {
        self.state.store.pending()
    }

    pub async fn shutdown(self) {
        self.ticker.abort();
        self.server.shutdown().await;
    }
}

/// Starts every due job and runs the simulations on the blocking pool.
async fn execution_loop(state: Arc<CloudState>, tick: Duration) {
    let mut interval = tokio::time::interval(tick);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        interval.tick().await;
        for (job_id, payload) in state.store.start_due(now_ms()) {
            let state = state.clone();
            tokio::spawn(async move {
                let seed = seed_for(&job_id);
                let outcome = tokio::task::spawn_blocking(move || simulate(&payload.circuit, payload.shots, seed))
                    .await
                    .unwrap_or_else(|e| panic!("simulation task for {job_id} died: {e}"));
                if let Err(e) = &outcome {
                    tracing::warn!(%job_id, error = %e, "job failed");
                }
                state.store.finish(&job_id, outcome, now_ms());
            });
        }
    }
}
