//! Record collector.
//!
//! Accepts consolidated records over HTTPS, deduplicates them by their
//! `Idempotency-Key`, fingerprints and categorizes the captured circuit,
//! and appends each new record to `records.jsonl` before acknowledging it.
//! The file is replayed on startup.

pub mod categorize;
pub mod config;
pub mod query;
pub mod service;
pub mod store;

use std::sync::{Arc, Mutex};

use qspy_net::{tls, HttpsServer, ServerHandle};
use tokio::net::TcpListener;

pub use categorize::{categorize, Category, Label};
pub use config::CollectorConfig;
pub use query::{Completeness, Query, QueryError, Report};
pub use service::IngestResponse;
pub use store::{Ingest, RecordSummary, Store, StoreError, StoredRecord};

use service::CollectorState;

pub struct Collector {
    state: Arc<CollectorState>,
    server: ServerHandle,
}

impl Collector {
    pub async fn start(cfg: &CollectorConfig) -> anyhow::Result<Self> {
        let tls = tls::server_config_from_files(&cfg.tls_cert_path, &cfg.tls_key_path)?;
        let store = Store::open(&cfg.store_path)?;
        let listener = TcpListener::bind((cfg.bind_address.as_str(), cfg.port)).await?;
        let state = Arc::new(CollectorState {
            store: Mutex::new(store),
        });
        let handler_state = state.clone();
        let server = HttpsServer::spawn(listener, tls, move |req, _peer| {
            let state = handler_state.clone();
            async move { state.handle(req) }
        })?;
        tracing::info!(addr = %server.local_addr(), "collector listening");
        Ok(Self { state, server })
    }

    pub fn local_addr(&self) -> std::net::SocketAddr {
        self.server.local_addr()
    }

    pub fn len(&self) -> usize {
        self.state.store.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> Vec<StoredRecord> {
        self.state.store.lock().unwrap().records().to_vec()
    }

    pub fn snapshot(&self) -> Vec<RecordSummary> {
        Query::default().run(self.state.store.lock().unwrap().records())
    }

    pub fn report(&self) -> Report {
        Report::build(self.state.store.lock().unwrap().records())
    }

    pub async fn shutdown(self) {
        self.server.shutdown().await;
    }
}
