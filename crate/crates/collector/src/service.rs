//! HTTP routing for ingestion, queries and reports.

use std::sync::{Arc, Mutex};

use bytes::Bytes;
use http_body_util::Full;
use hyper::{Method, Request, Response, StatusCode};
use qspy_net::http::{json_response, text_response};
use qspy_wire::{now_ms, ConsolidatedRecord, ErrorBody, IDEMPOTENCY_HEADER, RECORDS_PATH, REPORT_PATH};
use serde::{Deserialize, Serialize};

use crate::query::{Query, Report};
use crate::store::{Ingest, Store};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestResponse {
    pub store_id: u64,
    pub duplicate: bool,
}

pub struct CollectorState {
    pub store: Mutex<Store>,
}

fn error(status: StatusCode, message: impl Into<String>, reason: &str) -> Response<Full<Bytes>> {
    json_response(status, &ErrorBody::new(message, reason))
}

impl CollectorState {
    pub fn handle(self: Arc<Self>, req: Request<Bytes>) -> Response<Full<Bytes>> {
        let path = req.uri().path();
        let query = req.uri().query().unwrap_or("");
        match (req.method(), path) {
            (&Method::POST, RECORDS_PATH) => self.ingest(&req),
            (&Method::GET, RECORDS_PATH) => match Query::from_query_string(query) {
                Ok(q) => json_response(StatusCode::OK, &q.run(self.store.lock().unwrap().records())),
                Err(e) => error(StatusCode::BAD_REQUEST, e.to_string(), e.reason()),
            },
            (&Method::GET, REPORT_PATH) => {
                let report = Report::build(self.store.lock().unwrap().records());
                match query {
                    "" | "format=json" => json_response(StatusCode::OK, &report),
                    "format=text" => text_response(StatusCode::OK, report.to_text()),
                    _ => error(StatusCode::BAD_REQUEST, format!("bad report query {query:?}"), "bad_format"),
                }
            }
            (_, RECORDS_PATH | REPORT_PATH) => error(StatusCode::METHOD_NOT_ALLOWED, "method not allowed", "bad_method"),
            _ => error(StatusCode::NOT_FOUND, "no such endpoint", "no_route"),
        }
    }

    fn ingest(&self, req: &Request<Bytes>) -> Response<Full<Bytes>> {
        let Some(key) = req
            .headers()
            .get(IDEMPOTENCY_HEADER)
            .and_then(|v| v.to_str().ok())
            .filter(|k| !k.trim().is_empty())
        else {
            return error(StatusCode::BAD_REQUEST, "missing Idempotency-Key header", "missing_idempotency_key");
        };
        let record: ConsolidatedRecord = match serde_json::from_slice(req.body()) {
            Ok(r) => r,
            Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string(), "malformed_record"),
        };
        if !record.is_well_formed() {
            return error(StatusCode::BAD_REQUEST, "record fields contradict its completeness", "malformed_record");
        }
        let job_id = record.job_id.clone();
        let outcome = self.store.lock().unwrap().ingest(record, key, now_ms());
        match outcome {
            Ok(Ingest::Stored(store_id)) => {
                tracing::info!(store_id, job_id = ?job_id, "record stored");
                json_response(StatusCode::CREATED, &IngestResponse { store_id, duplicate: false })
            }
            Ok(Ingest::Duplicate(store_id)) => {
                json_response(StatusCode::OK, &IngestResponse { store_id, duplicate: true })
            }
            Err(e) => {
                tracing::error!(error = %e, "append failed");
                error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), "store_failure")
            }
        }
    }
}
