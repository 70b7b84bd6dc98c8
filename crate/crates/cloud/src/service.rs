//! Request routing for the job API.

use std::sync::Arc;

use bytes::Bytes;
use http_body_util::Full;
use hyper::header::{HeaderValue, AUTHORIZATION, CONTENT_TYPE};
use hyper::{Method, Request, Response, StatusCode};
use qspy_circuit::digest::sha256_hex;
use qspy_circuit::{JobPayload, JobPayloadWire, PayloadError};
use qspy_net::http::json_response;
use qspy_wire::{now_ms, ErrorBody, SubmitResponse, JOBS_PATH};

use crate::auth::TokenVerifier;
use crate::store::{JobStore, NewJob, ResultsLookup};

pub struct CloudState {
    pub store: JobStore,
    pub verifier: TokenVerifier,
}

enum Route<'a> {
    Submit,
    Status(&'a str),
    Results(&'a str),
}

fn route<'a>(method: &Method, path: &'a str) -> Result<Route<'a>, StatusCode> {
    let rest = path.strip_prefix(JOBS_PATH).ok_or(StatusCode::NOT_FOUND)?;
    let segments: Vec<&str> = rest.split('/').skip(1).collect();
    let found = match (rest, segments.as_slice()) {
        ("" | "/", _) => Some((Method::POST, Route::Submit)),
        (_, [id]) if !id.is_empty() => Some((Method::GET, Route::Status(id))),
        (_, [id, "results"]) if !id.is_empty() => Some((Method::GET, Route::Results(id))),
        _ => None,
    };
    match found {
        Some((m, r)) if m == method => Ok(r),
        Some(_) => Err(StatusCode::METHOD_NOT_ALLOWED),
        None => Err(StatusCode::NOT_FOUND),
    }
}

fn error(status: StatusCode, message: impl Into<String>, reason: &str) -> Response<Full<Bytes>> {
    json_response(status, &ErrorBody::new(message, reason))
}

fn raw_json(status: StatusCode, body: Bytes) -> Response<Full<Bytes>> {
    let mut resp = Response::new(Full::new(body));
    *resp.status_mut() = status;
    resp.headers_mut()
        .insert(CONTENT_TYPE, HeaderValue::from_static("application/json"));
    resp
}

impl CloudState {
    pub async fn handle(self: Arc<Self>, req: Request<Bytes>) -> Response<Full<Bytes>> {
        let auth = req.headers().get(AUTHORIZATION).and_then(|v| v.to_str().ok());
        let claims = match self.verifier.verify_header(auth, now_ms() / 1000) {
            Ok(c) => c,
            Err(e) => return error(StatusCode::UNAUTHORIZED, e.to_string(), e.reason()),
        };

        match route(req.method(), req.uri().path()) {
            Ok(Route::Submit) => self.submit(req.body(), claims.sub),
            Ok(Route::Status(id)) => match self.store.status(id) {
                Some(s) => json_response(StatusCode::OK, &s),
                None => error(StatusCode::NOT_FOUND, "unknown job", "unknown_job"),
            },
            Ok(Route::Results(id)) => match self.store.results(id) {
                Some(ResultsLookup::Done(body)) => raw_json(StatusCode::OK, body),
                Some(ResultsLookup::Pending(body)) => raw_json(StatusCode::ACCEPTED, body),
                None => error(StatusCode::NOT_FOUND, "unknown job", "unknown_job"),
            },
            Err(StatusCode::METHOD_NOT_ALLOWED) => {
                error(StatusCode::METHOD_NOT_ALLOWED, "method not allowed", "bad_method")
            }
            Err(status) => error(status, "no such endpoint", "no_route"),
        }
    }

    fn submit(&self, body: &Bytes, subject: String) -> Response<Full<Bytes>> {
        let wire: JobPayloadWire = match serde_json::from_slice(body) {
            Ok(w) => w,
            Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string(), "malformed_payload"),
        };
        let circuit_text = wire.circuit.clone();
        let payload = match JobPayload::from_wire(wire) {
            Ok(p) => p,
            Err(e) => return payload_error(e),
        };
        let job_id = self.store.submit(
            NewJob {
                payload,
                circuit_text,
                submission_sha256: sha256_hex(body),
                subject,
            },
            now_ms(),
        );
        tracing::info!(%job_id, "job queued");
        json_response(StatusCode::OK, &SubmitResponse { job_id })
    }
}

fn payload_error(e: PayloadError) -> Response<Full<Bytes>> {
    if e.is_validation() {
        error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string(), "invalid_circuit")
    } else {
        error(StatusCode::BAD_REQUEST, e.to_string(), "malformed_payload")
    }
}
