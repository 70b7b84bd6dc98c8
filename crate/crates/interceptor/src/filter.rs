//! Endpoint filtering.
//!
//! Path patterns are segment templates such as `/api/v1/jobs/{id}/results`:
//! a literal segment matches itself, `{name}` matches any non-empty
//! segment, and the whole path must match.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FlowClass {
    Submission,
    ResultFetch,
    StatusPoll,
    PassThrough,
}

impl fmt::Display for FlowClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlowClass::Submission => "SUBMISSION",
            FlowClass::ResultFetch => "RESULT_FETCH",
            FlowClass::StatusPoll => "STATUS_POLL",
            FlowClass::PassThrough => "PASS_THROUGH",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Slot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathPattern {
    source: String,
    segments: Vec<Segment>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FilterError {
    #[error("pattern `{0}` must start with `/`")]
    NotAbsolute(String),
    #[error("pattern `{0}` has an empty segment")]
    EmptySegment(String),
    #[error("patterns `{0}` and `{1}` can match the same path")]
    Overlap(String, String),
    #[error("bad host pattern `{0}`")]
    BadHost(String),
}

impl PathPattern {
    pub fn parse(pattern: &str) -> Result<Self, FilterError> {
        let rest = pattern
            .strip_prefix('/')
            .ok_or_else(|| FilterError::NotAbsolute(pattern.into()))?;
        let segments = rest
            .split('/')
            .map(|s| match s {
                "" => Err(FilterError::EmptySegment(pattern.into())),
                s if s.starts_with('{') && s.ends_with('}') => Ok(Segment::Slot),
                s => Ok(Segment::Literal(s.to_string())),
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            source: pattern.to_string(),
            segments,
        })
    }

    /// Matches a full path (query string ignored), returning the values
    /// captured by slots.
    pub fn captures<'p>(&self, path: &'p str) -> Option<Vec<&'p str>> {
        let path = path.split(['?', '#']).next().unwrap_or_default();
        let parts: Vec<&str> = path.strip_prefix('/')?.split('/').collect();
        if parts.len() != self.segments.len() {
            return None;
        }
        let mut slots = Vec::new();
        for (seg, part) in self.segments.iter().zip(parts) {
            match seg {
                Segment::Literal(l) if l == part => {}
                Segment::Slot if !part.is_empty() => slots.push(part),
                _ => return None,
            }
        }
        Some(slots)
    }

    pub fn matches(&self, path: &str) -> bool {
        self.captures(path).is_some()
    }

    /// True when no path matches both patterns.
    pub fn is_disjoint(&self, other: &PathPattern) -> bool {
        self.segments.len() != other.segments.len()
            || self.segments.iter().zip(&other.segments).any(|pair| match pair {
                (Segment::Literal(a), Segment::Literal(b)) => a != b,
                _ => false,
            })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }
}

/// `example.com` matches exactly; `*.example.com` matches any subdomain.
/// Comparison is case-insensitive and ignores any port.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostPattern(String);

impl HostPattern {
    pub fn parse(p: &str) -> Result<Self, FilterError> {
        let p = p.trim().to_ascii_lowercase();
        let body = p.strip_prefix("*.").unwrap_or(&p);
        if body.is_empty() || body.contains(['*', '/', ' ']) {
            return Err(FilterError::BadHost(p));
        }
        Ok(Self(p))
    }

    pub fn matches(&self, host: &str) -> bool {
        let host = strip_port(host).to_ascii_lowercase();
        match self.0.strip_prefix("*.") {
            Some(suffix) => host.len() > suffix.len() + 1 && host.ends_with(&format!(".{suffix}")),
            None => host == self.0,
        }
    }
}

/// Drops a trailing `:port` and IPv6 brackets.
pub fn strip_port(host: &str) -> &str {
    if let Some(rest) = host.strip_prefix('[') {
        return rest.split(']').next().unwrap_or(rest);
    }
    match host.rsplit_once(':') {
        Some((h, port)) if !h.contains(':') && port.bytes().all(|b| b.is_ascii_digit()) => h,
        _ => host,
    }
}

#[derive(Debug, Clone)]
pub struct FilterRule {
    pub target_hosts: Vec<HostPattern>,
    pub submission: PathPattern,
    pub results: PathPattern,
    pub status: PathPattern,
}

pub const SUBMISSION_PATTERN: &str = "/api/v1/jobs";
pub const RESULTS_PATTERN: &str = "/api/v1/jobs/{id}/results";
pub const STATUS_PATTERN: &str = "/api/v1/jobs/{id}";

impl FilterRule {
    pub fn new(hosts: &[String], submission: &str, results: &str, status: &str) -> Result<Self, FilterError> {
        let rule = Self {
            target_hosts: hosts.iter().map(|h| HostPattern::parse(h)).collect::<Result<_, _>>()?,
            submission: PathPattern::parse(submission)?,
            results: PathPattern::parse(results)?,
            status: PathPattern::parse(status)?,
        };
        let pats = [&rule.submission, &rule.results, &rule.status];
        for (i, a) in pats.iter().enumerate() {
            for b in &pats[i + 1..] {
                if !a.is_disjoint(b) {
                    return Err(FilterError::Overlap(a.source.clone(), b.source.clone()));
                }
            }
        }
        Ok(rule)
    }

    /// The job API's endpoints on `hosts`.
    pub fn for_hosts(hosts: &[String]) -> Result<Self, FilterError> {
        Self::new(hosts, SUBMISSION_PATTERN, RESULTS_PATTERN, STATUS_PATTERN)
    }

    pub fn is_target(&self, host: &str) -> bool {
        self.target_hosts.iter().any(|p| p.matches(host))
    }

    pub fn classify(&self, method: &str, host: &str, path: &str) -> FlowClass {
        if !self.is_target(host) {
            return FlowClass::PassThrough;
        }
        match method {
            "POST" if self.submission.matches(path) => FlowClass::Submission,
            "GET" if self.results.matches(path) => FlowClass::ResultFetch,
            "GET" if self.status.matches(path) => FlowClass::StatusPoll,
            _ => FlowClass::PassThrough,
        }
    }

    /// Job id from a results path.
    pub fn results_job_id<'p>(&self, path: &'p str) -> Option<&'p str> {
        self.results.captures(path)?.first().copied()
    }
}

/// Classifies an absolute URL such as `https://cloud.local:9443/api/v1/jobs`.
/// Anything that does not parse is pass-through.
pub fn classify_flow(rule: &FilterRule, method: &str, url: &str) -> FlowClass {
    let Some(rest) = url.strip_prefix("https://") else {
        return FlowClass::PassThrough;
    };
    let (authority, path) = match rest.find('/') {
        Some(i) => (&rest[..i], &rest[i..]),
        None => (rest, "/"),
    };
    rule.classify(method, authority, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule() -> FilterRule {
        FilterRule::for_hosts(&["cloud.local".into(), "localhost".into()]).unwrap()
    }

    #[test]
    fn classification() {
        let r = rule();
        assert_eq!(classify_flow(&r, "POST", "https://cloud.local:9443/api/v1/jobs"), FlowClass::Submission);
        assert_eq!(
            classify_flow(&r, "GET", "https://cloud.local:9443/api/v1/jobs/ABC123/results"),
            FlowClass::ResultFetch
        );
        assert_eq!(classify_flow(&r, "GET", "https://cloud.local/api/v1/jobs/ABC123"), FlowClass::StatusPoll);
        assert_eq!(classify_flow(&r, "GET", "https://other.example/health"), FlowClass::PassThrough);
        assert_eq!(classify_flow(&r, "GET", "https://other.example/api/v1/jobs/A/results"), FlowClass::PassThrough);
        assert_eq!(classify_flow(&r, "GET", "https://cloud.local/api/v1/jobs"), FlowClass::PassThrough);
        assert_eq!(classify_flow(&r, "POST", "https://cloud.local/api/v1/jobs/A/results"), FlowClass::PassThrough);
        assert_eq!(classify_flow(&r, "GET", "not a url"), FlowClass::PassThrough);
    }

    #[test]
    fn anchoring() {
        let r = rule();
        assert_eq!(r.classify("POST", "cloud.local", "/x/api/v1/jobs"), FlowClass::PassThrough);
        assert_eq!(r.classify("POST", "cloud.local", "/api/v1/jobs/"), FlowClass::PassThrough);
        assert_eq!(r.classify("GET", "cloud.local", "/api/v1/jobs//results"), FlowClass::PassThrough);
        assert_eq!(r.classify("GET", "cloud.local", "/api/v1/jobs/A/results/extra"), FlowClass::PassThrough);
        assert_eq!(r.classify("POST", "cloud.local", "/api/v1/jobs?x=1"), FlowClass::Submission);
        assert_eq!(r.results_job_id("/api/v1/jobs/XYZ/results"), Some("XYZ"));
    }

    #[test]
    fn hosts() {
        let p = HostPattern::parse("*.Quantum.example").unwrap();
        assert!(p.matches("eu.quantum.example:443"));
        assert!(!p.matches("quantum.example"));
        assert!(!p.matches("evilquantum.example"));
        assert!(HostPattern::parse("cloud.local").unwrap().matches("CLOUD.local:9443"));
        assert_eq!(strip_port("[::1]:8443"), "::1");
        assert_eq!(strip_port("::1"), "::1");
        assert!(HostPattern::parse("").is_err());
    }

    #[test]
    fn overlapping_patterns_rejected() {
        let err = FilterRule::new(&[], "/api/{v}/jobs", "/api/v1/{id}", "/s/{id}").unwrap_err();
        assert!(matches!(err, FilterError::Overlap(..)));
        assert!(FilterRule::new(&[], "/jobs", "/jobs/{id}/results", "/jobs/{id}").is_ok());
        assert!(PathPattern::parse("jobs").is_err());
        assert!(PathPattern::parse("/a//b").is_err());
    }
}
