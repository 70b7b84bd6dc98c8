//! Filtering and aggregate reports over the store.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::categorize::Label;
use crate::store::{RecordSummary, StoredRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Completeness {
    Complete,
    Partial,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Query {
    pub category: Option<Label>,
    pub min_qubits: Option<usize>,
    /// Records ingested at or after this time (ms since epoch).
    pub since: Option<u64>,
    pub completeness: Option<Completeness>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("unknown filter {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {value:?}")]
    BadValue { key: String, value: String },
}

impl QueryError {
    pub fn reason(&self) -> &'static str {
        match self {
            QueryError::UnknownKey(_) => "unknown_filter",
            QueryError::BadValue { .. } => "bad_filter_value",
        }
    }
}

impl Query {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, QueryError> {
        let mut q = Query::default();
        for (key, value) in pairs {
            let bad = || QueryError::BadValue {
                key: key.to_string(),
                value: value.to_string(),
            };
            match key {
                "category" => q.category = Some(value.parse().map_err(|_| bad())?),
                "min_qubits" => q.min_qubits = Some(value.parse().map_err(|_| bad())?),
                "since" => q.since = Some(value.parse().map_err(|_| bad())?),
                "completeness" => {
                    q.completeness = Some(match value.to_ascii_lowercase().as_str() {
                        "complete" => Completeness::Complete,
                        "partial" => Completeness::Partial,
                        _ => return Err(bad()),
                    })
                }
                _ => return Err(QueryError::UnknownKey(key.to_string())),
            }
        }
        Ok(q)
    }

    /// Parses a URL query string such as `category=BELL_LIKE&min_qubits=2`.
    pub fn from_query_string(qs: &str) -> Result<Self, QueryError> {
        let pairs: Vec<(&str, &str)> = qs
            .split('&')
            .filter(|p| !p.is_empty())
            .map(|p| p.split_once('=').unwrap_or((p, "")))
            .collect();
        Self::from_pairs(pairs)
    }

    pub fn matches(&self, r: &StoredRecord) -> bool {
        let qubits = r.fingerprint.as_ref().map(|f| f.num_qubits);
        self.category.is_none_or(|c| c == r.category.label)
            && self.min_qubits.is_none_or(|m| qubits.is_some_and(|q| q >= m))
            && self.since.is_none_or(|t| r.ingested_at >= t)
            && self.completeness.is_none_or(|c| (c == Completeness::Complete) == r.record.complete)
    }

    /// Matching summaries in store order.
    pub fn run(&self, records: &[StoredRecord]) -> Vec<RecordSummary> {
        records.iter().filter(|r| self.matches(r)).map(StoredRecord::summary).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub total_records: usize,
    pub complete: usize,
    pub partial: usize,
    pub partial_ratio: f64,
    /// Every label, including those with no records.
    pub categories: BTreeMap<Label, usize>,
    /// Declared qubit count to record count; records without a circuit
    /// are not counted.
    pub qubit_histogram: BTreeMap<usize, usize>,
}

impl Report {
    pub fn build(records: &[StoredRecord]) -> Self {
        let mut categories: BTreeMap<Label, usize> = Label::ALL.iter().map(|l| (*l, 0)).collect();
        let mut qubit_histogram = BTreeMap::new();
        let mut complete = 0;
        for r in records {
            *categories.entry(r.category.label).or_default() += 1;
            if let Some(fp) = &r.fingerprint {
                *qubit_histogram.entry(fp.num_qubits).or_default() += 1;
            }
            complete += usize::from(r.record.complete);
        }
        let total = records.len();
        Report {
            total_records: total,
            complete,
            partial: total - complete,
            partial_ratio: if total == 0 { 0.0 } else { (total - complete) as f64 / total as f64 },
            categories,
            qubit_histogram,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "total_records {}", self.total_records);
        let _ = writeln!(s, "complete {}", self.complete);
        let _ = writeln!(s, "partial {}", self.partial);
        let _ = writeln!(s, "partial_ratio {:.4}", self.partial_ratio);
        for (label, n) in &self.categories {
            let _ = writeln!(s, "category {label} {n}");
        }
        for (q, n) in &self.qubit_histogram {
            let _ = writeln!(s, "qubits {q} {n}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_rejected() {
        let e = Query::from_query_string("category=BELL_LIKE&colour=red").unwrap_err();
        assert_eq!(e, QueryError::UnknownKey("colour".into()));
        assert_eq!(e.reason(), "unknown_filter");
    }

    #[test]
    fn values_are_checked() {
        assert!(matches!(Query::from_query_string("min_qubits=two"), Err(QueryError::BadValue { .. })));
        assert!(matches!(Query::from_query_string("completeness=most"), Err(QueryError::BadValue { .. })));
        let q = Query::from_query_string("category=ghz_like&min_qubits=3&completeness=partial&since=10").unwrap();
        assert_eq!(q.category, Some(Label::GhzLike));
        assert_eq!(q.min_qubits, Some(3));
        assert_eq!(q.since, Some(10));
        assert_eq!(q.completeness, Some(Completeness::Partial));
    }

    #[test]
    fn empty_report_is_zero() {
        let r = Report::build(&[]);
        assert_eq!(r.total_records, 0);
        assert_eq!(r.partial_ratio, 0.0);
        assert!(r.categories.values().all(|&n| n == 0));
        assert_eq!(r.categories.len(), 5);
        assert!(r.qubit_histogram.is_empty());
    }
}
