//! Traces: variable-length sequences of discrete API-call tokens, plus the
//! line-delimited JSON corpus format.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::vocab::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Malicious,
    Benign,
    Unknown,
}

/// One API call: a vocabulary type id plus optional level-2 style argument
/// strings (paths, URLs). Classifiers in this crate only look at the type id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiToken {
    #[serde(rename = "t")]
    pub type_id: TokenId,
    #[serde(rename = "a", default, skip_serializing_if = "Vec::is_empty")]
    pub args: Vec<String>,
}

impl ApiToken {
    pub fn new(type_id: TokenId) -> Self {
        Self { type_id, args: Vec::new() }
    }

    pub fn with_args(type_id: TokenId, args: Vec<String>) -> Self {
        Self { type_id, args }
    }
}

impl From<TokenId> for ApiToken {
    fn from(type_id: TokenId) -> Self {
        ApiToken::new(type_id)
    }
}

/// A labeled API-call trace, the attack substrate. Original traces are never
/// mutated in place; attacks only layer insertions on top via a ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub id: String,
    pub label: Label,
    pub calls: Vec<ApiToken>,
}

impl Trace {
    pub fn new(id: impl Into<String>, label: Label, calls: Vec<ApiToken>) -> Self {
        Self { id: id.into(), label, calls }
    }

    pub fn from_ids(id: impl Into<String>, label: Label, ids: &[TokenId]) -> Self {
        Self::new(id, label, ids.iter().copied().map(ApiToken::new).collect())
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    pub fn type_ids(&self) -> Vec<TokenId> {
        self.calls.iter().map(|c| c.type_id).collect()
    }
}

/// Writes traces as line-delimited JSON records `{id, label, calls:[{t, a}]}`.
pub fn save_corpus(traces: &[Trace], path: &Path) -> Result<(), CoreError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for trace in traces {
        serde_json::to_writer(&mut out, trace)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_corpus(path: &Path) -> Result<Vec<Trace>, CoreError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut traces = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let trace: Trace = serde_json::from_str(&line).map_err(|e| {
            CoreError::InvalidRecord(format!("line {}: {e}", lineno + 1))
        })?;
        traces.push(trace);
    }
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_round_trip() {
        let traces = vec![
            Trace::from_ids("m1", Label::Malicious, &[1, 2, 3]),
            Trace::new(
                "b1",
                Label::Benign,
                vec![ApiToken::with_args(4, vec!["C:\\tmp\\a".into()])],
            ),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        save_corpus(&traces, &path).unwrap();
        let loaded = load_corpus(&path).unwrap();
        assert_eq!(traces, loaded);
    }

    #[test]
    fn malformed_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"id\":\"x\"}\n").unwrap();
        assert!(matches!(load_corpus(&path), Err(CoreError::InvalidRecord(_))));
    }

    #[test]
    fn args_omitted_when_empty() {
        let line = serde_json::to_string(&Trace::from_ids("t", Label::Unknown, &[7])).unwrap();
        assert!(!line.contains("\"a\""));
        assert!(line.contains("\"t\":7"));
    }
}
