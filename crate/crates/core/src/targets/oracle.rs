//! The black-box boundary: attacks only ever see an [`Oracle`], never the
//! model behind it. Every invocation is metered; in decision mode the score
//! is stripped even if the backend produced one.

use std::sync::Arc;

use crate::error::OracleError;
use crate::targets::{ClassificationResponse, Knowledge, QueryMeter, TrainedModel};
use crate::vocab::TokenId;

/// Something that can classify a token sequence: an in-process model, a
/// remote endpoint, or a test stub.
pub trait OracleBackend: Send + Sync {
    fn raw_classify(&self, tokens: &[TokenId]) -> Result<ClassificationResponse, OracleError>;
    fn score_capable(&self) -> bool;
    /// Full-trace classification plus the number of window queries it bills.
    fn raw_classify_trace(
        &self,
        tokens: &[TokenId],
    ) -> Result<(ClassificationResponse, u64), OracleError>;
}

impl OracleBackend for TrainedModel {
    fn raw_classify(&self, tokens: &[TokenId]) -> Result<ClassificationResponse, OracleError> {
        Ok(self.classify_sequence(tokens)?)
    }

    fn score_capable(&self) -> bool {
        self.score_capable
    }

    fn raw_classify_trace(
        &self,
        tokens: &[TokenId],
    ) -> Result<(ClassificationResponse, u64), OracleError> {
        Ok((self.classify_sequence(tokens)?, self.window_count(tokens)))
    }
}

/// Backend built from a scoring closure; used for brute-force test oracles.
pub struct FnBackend<F> {
    pub f: F,
    pub threshold: f64,
}

impl<F: Fn(&[TokenId]) -> f64 + Send + Sync> OracleBackend for FnBackend<F> {
    fn raw_classify(&self, tokens: &[TokenId]) -> Result<ClassificationResponse, OracleError> {
        Ok(ClassificationResponse::from_score((self.f)(tokens), self.threshold))
    }

    fn score_capable(&self) -> bool {
        true
    }

    fn raw_classify_trace(
        &self,
        tokens: &[TokenId],
    ) -> Result<(ClassificationResponse, u64), OracleError> {
        Ok((self.raw_classify(tokens)?, 1))
    }
}

/// The opaque callable handed to attack sessions.
pub trait Oracle: Send + Sync {
    fn knowledge(&self) -> Knowledge;
    /// One billed query on a token sequence (normally a single window).
    fn classify(&self, tokens: &[TokenId]) -> Result<ClassificationResponse, OracleError>;
    /// One trace classification billed at window-count queries.
    fn classify_trace(&self, tokens: &[TokenId]) -> Result<ClassificationResponse, OracleError>;
}

/// Metered, knowledge-stripping wrapper around a backend.
pub struct MeteredOracle<B> {
    backend: B,
    knowledge: Knowledge,
    meter: Arc<QueryMeter>,
    sample_id: Option<String>,
}

impl<B: OracleBackend> MeteredOracle<B> {
    pub fn with_sample(mut self, sample_id: impl Into<String>) -> Self {
        self.sample_id = Some(sample_id.into());
        self
    }

    fn apply_knowledge(&self, resp: ClassificationResponse) -> ClassificationResponse {
        match self.knowledge {
            Knowledge::Decision => resp.stripped(),
            Knowledge::Score => resp,
        }
    }
}

impl<B: OracleBackend> Oracle for MeteredOracle<B> {
    fn knowledge(&self) -> Knowledge {
        self.knowledge
    }

    fn classify(&self, tokens: &[TokenId]) -> Result<ClassificationResponse, OracleError> {
        // Bill only answered queries: a throttled or failed call costs nothing.
        let resp = self.backend.raw_classify(tokens)?;
        self.meter.record_window(self.sample_id.as_deref());
        Ok(self.apply_knowledge(resp))
    }

    fn classify_trace(&self, tokens: &[TokenId]) -> Result<ClassificationResponse, OracleError> {
        let (resp, windows) = self.backend.raw_classify_trace(tokens)?;
        self.meter.record_trace(self.sample_id.as_deref(), windows);
        Ok(self.apply_knowledge(resp))
    }
}

/// Wraps a backend as a metered oracle. Requesting score knowledge from a
/// decision-only backend is an error.
pub fn make_oracle<B: OracleBackend>(
    backend: B,
    knowledge: Knowledge,
    meter: Arc<QueryMeter>,
) -> Result<MeteredOracle<B>, OracleError> {
    if knowledge == Knowledge::Score && !backend.score_capable() {
        return Err(OracleError::ScoreUnavailable);
    }
    Ok(MeteredOracle { backend, knowledge, meter, sample_id: None })
}
