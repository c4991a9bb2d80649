//! Oracles over static feature vectors and over the two-branch hybrid model.
//!
//! The hybrid attack works one feature type at a time, so the hybrid oracle
//! exposes phase views: a window-level [`Oracle`] with the static vector held
//! fixed, and a [`BitOracle`] with the dynamic branch held fixed. Each view
//! invocation is one billed query against the hybrid model.

use std::sync::Arc;

use crate::error::OracleError;
use crate::static_features::StaticFeatureVector;
use crate::targets::models::{HybridModel, StaticModel};
use crate::targets::{ClassificationResponse, Knowledge, Oracle, QueryMeter};
use crate::vocab::TokenId;

/// Black-box boundary for add-only static feature vectors.
pub trait BitOracle: Send + Sync {
    fn knowledge(&self) -> Knowledge;
    fn classify_bits(&self, v: &StaticFeatureVector) -> Result<ClassificationResponse, OracleError>;
}

/// Metered oracle over a static-only model.
pub struct StaticModelOracle {
    model: Arc<StaticModel>,
    knowledge: Knowledge,
    meter: Arc<QueryMeter>,
    sample_id: Option<String>,
}

impl StaticModelOracle {
    pub fn new(model: Arc<StaticModel>, knowledge: Knowledge, meter: Arc<QueryMeter>) -> Self {
        Self { model, knowledge, meter, sample_id: None }
    }

    pub fn with_sample(mut self, sample_id: impl Into<String>) -> Self {
        self.sample_id = Some(sample_id.into());
        self
    }
}

impl BitOracle for StaticModelOracle {
    fn knowledge(&self) -> Knowledge {
        self.knowledge
    }

    fn classify_bits(&self, v: &StaticFeatureVector) -> Result<ClassificationResponse, OracleError> {
        let resp = self.model.classify(v)?;
        self.meter.record_window(self.sample_id.as_deref());
        Ok(match self.knowledge {
            Knowledge::Decision => resp.stripped(),
            Knowledge::Score => resp,
        })
    }
}

/// Metered oracle over a hybrid model. Direct queries classify the full
/// (trace, statics) input; phase views fix one branch.
pub struct HybridOracle {
    model: Arc<HybridModel>,
    knowledge: Knowledge,
    meter: Arc<QueryMeter>,
    sample_id: Option<String>,
}

impl HybridOracle {
    pub fn new(model: Arc<HybridModel>, knowledge: Knowledge, meter: Arc<QueryMeter>) -> Self {
        Self { model, knowledge, meter, sample_id: None }
    }

    pub fn with_sample(mut self, sample_id: impl Into<String>) -> Self {
        self.sample_id = Some(sample_id.into());
        self
    }

    pub fn knowledge(&self) -> Knowledge {
        self.knowledge
    }

    fn strip(&self, resp: ClassificationResponse) -> ClassificationResponse {
        match self.knowledge {
            Knowledge::Decision => resp.stripped(),
            Knowledge::Score => resp,
        }
    }

    /// One billed query on the full hybrid input.
    pub fn classify_full(
        &self,
        tokens: &[TokenId],
        statics: &StaticFeatureVector,
    ) -> Result<ClassificationResponse, OracleError> {
        let resp = self.model.classify(tokens, statics)?;
        self.meter.record_window(self.sample_id.as_deref());
        Ok(self.strip(resp))
    }

    /// Window-level oracle for the dynamic attack phase: the static vector is
    /// frozen, so the fused response is a pure function of the queried tokens.
    pub fn dynamic_view(&self, statics: StaticFeatureVector) -> Result<HybridDynamicView<'_>, OracleError> {
        let static_score = self.model.statics.score(&statics)?;
        Ok(HybridDynamicView { parent: self, static_score })
    }

    /// Bit-level oracle for the static attack phase with the dynamic branch
    /// score frozen at `dyn_score`.
    pub fn static_view(&self, dyn_score: f64) -> HybridStaticView<'_> {
        HybridStaticView { parent: self, dyn_score }
    }

    pub fn model(&self) -> &HybridModel {
        &self.model
    }
}

pub struct HybridDynamicView<'a> {
    parent: &'a HybridOracle,
    static_score: f64,
}

impl Oracle for HybridDynamicView<'_> {
    fn knowledge(&self) -> Knowledge {
        self.parent.knowledge
    }

    fn classify(&self, tokens: &[TokenId]) -> Result<ClassificationResponse, OracleError> {
        let model = &self.parent.model;
        let dyn_score = model
            .dynamic
            .classify_sequence(tokens)?
            .score
            .expect("dynamic branch is score-capable");
        self.parent.meter.record_window(self.parent.sample_id.as_deref());
        let fused = model.fused_score(dyn_score, self.static_score);
        Ok(self.parent.strip(ClassificationResponse::from_score(fused, model.threshold)))
    }

    fn classify_trace(&self, tokens: &[TokenId]) -> Result<ClassificationResponse, OracleError> {
        let model = &self.parent.model;
        let dyn_score = model
            .dynamic
            .classify_sequence(tokens)?
            .score
            .expect("dynamic branch is score-capable");
        let windows = model.dynamic.window_count(tokens);
        self.parent.meter.record_trace(self.parent.sample_id.as_deref(), windows);
        let fused = model.fused_score(dyn_score, self.static_score);
        Ok(self.parent.strip(ClassificationResponse::from_score(fused, model.threshold)))
    }
}

pub struct HybridStaticView<'a> {
    parent: &'a HybridOracle,
    dyn_score: f64,
}

impl BitOracle for HybridStaticView<'_> {
    fn knowledge(&self) -> Knowledge {
        self.parent.knowledge
    }

    fn classify_bits(&self, v: &StaticFeatureVector) -> Result<ClassificationResponse, OracleError> {
        let model = &self.parent.model;
        let fused = model.fused_score(self.dyn_score, model.statics.score(v)?);
        self.parent.meter.record_window(self.parent.sample_id.as_deref());
        Ok(self.parent.strip(ClassificationResponse::from_score(fused, model.threshold)))
    }
}
