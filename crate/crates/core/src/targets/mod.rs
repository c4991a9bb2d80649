//! Desk-scale trainable target classifiers behind a uniform black-box oracle
//! boundary with query metering.

mod meter;
mod models;
mod oracle;
mod persist;
mod statics;

pub use meter::QueryMeter;
pub use models::{
    evaluate, train, train_static, EvalReport, Fusion, HybridModel, LogisticParams, ModelKind,
    ModelParams, StaticModel, TrainParams, TrainedModel,
};
pub use oracle::{make_oracle, FnBackend, MeteredOracle, Oracle, OracleBackend};
pub use persist::{load_model, save_model};
pub use statics::{BitOracle, HybridDynamicView, HybridOracle, HybridStaticView, StaticModelOracle};

use serde::{Deserialize, Serialize};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// What the oracle reveals to the attacker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Knowledge {
    Decision,
    Score,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Malicious,
    Benign,
}

/// Oracle answer: the decision, plus the confidence score (1.0 = malicious)
/// when the knowledge mode allows it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResponse {
    pub decision: Decision,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl ClassificationResponse {
    pub fn from_score(score: f64, threshold: f64) -> Self {
        let decision = if score >= threshold { Decision::Malicious } else { Decision::Benign };
        Self { decision, score: Some(score) }
    }

    pub fn is_malicious(&self) -> bool {
        self.decision == Decision::Malicious
    }

    pub fn stripped(self) -> Self {
        Self { decision: self.decision, score: None }
    }
}
