//! seqevade: query-efficient black-box evasion attacks against
//! sliding-window sequence classifiers.
//!
//! The toolkit perturbs discrete API-call traces (and add-only static
//! feature vectors) so a target classifier flips its decision to benign,
//! while minimizing oracle queries and keeping the original sequence intact
//! as an in-order subsequence. It ships desk-scale trainable target
//! classifiers, a synthetic trace corpus generator, and a query-billed
//! remote oracle service.

pub mod attack;
pub mod datagen;
pub mod error;
pub mod ledger;
pub mod report;
pub mod service;
pub mod static_features;
pub mod targets;
pub mod trace;
pub mod vocab;
pub mod window;

pub use error::{CoreError, ModelError, OracleError};
pub use ledger::{InsertionRecord, PerturbationLedger, Provenance, RecordId};
pub use static_features::StaticFeatureVector;
pub use trace::{ApiToken, Label, Trace};
pub use vocab::{TokenId, Vocabulary, NULL_TOKEN};
pub use window::{one_hot, split_windows, Window};
