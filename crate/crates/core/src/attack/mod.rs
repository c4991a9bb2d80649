//! The attack engine: decision- and score-based window attacks, the full
//! sequence attack with logarithmic backtracking, the self-adaptive EA and
//! GA score minimizers, benign-sequence providers, no-op argument
//! randomization, and the static/hybrid multi-feature attacks.

mod backtrack;
mod benign;
mod engine;
mod minimize;
mod noop;
mod statics;

pub use benign::BenignProvider;
pub use engine::{full_sequence_attack, AttackOutcome, WindowResult};
pub use minimize::{ea_minimize, ga_minimize, Candidate, GeneDomain, MinimizeResult};
pub use noop::{sample_noop_args, ArgPools};
pub use statics::{hybrid_attack, static_attack, HybridOrder, HybridOutcome, StaticAttackResult};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::OracleError;
use crate::targets::Knowledge;
use crate::vocab::{TokenId, Vocabulary};

/// Which API calls the attack inserts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbType {
    /// Uniform draws from the attacker vocabulary.
    Random,
    /// Tokens taken from a generated benign window.
    Benign,
}

/// How many API calls to add before checking with the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AddingMethod {
    /// Insert one call at a time, querying after each insertion.
    LinearIteration,
    /// Insert the full per-window budget unqueried, then binary-search the
    /// insertion set down to a minimal evading subset.
    LogarithmicBacktracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Minimizer {
    /// Self-adaptive uniform-mixing evolutionary algorithm.
    Ea,
    /// Fixed-rate genetic algorithm with single-point crossover.
    Ga,
}

/// Score-minimizer hyperparameters. Rates default to 1/m (low) and 4/m
/// (high) per gene where m is the slot count.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EaParams {
    pub population: usize,
    pub low_rate: Option<f64>,
    pub high_rate: Option<f64>,
    /// Probability of a child switching between the low and high rate.
    pub switch_prob: f64,
    /// Fixed per-gene mutation rate for the GA comparator.
    pub ga_mutation_rate: Option<f64>,
}

impl Default for EaParams {
    fn default() -> Self {
        Self { population: 10, low_rate: None, high_rate: None, switch_prob: 0.4, ga_mutation_rate: None }
    }
}

/// The three attack axes plus budgets, window size, and attacker vocabulary.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub knowledge: Knowledge,
    pub perturb_type: PerturbType,
    pub adding_method: AddingMethod,
    /// Adversarial window size n (need not match the target's k).
    pub n: usize,
    /// Maximum insertions per window.
    pub m_w: usize,
    /// Per-window query budget B; defaults to M_w.
    pub b: Option<u64>,
    /// Total query budget per sample; unlimited when absent.
    pub sample_budget: Option<u64>,
    /// Attacker vocabulary D'. Forbidden and null tokens are filtered out at
    /// session start regardless of what the caller supplies.
    pub d_prime: Vec<TokenId>,
    pub seed: u64,
    pub minimizer: Minimizer,
    pub ea: EaParams,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self::new(Knowledge::Decision, PerturbType::Random, AddingMethod::LinearIteration)
    }
}

impl AttackConfig {
    pub fn new(knowledge: Knowledge, perturb_type: PerturbType, adding_method: AddingMethod) -> Self {
        Self {
            knowledge,
            perturb_type,
            adding_method,
            n: 20,
            m_w: 10,
            b: None,
            sample_budget: None,
            d_prime: Vec::new(),
            seed: 0,
            minimizer: Minimizer::Ea,
            ea: EaParams::default(),
        }
    }

    /// Per-window insert/minimizer query budget.
    pub fn window_budget(&self) -> u64 {
        self.b.unwrap_or(self.m_w as u64)
    }

    /// Attacker vocabulary with forbidden and null tokens removed; falls back
    /// to the full insertable vocabulary when `d_prime` is empty.
    pub fn effective_d_prime(&self, vocab: &Vocabulary) -> Vec<TokenId> {
        let filtered: Vec<TokenId> = self
            .d_prime
            .iter()
            .copied()
            .filter(|&t| t != crate::vocab::NULL_TOKEN && !vocab.is_forbidden(t) && vocab.contains(t))
            .collect();
        if filtered.is_empty() {
            vocab.insertable()
        } else {
            filtered
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        if self.n == 0 || self.m_w == 0 {
            return Err(AttackError::BadConfig("n and m_w must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack configuration: {0}")]
    BadConfig(&'static str),
    #[error("benign perturbation requires a benign provider")]
    MissingBenignProvider,
    #[error("score-based attack requires a score-knowledge oracle")]
    KnowledgeMismatch,
    #[error("benign provider has no training data")]
    UntrainedProvider,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Core(#[from] crate::error::CoreError),
}
