//! Attacks over add-only static feature vectors, and the turn-based hybrid
//! attack that drives each feature type benign in sequence against the
//! two-branch model.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::attack::backtrack::{prune, prune_budget};
use crate::attack::engine::{full_sequence_attack, rng_for, AttackOutcome};
use crate::attack::{AddingMethod, ArgPools, AttackConfig, AttackError, BenignProvider, PerturbType};
use crate::error::OracleError;
use crate::static_features::StaticFeatureVector;
use crate::targets::{BitOracle, HybridOracle};
use crate::trace::Trace;
use crate::vocab::Vocabulary;

/// Result of attacking one static feature vector.
#[derive(Debug, Clone)]
pub struct StaticAttackResult {
    /// The perturbed vector; original bits untouched, flips in `added`.
    pub vector: StaticFeatureVector,
    pub evaded: bool,
    pub initially_malicious: bool,
    pub queries: u64,
    pub backtrack_queries: u64,
    pub throttled: bool,
}

struct BitSession<'a> {
    oracle: &'a dyn BitOracle,
    spent: u64,
    budget: Option<u64>,
    throttled: bool,
    error: Option<AttackError>,
}

impl BitSession<'_> {
    /// One billed query; `Some(true)` means still malicious.
    fn query(&mut self, v: &StaticFeatureVector) -> Option<bool> {
        if self.throttled || self.error.is_some() {
            return None;
        }
        if let Some(b) = self.budget {
            if self.spent >= b {
                return None;
            }
        }
        match self.oracle.classify_bits(v) {
            Ok(r) => {
                self.spent += 1;
                Some(r.is_malicious())
            }
            Err(OracleError::Throttled) => {
                self.throttled = true;
                None
            }
            Err(e) => {
                self.error = Some(e.into());
                None
            }
        }
    }
}

/// A zero bit to flip next: a draw from the benign profile, or a uniformly
/// random feature index.
fn pick_bit(
    v: &StaticFeatureVector,
    profile: &[u32],
    perturb: PerturbType,
    rng: &mut ChaCha8Rng,
) -> Option<u32> {
    match perturb {
        PerturbType::Benign => {
            let open: Vec<u32> = profile
                .iter()
                .copied()
                .filter(|&b| (b as usize) < v.dim && !v.is_set(b))
                .collect();
            open.choose(rng).copied()
        }
        PerturbType::Random => {
            for _ in 0..64 {
                let b = rng.gen_range(0..v.dim as u32);
                if !v.is_set(b) {
                    return Some(b);
                }
            }
            None
        }
    }
}

/// Flips zero bits on until the oracle reports benign, then (with
/// logarithmic backtracking) prunes the flipped set back down. Original
/// 1-bits are never touched; failed attacks return the vector unmodified.
pub fn static_attack(
    oracle: &dyn BitOracle,
    base: &StaticFeatureVector,
    benign_profile: &[u32],
    config: &AttackConfig,
    sample_id: &str,
) -> Result<StaticAttackResult, AttackError> {
    config.validate()?;
    let mut rng = rng_for(config.seed, sample_id);
    let mut session = BitSession {
        oracle,
        spent: 0,
        budget: config.sample_budget,
        throttled: false,
        error: None,
    };
    let mut v = base.clone();
    let mut result = StaticAttackResult {
        vector: base.clone(),
        evaded: false,
        initially_malicious: false,
        queries: 0,
        backtrack_queries: 0,
        throttled: false,
    };

    'attack: {
        let Some(malicious) = session.query(&v) else { break 'attack };
        if !malicious {
            result.evaded = true;
            break 'attack;
        }
        result.initially_malicious = true;

        match config.adding_method {
            AddingMethod::LinearIteration => {
                let mut steps = 0u64;
                while steps < config.window_budget() {
                    let Some(bit) = pick_bit(&v, benign_profile, config.perturb_type, &mut rng)
                    else {
                        break;
                    };
                    v.add_bit(bit);
                    let Some(malicious) = session.query(&v) else { break };
                    steps += 1;
                    if !malicious {
                        result.evaded = true;
                        result.vector = v.clone();
                        break;
                    }
                }
            }
            AddingMethod::LogarithmicBacktracking => {
                // Flip the full cap unqueried, verify once, then prune.
                let mut flipped = Vec::new();
                while flipped.len() < config.m_w {
                    let Some(bit) = pick_bit(&v, benign_profile, config.perturb_type, &mut rng)
                    else {
                        break;
                    };
                    v.add_bit(bit);
                    flipped.push(bit);
                }
                if flipped.is_empty() {
                    break 'attack;
                }
                let Some(malicious) = session.query(&v) else { break 'attack };
                if malicious {
                    break 'attack;
                }
                let pruned = prune(
                    |subset| {
                        for (i, &bit) in flipped.iter().enumerate() {
                            if subset.contains(&i) {
                                v.add_bit(bit);
                            } else {
                                v.remove_added(bit);
                            }
                        }
                        session.query(&v).map(|malicious| !malicious)
                    },
                    &(0..flipped.len()).collect::<Vec<_>>(),
                    prune_budget(flipped.len()),
                );
                result.backtrack_queries = pruned.queries;
                for (i, &bit) in flipped.iter().enumerate() {
                    if pruned.kept.contains(&i) {
                        v.add_bit(bit);
                    } else {
                        v.remove_added(bit);
                    }
                }
                result.evaded = true;
                result.vector = v.clone();
            }
        }
    }

    if let Some(e) = session.error {
        return Err(e);
    }
    result.queries = session.spent;
    result.throttled = session.throttled;
    Ok(result)
}

/// Which feature type the hybrid attack drives benign first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HybridOrder {
    DynamicFirst,
    StaticFirst,
}

/// Result of the turn-based multi-feature attack.
#[derive(Debug)]
pub struct HybridOutcome {
    pub sample_id: String,
    /// The full hybrid input classified benign at some checkpoint.
    pub evaded: bool,
    pub initially_malicious: bool,
    pub dynamic: Option<AttackOutcome>,
    pub statics: Option<StaticAttackResult>,
    pub final_trace: Trace,
    pub final_static: StaticFeatureVector,
    pub queries_used: u64,
    pub throttled: bool,
}

/// Attacks the hybrid model one feature type at a time, stopping at the
/// first benign classification of the full input. Single-feature phases run
/// against views with the other branch frozen, so each phase is an ordinary
/// single-feature attack.
#[allow(clippy::too_many_arguments)]
pub fn hybrid_attack(
    oracle: &HybridOracle,
    trace: &Trace,
    statics: &StaticFeatureVector,
    vocab: Arc<Vocabulary>,
    config: &AttackConfig,
    benign: Option<&BenignProvider>,
    pools: &ArgPools,
    benign_profile: &[u32],
    order: HybridOrder,
) -> Result<HybridOutcome, AttackError> {
    config.validate()?;
    let mut out = HybridOutcome {
        sample_id: trace.id.clone(),
        evaded: false,
        initially_malicious: false,
        dynamic: None,
        statics: None,
        final_trace: trace.clone(),
        final_static: statics.clone(),
        queries_used: 0,
        throttled: false,
    };

    // One billed checkpoint query against the full hybrid input.
    let check = |out: &mut HybridOutcome| -> Result<Option<bool>, AttackError> {
        if out.throttled {
            return Ok(None);
        }
        if let Some(b) = config.sample_budget {
            if out.queries_used >= b {
                return Ok(None);
            }
        }
        match oracle.classify_full(&out.final_trace.type_ids(), &out.final_static) {
            Ok(r) => {
                out.queries_used += 1;
                Ok(Some(r.is_malicious()))
            }
            Err(OracleError::Throttled) => {
                out.throttled = true;
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    };

    match check(&mut out)? {
        None => return Ok(out),
        Some(false) => {
            out.evaded = true;
            return Ok(out);
        }
        Some(true) => out.initially_malicious = true,
    }

    let remaining = |spent: u64| config.sample_budget.map(|b| b.saturating_sub(spent));
    let phases = match order {
        HybridOrder::DynamicFirst => [true, false],
        HybridOrder::StaticFirst => [false, true],
    };
    for dynamic_phase in phases {
        if out.throttled {
            break;
        }
        if dynamic_phase {
            let view = oracle.dynamic_view(out.final_static.clone())?;
            let mut cfg = config.clone();
            cfg.sample_budget = remaining(out.queries_used);
            let res = full_sequence_attack(&view, &out.final_trace, Arc::clone(&vocab), &cfg, benign, pools)?;
            out.queries_used += res.queries_used;
            out.throttled |= res.throttled;
            out.final_trace = res.final_trace.clone();
            out.dynamic = Some(res);
        } else {
            let dyn_score = oracle
                .model()
                .dynamic
                .classify_sequence(&out.final_trace.type_ids())
                .map_err(OracleError::from)?
                .score
                .expect("dynamic branch is score-capable");
            let view = oracle.static_view(dyn_score);
            let mut cfg = config.clone();
            cfg.sample_budget = remaining(out.queries_used);
            let res = static_attack(&view, &out.final_static, benign_profile, &cfg, &trace.id)?;
            out.queries_used += res.queries;
            out.throttled |= res.throttled;
            out.final_static = res.vector.clone();
            out.statics = Some(res);
        }
        match check(&mut out)? {
            Some(false) => {
                out.evaded = true;
                break;
            }
            Some(true) => {}
            None => break,
        }
    }
    Ok(out)
}
