//! The full-sequence attack engine. A trace is attacked window by window
//! against an OR-aggregating classifier: every window must end benign for
//! the trace to evade. All perturbation goes through the ledger, so the
//! original trace always survives as an in-order subsequence, per-window and
//! whole-trace insertion caps hold, and the final artifact is reproducible
//! from (trace, seed, config) alone.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::attack::backtrack::{prune, prune_budget};
use crate::attack::minimize::{ea_minimize, ga_minimize, GeneDomain};
use crate::attack::{
    sample_noop_args, AddingMethod, ArgPools, AttackConfig, AttackError, BenignProvider, Minimizer,
    PerturbType,
};
use crate::error::{CoreError, OracleError};
use crate::ledger::{PerturbationLedger, Provenance, RecordId};
use crate::targets::{ClassificationResponse, Knowledge, Oracle};
use crate::trace::Trace;
use crate::vocab::{TokenId, Vocabulary};

/// Per-window attack bookkeeping.
#[derive(Debug, Clone)]
pub struct WindowResult {
    pub window_index: usize,
    /// The window was malicious when first queried.
    pub initially_malicious: bool,
    /// The last verified classification of this window is benign.
    pub end_benign: bool,
    /// Queries spent checking and inserting (includes the initial check).
    pub insert_queries: u64,
    /// Queries spent pruning the insertion set back down.
    pub backtrack_queries: u64,
    /// Active insertions attributed to this window after the attack.
    pub inserted: usize,
    /// The window attack ran out of insertions or queries before evading.
    pub budget_exhausted: bool,
}

impl WindowResult {
    fn new(window_index: usize) -> Self {
        Self {
            window_index,
            initially_malicious: false,
            end_benign: false,
            insert_queries: 0,
            backtrack_queries: 0,
            inserted: 0,
            budget_exhausted: false,
        }
    }
}

/// Result of attacking one trace end to end.
#[derive(Debug)]
pub struct AttackOutcome {
    pub sample_id: String,
    /// Every window's last verified classification is benign.
    pub evaded: bool,
    /// Some window was malicious before perturbation (OR aggregation).
    pub initially_malicious: bool,
    pub final_trace: Trace,
    /// Window-unit oracle queries spent on this sample.
    pub queries_used: u64,
    /// Active insertions over original length.
    pub overhead: f64,
    pub ledger_digest: String,
    /// The oracle throttled mid-attack; the outcome reflects the last
    /// verified state.
    pub throttled: bool,
    pub per_window: Vec<WindowResult>,
    pub ledger: PerturbationLedger,
}

/// Deterministic per-sample RNG: the run seed and the sample id jointly fix
/// the stream, so corpus iteration order cannot perturb results.
pub(crate) fn rng_for(seed: u64, sample_id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(sample_id.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

fn total_len(ledger: &PerturbationLedger) -> usize {
    ledger.original().len() + ledger.active_count()
}

/// Current content of adversarial window `w` (no padding; the oracle pads).
fn window_ids(ledger: &PerturbationLedger, w: usize, n: usize) -> Vec<TokenId> {
    let ids = ledger.materialize_ids();
    let start = w * n;
    let end = (start + n).min(ids.len());
    if start >= end {
        Vec::new()
    } else {
        ids[start..end].to_vec()
    }
}

/// Maps minimizer genes to insertion slots `(position, token)`. Exactly one
/// of the two axes is fixed: random perturbation fixes positions and
/// optimizes tokens, benign perturbation fixes tokens and optimizes
/// positions (clamped into the window's real content).
fn slot_assignments(
    genes: &[u32],
    fixed_pos: Option<&[usize]>,
    fixed_tok: Option<&[TokenId]>,
    real: usize,
) -> Vec<(usize, TokenId)> {
    (0..genes.len())
        .map(|j| match (fixed_pos, fixed_tok) {
            (Some(pos), None) => (pos[j], genes[j]),
            (None, Some(tok)) => ((genes[j] as usize).min(real.saturating_sub(1)), tok[j]),
            _ => unreachable!("exactly one slot axis is fixed"),
        })
        .collect()
}

/// The window content a slot assignment produces: slot tokens interleave
/// immediately before their base position (in slot order), then the result
/// is truncated to the window size. Committing the same assignment to the
/// ledger materializes exactly this content.
fn build_window(
    base: &[TokenId],
    genes: &[u32],
    fixed_pos: Option<&[usize]>,
    fixed_tok: Option<&[TokenId]>,
    n: usize,
) -> Vec<TokenId> {
    let slots = slot_assignments(genes, fixed_pos, fixed_tok, base.len());
    let mut out = Vec::with_capacity(base.len() + slots.len());
    for (i, &b) in base.iter().enumerate() {
        for &(p, t) in &slots {
            if p == i {
                out.push(t);
            }
        }
        out.push(b);
    }
    out.truncate(n);
    out
}

struct Session<'a> {
    oracle: &'a dyn Oracle,
    config: &'a AttackConfig,
    vocab: &'a Vocabulary,
    d_prime: Vec<TokenId>,
    pools: &'a ArgPools,
    benign: Option<&'a BenignProvider>,
    rng: ChaCha8Rng,
    spent: u64,
    throttled: bool,
    /// No further queries possible (sample budget spent or throttled).
    stopped: bool,
    error: Option<AttackError>,
    /// Whole-trace insertion cap, floor(len * m_w / n): keeps total overhead
    /// at or below the per-window ratio even when some windows overflow.
    global_cap: usize,
}

impl Session<'_> {
    /// One billed window query, or `None` when no more queries may be spent.
    fn query(&mut self, tokens: &[TokenId]) -> Option<ClassificationResponse> {
        if self.stopped || self.error.is_some() {
            return None;
        }
        if let Some(budget) = self.config.sample_budget {
            if self.spent >= budget {
                self.stopped = true;
                return None;
            }
        }
        match self.oracle.classify(tokens) {
            Ok(resp) => {
                self.spent += 1;
                Some(resp)
            }
            Err(OracleError::Throttled) => {
                self.throttled = true;
                self.stopped = true;
                None
            }
            Err(e) => {
                self.error = Some(e.into());
                None
            }
        }
    }

    fn note<T>(&mut self, r: Result<T, CoreError>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.error = Some(e.into());
                None
            }
        }
    }

    fn can_insert(&self, ledger: &PerturbationLedger, w: usize) -> bool {
        ledger.active_count() < self.global_cap
            && ledger.active_count_in_window(w) < self.config.m_w
    }

    fn benign_window(&mut self) -> Option<Vec<TokenId>> {
        match self.config.perturb_type {
            PerturbType::Random => None,
            PerturbType::Benign => Some(
                self.benign
                    .expect("provider checked at session start")
                    .window(self.config.n, self.vocab, &mut self.rng),
            ),
        }
    }

    /// Decision mode: token for an insertion at window position `pos`.
    fn pick_token(&mut self, pos: usize, wb: Option<&Vec<TokenId>>) -> TokenId {
        match wb {
            Some(v) => v[pos],
            None => *self.d_prime.choose(&mut self.rng).expect("non-empty attacker vocabulary"),
        }
    }

    /// Binary-search the window's insertion set down to a still-benign
    /// subset within `budget` queries, then re-apply the kept set without
    /// queries. Returns the queries spent.
    fn prune_window(
        &mut self,
        ledger: &mut PerturbationLedger,
        w: usize,
        ids: &[RecordId],
        budget: u64,
    ) -> u64 {
        let n = self.config.n;
        let result = prune(
            |subset| {
                for &id in ids {
                    ledger
                        .set_active(id, subset.contains(&id))
                        .expect("prune subsets stay within the window cap");
                }
                self.query(&window_ids(ledger, w, n)).map(|r| !r.is_malicious())
            },
            ids,
            budget,
        );
        // An aborted prune implies the session already stopped querying.
        debug_assert!(!result.aborted || self.stopped || self.error.is_some());
        // Revert to the last verified-benign subset with zero queries.
        for &id in ids {
            ledger.set_active(id, false).expect("known record");
        }
        for &id in &result.kept {
            ledger.set_active(id, true).expect("kept set fits the window cap");
        }
        result.queries
    }

    fn attack_window_decision(&mut self, ledger: &mut PerturbationLedger, w: usize) -> WindowResult {
        let n = self.config.n;
        let start = w * n;
        let mut res = WindowResult::new(w);
        let Some(first) = self.query(&window_ids(ledger, w, n)) else { return res };
        res.insert_queries = 1;
        if !first.is_malicious() {
            res.end_benign = true;
            return res;
        }
        res.initially_malicious = true;
        let wb = self.benign_window();

        match self.config.adding_method {
            AddingMethod::LinearIteration => {
                let budget = self.config.window_budget();
                let mut steps = 0u64;
                while steps < budget {
                    if !self.can_insert(ledger, w) {
                        res.budget_exhausted = true;
                        break;
                    }
                    let real = (total_len(ledger) - start).min(n);
                    let pos = self.rng.gen_range(0..real);
                    let token = self.pick_token(pos, wb.as_ref());
                    let call = sample_noop_args(token, self.pools, &mut self.rng);
                    if self.note(ledger.insert_at_materialized(start + pos, call, w)).is_none() {
                        return res;
                    }
                    let Some(resp) = self.query(&window_ids(ledger, w, n)) else { return res };
                    steps += 1;
                    res.insert_queries += 1;
                    if !resp.is_malicious() {
                        res.end_benign = true;
                        break;
                    }
                }
                if !res.end_benign {
                    res.budget_exhausted = true;
                }
            }
            AddingMethod::LogarithmicBacktracking => {
                // Insert the full per-window budget without querying, then
                // verify once and prune.
                let mut ids = Vec::new();
                while ids.len() < self.config.m_w {
                    if !self.can_insert(ledger, w) {
                        break;
                    }
                    let real = (total_len(ledger) - start).min(n);
                    let pos = self.rng.gen_range(0..real);
                    let token = self.pick_token(pos, wb.as_ref());
                    let call = sample_noop_args(token, self.pools, &mut self.rng);
                    match self.note(ledger.insert_at_materialized(start + pos, call, w)) {
                        Some(id) => ids.push(id),
                        None => return res,
                    }
                }
                if ids.is_empty() {
                    res.budget_exhausted = true;
                    return res;
                }
                let Some(resp) = self.query(&window_ids(ledger, w, n)) else { return res };
                res.insert_queries += 1;
                if resp.is_malicious() {
                    res.budget_exhausted = true;
                    return res;
                }
                res.end_benign = true;
                res.backtrack_queries = self.prune_window(ledger, w, &ids, prune_budget(ids.len()));
            }
        }
        res
    }

    fn attack_window_score(&mut self, ledger: &mut PerturbationLedger, w: usize) -> WindowResult {
        let n = self.config.n;
        let start = w * n;
        let mut res = WindowResult::new(w);
        let base = window_ids(ledger, w, n);
        let Some(first) = self.query(&base) else { return res };
        res.insert_queries = 1;
        if !first.is_malicious() {
            res.end_benign = true;
            return res;
        }
        res.initially_malicious = true;

        let real = base.len();
        let m = self
            .config
            .m_w
            .min(self.global_cap.saturating_sub(ledger.active_count()))
            .min(n);
        if m == 0 || real == 0 {
            res.budget_exhausted = true;
            return res;
        }
        // With logarithmic backtracking, part of the window budget is
        // reserved for the post-hoc prune.
        let reserved = match self.config.adding_method {
            AddingMethod::LinearIteration => 0,
            AddingMethod::LogarithmicBacktracking => (n.max(2) as f64).log2().ceil() as u64,
        };
        let iterations = self.config.window_budget().saturating_sub(reserved);

        let pool = self.d_prime.clone();
        let (fixed_pos, fixed_tok, initial): (Option<Vec<usize>>, Option<Vec<TokenId>>, Vec<u32>) =
            match self.config.perturb_type {
                PerturbType::Random => {
                    let pos: Vec<usize> = (0..m).map(|_| self.rng.gen_range(0..real)).collect();
                    let init = (0..m)
                        .map(|_| *pool.choose(&mut self.rng).expect("non-empty attacker vocabulary"))
                        .collect();
                    (Some(pos), None, init)
                }
                PerturbType::Benign => {
                    let wb = self.benign_window().expect("benign perturbation has a provider");
                    let init = (0..m).map(|_| self.rng.gen_range(0..n as u32)).collect();
                    (None, Some(wb[..m].to_vec()), init)
                }
            };
        let domain = match self.config.perturb_type {
            PerturbType::Random => GeneDomain::Tokens(&pool),
            PerturbType::Benign => GeneDomain::Positions(n),
        };
        let fp = fixed_pos.as_deref();
        let ft = fixed_tok.as_deref();
        let minimizer = self.config.minimizer;
        let ea = self.config.ea.clone();

        let mut rng = std::mem::replace(&mut self.rng, ChaCha8Rng::seed_from_u64(0));
        let eval = |genes: &[u32]| {
            let candidate = build_window(&base, genes, fp, ft, n);
            self.query(&candidate).map(|r| {
                (r.score.expect("score-mode oracle returns scores"), !r.is_malicious())
            })
        };
        let search = match minimizer {
            Minimizer::Ea => ea_minimize(eval, &initial, &domain, iterations, &ea, &mut rng),
            Minimizer::Ga => ga_minimize(eval, &initial, &domain, iterations, &ea, &mut rng),
        };
        self.rng = rng;
        res.insert_queries += search.evaluations;
        if !search.evaded {
            res.budget_exhausted = !search.aborted;
            return res;
        }

        // Commit the winning assignment so the materialized window is
        // byte-for-byte the content the oracle called benign. Anchors come
        // from a provenance snapshot taken before the first commit, so
        // later inserts cannot shift earlier ones.
        let slots = slot_assignments(&search.best.genes, fp, ft, real);
        let prov = ledger.provenance();
        let mut order: Vec<usize> = (0..slots.len()).collect();
        order.sort_by_key(|&j| slots[j].0);
        let mut committed = Vec::with_capacity(slots.len());
        for j in order {
            let (pos, token) = slots[j];
            let call = sample_noop_args(token, self.pools, &mut self.rng);
            let inserted = match prov[start + pos] {
                Provenance::Original(o) => ledger.insert(o, call, w),
                Provenance::Inserted(anchor) => ledger.insert_before(anchor, call, w),
            };
            match self.note(inserted) {
                Some(id) => committed.push(id),
                None => return res,
            }
        }
        debug_assert_eq!(
            window_ids(ledger, w, n),
            build_window(&base, &search.best.genes, fp, ft, n),
        );
        res.end_benign = true;
        if matches!(self.config.adding_method, AddingMethod::LogarithmicBacktracking)
            && !committed.is_empty()
        {
            let budget = reserved.min(prune_budget(committed.len()));
            res.backtrack_queries = self.prune_window(ledger, w, &committed, budget);
        }
        res
    }
}

/// Attacks one trace end to end: each adversarial window of size `n` is
/// driven benign in turn, with insertions re-splitting the trace as content
/// pushes forward into later windows.
pub fn full_sequence_attack(
    oracle: &dyn Oracle,
    trace: &Trace,
    vocab: Arc<Vocabulary>,
    config: &AttackConfig,
    benign: Option<&BenignProvider>,
    pools: &ArgPools,
) -> Result<AttackOutcome, AttackError> {
    config.validate()?;
    if config.perturb_type == PerturbType::Benign && benign.is_none() {
        return Err(AttackError::MissingBenignProvider);
    }
    if config.knowledge == Knowledge::Score && oracle.knowledge() != Knowledge::Score {
        return Err(AttackError::KnowledgeMismatch);
    }
    let d_prime = config.effective_d_prime(&vocab);
    if d_prime.is_empty() {
        return Err(AttackError::BadConfig("empty attacker vocabulary"));
    }

    let global_cap = trace.len() * config.m_w / config.n;
    let mut ledger =
        PerturbationLedger::new(Arc::new(trace.clone()), Arc::clone(&vocab), config.m_w);
    let mut session = Session {
        oracle,
        config,
        vocab: &vocab,
        d_prime,
        pools,
        benign,
        rng: rng_for(config.seed, &trace.id),
        spent: 0,
        throttled: false,
        stopped: false,
        error: None,
        global_cap,
    };

    let mut per_window = Vec::new();
    let mut w = 0usize;
    while w * config.n < total_len(&ledger) {
        let mut res = match config.knowledge {
            Knowledge::Decision => session.attack_window_decision(&mut ledger, w),
            Knowledge::Score => session.attack_window_score(&mut ledger, w),
        };
        if !res.end_benign {
            // A failed window keeps nothing: unverified insertions would
            // only inflate overhead without flipping the trace.
            for id in ledger.active_ids_in_window(w) {
                ledger.set_active(id, false).expect("known record");
            }
        }
        res.inserted = ledger.active_count_in_window(w);
        per_window.push(res);
        if let Some(e) = session.error.take() {
            return Err(e);
        }
        w += 1;
        if session.stopped {
            break;
        }
    }

    let all_processed = w * config.n >= total_len(&ledger);
    let evaded = all_processed && per_window.iter().all(|r| r.end_benign);
    let initially_malicious = per_window.iter().any(|r| r.initially_malicious);
    Ok(AttackOutcome {
        sample_id: trace.id.clone(),
        evaded,
        initially_malicious,
        final_trace: Trace::new(trace.id.clone(), trace.label, ledger.materialize()),
        queries_used: session.spent,
        overhead: ledger.overhead(),
        ledger_digest: ledger.digest(),
        throttled: session.throttled,
        per_window,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::is_subsequence;
    use crate::targets::{make_oracle, FnBackend, QueryMeter};
    use crate::trace::Label;

    const SENTINEL: TokenId = 9;

    /// Benign iff the window contains the sentinel token.
    fn sentinel_backend() -> FnBackend<impl Fn(&[TokenId]) -> f64 + Send + Sync> {
        FnBackend {
            f: |tokens: &[TokenId]| if tokens.contains(&SENTINEL) { 0.1 } else { 0.9 },
            threshold: 0.5,
        }
    }

    /// Score drops with every sentinel in the window; two are needed to
    /// cross below 0.5.
    fn graded_backend() -> FnBackend<impl Fn(&[TokenId]) -> f64 + Send + Sync> {
        FnBackend {
            f: |tokens: &[TokenId]| {
                let count = tokens.iter().filter(|&&t| t == SENTINEL).count() as f64;
                (0.9 - 0.3 * count).max(0.05)
            },
            threshold: 0.5,
        }
    }

    fn config(knowledge: Knowledge, perturb: PerturbType, method: AddingMethod) -> AttackConfig {
        let mut cfg = AttackConfig::new(knowledge, perturb, method);
        cfg.n = 8;
        cfg.m_w = 4;
        cfg.d_prime = vec![SENTINEL];
        cfg.seed = 7;
        cfg
    }

    fn run(
        cfg: &AttackConfig,
        trace: &Trace,
        benign: Option<&BenignProvider>,
    ) -> AttackOutcome {
        let vocab = Arc::new(Vocabulary::synthetic(64));
        let meter = Arc::new(QueryMeter::new());
        let oracle = match cfg.knowledge {
            Knowledge::Decision => {
                make_oracle(sentinel_backend(), Knowledge::Decision, meter).unwrap()
            }
            Knowledge::Score => make_oracle(sentinel_backend(), Knowledge::Score, meter).unwrap(),
        };
        full_sequence_attack(&oracle, trace, vocab, cfg, benign, &ArgPools::new()).unwrap()
    }

    #[test]
    fn decision_linear_inserts_one_sentinel_per_window() {
        let trace = Trace::from_ids("m1", Label::Malicious, &[7; 16]);
        let cfg = config(Knowledge::Decision, PerturbType::Random, AddingMethod::LinearIteration);
        let out = run(&cfg, &trace, None);
        assert!(out.evaded);
        assert!(out.initially_malicious);
        assert!(!out.throttled);
        // Two base windows plus one more as insertions push content forward.
        assert_eq!(out.per_window.len(), 3);
        for wr in &out.per_window {
            assert_eq!(wr.insert_queries, 2); // initial check + one insertion
            assert_eq!(wr.inserted, 1);
            assert!(wr.initially_malicious && wr.end_benign);
        }
        assert!((out.overhead - 3.0 / 16.0).abs() < 1e-12);
        assert!(is_subsequence(&trace.type_ids(), &out.final_trace.type_ids()));
    }

    #[test]
    fn decision_linear_respects_query_bound() {
        let trace = Trace::from_ids("m1", Label::Malicious, &[7; 32]);
        let cfg = config(Knowledge::Decision, PerturbType::Random, AddingMethod::LinearIteration);
        let out = run(&cfg, &trace, None);
        let bound = cfg.window_budget() + 1;
        for wr in &out.per_window {
            assert!(wr.insert_queries <= bound, "{} > {bound}", wr.insert_queries);
        }
        assert_eq!(out.queries_used, out.per_window.iter().map(|w| w.insert_queries).sum::<u64>());
    }

    #[test]
    fn decision_logbt_prunes_to_minimal_set() {
        let trace = Trace::from_ids("m1", Label::Malicious, &[7; 16]);
        let cfg = config(
            Knowledge::Decision,
            PerturbType::Random,
            AddingMethod::LogarithmicBacktracking,
        );
        let out = run(&cfg, &trace, None);
        assert!(out.evaded);
        for wr in &out.per_window {
            // d_prime is only the sentinel, so a single kept insertion
            // suffices; the prune must find it within the bound.
            assert_eq!(wr.inserted, 1);
            assert_eq!(wr.insert_queries, 2); // initial check + verify
            assert!(wr.backtrack_queries <= prune_budget(cfg.m_w));
        }
        assert!(is_subsequence(&trace.type_ids(), &out.final_trace.type_ids()));
    }

    #[test]
    fn already_benign_trace_costs_one_query_per_window() {
        let trace = Trace::from_ids("b1", Label::Benign, &[SENTINEL; 16]);
        let cfg = config(Knowledge::Decision, PerturbType::Random, AddingMethod::LinearIteration);
        let out = run(&cfg, &trace, None);
        assert!(out.evaded);
        assert!(!out.initially_malicious);
        assert_eq!(out.queries_used, 2); // two windows, one check each
        assert_eq!(out.overhead, 0.0);
        assert_eq!(out.final_trace.type_ids(), trace.type_ids());
    }

    #[test]
    fn score_ea_random_finds_two_sentinels() {
        let trace = Trace::from_ids("m1", Label::Malicious, &[7, 7, 7, 7]);
        let mut cfg = config(Knowledge::Score, PerturbType::Random, AddingMethod::LinearIteration);
        cfg.d_prime = vec![5, SENTINEL];
        cfg.b = Some(120);
        let vocab = Arc::new(Vocabulary::synthetic(64));
        let meter = Arc::new(QueryMeter::new());
        let oracle = make_oracle(graded_backend(), Knowledge::Score, meter).unwrap();
        let out =
            full_sequence_attack(&oracle, &trace, vocab, &cfg, None, &ArgPools::new()).unwrap();
        assert!(out.evaded, "per_window: {:?}", out.per_window);
        // Global cap: 4 * 4 / 8 = 2 insertions; both must be sentinels.
        assert_eq!(out.ledger.active_count(), 2);
        let added: Vec<TokenId> = out
            .ledger
            .records()
            .iter()
            .filter(|r| r.active)
            .map(|r| r.token.type_id)
            .collect();
        assert_eq!(added, vec![SENTINEL, SENTINEL]);
        assert!(is_subsequence(&trace.type_ids(), &out.final_trace.type_ids()));
    }

    #[test]
    fn score_benign_positions_evade_with_benign_tokens() {
        let trace = Trace::from_ids("m1", Label::Malicious, &[7, 7, 7, 7]);
        let mut cfg = config(Knowledge::Score, PerturbType::Benign, AddingMethod::LinearIteration);
        cfg.b = Some(120);
        let benign_trace = Trace::from_ids("b", Label::Benign, &[SENTINEL; 30]);
        let provider = BenignProvider::corpus_replay(&[&benign_trace]).unwrap();
        let vocab = Arc::new(Vocabulary::synthetic(64));
        let meter = Arc::new(QueryMeter::new());
        let oracle = make_oracle(graded_backend(), Knowledge::Score, meter).unwrap();
        let out =
            full_sequence_attack(&oracle, &trace, vocab, &cfg, Some(&provider), &ArgPools::new())
                .unwrap();
        assert!(out.evaded, "per_window: {:?}", out.per_window);
        assert!(is_subsequence(&trace.type_ids(), &out.final_trace.type_ids()));
    }

    #[test]
    fn score_logbt_reserves_and_spends_prune_budget() {
        let trace = Trace::from_ids("m1", Label::Malicious, &[7, 7, 7, 7]);
        let mut cfg = config(
            Knowledge::Score,
            PerturbType::Random,
            AddingMethod::LogarithmicBacktracking,
        );
        cfg.d_prime = vec![5, SENTINEL];
        cfg.b = Some(120);
        let vocab = Arc::new(Vocabulary::synthetic(64));
        let meter = Arc::new(QueryMeter::new());
        let oracle = make_oracle(graded_backend(), Knowledge::Score, meter).unwrap();
        let out =
            full_sequence_attack(&oracle, &trace, vocab, &cfg, None, &ArgPools::new()).unwrap();
        assert!(out.evaded, "per_window: {:?}", out.per_window);
        let reserved = (cfg.n as f64).log2().ceil() as u64;
        for wr in &out.per_window {
            assert!(wr.backtrack_queries <= reserved);
            assert!(wr.insert_queries <= 1 + cfg.window_budget() - reserved);
        }
        // Both sentinels are necessary, so the prune keeps them.
        assert_eq!(out.ledger.active_count(), 2);
    }

    #[test]
    fn same_seed_reproduces_digest_and_queries() {
        let trace = Trace::from_ids("m1", Label::Malicious, &[7; 24]);
        let cfg = config(
            Knowledge::Decision,
            PerturbType::Random,
            AddingMethod::LogarithmicBacktracking,
        );
        let a = run(&cfg, &trace, None);
        let b = run(&cfg, &trace, None);
        assert_eq!(a.ledger_digest, b.ledger_digest);
        assert_eq!(a.queries_used, b.queries_used);
        assert_eq!(a.final_trace, b.final_trace);
    }

    #[test]
    fn sample_budget_stops_the_attack() {
        let trace = Trace::from_ids("m1", Label::Malicious, &[7; 16]);
        let mut cfg =
            config(Knowledge::Decision, PerturbType::Random, AddingMethod::LinearIteration);
        cfg.sample_budget = Some(1);
        let out = run(&cfg, &trace, None);
        assert!(!out.evaded);
        assert!(!out.throttled);
        assert_eq!(out.queries_used, 1);
        // Nothing unverified is kept.
        assert_eq!(out.ledger.active_count(), 0);
    }

    #[test]
    fn throttle_yields_outcome_not_error() {
        use std::sync::atomic::{AtomicU64, Ordering};
        struct Throttling {
            calls: AtomicU64,
        }
        impl Oracle for Throttling {
            fn knowledge(&self) -> Knowledge {
                Knowledge::Decision
            }
            fn classify(&self, tokens: &[TokenId]) -> Result<ClassificationResponse, OracleError> {
                if self.calls.fetch_add(1, Ordering::SeqCst) >= 3 {
                    return Err(OracleError::Throttled);
                }
                Ok(ClassificationResponse::from_score(
                    if tokens.contains(&SENTINEL) { 0.1 } else { 0.9 },
                    0.5,
                )
                .stripped())
            }
            fn classify_trace(&self, tokens: &[TokenId]) -> Result<ClassificationResponse, OracleError> {
                self.classify(tokens)
            }
        }
        let trace = Trace::from_ids("m1", Label::Malicious, &[7; 32]);
        let cfg = config(Knowledge::Decision, PerturbType::Random, AddingMethod::LinearIteration);
        let oracle = Throttling { calls: AtomicU64::new(0) };
        let out = full_sequence_attack(
            &oracle,
            &trace,
            Arc::new(Vocabulary::synthetic(64)),
            &cfg,
            None,
            &ArgPools::new(),
        )
        .unwrap();
        assert!(out.throttled);
        assert!(!out.evaded);
        assert!(out.queries_used <= 3);
    }

    #[test]
    fn missing_provider_and_knowledge_mismatch_are_errors() {
        let trace = Trace::from_ids("m1", Label::Malicious, &[7; 8]);
        let vocab = Arc::new(Vocabulary::synthetic(64));
        let meter = Arc::new(QueryMeter::new());

        let cfg = config(Knowledge::Decision, PerturbType::Benign, AddingMethod::LinearIteration);
        let oracle = make_oracle(sentinel_backend(), Knowledge::Decision, Arc::clone(&meter)).unwrap();
        assert!(matches!(
            full_sequence_attack(&oracle, &trace, Arc::clone(&vocab), &cfg, None, &ArgPools::new()),
            Err(AttackError::MissingBenignProvider)
        ));

        let cfg = config(Knowledge::Score, PerturbType::Random, AddingMethod::LinearIteration);
        assert!(matches!(
            full_sequence_attack(&oracle, &trace, vocab, &cfg, None, &ArgPools::new()),
            Err(AttackError::KnowledgeMismatch)
        ));
    }

    #[test]
    fn global_cap_bounds_overhead() {
        let trace = Trace::from_ids("m1", Label::Malicious, &[7; 40]);
        let cfg = config(Knowledge::Decision, PerturbType::Random, AddingMethod::LinearIteration);
        let out = run(&cfg, &trace, None);
        let cap = trace.len() * cfg.m_w / cfg.n;
        assert!(out.ledger.active_count() <= cap);
        assert!(out.overhead <= cfg.m_w as f64 / cfg.n as f64 + 1e-12);
    }
}
