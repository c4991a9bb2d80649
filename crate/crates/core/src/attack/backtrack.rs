//! Logarithmic backtracking: after a window evades, binary-search the
//! insertion set down to a smaller subset that still evades. Each round
//! keeps one half of the survivors (two oracle queries worst case), so the
//! whole prune costs at most `2 * (ceil(log2 m) + 1)` queries for `m`
//! insertions — and never leaves the window in an unverified state.

use crate::ledger::RecordId;

#[derive(Debug, Clone)]
pub struct PruneResult {
    /// Record ids still needed, in the original order. Always a set the
    /// evaluator confirmed benign (or the untouched input when no query
    /// succeeded).
    pub kept: Vec<RecordId>,
    pub queries: u64,
    /// True when the evaluator stopped answering (sample budget, throttle).
    pub aborted: bool,
}

/// Hard query bound for pruning `m` insertions.
pub fn prune_budget(m: usize) -> u64 {
    2 * ((m.max(1) as f64).log2().ceil() as u64 + 1)
}

/// Shrinks a verified-evading insertion set. `eval` must apply exactly the
/// given record subset (deactivating the rest), spend one oracle query, and
/// report whether the result is still benign; `None` aborts the prune.
///
/// The caller is responsible for re-applying `kept` afterwards without
/// queries; every returned `kept` has already been confirmed benign, except
/// when the input set comes back untouched.
pub fn prune<F>(mut eval: F, active: &[RecordId], max_queries: u64) -> PruneResult
where
    F: FnMut(&[RecordId]) -> Option<bool>,
{
    let mut kept: Vec<RecordId> = active.to_vec();
    let mut queries = 0u64;
    let mut aborted = false;

    'outer: while kept.len() > 1 && queries < max_queries {
        let mid = kept.len() / 2;
        let mut advanced = false;
        for keep_first in [true, false] {
            if queries >= max_queries {
                break 'outer;
            }
            let half = if keep_first { &kept[..mid] } else { &kept[mid..] };
            match eval(half) {
                None => {
                    aborted = true;
                    break 'outer;
                }
                Some(benign) => {
                    queries += 1;
                    if benign {
                        kept = half.to_vec();
                        advanced = true;
                        break;
                    }
                }
            }
        }
        if !advanced {
            // Both halves alone fail: the full current set is minimal at
            // this granularity.
            break;
        }
    }
    PruneResult { kept, queries, aborted }
}
