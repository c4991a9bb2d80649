//! The perturbation ledger: every adversarial insertion is keyed to an
//! offset in the ORIGINAL trace, so deactivating any subset during
//! backtracking is order-independent and re-materialization is deterministic.
//! Originals are never removed or reordered, which is what keeps the
//! perturbed binary functional.

use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::CoreError;
use crate::trace::{ApiToken, Trace};
use crate::vocab::{TokenId, Vocabulary};

pub type RecordId = usize;

/// One adversarial insertion: `token` goes immediately before the original
/// token at `original_offset` (or at the end when the offset equals the
/// original length).
#[derive(Debug, Clone)]
pub struct InsertionRecord {
    pub original_offset: usize,
    pub token: ApiToken,
    pub window_index: usize,
    pub active: bool,
}

/// Where a materialized position came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Original(usize),
    Inserted(RecordId),
}

/// The set of adversarial insertions layered over one original trace.
///
/// Insertions sharing an original offset apply in a maintained per-offset
/// order; plain [`insert`](Self::insert) appends, which matches
/// record-creation order. A ledger is confined to a single attack session.
#[derive(Debug, Clone)]
pub struct PerturbationLedger {
    original: Arc<Trace>,
    vocab: Arc<Vocabulary>,
    records: Vec<InsertionRecord>,
    /// Apply order of record ids per original offset (length = original len + 1).
    order: Vec<Vec<RecordId>>,
    max_per_window: usize,
}

impl PerturbationLedger {
    pub fn new(original: Arc<Trace>, vocab: Arc<Vocabulary>, max_per_window: usize) -> Self {
        let order = vec![Vec::new(); original.len() + 1];
        Self { original, vocab, records: Vec::new(), order, max_per_window }
    }

    pub fn original(&self) -> &Trace {
        &self.original
    }

    pub fn records(&self) -> &[InsertionRecord] {
        &self.records
    }

    pub fn max_per_window(&self) -> usize {
        self.max_per_window
    }

    fn validate(&self, offset: usize, token: &ApiToken, window_index: usize) -> Result<(), CoreError> {
        if offset > self.original.len() {
            return Err(CoreError::OffsetOutOfRange { offset, len: self.original.len() });
        }
        if !self.vocab.contains(token.type_id) {
            return Err(CoreError::UnknownToken(token.type_id));
        }
        if self.vocab.is_forbidden(token.type_id) {
            return Err(CoreError::ForbiddenToken(token.type_id));
        }
        if self.active_count_in_window(window_index) >= self.max_per_window {
            return Err(CoreError::WindowCapExceeded(self.max_per_window));
        }
        Ok(())
    }

    /// Records an active insertion before original offset `offset`, after any
    /// existing insertions at that offset.
    pub fn insert(
        &mut self,
        offset: usize,
        token: ApiToken,
        window_index: usize,
    ) -> Result<RecordId, CoreError> {
        self.validate(offset, &token, window_index)?;
        let id = self.records.len();
        self.records.push(InsertionRecord { original_offset: offset, token, window_index, active: true });
        self.order[offset].push(id);
        Ok(id)
    }

    /// Records an active insertion immediately before an existing record in
    /// the apply order. Record ids are stable, so anchors survive later
    /// inserts and deactivations.
    pub fn insert_before(
        &mut self,
        anchor: RecordId,
        token: ApiToken,
        window_index: usize,
    ) -> Result<RecordId, CoreError> {
        let offset = self.records.get(anchor).ok_or(CoreError::NoSuchRecord(anchor))?.original_offset;
        self.validate(offset, &token, window_index)?;
        let id = self.records.len();
        self.records.push(InsertionRecord { original_offset: offset, token, window_index, active: true });
        let slot = self.order[offset]
            .iter()
            .position(|&r| r == anchor)
            .expect("anchor record missing from offset order");
        self.order[offset].insert(slot, id);
        Ok(id)
    }

    /// Records an active insertion at position `mat_pos` of the CURRENT
    /// materialized trace: after this call, re-materializing places the new
    /// token exactly where `mat_pos` pointed. Positions past the end append.
    pub fn insert_at_materialized(
        &mut self,
        mat_pos: usize,
        token: ApiToken,
        window_index: usize,
    ) -> Result<RecordId, CoreError> {
        let prov = self.provenance();
        if mat_pos >= prov.len() {
            return self.insert(self.original.len(), token, window_index);
        }
        match prov[mat_pos] {
            Provenance::Original(o) => self.insert(o, token, window_index),
            Provenance::Inserted(anchor) => self.insert_before(anchor, token, window_index),
        }
    }

    /// Activates or deactivates a record; idempotent. Reactivation re-checks
    /// the per-window cap.
    pub fn set_active(&mut self, id: RecordId, active: bool) -> Result<(), CoreError> {
        let rec = self.records.get(id).ok_or(CoreError::NoSuchRecord(id))?;
        if active && !rec.active
            && self.active_count_in_window(rec.window_index) >= self.max_per_window
        {
            return Err(CoreError::WindowCapExceeded(self.max_per_window));
        }
        self.records[id].active = active;
        Ok(())
    }

    pub fn active_count(&self) -> usize {
        self.records.iter().filter(|r| r.active).count()
    }

    pub fn active_count_in_window(&self, window_index: usize) -> usize {
        self.records
            .iter()
            .filter(|r| r.active && r.window_index == window_index)
            .count()
    }

    pub fn active_ids_in_window(&self, window_index: usize) -> Vec<RecordId> {
        (0..self.records.len())
            .filter(|&i| self.records[i].active && self.records[i].window_index == window_index)
            .collect()
    }

    /// Original trace with every active insertion applied at its offset.
    pub fn materialize(&self) -> Vec<ApiToken> {
        self.walk(|tok, _| tok.clone())
    }

    pub fn materialize_ids(&self) -> Vec<TokenId> {
        self.walk(|tok, _| tok.type_id)
    }

    /// Source of each materialized position.
    pub fn provenance(&self) -> Vec<Provenance> {
        self.walk(|_, p| p)
    }

    fn walk<T>(&self, mut f: impl FnMut(&ApiToken, Provenance) -> T) -> Vec<T> {
        let mut out = Vec::with_capacity(self.original.len() + self.active_count());
        for offset in 0..=self.original.len() {
            for &id in &self.order[offset] {
                if self.records[id].active {
                    out.push(f(&self.records[id].token, Provenance::Inserted(id)));
                }
            }
            if offset < self.original.len() {
                out.push(f(&self.original.calls[offset], Provenance::Original(offset)));
            }
        }
        out
    }

    /// Added tokens as a fraction of the original length.
    pub fn overhead(&self) -> f64 {
        if self.original.is_empty() {
            return 0.0;
        }
        self.active_count() as f64 / self.original.len() as f64
    }

    /// Stable digest of the active insertion set in apply order; used for
    /// outcome files and wire-parity checks.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.original.id.as_bytes());
        hasher.update([0u8]);
        for offset in 0..=self.original.len() {
            for &id in &self.order[offset] {
                let rec = &self.records[id];
                if rec.active {
                    hasher.update((offset as u64).to_le_bytes());
                    hasher.update(rec.token.type_id.to_le_bytes());
                    for a in &rec.token.args {
                        hasher.update(a.as_bytes());
                        hasher.update([1u8]);
                    }
                    hasher.update([0u8]);
                }
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// True iff `needle` is an in-order subsequence of `haystack`.
pub fn is_subsequence(needle: &[TokenId], haystack: &[TokenId]) -> bool {
    let mut it = haystack.iter();
    needle.iter().all(|t| it.any(|h| h == t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Label;

    fn setup(ids: &[TokenId], cap: usize) -> PerturbationLedger {
        let trace = Arc::new(Trace::from_ids("t", Label::Malicious, ids));
        let vocab = Arc::new(Vocabulary::synthetic(64));
        PerturbationLedger::new(trace, vocab, cap)
    }

    #[test]
    fn single_insertion() {
        let mut ledger = setup(&[1, 2, 3], 8);
        ledger.insert(1, ApiToken::new(9), 0).unwrap();
        assert_eq!(ledger.materialize_ids(), vec![1, 9, 2, 3]);
    }

    #[test]
    fn identity_without_records() {
        let ledger = setup(&[1, 2, 3], 8);
        assert_eq!(ledger.materialize_ids(), vec![1, 2, 3]);
        assert_eq!(ledger.overhead(), 0.0);
    }

    #[test]
    fn same_offset_applies_in_record_order() {
        let mut ledger = setup(&[1, 2], 8);
        ledger.insert(0, ApiToken::new(8), 0).unwrap();
        ledger.insert(0, ApiToken::new(9), 0).unwrap();
        let out = ledger.materialize_ids();
        assert_eq!(out, vec![8, 9, 1, 2]);
        assert!(is_subsequence(&[1, 2], &out));
    }

    #[test]
    fn insert_at_materialized_lands_exactly() {
        let mut ledger = setup(&[1, 2, 3], 8);
        ledger.insert(1, ApiToken::new(8), 0).unwrap(); // [1, 8, 2, 3]
        // Insert before the already-inserted 8 (materialized position 1).
        ledger.insert_at_materialized(1, ApiToken::new(9), 0).unwrap();
        assert_eq!(ledger.materialize_ids(), vec![1, 9, 8, 2, 3]);
        // Past-the-end appends.
        ledger.insert_at_materialized(99, ApiToken::new(7), 0).unwrap();
        assert_eq!(ledger.materialize_ids(), vec![1, 9, 8, 2, 3, 7]);
    }

    #[test]
    fn forbidden_token_rejected() {
        let mut ledger = setup(&[1], 8);
        let forbidden = *ledger.vocab.forbidden().iter().next().unwrap();
        assert!(matches!(
            ledger.insert(0, ApiToken::new(forbidden), 0),
            Err(CoreError::ForbiddenToken(_))
        ));
    }

    #[test]
    fn offset_out_of_range_rejected() {
        let mut ledger = setup(&[1, 2], 8);
        assert!(matches!(
            ledger.insert(3, ApiToken::new(5), 0),
            Err(CoreError::OffsetOutOfRange { .. })
        ));
    }

    #[test]
    fn window_cap_enforced_and_rechecked_on_reactivation() {
        let mut ledger = setup(&[1, 2, 3, 4], 2);
        let a = ledger.insert(0, ApiToken::new(5), 0).unwrap();
        ledger.insert(1, ApiToken::new(5), 0).unwrap();
        assert!(matches!(
            ledger.insert(2, ApiToken::new(5), 0),
            Err(CoreError::WindowCapExceeded(2))
        ));
        // Other windows are unaffected by window 0's cap.
        ledger.insert(2, ApiToken::new(5), 1).unwrap();
        ledger.set_active(a, false).unwrap();
        let c = ledger.insert(2, ApiToken::new(6), 0).unwrap();
        assert!(ledger.set_active(a, true).is_err());
        ledger.set_active(c, false).unwrap();
        ledger.set_active(a, true).unwrap();
    }

    #[test]
    fn deactivation_is_deterministic_and_idempotent() {
        let mut ledger = setup(&[1, 2, 3], 8);
        let a = ledger.insert(0, ApiToken::new(5), 0).unwrap();
        let b = ledger.insert(2, ApiToken::new(6), 0).unwrap();
        ledger.set_active(a, false).unwrap();
        ledger.set_active(a, false).unwrap();
        let once = ledger.materialize_ids();
        assert_eq!(once, vec![1, 2, 6, 3]);
        ledger.set_active(b, false).unwrap();
        assert_eq!(ledger.materialize_ids(), vec![1, 2, 3]);
        ledger.set_active(b, true).unwrap();
        assert_eq!(ledger.materialize_ids(), once);
    }

    #[test]
    fn overhead_examples() {
        let mut ledger = setup(&[1; 140], 70);
        for i in 0..70 {
            ledger.insert(i, ApiToken::new(5), 0).unwrap();
        }
        assert!((ledger.overhead() - 0.5).abs() < 1e-12);

        let mut ledger = setup(&[1; 100], 100);
        for i in 0..22 {
            ledger.insert(i, ApiToken::new(5), 0).unwrap();
        }
        assert!((ledger.overhead() - 0.22).abs() < 1e-12);
    }

    #[test]
    fn digest_tracks_active_set() {
        let mut ledger = setup(&[1, 2, 3], 8);
        let empty = ledger.digest();
        let a = ledger.insert(1, ApiToken::new(5), 0).unwrap();
        let with_a = ledger.digest();
        assert_ne!(empty, with_a);
        ledger.set_active(a, false).unwrap();
        assert_eq!(ledger.digest(), empty);
        ledger.set_active(a, true).unwrap();
        assert_eq!(ledger.digest(), with_a);
    }
}
