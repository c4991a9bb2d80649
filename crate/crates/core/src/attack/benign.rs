//! Benign-sequence providers: pluggable sources of "benign looking" token
//! windows used by the benign-perturbation attacks. Stands in for a trained
//! generative model; a Markov chain over a benign hold-out set generates a
//! different window each time, and corpus replay serves real held-out
//! windows.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::attack::AttackError;
use crate::trace::Trace;
use crate::vocab::{TokenId, Vocabulary, NULL_TOKEN};

/// A source of length-`n` benign token windows. Emitted tokens never include
/// forbidden or null ids, so its output can feed insertions directly.
#[derive(Debug, Clone)]
pub enum BenignProvider {
    /// Replays windows sliced from held-out benign traces.
    CorpusReplay { traces: Vec<Vec<TokenId>> },
    /// Samples from an order-`order` Markov chain fitted to held-out benign
    /// traces, with backoff to shorter contexts.
    Markov {
        order: usize,
        transitions: HashMap<Vec<TokenId>, Vec<(TokenId, u32)>>,
        starts: Vec<TokenId>,
    },
}

impl BenignProvider {
    pub fn corpus_replay(traces: &[&Trace]) -> Result<Self, AttackError> {
        let kept: Vec<Vec<TokenId>> =
            traces.iter().filter(|t| !t.is_empty()).map(|t| t.type_ids()).collect();
        if kept.is_empty() {
            return Err(AttackError::UntrainedProvider);
        }
        Ok(Self::CorpusReplay { traces: kept })
    }

    /// Fits transition counts of all context lengths `1..=order`.
    pub fn markov(traces: &[&Trace], order: usize) -> Result<Self, AttackError> {
        let order = order.max(1);
        let mut counts: HashMap<Vec<TokenId>, HashMap<TokenId, u32>> = HashMap::new();
        let mut starts = Vec::new();
        for trace in traces {
            let ids = trace.type_ids();
            if let Some(&first) = ids.first() {
                starts.push(first);
            }
            for len in 1..=order {
                for win in ids.windows(len + 1) {
                    let ctx = win[..len].to_vec();
                    *counts.entry(ctx).or_default().entry(win[len]).or_insert(0) += 1;
                }
            }
        }
        if starts.is_empty() {
            return Err(AttackError::UntrainedProvider);
        }
        let transitions = counts
            .into_iter()
            .map(|(ctx, next)| {
                let mut row: Vec<(TokenId, u32)> = next.into_iter().collect();
                row.sort_unstable();
                (ctx, row)
            })
            .collect();
        Ok(Self::Markov { order, transitions, starts })
    }

    /// Generates one length-`n` window, substituting uniform insertable draws
    /// for any forbidden or null token the source would have produced.
    pub fn window<R: Rng>(&self, n: usize, vocab: &Vocabulary, rng: &mut R) -> Vec<TokenId> {
        let insertable = vocab.insertable();
        let sanitize = |t: TokenId, rng: &mut R| -> TokenId {
            if t == NULL_TOKEN || vocab.is_forbidden(t) || !vocab.contains(t) {
                *insertable.choose(rng).expect("non-empty insertable vocabulary")
            } else {
                t
            }
        };
        match self {
            Self::CorpusReplay { traces } => {
                let trace = traces.choose(rng).expect("non-empty replay corpus");
                let start = if trace.len() > n { rng.gen_range(0..=trace.len() - n) } else { 0 };
                let mut out: Vec<TokenId> =
                    trace.iter().skip(start).take(n).map(|&t| sanitize(t, rng)).collect();
                while out.len() < n {
                    out.push(*insertable.choose(rng).expect("non-empty insertable vocabulary"));
                }
                out
            }
            Self::Markov { order, transitions, starts } => {
                let mut out: Vec<TokenId> = Vec::with_capacity(n);
                let first = *starts.choose(rng).expect("non-empty start set");
                out.push(sanitize(first, rng));
                while out.len() < n {
                    let next = self.sample_next(&out, *order, transitions, rng).unwrap_or_else(|| {
                        *insertable.choose(rng).expect("non-empty insertable vocabulary")
                    });
                    out.push(sanitize(next, rng));
                }
                out
            }
        }
    }

    fn sample_next<R: Rng>(
        &self,
        out: &[TokenId],
        order: usize,
        transitions: &HashMap<Vec<TokenId>, Vec<(TokenId, u32)>>,
        rng: &mut R,
    ) -> Option<TokenId> {
        // Longest-context backoff.
        for len in (1..=order.min(out.len())).rev() {
            let ctx = out[out.len() - len..].to_vec();
            if let Some(row) = transitions.get(&ctx) {
                let total: u32 = row.iter().map(|(_, c)| c).sum();
                let mut pick = rng.gen_range(0..total);
                for &(t, c) in row {
                    if pick < c {
                        return Some(t);
                    }
                    pick -= c;
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Label;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_chain_is_deterministic() {
        // Token 1 is always followed by 2.
        let t = Trace::from_ids("b", Label::Benign, &[1, 2, 1, 2, 1, 2, 1, 2]);
        let provider = BenignProvider::markov(&[&t], 1).unwrap();
        let vocab = Vocabulary::synthetic(8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let w = provider.window(6, &vocab, &mut rng);
            for pair in w.windows(2) {
                if pair[0] == 1 {
                    assert_eq!(pair[1], 2);
                }
            }
        }
    }

    #[test]
    fn different_seeds_give_different_windows() {
        // Token 1 branches to many successors, so the chain has entropy.
        let ids: Vec<TokenId> = (2..30).flat_map(|t| [1, t]).collect();
        let t = Trace::from_ids("b", Label::Benign, &ids);
        let provider = BenignProvider::markov(&[&t], 1).unwrap();
        let vocab = Vocabulary::synthetic(64);
        let mut distinct = std::collections::HashSet::new();
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            distinct.insert(provider.window(10, &vocab, &mut rng));
        }
        assert!(distinct.len() > 50, "only {} distinct windows", distinct.len());
    }

    #[test]
    fn never_emits_forbidden_or_null() {
        let vocab = Vocabulary::synthetic(10);
        let forbidden = *vocab.forbidden().iter().next().unwrap();
        let t = Trace::from_ids("b", Label::Benign, &[forbidden, 0, forbidden, 1, forbidden]);
        for provider in [
            BenignProvider::markov(&[&t], 1).unwrap(),
            BenignProvider::corpus_replay(&[&t]).unwrap(),
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            for _ in 0..50 {
                let w = provider.window(8, &vocab, &mut rng);
                assert_eq!(w.len(), 8);
                assert!(w.iter().all(|&tok| tok != NULL_TOKEN && !vocab.is_forbidden(tok)));
            }
        }
    }

    #[test]
    fn empty_corpus_is_untrained() {
        assert!(matches!(BenignProvider::markov(&[], 1), Err(AttackError::UntrainedProvider)));
        assert!(matches!(BenignProvider::corpus_replay(&[]), Err(AttackError::UntrainedProvider)));
    }
}
