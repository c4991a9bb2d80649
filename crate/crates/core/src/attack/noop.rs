//! No-op argument randomization: inserted API calls carry valid-looking
//! level-2 arguments drawn uniformly from per-argument value pools, so a
//! defender cannot sign a single hard-coded argument value as an evasion
//! indicator.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::trace::ApiToken;
use crate::vocab::TokenId;

/// Per-token-type argument value pools: `pools[type_id][arg_index]` is the
/// set of no-op alternatives for that argument slot. Types without pools get
/// empty argument lists.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ArgPools {
    pub pools: HashMap<TokenId, Vec<Vec<String>>>,
}

impl ArgPools {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, type_id: TokenId, arg_pools: Vec<Vec<String>>) {
        self.pools.insert(type_id, arg_pools);
    }

    /// A small built-in pool of valid-looking temp paths, URLs, and registry
    /// keys, assigned to every listed token type.
    pub fn default_noop(types: &[TokenId]) -> Self {
        let paths: Vec<String> = [
            "C:\\Users\\Public\\AppData\\Local\\Temp\\tmp1A2B.tmp",
            "C:\\Windows\\Temp\\~df394c.tmp",
            "C:\\Users\\Public\\AppData\\Local\\Temp\\cab_5821.tmp",
            "C:\\Windows\\Temp\\wct90F1.tmp",
        ]
        .map(str::to_string)
        .to_vec();
        let urls: Vec<String> = [
            "https://www.google.com",
            "https://www.bing.com",
            "https://www.msftconnecttest.com/connecttest.txt",
            "https://ctldl.windowsupdate.com",
        ]
        .map(str::to_string)
        .to_vec();
        let mut pools = HashMap::new();
        for &t in types {
            pools.insert(t, vec![paths.clone(), urls.clone()]);
        }
        Self { pools }
    }
}

/// Builds an insertable token with each argument drawn uniformly from its
/// pool; a type without pools yields empty args.
pub fn sample_noop_args<R: Rng>(type_id: TokenId, pools: &ArgPools, rng: &mut R) -> ApiToken {
    match pools.pools.get(&type_id) {
        None => ApiToken::new(type_id),
        Some(arg_pools) => {
            let args = arg_pools
                .iter()
                .filter_map(|pool| pool.choose(rng).cloned())
                .collect();
            ApiToken::with_args(type_id, args)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pool_of_one_is_deterministic() {
        let mut pools = ArgPools::new();
        pools.set(3, vec![vec!["only".into()]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            assert_eq!(sample_noop_args(3, &pools, &mut rng).args, vec!["only".to_string()]);
        }
    }

    #[test]
    fn type_without_pool_gets_empty_args() {
        let pools = ArgPools::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_noop_args(9, &pools, &mut rng).args.is_empty());
    }

    #[test]
    fn draws_are_uniform_over_pool() {
        // 1000 draws over a pool of 4: each value 250 +/- 3 sigma,
        // sigma = sqrt(1000 * 0.25 * 0.75) ~ 13.7.
        let mut pools = ArgPools::new();
        pools.set(1, vec![vec!["a".into(), "b".into(), "c".into(), "d".into()]]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = HashMap::new();
        for _ in 0..1000 {
            let tok = sample_noop_args(1, &pools, &mut rng);
            *counts.entry(tok.args[0].clone()).or_insert(0u32) += 1;
        }
        let sigma = (1000.0f64 * 0.25 * 0.75).sqrt();
        for v in ["a", "b", "c", "d"] {
            let c = *counts.get(v).unwrap_or(&0) as f64;
            assert!((c - 250.0).abs() <= 3.0 * sigma, "{v}: {c}");
        }
    }
}
