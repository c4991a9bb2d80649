//! API-call vocabularies.
//!
//! Token ids are dense integers `0..len`. Id 0 is the reserved null/padding
//! token and never counts as a real API call. Forbidden tokens may appear in
//! original traces but are never inserted by any attack operation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CoreError;

/// Dense index into a [`Vocabulary`].
pub type TokenId = u32;

/// Reserved padding token, excluded from overhead and effectiveness math.
pub const NULL_TOKEN: TokenId = 0;

/// Default vocabulary size (monitored API call types plus the null token slot).
pub const DEFAULT_VOCAB_SIZE: usize = 314;

/// The monitored API-call type universe, with a reserved null token at id 0
/// and a set of token ids that must never be inserted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    forbidden: BTreeSet<TokenId>,
}

/// On-disk form: JSON `{tokens:[string], forbidden:[string]}`.
#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
    forbidden: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary from token names. Index 0 must be the null token;
    /// forbidden entries are named, not indexed.
    pub fn new(tokens: Vec<String>, forbidden_names: &[String]) -> Result<Self, CoreError> {
        if tokens.len() < 2 {
            return Err(CoreError::EmptyVocabulary);
        }
        let mut forbidden = BTreeSet::new();
        for name in forbidden_names {
            let id = tokens
                .iter()
                .position(|t| t == name)
                .ok_or_else(|| CoreError::UnknownTokenName(name.clone()))?;
            forbidden.insert(id as TokenId);
        }
        Ok(Self { tokens, forbidden })
    }

    /// Synthetic vocabulary of `size` ids (id 0 is the pad token). The last
    /// two real token ids are marked forbidden, standing in for API types
    /// that cannot be no-opped.
    pub fn synthetic(size: usize) -> Self {
        assert!(size >= 4, "synthetic vocabulary needs at least 4 tokens");
        let mut tokens = Vec::with_capacity(size);
        tokens.push("<null>".to_string());
        for i in 1..size {
            tokens.push(format!("api_{i:03}"));
        }
        let forbidden = [(size - 2) as TokenId, (size - 1) as TokenId]
            .into_iter()
            .collect();
        Self { tokens, forbidden }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, id: TokenId) -> bool {
        (id as usize) < self.tokens.len()
    }

    pub fn name(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<TokenId> {
        self.tokens.iter().position(|t| t == name).map(|i| i as TokenId)
    }

    pub fn is_forbidden(&self, id: TokenId) -> bool {
        self.forbidden.contains(&id)
    }

    pub fn forbidden(&self) -> &BTreeSet<TokenId> {
        &self.forbidden
    }

    /// Token ids an attack is allowed to insert: every real token except the
    /// forbidden set and the null token.
    pub fn insertable(&self) -> Vec<TokenId> {
        (1..self.tokens.len() as TokenId)
            .filter(|id| !self.forbidden.contains(id))
            .collect()
    }

    /// Stable digest over token names and the forbidden set, used to pin
    /// persisted models to the vocabulary they were trained on.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.tokens {
            hasher.update(t.as_bytes());
            hasher.update([0u8]);
        }
        for f in &self.forbidden {
            hasher.update(f.to_le_bytes());
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let forbidden: Vec<&str> = self
            .forbidden
            .iter()
            .filter_map(|id| self.name(*id))
            .collect();
        serde_json::json!({ "tokens": self.tokens, "forbidden": forbidden })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), CoreError> {
        let file = VocabFile {
            tokens: self.tokens.clone(),
            forbidden: self
                .forbidden
                .iter()
                .filter_map(|id| self.name(*id).map(str::to_string))
                .collect(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CoreError> {
        let file: VocabFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::new(file.tokens, &file.forbidden)
    }
}
