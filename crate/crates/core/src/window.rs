//! Fixed-length window views over a trace and their one-hot encoding.

use crate::error::CoreError;
use crate::vocab::{TokenId, Vocabulary, NULL_TOKEN};

/// A fixed-length view of `n` consecutive token ids; the tail of the last
/// window of a trace is padded with the null token.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Window {
    tokens: Vec<TokenId>,
}

impl Window {
    /// Builds a window of exactly `n` tokens, padding with the null token.
    /// Inputs longer than `n` are truncated.
    pub fn padded(mut tokens: Vec<TokenId>, n: usize) -> Self {
        tokens.truncate(n);
        tokens.resize(n, NULL_TOKEN);
        Self { tokens }
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of leading real (non-null) tokens.
    pub fn real_len(&self) -> usize {
        self.tokens.iter().filter(|&&t| t != NULL_TOKEN).count()
    }
}

/// Splits a token sequence into consecutive non-overlapping windows of `n`
/// tokens; the last window is null-padded. An empty sequence yields one
/// all-null window so that classification is still defined.
pub fn split_windows(tokens: &[TokenId], n: usize) -> Vec<Window> {
    assert!(n >= 1, "window size must be at least 1");
    if tokens.is_empty() {
        return vec![Window::padded(Vec::new(), n)];
    }
    tokens
        .chunks(n)
        .map(|chunk| Window::padded(chunk.to_vec(), n))
        .collect()
}

/// One-hot encodes a window into a flat vector of length `n * |vocab|`:
/// exactly one 1 per non-null position, null positions all-zero.
pub fn one_hot(window: &Window, vocab: &Vocabulary) -> Result<Vec<f32>, CoreError> {
    let width = vocab.len();
    let mut out = vec![0.0f32; window.len() * width];
    for (i, &t) in window.tokens().iter().enumerate() {
        if !vocab.contains(t) {
            return Err(CoreError::UnknownToken(t));
        }
        if t != NULL_TOKEN {
            out[i * width + t as usize] = 1.0;
        }
    }
    Ok(out)
}

/// Sparse form of [`one_hot`]: the active feature indices of each non-null
/// position. This is what the desk-scale classifiers actually consume.
pub fn one_hot_indices(window: &Window, vocab: &Vocabulary) -> Result<Vec<usize>, CoreError> {
    let width = vocab.len();
    let mut out = Vec::with_capacity(window.len());
    for (i, &t) in window.tokens().iter().enumerate() {
        if !vocab.contains(t) {
            return Err(CoreError::UnknownToken(t));
        }
        if t != NULL_TOKEN {
            out.push(i * width + t as usize);
        }
    }
    Ok(out)
}
