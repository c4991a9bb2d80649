//! Synthetic corpus generation: benign traces sampled from a random-but-
//! deterministic Markov background, malicious traces as the same background
//! with short malicious motifs planted into most windows, plus
//! class-conditional static feature vectors. Desk-scale classifiers trained
//! on the output separate the classes cleanly, which is what makes evasion
//! attacks measurable.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::static_features::{StaticFeatureVector, DEFAULT_STATIC_DIM};
use crate::trace::{Label, Trace};
use crate::vocab::{TokenId, Vocabulary, DEFAULT_VOCAB_SIZE};

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("motif of length {motif} does not fit traces/windows of length {limit}")]
    MotifTooLong { motif: usize, limit: usize },
    #[error("invalid corpus spec: {0}")]
    BadSpec(&'static str),
    #[error("split fractions must sum to 1, got {0}")]
    BadFractions(f64),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Core(#[from] crate::error::CoreError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// First-order Markov background: every token gets `branching` deterministic
/// successor tokens (derived from `chain_seed`), walked uniformly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSpec {
    pub branching: usize,
    pub chain_seed: u64,
}

impl Default for ChainSpec {
    fn default() -> Self {
        Self { branching: 8, chain_seed: 0 }
    }
}

/// Everything that defines a synthetic corpus. Serializable so a corpus is
/// reproducible from its config file alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub vocab_size: usize,
    /// Inclusive token-count range for generated traces.
    pub trace_length_range: (usize, usize),
    /// Token subsequences marking malicious behavior. Motifs may contain
    /// forbidden tokens: only attack insertions are restricted, not
    /// original content.
    pub motif_set: Vec<Vec<TokenId>>,
    /// Expected planted motifs per malicious window; 0 produces classes
    /// that are statistically indistinguishable.
    pub motif_density: f64,
    /// Alphabet weight of motif tokens in malicious backgrounds (benign
    /// backgrounds fix it at 1, ordinary tokens at 4). Raising it spreads a
    /// diffuse malicious token distribution across every window.
    pub malicious_token_boost: usize,
    pub benign_chain: ChainSpec,
    /// Traces per class.
    pub n_samples: usize,
    /// Window size used for per-window motif planting.
    pub window: usize,
    pub static_dim: usize,
    pub static_malicious_bits: Vec<u32>,
    pub static_benign_bits: Vec<u32>,
    /// Probability of a class-indicative bit being set on samples of that
    /// class, and on samples of the other class.
    pub static_on_prob: f64,
    pub static_off_prob: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            vocab_size: DEFAULT_VOCAB_SIZE,
            trace_length_range: (200, 2000),
            motif_set: vec![
                vec![17, 23, 5, 9],
                vec![40, 41, 42],
                vec![88, 8, 88, 8, 96],
            ],
            motif_density: 1.0,
            malicious_token_boost: 16,
            benign_chain: ChainSpec::default(),
            n_samples: 2000,
            window: 20,
            static_dim: DEFAULT_STATIC_DIM,
            static_malicious_bits: (0..40).collect(),
            static_benign_bits: (100..140).collect(),
            static_on_prob: 0.8,
            static_off_prob: 0.05,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), DatagenError> {
        if self.vocab_size < 4 {
            return Err(DatagenError::BadSpec("vocab_size must be at least 4"));
        }
        let (lo, hi) = self.trace_length_range;
        if lo == 0 || lo > hi {
            return Err(DatagenError::BadSpec("trace_length_range must be a non-empty range"));
        }
        if self.window == 0 {
            return Err(DatagenError::BadSpec("window must be at least 1"));
        }
        if self.n_samples == 0 {
            return Err(DatagenError::BadSpec("n_samples must be at least 1"));
        }
        if self.malicious_token_boost == 0 {
            return Err(DatagenError::BadSpec("malicious_token_boost must be at least 1"));
        }
        if self.motif_density > 0.0 && self.motif_set.is_empty() {
            return Err(DatagenError::BadSpec("motif_density > 0 requires motifs"));
        }
        for motif in &self.motif_set {
            let limit = self.window.min(lo);
            if motif.is_empty() || motif.len() > limit {
                return Err(DatagenError::MotifTooLong { motif: motif.len(), limit });
            }
            if motif.iter().any(|&t| t == 0 || t as usize >= self.vocab_size) {
                return Err(DatagenError::BadSpec("motif token outside the vocabulary"));
            }
        }
        Ok(())
    }
}

/// Generated corpus: traces and the static vector for each trace, index
/// aligned, plus the vocabulary they are drawn from.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub traces: Vec<Trace>,
    pub statics: Vec<StaticFeatureVector>,
}

impl Corpus {
    pub fn labeled_statics(&self) -> Vec<(StaticFeatureVector, Label)> {
        self.statics
            .iter()
            .zip(&self.traces)
            .map(|(v, t)| (v.clone(), t.label))
            .collect()
    }

    /// Traces of one class, borrowed.
    pub fn class(&self, label: Label) -> Vec<&Trace> {
        self.traces.iter().filter(|t| t.label == label).collect()
    }

    /// Writes `vocab.json`, `traces.jsonl`, and `statics.jsonl` into `dir`
    /// (created if missing).
    pub fn save_dir(&self, dir: &std::path::Path) -> Result<(), DatagenError> {
        std::fs::create_dir_all(dir)?;
        self.vocab.save(&dir.join("vocab.json"))?;
        crate::trace::save_corpus(&self.traces, &dir.join("traces.jsonl"))?;
        let mut out = String::new();
        for v in &self.statics {
            out.push_str(&serde_json::to_string(v)?);
            out.push('\n');
        }
        std::fs::write(dir.join("statics.jsonl"), out)?;
        Ok(())
    }

    pub fn load_dir(dir: &std::path::Path) -> Result<Self, DatagenError> {
        let vocab = Vocabulary::load(&dir.join("vocab.json"))?;
        let traces = crate::trace::load_corpus(&dir.join("traces.jsonl"))?;
        let raw = std::fs::read_to_string(dir.join("statics.jsonl"))?;
        let statics: Vec<StaticFeatureVector> = raw
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        if traces.is_empty() {
            return Err(DatagenError::EmptyCorpus);
        }
        if statics.len() != traces.len() {
            return Err(DatagenError::BadSpec("statics.jsonl does not align with traces.jsonl"));
        }
        Ok(Self { vocab, traces, statics })
    }
}

/// Per-sample RNG keyed on (corpus seed, sample id): generation order and
/// parallelism cannot change any individual sample.
fn sample_rng(seed: u64, id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(id.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

struct Chain {
    /// Successors per token; indices into `tokens`.
    table: Vec<Vec<TokenId>>,
    /// Weighted background alphabet (tokens repeated by sampling weight).
    tokens: Vec<TokenId>,
}

fn chain(spec: &CorpusSpec, motif_copies: usize) -> Result<Chain, DatagenError> {
    let motif_tokens: std::collections::BTreeSet<TokenId> =
        spec.motif_set.iter().flatten().copied().collect();
    // The background alphabet is weighted: ordinary tokens carry weight 4,
    // motif tokens carry `motif_copies`. Benign traces keep motif tokens
    // rare but present (so bare token presence cannot separate the classes,
    // which no insertion-only attack could ever undo); malicious traces
    // boost them, giving every window a diffuse distributional signal that
    // benign insertions can dilute.
    let mut tokens: Vec<TokenId> = Vec::new();
    for t in 1..spec.vocab_size as TokenId {
        let copies = if motif_tokens.contains(&t) { motif_copies } else { 4 };
        tokens.extend(std::iter::repeat(t).take(copies));
    }
    if tokens.is_empty() {
        return Err(DatagenError::BadSpec("vocabulary has no insertable tokens"));
    }
    let branching = spec.benign_chain.branching.max(1);
    let table = (0..spec.vocab_size as TokenId)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                spec.benign_chain
                    .chain_seed
                    .wrapping_add(u64::from(t).wrapping_mul(0x100000001b3)),
            );
            (0..branching)
                .map(|_| tokens[rng.gen_range(0..tokens.len())])
                .collect()
        })
        .collect();
    Ok(Chain { table, tokens })
}

fn background(spec: &CorpusSpec, chain: &Chain, rng: &mut ChaCha8Rng) -> Vec<TokenId> {
    let (lo, hi) = spec.trace_length_range;
    let len = rng.gen_range(lo..=hi);
    let mut out = Vec::with_capacity(len);
    let mut current = *chain.tokens.choose(rng).expect("non-empty background alphabet");
    for _ in 0..len {
        out.push(current);
        current = *chain.table[current as usize]
            .choose(rng)
            .expect("chain branching is at least 1");
    }
    out
}

/// Breaks up any motif that the background produced by chance, so full
/// motifs only ever appear where [`plant_motifs`] put them.
fn scrub_motifs(spec: &CorpusSpec, ids: &mut [TokenId], chain: &Chain, rng: &mut ChaCha8Rng) {
    loop {
        let mut clean = true;
        for motif in &spec.motif_set {
            let mut start = 0;
            while start + motif.len() <= ids.len() {
                if &ids[start..start + motif.len()] == motif.as_slice() {
                    clean = false;
                    let at = start + motif.len() / 2;
                    let old = ids[at];
                    ids[at] = loop {
                        let t = *chain.tokens.choose(rng).expect("non-empty alphabet");
                        if t != old {
                            break t;
                        }
                    };
                }
                start += 1;
            }
        }
        if clean {
            return;
        }
    }
}

/// Overwrites motifs into each window of a background at the configured
/// density; guarantees at least one motif per malicious trace.
fn plant_motifs(spec: &CorpusSpec, ids: &mut [TokenId], rng: &mut ChaCha8Rng) {
    if spec.motif_density <= 0.0 || spec.motif_set.is_empty() {
        return;
    }
    let mut planted = 0usize;
    let windows = ids.len().div_ceil(spec.window);
    for w in 0..windows {
        let start = w * spec.window;
        let end = (start + spec.window).min(ids.len());
        let mut count = spec.motif_density.floor() as usize;
        if rng.gen_bool(spec.motif_density.fract()) {
            count += 1;
        }
        for _ in 0..count {
            planted += plant_one(spec, &mut ids[start..end], rng) as usize;
        }
    }
    if planted == 0 {
        // Force the class invariant: every malicious trace has a motif.
        let w = rng.gen_range(0..windows);
        let start = w * spec.window;
        let end = (start + spec.window).min(ids.len());
        if !plant_one(spec, &mut ids[start..end], rng) {
            plant_one(spec, ids, rng);
        }
    }
}

fn plant_one(spec: &CorpusSpec, window: &mut [TokenId], rng: &mut ChaCha8Rng) -> bool {
    let motif = spec.motif_set.choose(rng).expect("non-empty motif set");
    if motif.len() > window.len() {
        return false;
    }
    let at = rng.gen_range(0..=window.len() - motif.len());
    window[at..at + motif.len()].copy_from_slice(motif);
    true
}

fn static_vector(spec: &CorpusSpec, malicious: bool, rng: &mut ChaCha8Rng) -> StaticFeatureVector {
    let mut bits = std::collections::BTreeSet::new();
    let (on, off) = if malicious {
        (&spec.static_malicious_bits, &spec.static_benign_bits)
    } else {
        (&spec.static_benign_bits, &spec.static_malicious_bits)
    };
    for &b in on {
        if (b as usize) < spec.static_dim && rng.gen_bool(spec.static_on_prob) {
            bits.insert(b);
        }
    }
    for &b in off {
        if (b as usize) < spec.static_dim && rng.gen_bool(spec.static_off_prob) {
            bits.insert(b);
        }
    }
    StaticFeatureVector::new(spec.static_dim, bits)
}

/// Generates `n_samples` traces per class plus aligned static vectors.
/// Bit-identical for a fixed spec.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus, DatagenError> {
    spec.validate()?;
    let vocab = Vocabulary::synthetic(spec.vocab_size);
    let benign_chain = chain(spec, 1)?;
    let malicious_chain = chain(spec, spec.malicious_token_boost)?;
    let mut traces = Vec::with_capacity(spec.n_samples * 2);
    let mut statics = Vec::with_capacity(spec.n_samples * 2);
    for i in 0..spec.n_samples {
        let id = format!("ben-{i:05}");
        let mut rng = sample_rng(spec.seed, &id);
        let mut ids = background(spec, &benign_chain, &mut rng);
        scrub_motifs(spec, &mut ids, &benign_chain, &mut rng);
        traces.push(Trace::from_ids(&id, Label::Benign, &ids));
        statics.push(static_vector(spec, false, &mut rng));
    }
    for i in 0..spec.n_samples {
        let id = format!("mal-{i:05}");
        let mut rng = sample_rng(spec.seed, &id);
        let mut ids = background(spec, &malicious_chain, &mut rng);
        scrub_motifs(spec, &mut ids, &malicious_chain, &mut rng);
        plant_motifs(spec, &mut ids, &mut rng);
        traces.push(Trace::from_ids(&id, Label::Malicious, &ids));
        statics.push(static_vector(spec, true, &mut rng));
    }
    Ok(Corpus { vocab, traces, statics })
}

/// Disjoint class-balanced partitions, e.g. train/validation/test. Order is
/// deterministically shuffled per class under `seed`.
pub fn holdout_split(
    corpus: &Corpus,
    fractions: [f64; 3],
    seed: u64,
) -> Result<[Corpus; 3], DatagenError> {
    if corpus.traces.is_empty() {
        return Err(DatagenError::EmptyCorpus);
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || fractions.iter().any(|&f| f < 0.0) {
        return Err(DatagenError::BadFractions(sum));
    }
    let mut parts: [Corpus; 3] = std::array::from_fn(|_| Corpus {
        vocab: corpus.vocab.clone(),
        traces: Vec::new(),
        statics: Vec::new(),
    });
    for label in [Label::Benign, Label::Malicious, Label::Unknown] {
        let mut idx: Vec<usize> = (0..corpus.traces.len())
            .filter(|&i| corpus.traces[i].label == label)
            .collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ label as u64));
        let n = idx.len();
        let n0 = (fractions[0] * n as f64).round() as usize;
        let n1 = ((fractions[0] + fractions[1]) * n as f64).round() as usize;
        for (pos, &i) in idx.iter().enumerate() {
            let part = if pos < n0 {
                0
            } else if pos < n1.max(n0) {
                1
            } else {
                2
            };
            parts[part].traces.push(corpus.traces[i].clone());
            parts[part].statics.push(corpus.statics[i].clone());
        }
    }
    Ok(parts)
}

/// True iff `motif` occurs as a contiguous subsequence of `ids`.
pub fn contains_motif(ids: &[TokenId], motif: &[TokenId]) -> bool {
    !motif.is_empty() && ids.windows(motif.len()).any(|w| w == motif)
}
