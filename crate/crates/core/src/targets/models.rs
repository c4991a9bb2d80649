//! Desk-scale stand-in classifiers: logistic regression over position one-hot
//! features, multinomial naive Bayes over token counts, and a small random
//! forest over token counts. All expose a malicious-probability score and a
//! thresholded decision; traces are classified by OR-aggregation over
//! consecutive windows of `k` tokens.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::static_features::StaticFeatureVector;
use crate::targets::{ClassificationResponse, DEFAULT_THRESHOLD};
use crate::trace::{Label, Trace};
use crate::vocab::{TokenId, Vocabulary, NULL_TOKEN};
use crate::window::{one_hot_indices, split_windows, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LogisticRegression,
    NgramBayes,
    DecisionForest,
}

/// Training hyperparameters; defaults are tuned for the synthetic corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    /// Number of trees in the decision forest.
    pub trees: usize,
    /// Bootstrap sample cap per tree.
    pub tree_sample: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            epochs: 5,
            learning_rate: 0.1,
            l2: 1e-4,
            trees: 10,
            tree_sample: 4000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BayesParams {
    pub log_prior_mal: f64,
    pub log_prior_ben: f64,
    pub log_p_mal: Vec<f64>,
    pub log_p_ben: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf { p_mal: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ModelParams {
    Logistic(LogisticParams),
    Bayes(BayesParams),
    Forest(ForestParams),
}

/// A trained window classifier with a fixed window size `k`, pinned to the
/// vocabulary it was trained on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub k: usize,
    pub vocab_len: usize,
    pub vocab_hash: String,
    pub threshold: f64,
    pub score_capable: bool,
    pub params: ModelParams,
}

impl TrainedModel {
    /// Malicious probability of one window; rejects mismatched encodings.
    pub fn score_window(&self, window: &Window) -> Result<f64, ModelError> {
        if window.len() != self.k {
            return Err(ModelError::WindowSizeMismatch { expected: self.k, got: window.len() });
        }
        let score = match &self.params {
            ModelParams::Logistic(p) => {
                let width = self.vocab_len;
                let mut z = p.bias;
                for (i, &t) in window.tokens().iter().enumerate() {
                    if (t as usize) >= width {
                        return Err(crate::error::CoreError::UnknownToken(t).into());
                    }
                    if t != NULL_TOKEN {
                        z += p.weights[i * width + t as usize];
                    }
                }
                sigmoid(z)
            }
            ModelParams::Bayes(p) => {
                let counts = token_counts(window.tokens(), self.vocab_len)?;
                let mut lm = p.log_prior_mal;
                let mut lb = p.log_prior_ben;
                for (t, &c) in counts.iter().enumerate() {
                    if c > 0 {
                        lm += c as f64 * p.log_p_mal[t];
                        lb += c as f64 * p.log_p_ben[t];
                    }
                }
                sigmoid(lm - lb)
            }
            ModelParams::Forest(p) => {
                let counts = token_counts(window.tokens(), self.vocab_len)?;
                let mut sum = 0.0;
                for tree in &p.trees {
                    sum += tree_predict(tree, &counts);
                }
                sum / p.trees.len() as f64
            }
        };
        Ok(score)
    }

    pub fn classify_window(&self, window: &Window) -> Result<ClassificationResponse, ModelError> {
        let score = self.score_window(window)?;
        let resp = ClassificationResponse::from_score(score, self.threshold);
        Ok(if self.score_capable { resp } else { resp.stripped() })
    }

    /// OR-aggregation over consecutive windows of `k` tokens: the sequence is
    /// malicious iff any window is; the score is the max window score.
    pub fn classify_sequence(&self, tokens: &[TokenId]) -> Result<ClassificationResponse, ModelError> {
        let mut best: f64 = 0.0;
        for w in split_windows(tokens, self.k) {
            best = best.max(self.score_window(&w)?);
        }
        let resp = ClassificationResponse::from_score(best, self.threshold);
        Ok(if self.score_capable { resp } else { resp.stripped() })
    }

    pub fn classify_trace(&self, trace: &Trace) -> Result<ClassificationResponse, ModelError> {
        self.classify_sequence(&trace.type_ids())
    }

    pub fn window_count(&self, tokens: &[TokenId]) -> u64 {
        if tokens.is_empty() {
            1
        } else {
            tokens.len().div_ceil(self.k) as u64
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn token_counts(tokens: &[TokenId], vocab_len: usize) -> Result<Vec<u32>, ModelError> {
    let mut counts = vec![0u32; vocab_len];
    for &t in tokens {
        if (t as usize) >= vocab_len {
            return Err(crate::error::CoreError::UnknownToken(t).into());
        }
        if t != NULL_TOKEN {
            counts[t as usize] += 1;
        }
    }
    Ok(counts)
}

fn tree_predict(tree: &Tree, counts: &[u32]) -> f64 {
    let mut node = 0usize;
    loop {
        match &tree.nodes[node] {
            TreeNode::Leaf { p_mal } => return *p_mal,
            TreeNode::Split { feature, threshold, left, right } => {
                node = if (counts[*feature] as f64) <= *threshold { *left } else { *right };
            }
        }
    }
}

/// Expands a trace corpus into labeled windows; each window inherits its
/// trace's label. Unknown-labeled traces are skipped.
fn labeled_windows(traces: &[Trace], k: usize) -> (Vec<Window>, Vec<bool>) {
    let mut windows = Vec::new();
    let mut labels = Vec::new();
    for trace in traces {
        let y = match trace.label {
            Label::Malicious => true,
            Label::Benign => false,
            Label::Unknown => continue,
        };
        for w in split_windows(&trace.type_ids(), k) {
            windows.push(w);
            labels.push(y);
        }
    }
    (windows, labels)
}

/// Trains a window classifier of the given kind on a labeled trace corpus.
pub fn train(
    traces: &[Trace],
    kind: ModelKind,
    k: usize,
    vocab: &Vocabulary,
    params: &TrainParams,
) -> Result<TrainedModel, ModelError> {
    if k == 0 {
        return Err(ModelError::BadWindowSize);
    }
    let (windows, labels) = labeled_windows(traces, k);
    if windows.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if !labels.iter().any(|&y| y) {
        return Err(ModelError::EmptyClass("malicious"));
    }
    if !labels.iter().any(|&y| !y) {
        return Err(ModelError::EmptyClass("benign"));
    }

    let model_params = match kind {
        ModelKind::LogisticRegression => train_logistic(&windows, &labels, k, vocab, params)?,
        ModelKind::NgramBayes => train_bayes(&windows, &labels, vocab)?,
        ModelKind::DecisionForest => train_forest(&windows, &labels, vocab, params)?,
    };

    let mut model = TrainedModel {
        kind,
        k,
        vocab_len: vocab.len(),
        vocab_hash: vocab.hash(),
        threshold: DEFAULT_THRESHOLD,
        score_capable: true,
        params: model_params,
    };
    model.threshold = calibrate_threshold(&model, traces)?;
    Ok(model)
}

/// Picks the decision threshold that maximizes trace-level training accuracy
/// under OR-aggregation, breaking ties toward the larger threshold (fewer
/// false positives). Window scores and trace scores share the threshold, so
/// this also calibrates per-window decisions.
fn calibrate_threshold(model: &TrainedModel, traces: &[Trace]) -> Result<f64, ModelError> {
    let mut scored: Vec<(f64, bool)> = Vec::new();
    for t in traces {
        let truth = match t.label {
            Label::Malicious => true,
            Label::Benign => false,
            Label::Unknown => continue,
        };
        let score = model.classify_trace(t)?.score.unwrap_or(0.0);
        scored.push((score, truth));
    }
    if scored.is_empty() {
        return Ok(DEFAULT_THRESHOLD);
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let malicious_total = scored.iter().filter(|&&(_, y)| y).count();
    // Cut after position i: everything below the cut predicts benign.
    // Accuracy = benign below + malicious at-or-above.
    let mut best = (0usize, DEFAULT_THRESHOLD);
    let mut benign_below = 0usize;
    let mut malicious_below = 0usize;
    for i in 0..=scored.len() {
        let correct = benign_below + (malicious_total - malicious_below);
        let threshold = if i == 0 {
            (scored[0].0 / 2.0).min(DEFAULT_THRESHOLD)
        } else if i == scored.len() {
            ((scored[i - 1].0 + 1.0) / 2.0).max(DEFAULT_THRESHOLD)
        } else {
            (scored[i - 1].0 + scored[i].0) / 2.0
        };
        if correct >= best.0 {
            best = (correct, threshold);
        }
        if i < scored.len() {
            if scored[i].1 {
                malicious_below += 1;
            } else {
                benign_below += 1;
            }
        }
    }
    Ok(best.1.clamp(0.0, 1.0))
}

fn train_logistic(
    windows: &[Window],
    labels: &[bool],
    k: usize,
    vocab: &Vocabulary,
    params: &TrainParams,
) -> Result<ModelParams, ModelError> {
    let dim = k * vocab.len();
    let mut weights = vec![0.0f64; dim];
    let mut bias = 0.0f64;
    let features: Vec<Vec<usize>> = windows
        .iter()
        .map(|w| one_hot_indices(w, vocab))
        .collect::<Result<_, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut idx: Vec<usize> = (0..windows.len()).collect();
    for _ in 0..params.epochs {
        idx.shuffle(&mut rng);
        for &i in &idx {
            let z = bias + features[i].iter().map(|&j| weights[j]).sum::<f64>();
            let g = sigmoid(z) - if labels[i] { 1.0 } else { 0.0 };
            bias -= params.learning_rate * g;
            for &j in &features[i] {
                weights[j] -= params.learning_rate * (g + params.l2 * weights[j]);
            }
        }
    }
    Ok(ModelParams::Logistic(LogisticParams { weights, bias }))
}

fn train_bayes(
    windows: &[Window],
    labels: &[bool],
    vocab: &Vocabulary,
) -> Result<ModelParams, ModelError> {
    let v = vocab.len();
    let mut count_mal = vec![1.0f64; v]; // Laplace smoothing
    let mut count_ben = vec![1.0f64; v];
    let mut n_mal = 0usize;
    let mut n_ben = 0usize;
    for (w, &y) in windows.iter().zip(labels) {
        let counts = token_counts(w.tokens(), v)?;
        let target = if y { &mut count_mal } else { &mut count_ben };
        for (t, &c) in counts.iter().enumerate() {
            target[t] += c as f64;
        }
        if y {
            n_mal += 1
        } else {
            n_ben += 1
        }
    }
    let total_mal: f64 = count_mal.iter().sum();
    let total_ben: f64 = count_ben.iter().sum();
    let log_p_mal = count_mal.iter().map(|c| (c / total_mal).ln()).collect();
    let log_p_ben = count_ben.iter().map(|c| (c / total_ben).ln()).collect();
    let n = (n_mal + n_ben) as f64;
    Ok(ModelParams::Bayes(BayesParams {
        log_prior_mal: (n_mal as f64 / n).ln(),
        log_prior_ben: (n_ben as f64 / n).ln(),
        log_p_mal,
        log_p_ben,
    }))
}

fn train_forest(
    windows: &[Window],
    labels: &[bool],
    vocab: &Vocabulary,
    params: &TrainParams,
) -> Result<ModelParams, ModelError> {
    let v = vocab.len();
    let counts: Vec<Vec<u32>> = windows
        .iter()
        .map(|w| token_counts(w.tokens(), v))
        .collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(1));
    let mtry = (v as f64).sqrt().ceil() as usize;
    let mut trees = Vec::with_capacity(params.trees);
    for _ in 0..params.trees {
        let sample_n = counts.len().min(params.tree_sample);
        let sample: Vec<usize> = (0..sample_n).map(|_| rng.gen_range(0..counts.len())).collect();
        let mut tree = Tree { nodes: Vec::new() };
        build_tree(&mut tree, &counts, labels, sample, mtry, v, &mut rng);
        trees.push(tree);
    }
    Ok(ModelParams::Forest(ForestParams { trees }))
}

fn build_tree(
    tree: &mut Tree,
    counts: &[Vec<u32>],
    labels: &[bool],
    samples: Vec<usize>,
    mtry: usize,
    n_features: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    let n = samples.len();
    let n_mal = samples.iter().filter(|&&i| labels[i]).count();
    let p_mal = n_mal as f64 / n as f64;
    let node_id = tree.nodes.len();
    if n < 4 || n_mal == 0 || n_mal == n {
        tree.nodes.push(TreeNode::Leaf { p_mal });
        return node_id;
    }

    // Gini-best split over a random feature subset with small count thresholds.
    let parent_gini = gini(n_mal, n);
    let mut best: Option<(usize, f64, f64)> = None;
    for _ in 0..mtry {
        let f = rng.gen_range(1..n_features); // never split on the null column
        for thr in [0.5f64, 1.5, 2.5] {
            let mut l = 0;
            let mut l_mal = 0;
            for &i in &samples {
                if (counts[i][f] as f64) <= thr {
                    l += 1;
                    if labels[i] {
                        l_mal += 1;
                    }
                }
            }
            let r = n - l;
            if l == 0 || r == 0 {
                continue;
            }
            let r_mal = n_mal - l_mal;
            let w_gini =
                (l as f64 / n as f64) * gini(l_mal, l) + (r as f64 / n as f64) * gini(r_mal, r);
            let gain = parent_gini - w_gini;
            if gain > 1e-9 && best.map_or(true, |(_, _, g)| gain > g) {
                best = Some((f, thr, gain));
            }
        }
    }

    let Some((feature, threshold, _)) = best else {
        tree.nodes.push(TreeNode::Leaf { p_mal });
        return node_id;
    };
    let (left_samples, right_samples): (Vec<usize>, Vec<usize>) = samples
        .into_iter()
        .partition(|&i| (counts[i][feature] as f64) <= threshold);
    tree.nodes.push(TreeNode::Split { feature, threshold, left: 0, right: 0 });
    let left = build_tree(tree, counts, labels, left_samples, mtry, n_features, rng);
    let right = build_tree(tree, counts, labels, right_samples, mtry, n_features, rng);
    if let TreeNode::Split { left: l, right: r, .. } = &mut tree.nodes[node_id] {
        *l = left;
        *r = right;
    }
    node_id
}

fn gini(n_mal: usize, n: usize) -> f64 {
    let p = n_mal as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

/// Trace-level held-out evaluation via OR-aggregation.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub n: usize,
}

pub fn evaluate(model: &TrainedModel, traces: &[Trace]) -> Result<EvalReport, ModelError> {
    let mut correct = 0usize;
    let mut fp = 0usize;
    let mut n_ben = 0usize;
    let mut fn_ = 0usize;
    let mut n_mal = 0usize;
    let mut n = 0usize;
    for trace in traces {
        let truth = match trace.label {
            Label::Malicious => true,
            Label::Benign => false,
            Label::Unknown => continue,
        };
        n += 1;
        let pred = model.classify_trace(trace)?.is_malicious();
        if pred == truth {
            correct += 1;
        }
        if truth {
            n_mal += 1;
            if !pred {
                fn_ += 1;
            }
        } else {
            n_ben += 1;
            if pred {
                fp += 1;
            }
        }
    }
    if n == 0 {
        return Err(ModelError::EmptyDataset);
    }
    Ok(EvalReport {
        accuracy: correct as f64 / n as f64,
        fp_rate: if n_ben == 0 { 0.0 } else { fp as f64 / n_ben as f64 },
        fn_rate: if n_mal == 0 { 0.0 } else { fn_ as f64 / n_mal as f64 },
        n,
    })
}

/// Logistic classifier over add-only boolean string-presence features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StaticModel {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
}

impl StaticModel {
    pub fn score(&self, v: &StaticFeatureVector) -> Result<f64, ModelError> {
        if v.dim != self.dim {
            return Err(ModelError::StaticDimMismatch { expected: self.dim, got: v.dim });
        }
        let z = self.bias
            + v.active_indices().iter().map(|&i| self.weights[i as usize]).sum::<f64>();
        Ok(sigmoid(z))
    }

    pub fn classify(&self, v: &StaticFeatureVector) -> Result<ClassificationResponse, ModelError> {
        Ok(ClassificationResponse::from_score(self.score(v)?, self.threshold))
    }
}

pub fn train_static(
    vectors: &[(StaticFeatureVector, Label)],
    dim: usize,
    params: &TrainParams,
) -> Result<StaticModel, ModelError> {
    let usable: Vec<(&StaticFeatureVector, bool)> = vectors
        .iter()
        .filter_map(|(v, l)| match l {
            Label::Malicious => Some((v, true)),
            Label::Benign => Some((v, false)),
            Label::Unknown => None,
        })
        .collect();
    if usable.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if !usable.iter().any(|(_, y)| *y) {
        return Err(ModelError::EmptyClass("malicious"));
    }
    if !usable.iter().any(|(_, y)| !*y) {
        return Err(ModelError::EmptyClass("benign"));
    }
    let mut weights = vec![0.0f64; dim];
    let mut bias = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(2));
    let mut idx: Vec<usize> = (0..usable.len()).collect();
    for _ in 0..params.epochs.max(20) {
        idx.shuffle(&mut rng);
        for &i in &idx {
            let (v, y) = usable[i];
            let z = bias + v.active_indices().iter().map(|&j| weights[j as usize]).sum::<f64>();
            let g = sigmoid(z) - if y { 1.0 } else { 0.0 };
            bias -= params.learning_rate * g;
            for j in v.active_indices() {
                weights[j as usize] -= params.learning_rate * (g + params.l2 * weights[j as usize]);
            }
        }
    }
    Ok(StaticModel { dim, weights, bias, threshold: DEFAULT_THRESHOLD })
}

/// How the hybrid model combines branch scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    /// Mean of the dynamic and static branch scores.
    Mean,
    /// Max of the branch scores.
    Max,
}

/// Dynamic + static two-branch classifier; malicious iff the fused score
/// reaches the threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HybridModel {
    pub dynamic: TrainedModel,
    pub statics: StaticModel,
    pub fusion: Fusion,
    pub threshold: f64,
}

impl HybridModel {
    pub fn new(dynamic: TrainedModel, statics: StaticModel, fusion: Fusion) -> Self {
        Self { dynamic, statics, fusion, threshold: DEFAULT_THRESHOLD }
    }

    pub fn fused_score(&self, dyn_score: f64, stat_score: f64) -> f64 {
        match self.fusion {
            Fusion::Mean => (dyn_score + stat_score) / 2.0,
            Fusion::Max => dyn_score.max(stat_score),
        }
    }

    pub fn classify(
        &self,
        tokens: &[TokenId],
        statics: &StaticFeatureVector,
    ) -> Result<ClassificationResponse, ModelError> {
        let dyn_score = self
            .dynamic
            .classify_sequence(tokens)?
            .score
            .expect("dynamic branch is score-capable");
        let stat_score = self.statics.score(statics)?;
        Ok(ClassificationResponse::from_score(
            self.fused_score(dyn_score, stat_score),
            self.threshold,
        ))
    }
}
