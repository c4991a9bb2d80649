//! C ABI for the evasion toolkit: opaque handles, integer status codes, and
//! a thread-local error message. The header is generated by cbindgen at
//! build time (see `include/seqevade.h`).
//!
//! Ownership rules: every `*_generate`/`*_load`/`*_train`/`*_run` hands the
//! caller an owned handle that must be released with the matching `*_free`;
//! `seqevade_last_error` stays valid until the next API call on the same
//! thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fmt::Display;
use std::path::Path;
use std::sync::Arc;

use seqevade::attack::{full_sequence_attack, ArgPools, AttackConfig, BenignProvider};
use seqevade::datagen::{generate_corpus, Corpus, CorpusSpec};
use seqevade::targets::{
    load_model, make_oracle, save_model, train, ModelKind, QueryMeter, TrainParams,
    TrainedModel,
};
use seqevade::trace::Label;

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqevadeStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// JSON parsing or serialization failed.
    Parse = 3,
    /// Filesystem or corpus error.
    Io = 4,
    /// Training or classification failed.
    Model = 5,
    /// The attack rejected its configuration or failed mid-run.
    Attack = 6,
    /// An index or enum value was out of range.
    OutOfRange = 7,
    /// The caller's buffer is too small; nothing was written.
    BufferTooSmall = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: SeqevadeStatus, err: impl Display) -> SeqevadeStatus {
    let msg = CString::new(err.to_string()).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
    status
}

/// Message of the most recent failure on this thread; empty string if none.
/// The pointer is invalidated by the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn seqevade_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// A generated or loaded corpus: traces, static vectors, vocabulary.
pub struct SeqevadeCorpus {
    inner: Corpus,
}

/// A trained windowed classifier plus the vocabulary it was trained against.
pub struct SeqevadeModel {
    model: TrainedModel,
    vocab: Arc<seqevade::vocab::Vocabulary>,
}

/// Result of one full-sequence attack.
pub struct SeqevadeOutcome {
    inner: seqevade::attack::AttackOutcome,
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, SeqevadeStatus> {
    if ptr.is_null() {
        return Err(fail(SeqevadeStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| fail(SeqevadeStatus::InvalidUtf8, e))
}

unsafe fn out_slot<'a, T>(ptr: *mut *mut T) -> Result<&'a mut *mut T, SeqevadeStatus> {
    ptr.as_mut()
        .ok_or_else(|| fail(SeqevadeStatus::NullArgument, "null output handle"))
}

/// Generates a corpus from a JSON spec; pass NULL for the built-in default
/// spec. On success `*out` owns the corpus.
///
/// # Safety
/// `spec_json` must be NULL or a valid C string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn seqevade_corpus_generate(
    spec_json: *const c_char,
    out: *mut *mut SeqevadeCorpus,
) -> SeqevadeStatus {
    let slot = match out_slot(out) {
        Ok(s) => s,
        Err(st) => return st,
    };
    let spec: CorpusSpec = if spec_json.is_null() {
        CorpusSpec::default()
    } else {
        let text = match cstr(spec_json) {
            Ok(t) => t,
            Err(st) => return st,
        };
        match serde_json::from_str(text) {
            Ok(s) => s,
            Err(e) => return fail(SeqevadeStatus::Parse, e),
        }
    };
    match generate_corpus(&spec) {
        Ok(corpus) => {
            *slot = Box::into_raw(Box::new(SeqevadeCorpus { inner: corpus }));
            SeqevadeStatus::Ok
        }
        Err(e) => fail(SeqevadeStatus::Io, e),
    }
}

/// Loads a corpus directory written by `seqevade_corpus_save`.
///
/// # Safety
/// `dir` must be a valid C string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn seqevade_corpus_load(
    dir: *const c_char,
    out: *mut *mut SeqevadeCorpus,
) -> SeqevadeStatus {
    let slot = match out_slot(out) {
        Ok(s) => s,
        Err(st) => return st,
    };
    let dir = match cstr(dir) {
        Ok(d) => d,
        Err(st) => return st,
    };
    match Corpus::load_dir(Path::new(dir)) {
        Ok(corpus) => {
            *slot = Box::into_raw(Box::new(SeqevadeCorpus { inner: corpus }));
            SeqevadeStatus::Ok
        }
        Err(e) => fail(SeqevadeStatus::Io, e),
    }
}

/// # Safety
/// `corpus` must be a live handle; `dir` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn seqevade_corpus_save(
    corpus: *const SeqevadeCorpus,
    dir: *const c_char,
) -> SeqevadeStatus {
    let Some(corpus) = corpus.as_ref() else {
        return fail(SeqevadeStatus::NullArgument, "null corpus");
    };
    let dir = match cstr(dir) {
        Ok(d) => d,
        Err(st) => return st,
    };
    match corpus.inner.save_dir(Path::new(dir)) {
        Ok(()) => SeqevadeStatus::Ok,
        Err(e) => fail(SeqevadeStatus::Io, e),
    }
}

/// Number of traces in the corpus; 0 for a null handle.
///
/// # Safety
/// `corpus` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn seqevade_corpus_len(corpus: *const SeqevadeCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.inner.traces.len())
}

/// # Safety
/// `corpus` must be NULL or an owned handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn seqevade_corpus_free(corpus: *mut SeqevadeCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Trains a classifier on the corpus. `kind`: 0 logistic regression,
/// 1 n-gram Bayes, 2 decision forest. `window` is the model's window size.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn seqevade_model_train(
    corpus: *const SeqevadeCorpus,
    kind: u32,
    window: usize,
    seed: u64,
    out: *mut *mut SeqevadeModel,
) -> SeqevadeStatus {
    let slot = match out_slot(out) {
        Ok(s) => s,
        Err(st) => return st,
    };
    let Some(corpus) = corpus.as_ref() else {
        return fail(SeqevadeStatus::NullArgument, "null corpus");
    };
    let kind = match kind {
        0 => ModelKind::LogisticRegression,
        1 => ModelKind::NgramBayes,
        2 => ModelKind::DecisionForest,
        other => return fail(SeqevadeStatus::OutOfRange, format!("unknown model kind {other}")),
    };
    let params = TrainParams { seed, ..TrainParams::default() };
    match train(&corpus.inner.traces, kind, window, &corpus.inner.vocab, &params) {
        Ok(model) => {
            *slot = Box::into_raw(Box::new(SeqevadeModel {
                model,
                vocab: Arc::new(corpus.inner.vocab.clone()),
            }));
            SeqevadeStatus::Ok
        }
        Err(e) => fail(SeqevadeStatus::Model, e),
    }
}

/// # Safety
/// `model` must be a live handle; `path` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn seqevade_model_save(
    model: *const SeqevadeModel,
    path: *const c_char,
) -> SeqevadeStatus {
    let Some(model) = model.as_ref() else {
        return fail(SeqevadeStatus::NullArgument, "null model");
    };
    let path = match cstr(path) {
        Ok(p) => p,
        Err(st) => return st,
    };
    match save_model(&model.model, Path::new(path)) {
        Ok(()) => SeqevadeStatus::Ok,
        Err(e) => fail(SeqevadeStatus::Io, e),
    }
}

/// Loads a model file; the corpus supplies the vocabulary it is checked
/// against.
///
/// # Safety
/// `path` must be a valid C string; `corpus` a live handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn seqevade_model_load(
    path: *const c_char,
    corpus: *const SeqevadeCorpus,
    out: *mut *mut SeqevadeModel,
) -> SeqevadeStatus {
    let slot = match out_slot(out) {
        Ok(s) => s,
        Err(st) => return st,
    };
    let Some(corpus) = corpus.as_ref() else {
        return fail(SeqevadeStatus::NullArgument, "null corpus");
    };
    let path = match cstr(path) {
        Ok(p) => p,
        Err(st) => return st,
    };
    match load_model(Path::new(path), &corpus.inner.vocab) {
        Ok(model) => {
            *slot = Box::into_raw(Box::new(SeqevadeModel {
                model,
                vocab: Arc::new(corpus.inner.vocab.clone()),
            }));
            SeqevadeStatus::Ok
        }
        Err(e) => fail(SeqevadeStatus::Model, e),
    }
}

/// Classifies a token sequence. Writes 1 to `*out_malicious` for a malicious
/// verdict, 0 otherwise, and the confidence score to `*out_score` (pass NULL
/// to skip the score).
///
/// # Safety
/// `model` must be a live handle; `tokens` must point to `len` u32 values.
#[no_mangle]
pub unsafe extern "C" fn seqevade_model_classify(
    model: *const SeqevadeModel,
    tokens: *const u32,
    len: usize,
    out_malicious: *mut i32,
    out_score: *mut f64,
) -> SeqevadeStatus {
    let Some(model) = model.as_ref() else {
        return fail(SeqevadeStatus::NullArgument, "null model");
    };
    if tokens.is_null() && len > 0 {
        return fail(SeqevadeStatus::NullArgument, "null token buffer");
    }
    let Some(out_malicious) = out_malicious.as_mut() else {
        return fail(SeqevadeStatus::NullArgument, "null verdict output");
    };
    let slice = std::slice::from_raw_parts(tokens, len);
    match model.model.classify_sequence(slice) {
        Ok(resp) => {
            *out_malicious = i32::from(resp.is_malicious());
            if let Some(out_score) = out_score.as_mut() {
                *out_score = resp.score.unwrap_or(f64::NAN);
            }
            SeqevadeStatus::Ok
        }
        Err(e) => fail(SeqevadeStatus::Model, e),
    }
}

/// # Safety
/// `model` must be NULL or an owned handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn seqevade_model_free(model: *mut SeqevadeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Attacks corpus trace `index` against the model. `config_json` configures
/// the attack (same schema as the library's attack config; NULL for
/// defaults). Benign perturbation draws from the corpus's benign class.
///
/// # Safety
/// `model` and `corpus` must be live handles; `config_json` NULL or a valid
/// C string; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn seqevade_attack_run(
    model: *const SeqevadeModel,
    corpus: *const SeqevadeCorpus,
    index: usize,
    config_json: *const c_char,
    out: *mut *mut SeqevadeOutcome,
) -> SeqevadeStatus {
    let slot = match out_slot(out) {
        Ok(s) => s,
        Err(st) => return st,
    };
    let Some(model) = model.as_ref() else {
        return fail(SeqevadeStatus::NullArgument, "null model");
    };
    let Some(corpus) = corpus.as_ref() else {
        return fail(SeqevadeStatus::NullArgument, "null corpus");
    };
    let Some(trace) = corpus.inner.traces.get(index) else {
        return fail(
            SeqevadeStatus::OutOfRange,
            format!("trace index {index} out of range ({} traces)", corpus.inner.traces.len()),
        );
    };
    let config: AttackConfig = if config_json.is_null() {
        AttackConfig::default()
    } else {
        let text = match cstr(config_json) {
            Ok(t) => t,
            Err(st) => return st,
        };
        match serde_json::from_str(text) {
            Ok(c) => c,
            Err(e) => return fail(SeqevadeStatus::Parse, e),
        }
    };
    let benign = BenignProvider::markov(&corpus.inner.class(Label::Benign), 2).ok();
    let oracle = match make_oracle(model.model.clone(), config.knowledge, Arc::new(QueryMeter::new()))
    {
        Ok(o) => o,
        Err(e) => return fail(SeqevadeStatus::Attack, e),
    };
    match full_sequence_attack(
        &oracle,
        trace,
        Arc::clone(&model.vocab),
        &config,
        benign.as_ref(),
        &ArgPools::new(),
    ) {
        Ok(outcome) => {
            *slot = Box::into_raw(Box::new(SeqevadeOutcome { inner: outcome }));
            SeqevadeStatus::Ok
        }
        Err(e) => fail(SeqevadeStatus::Attack, e),
    }
}

/// 1 if every window of the perturbed trace classifies benign.
///
/// # Safety
/// `outcome` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn seqevade_outcome_evaded(outcome: *const SeqevadeOutcome) -> i32 {
    outcome.as_ref().map_or(0, |o| i32::from(o.inner.evaded))
}

/// # Safety
/// `outcome` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn seqevade_outcome_queries(outcome: *const SeqevadeOutcome) -> u64 {
    outcome.as_ref().map_or(0, |o| o.inner.queries_used)
}

/// Added calls over original length, in [0, 1].
///
/// # Safety
/// `outcome` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn seqevade_outcome_overhead(outcome: *const SeqevadeOutcome) -> f64 {
    outcome.as_ref().map_or(0.0, |o| o.inner.overhead)
}

/// Length of the perturbed trace in tokens.
///
/// # Safety
/// `outcome` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn seqevade_outcome_trace_len(outcome: *const SeqevadeOutcome) -> usize {
    outcome.as_ref().map_or(0, |o| o.inner.final_trace.len())
}

/// Copies the perturbed trace's token ids into `buf` (capacity `cap`).
///
/// # Safety
/// `outcome` must be a live handle; `buf` must point to `cap` u32 slots.
#[no_mangle]
pub unsafe extern "C" fn seqevade_outcome_trace(
    outcome: *const SeqevadeOutcome,
    buf: *mut u32,
    cap: usize,
) -> SeqevadeStatus {
    let Some(outcome) = outcome.as_ref() else {
        return fail(SeqevadeStatus::NullArgument, "null outcome");
    };
    let ids = outcome.inner.final_trace.type_ids();
    if cap < ids.len() {
        return fail(
            SeqevadeStatus::BufferTooSmall,
            format!("need {} slots, got {cap}", ids.len()),
        );
    }
    if buf.is_null() {
        return fail(SeqevadeStatus::NullArgument, "null buffer");
    }
    std::ptr::copy_nonoverlapping(ids.as_ptr(), buf, ids.len());
    SeqevadeStatus::Ok
}

/// # Safety
/// `outcome` must be NULL or an owned handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn seqevade_outcome_free(outcome: *mut SeqevadeOutcome) {
    if !outcome.is_null() {
        drop(Box::from_raw(outcome));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;
    use std::ptr;

    fn spec() -> CString {
        CString::new(
            r#"{"vocab_size": 64, "trace_length_range": [40, 80], "motif_set": [[17,23,5,9]],
                "motif_density": 0.2, "malicious_token_boost": 8, "n_samples": 40,
                "window": 10, "static_dim": 64, "static_malicious_bits": [0,1,2,3],
                "static_benign_bits": [10,11,12,13], "seed": 3}"#,
        )
        .unwrap()
    }

    #[test]
    fn full_round_trip_through_the_c_surface() {
        unsafe {
            let mut corpus: *mut SeqevadeCorpus = ptr::null_mut();
            assert_eq!(
                seqevade_corpus_generate(spec().as_ptr(), &mut corpus),
                SeqevadeStatus::Ok
            );
            assert_eq!(seqevade_corpus_len(corpus), 80);

            let mut model: *mut SeqevadeModel = ptr::null_mut();
            assert_eq!(
                seqevade_model_train(corpus, 0, 10, 0, &mut model),
                SeqevadeStatus::Ok
            );

            // Malicious samples sit after the benign block.
            let mut verdict = 0i32;
            let mut score = 0.0f64;
            let mal = &(&(*corpus).inner.traces)[40];
            let ids = mal.type_ids();
            assert_eq!(
                seqevade_model_classify(model, ids.as_ptr(), ids.len(), &mut verdict, &mut score),
                SeqevadeStatus::Ok
            );
            assert_eq!(verdict, 1);
            assert!(score > 0.0);

            let cfg = CString::new(
                r#"{"knowledge":"score","perturb_type":"benign",
                    "adding_method":"logarithmic_backtracking",
                    "n":10,"m_w":5,"b":40,"sample_budget":300,"seed":1}"#,
            )
            .unwrap();
            let mut outcome: *mut SeqevadeOutcome = ptr::null_mut();
            assert_eq!(
                seqevade_attack_run(model, corpus, 40, cfg.as_ptr(), &mut outcome),
                SeqevadeStatus::Ok
            );
            assert!(seqevade_outcome_queries(outcome) > 0);
            let n = seqevade_outcome_trace_len(outcome);
            assert!(n >= ids.len());
            let mut buf = vec![0u32; n];
            assert_eq!(
                seqevade_outcome_trace(outcome, buf.as_mut_ptr(), n),
                SeqevadeStatus::Ok
            );
            assert!(seqevade::ledger::is_subsequence(&ids, &buf));

            seqevade_outcome_free(outcome);
            seqevade_model_free(model);
            seqevade_corpus_free(corpus);
        }
    }

    #[test]
    fn save_load_round_trip_on_disk() {
        unsafe {
            let dir = tempfile::tempdir().unwrap();
            let corpus_dir = CString::new(dir.path().join("c").to_str().unwrap()).unwrap();
            let model_path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();

            let mut corpus: *mut SeqevadeCorpus = ptr::null_mut();
            assert_eq!(
                seqevade_corpus_generate(spec().as_ptr(), &mut corpus),
                SeqevadeStatus::Ok
            );
            assert_eq!(seqevade_corpus_save(corpus, corpus_dir.as_ptr()), SeqevadeStatus::Ok);

            let mut model: *mut SeqevadeModel = ptr::null_mut();
            assert_eq!(
                seqevade_model_train(corpus, 0, 10, 0, &mut model),
                SeqevadeStatus::Ok
            );
            assert_eq!(seqevade_model_save(model, model_path.as_ptr()), SeqevadeStatus::Ok);

            let mut corpus2: *mut SeqevadeCorpus = ptr::null_mut();
            assert_eq!(
                seqevade_corpus_load(corpus_dir.as_ptr(), &mut corpus2),
                SeqevadeStatus::Ok
            );
            assert_eq!(seqevade_corpus_len(corpus2), seqevade_corpus_len(corpus));

            let mut model2: *mut SeqevadeModel = ptr::null_mut();
            assert_eq!(
                seqevade_model_load(model_path.as_ptr(), corpus2, &mut model2),
                SeqevadeStatus::Ok
            );

            seqevade_model_free(model2);
            seqevade_model_free(model);
            seqevade_corpus_free(corpus2);
            seqevade_corpus_free(corpus);
        }
    }

    #[test]
    fn errors_set_status_and_message() {
        unsafe {
            let mut corpus: *mut SeqevadeCorpus = ptr::null_mut();
            let bad = CString::new("{not json").unwrap();
            assert_eq!(
                seqevade_corpus_generate(bad.as_ptr(), &mut corpus),
                SeqevadeStatus::Parse
            );
            let msg = CStr::from_ptr(seqevade_last_error());
            assert!(!msg.to_bytes().is_empty());

            assert_eq!(
                seqevade_corpus_generate(ptr::null(), ptr::null_mut()),
                SeqevadeStatus::NullArgument
            );
            let missing = CString::new("/nonexistent/path").unwrap();
            assert_eq!(
                seqevade_corpus_load(missing.as_ptr(), &mut corpus),
                SeqevadeStatus::Io
            );

            // Null handles are inert, not crashes.
            assert_eq!(seqevade_corpus_len(ptr::null()), 0);
            assert_eq!(seqevade_outcome_evaded(ptr::null()), 0);
            seqevade_corpus_free(ptr::null_mut());
            seqevade_model_free(ptr::null_mut());
            seqevade_outcome_free(ptr::null_mut());
        }
    }

    #[test]
    fn out_of_range_inputs_are_rejected() {
        unsafe {
            let mut corpus: *mut SeqevadeCorpus = ptr::null_mut();
            assert_eq!(
                seqevade_corpus_generate(spec().as_ptr(), &mut corpus),
                SeqevadeStatus::Ok
            );
            let mut model: *mut SeqevadeModel = ptr::null_mut();
            assert_eq!(
                seqevade_model_train(corpus, 9, 10, 0, &mut model),
                SeqevadeStatus::OutOfRange
            );
            assert_eq!(
                seqevade_model_train(corpus, 0, 10, 0, &mut model),
                SeqevadeStatus::Ok
            );
            let mut outcome: *mut SeqevadeOutcome = ptr::null_mut();
            assert_eq!(
                seqevade_attack_run(model, corpus, 10_000, ptr::null(), &mut outcome),
                SeqevadeStatus::OutOfRange
            );
            seqevade_model_free(model);
            seqevade_corpus_free(corpus);
        }
    }
}
