//! Attack metrics and benchmark sweeps: effectiveness (share of
//! originally-malicious samples whose adversarial version classifies
//! benign), added-call overhead, and the configuration-matrix runner that
//! aggregates both over seeds.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{
    full_sequence_attack, AddingMethod, ArgPools, AttackConfig, AttackError, AttackOutcome,
    BenignProvider, PerturbType,
};
use crate::error::ModelError;
use crate::targets::{make_oracle, Knowledge, QueryMeter, TrainedModel};
use crate::trace::Trace;
use crate::vocab::Vocabulary;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no originally-malicious samples in the outcome set")]
    EmptyDenominator,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Share (percent) of originally-malicious samples whose final trace the
/// model classifies benign. Originally-benign samples are excluded from
/// numerator and denominator alike.
pub fn compute_effectiveness(
    outcomes: &[AttackOutcome],
    model: &TrainedModel,
) -> Result<f64, ReportError> {
    let mut denom = 0u64;
    let mut num = 0u64;
    for o in outcomes {
        let originally_malicious =
            model.classify_sequence(&o.ledger.original().type_ids())?.is_malicious();
        if !originally_malicious {
            continue;
        }
        denom += 1;
        if !model.classify_sequence(&o.final_trace.type_ids())?.is_malicious() {
            num += 1;
        }
    }
    if denom == 0 {
        return Err(ReportError::EmptyDenominator);
    }
    Ok(100.0 * num as f64 / denom as f64)
}

/// Mean per-sample overhead (added calls over original length), percent.
/// By default averaged over evaded samples only, matching how overhead of
/// generated adversarial examples is reported.
pub fn compute_overhead_avg(outcomes: &[AttackOutcome], evaded_only: bool) -> f64 {
    let picked: Vec<f64> = outcomes
        .iter()
        .filter(|o| !evaded_only || o.evaded)
        .map(|o| o.overhead * 100.0)
        .collect();
    if picked.is_empty() {
        0.0
    } else {
        picked.iter().sum::<f64>() / picked.len() as f64
    }
}

/// One attack configuration axis of the benchmark matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchCell {
    pub knowledge: Knowledge,
    pub perturb_type: PerturbType,
    pub adding_method: AddingMethod,
}

/// configurations x budgets x seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchMatrix {
    pub cells: Vec<BenchCell>,
    /// Per-sample query budgets.
    pub budgets: Vec<u64>,
    pub seeds: Vec<u64>,
}

impl BenchMatrix {
    /// All eight knowledge/perturbation/method combinations at the standard
    /// 100/200 query budgets over five seeds.
    pub fn standard() -> Self {
        let mut cells = Vec::new();
        for knowledge in [Knowledge::Decision, Knowledge::Score] {
            for perturb_type in [PerturbType::Random, PerturbType::Benign] {
                for adding_method in
                    [AddingMethod::LinearIteration, AddingMethod::LogarithmicBacktracking]
                {
                    cells.push(BenchCell { knowledge, perturb_type, adding_method });
                }
            }
        }
        Self { cells, budgets: vec![100, 200], seeds: (0..5).collect() }
    }
}

/// Aggregated result of one (configuration, budget) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub knowledge: Knowledge,
    pub perturb_type: PerturbType,
    pub adding_method: AddingMethod,
    pub budget: u64,
    /// Mean effectiveness over seeds, percent.
    pub effectiveness: f64,
    pub effectiveness_std: f64,
    /// Mean overhead over seeds, percent, evaded samples only.
    pub overhead: f64,
    /// Mean queries per originally-malicious sample.
    pub avg_queries: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchRow>,
    pub corpus_ref: String,
    pub model_ref: String,
    pub version: String,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Runs every matrix cell over the originally-malicious subset of `traces`
/// and aggregates per-seed metrics. `base` supplies the window geometry and
/// attacker vocabulary; knowledge/perturbation/method/budget/seed come from
/// the matrix.
pub fn bench(
    model: &TrainedModel,
    traces: &[Trace],
    vocab: Arc<Vocabulary>,
    benign: Option<&BenignProvider>,
    pools: &ArgPools,
    base: &AttackConfig,
    matrix: &BenchMatrix,
    corpus_ref: &str,
    model_ref: &str,
) -> Result<BenchmarkReport, ReportError> {
    // Pre-attack classification is the harness's own bookkeeping, not an
    // attacker query, so it goes straight to the model.
    let mut targets: Vec<&Trace> = Vec::new();
    for t in traces {
        if model.classify_trace(t)?.is_malicious() {
            targets.push(t);
        }
    }

    let mut rows = Vec::new();
    for cell in &matrix.cells {
        for &budget in &matrix.budgets {
            let mut eff = Vec::new();
            let mut ovh = Vec::new();
            let mut queries = Vec::new();
            for &seed in &matrix.seeds {
                let mut cfg = base.clone();
                cfg.knowledge = cell.knowledge;
                cfg.perturb_type = cell.perturb_type;
                cfg.adding_method = cell.adding_method;
                cfg.sample_budget = Some(budget);
                cfg.seed = seed;
                let meter = Arc::new(QueryMeter::new());
                let oracle = make_oracle(model.clone(), cell.knowledge, meter)
                    .map_err(AttackError::from)?;
                let mut outcomes = Vec::with_capacity(targets.len());
                for &t in &targets {
                    outcomes.push(full_sequence_attack(
                        &oracle,
                        t,
                        Arc::clone(&vocab),
                        &cfg,
                        benign,
                        pools,
                    )?);
                }
                if !outcomes.is_empty() {
                    eff.push(compute_effectiveness(&outcomes, model)?);
                    ovh.push(compute_overhead_avg(&outcomes, true));
                    queries.push(mean(
                        &outcomes.iter().map(|o| o.queries_used as f64).collect::<Vec<_>>(),
                    ));
                }
            }
            rows.push(BenchRow {
                knowledge: cell.knowledge,
                perturb_type: cell.perturb_type,
                adding_method: cell.adding_method,
                budget,
                effectiveness: mean(&eff),
                effectiveness_std: std_dev(&eff),
                overhead: mean(&ovh),
                avg_queries: mean(&queries),
                seeds: matrix.seeds.len(),
            });
        }
    }
    Ok(BenchmarkReport {
        rows,
        corpus_ref: corpus_ref.to_string(),
        model_ref: model_ref.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

pub fn write_csv(rows: &[BenchRow], path: &Path) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<BenchRow>, ReportError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Fixed-width table mirroring the knowledge / perturbation / method /
/// budget axis layout.
pub fn render_table(report: &BenchmarkReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "corpus: {}  model: {}  toolkit: {}\n",
        report.corpus_ref, report.model_ref, report.version
    ));
    out.push_str(&format!(
        "{:<10} {:<8} {:<22} {:>7} {:>14} {:>10} {:>12} {:>6}\n",
        "knowledge", "perturb", "method", "budget", "effectiveness", "overhead", "avg_queries", "seeds"
    ));
    for r in &report.rows {
        out.push_str(&format!(
            "{:<10} {:<8} {:<22} {:>7} {:>8.2} ±{:<5.2} {:>9.2}% {:>12.1} {:>6}\n",
            format!("{:?}", r.knowledge).to_lowercase(),
            format!("{:?}", r.perturb_type).to_lowercase(),
            match r.adding_method {
                AddingMethod::LinearIteration => "linear_iteration",
                AddingMethod::LogarithmicBacktracking => "logarithmic_backtracking",
            },
            r.budget,
            r.effectiveness,
            r.effectiveness_std,
            r.overhead,
            r.avg_queries,
            r.seeds,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{LogisticParams, ModelKind, ModelParams};
    use crate::trace::Label;

    /// Token 7 scores +4 per occurrence, token 9 scores -20 (one insertion
    /// flips any window), over windows of 4 with bias -2.
    fn model() -> TrainedModel {
        let (k, vocab_len) = (4, 16);
        let mut weights = vec![0.0; k * vocab_len];
        for pos in 0..k {
            weights[pos * vocab_len + 7] = 4.0;
            weights[pos * vocab_len + 9] = -20.0;
        }
        TrainedModel {
            kind: ModelKind::LogisticRegression,
            k,
            vocab_len,
            vocab_hash: Vocabulary::synthetic(16).hash(),
            threshold: 0.5,
            score_capable: true,
            params: ModelParams::Logistic(LogisticParams { weights, bias: -2.0 }),
        }
    }

    fn attack_all(d_prime: Vec<u32>, traces: &[Trace]) -> Vec<AttackOutcome> {
        let vocab = Arc::new(Vocabulary::synthetic(16));
        let mut cfg = AttackConfig::new(
            Knowledge::Decision,
            PerturbType::Random,
            AddingMethod::LinearIteration,
        );
        cfg.n = 4;
        cfg.m_w = 2;
        cfg.d_prime = d_prime;
        cfg.seed = 1;
        let oracle =
            make_oracle(model(), Knowledge::Decision, Arc::new(QueryMeter::new())).unwrap();
        traces
            .iter()
            .map(|t| {
                full_sequence_attack(&oracle, t, Arc::clone(&vocab), &cfg, None, &ArgPools::new())
                    .unwrap()
            })
            .collect()
    }

    fn samples() -> Vec<Trace> {
        vec![
            Trace::from_ids("m1", Label::Malicious, &[7, 7, 7, 7]),
            Trace::from_ids("m2", Label::Malicious, &[7, 7, 7, 7, 7, 7, 7, 7]),
            Trace::from_ids("b1", Label::Benign, &[3, 3, 3, 3]),
        ]
    }

    #[test]
    fn effectiveness_extremes_and_benign_exclusion() {
        // Inserting 9s works: both malicious samples evade -> 100%; the
        // benign sample never enters the denominator.
        let out = attack_all(vec![9], &samples());
        assert_eq!(compute_effectiveness(&out, &model()).unwrap(), 100.0);
        // Neutral insertions fail -> 0%.
        let out = attack_all(vec![5], &samples());
        assert_eq!(compute_effectiveness(&out, &model()).unwrap(), 0.0);
    }

    #[test]
    fn empty_denominator_is_an_error() {
        let benign_only = vec![Trace::from_ids("b1", Label::Benign, &[3, 3])];
        let out = attack_all(vec![9], &benign_only);
        assert!(matches!(
            compute_effectiveness(&out, &model()),
            Err(ReportError::EmptyDenominator)
        ));
    }

    #[test]
    fn overhead_mean_matches_hand_computation() {
        let out = attack_all(vec![9], &samples());
        // Evaded overheads, by hand: outcomes carry one insertion per
        // malicious window; benign sample adds 0.
        let by_hand: Vec<f64> = out
            .iter()
            .filter(|o| o.evaded)
            .map(|o| o.overhead * 100.0)
            .collect();
        let expected = by_hand.iter().sum::<f64>() / by_hand.len() as f64;
        assert!((compute_overhead_avg(&out, true) - expected).abs() < 1e-12);
        // No insertions -> 0.
        let none = attack_all(vec![9], &[Trace::from_ids("b", Label::Benign, &[3, 3])]);
        assert_eq!(compute_overhead_avg(&none, true), 0.0);
    }

    #[test]
    fn bench_runs_cells_and_aggregates() {
        let matrix = BenchMatrix {
            cells: vec![
                BenchCell {
                    knowledge: Knowledge::Decision,
                    perturb_type: PerturbType::Random,
                    adding_method: AddingMethod::LinearIteration,
                },
                BenchCell {
                    knowledge: Knowledge::Decision,
                    perturb_type: PerturbType::Random,
                    adding_method: AddingMethod::LogarithmicBacktracking,
                },
            ],
            budgets: vec![20, 40],
            seeds: vec![0, 1],
        };
        let mut base = AttackConfig::new(
            Knowledge::Decision,
            PerturbType::Random,
            AddingMethod::LinearIteration,
        );
        base.n = 4;
        base.m_w = 2;
        base.d_prime = vec![9];
        let report = bench(
            &model(),
            &samples(),
            Arc::new(Vocabulary::synthetic(16)),
            None,
            &ArgPools::new(),
            &base,
            &matrix,
            "corpus.jsonl",
            "model.json",
        )
        .unwrap();
        assert_eq!(report.rows.len(), 4);
        for row in &report.rows {
            assert_eq!(row.seeds, 2);
            assert_eq!(row.effectiveness, 100.0);
            assert!(row.avg_queries > 0.0);
        }
    }

    #[test]
    fn empty_matrix_is_an_empty_report() {
        let matrix = BenchMatrix { cells: vec![], budgets: vec![], seeds: vec![] };
        let base = AttackConfig::new(
            Knowledge::Decision,
            PerturbType::Random,
            AddingMethod::LinearIteration,
        );
        let report = bench(
            &model(),
            &samples(),
            Arc::new(Vocabulary::synthetic(16)),
            None,
            &ArgPools::new(),
            &base,
            &matrix,
            "c",
            "m",
        )
        .unwrap();
        assert!(report.rows.is_empty());
    }

    #[test]
    fn csv_round_trips() {
        let rows = vec![BenchRow {
            knowledge: Knowledge::Score,
            perturb_type: PerturbType::Benign,
            adding_method: AddingMethod::LogarithmicBacktracking,
            budget: 200,
            effectiveness: 87.5,
            effectiveness_std: 2.25,
            overhead: 21.125,
            avg_queries: 64.2,
            seeds: 5,
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        write_csv(&rows, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), rows);
    }

    #[test]
    fn standard_matrix_covers_all_eight_combinations() {
        let m = BenchMatrix::standard();
        assert_eq!(m.cells.len(), 8);
        assert_eq!(m.budgets, vec![100, 200]);
        assert_eq!(m.seeds.len(), 5);
        let unique: std::collections::HashSet<_> =
            m.cells.iter().map(|c| format!("{c:?}")).collect();
        assert_eq!(unique.len(), 8);
    }
}
