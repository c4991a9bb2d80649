//! Command-line frontend: corpus generation, target training, attacks,
//! benchmark sweeps, and the billed classification service.

use std::error::Error;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use seqevade::attack::{
    full_sequence_attack, AddingMethod, ArgPools, AttackConfig, BenignProvider, PerturbType,
};
use seqevade::datagen::{generate_corpus, holdout_split, Corpus, CorpusSpec};
use seqevade::report::{
    bench, compute_overhead_avg, read_csv, render_table, write_csv, BenchMatrix, BenchmarkReport,
};
use seqevade::service::{fetch_stats, serve, BillingPolicy, RemoteBackend, ThrottlePolicy};
use seqevade::targets::{
    evaluate, load_model, make_oracle, save_model, train, Knowledge, ModelKind, Oracle,
    QueryMeter, TrainParams, TrainedModel,
};
use seqevade::trace::Label;
use seqevade::vocab::Vocabulary;

#[derive(Parser)]
#[command(name = "seqevade", version, about = "Black-box evasion attacks on sequence classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KnowledgeArg {
    Decision,
    Score,
}

impl From<KnowledgeArg> for Knowledge {
    fn from(v: KnowledgeArg) -> Self {
        match v {
            KnowledgeArg::Decision => Knowledge::Decision,
            KnowledgeArg::Score => Knowledge::Score,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PerturbArg {
    Random,
    Benign,
}

impl From<PerturbArg> for PerturbType {
    fn from(v: PerturbArg) -> Self {
        match v {
            PerturbArg::Random => PerturbType::Random,
            PerturbArg::Benign => PerturbType::Benign,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Linear,
    Logbt,
}

impl From<MethodArg> for AddingMethod {
    fn from(v: MethodArg) -> Self {
        match v {
            MethodArg::Linear => AddingMethod::LinearIteration,
            MethodArg::Logbt => AddingMethod::LogarithmicBacktracking,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Logistic,
    Bayes,
    Forest,
}

impl From<KindArg> for ModelKind {
    fn from(v: KindArg) -> Self {
        match v {
            KindArg::Logistic => ModelKind::LogisticRegression,
            KindArg::Bayes => ModelKind::NgramBayes,
            KindArg::Forest => ModelKind::DecisionForest,
        }
    }
}

/// Attack-axis flags shared by `attack` and `bench`.
#[derive(Args)]
struct AttackFlags {
    #[arg(long, value_enum, default_value = "decision")]
    knowledge: KnowledgeArg,
    #[arg(long, value_enum, default_value = "random")]
    perturb: PerturbArg,
    #[arg(long, value_enum, default_value = "linear")]
    method: MethodArg,
    /// Adversarial window size n.
    #[arg(long, default_value_t = 20)]
    window: usize,
    /// Maximum insertions per window.
    #[arg(long, default_value_t = 10)]
    mw: usize,
    /// Per-sample query budget.
    #[arg(long)]
    budget: Option<u64>,
    /// Per-window query budget B; defaults to the per-window insertion cap.
    #[arg(long)]
    window_budget: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl AttackFlags {
    fn to_config(&self) -> AttackConfig {
        let mut cfg = AttackConfig::new(
            self.knowledge.into(),
            self.perturb.into(),
            self.method.into(),
        );
        cfg.n = self.window;
        cfg.m_w = self.mw;
        cfg.b = self.window_budget;
        cfg.sample_budget = self.budget;
        cfg.seed = self.seed;
        cfg
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus into a directory.
    GenCorpus {
        /// Corpus spec JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a target classifier on a corpus directory.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value = "logistic")]
        model_kind: KindArg,
        /// Target window size k.
        #[arg(long, default_value_t = 20)]
        window: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attack malicious corpus samples against a local model or a remote
    /// endpoint.
    Attack {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, conflicts_with = "endpoint")]
        model: Option<PathBuf>,
        /// Remote service address, e.g. 127.0.0.1:8080.
        #[arg(long)]
        endpoint: Option<String>,
        #[command(flatten)]
        flags: AttackFlags,
        /// Attack at most this many malicious samples.
        #[arg(long, default_value_t = 20)]
        limit: usize,
        /// Write per-sample outcome summaries (JSON lines) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full configuration matrix and write a CSV report.
    Bench {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Per-sample query budgets.
        #[arg(long, value_delimiter = ',', default_values_t = [100u64, 200])]
        budgets: Vec<u64>,
        /// Number of seeds per cell.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 20)]
        limit: usize,
        #[arg(long, default_value_t = 20)]
        window: usize,
        #[arg(long, default_value_t = 10)]
        mw: usize,
        /// Per-window query budget B.
        #[arg(long)]
        window_budget: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a trained model as a billed classification endpoint.
    Serve {
        #[arg(long)]
        model: PathBuf,
        /// Vocabulary the model was trained against (vocab.json).
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, default_value_t = 1.0)]
        cost: f64,
        /// Enable throttling: max queries per window.
        #[arg(long)]
        throttle_max: Option<u64>,
        #[arg(long, default_value_t = 60_000)]
        throttle_window_ms: u64,
        /// Expose confidence scores instead of bare decisions.
        #[arg(long)]
        score: bool,
    },
    /// Print per-client billing stats from a running service.
    Stats {
        #[arg(long)]
        endpoint: String,
    },
    /// Render a benchmark CSV as a table.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn load_trained(path: &PathBuf, vocab: &Vocabulary) -> Result<TrainedModel, Box<dyn Error>> {
    Ok(load_model(path, vocab)?)
}

fn benign_provider(corpus: &Corpus) -> Option<BenignProvider> {
    BenignProvider::markov(&corpus.class(Label::Benign), 2).ok()
}

fn run_attack(
    corpus: &Corpus,
    oracle: &dyn Oracle,
    cfg: &AttackConfig,
    limit: usize,
    out: Option<&PathBuf>,
) -> Result<(), Box<dyn Error>> {
    let benign = benign_provider(corpus);
    let pools = ArgPools::new();
    let vocab = Arc::new(corpus.vocab.clone());
    let targets: Vec<_> = corpus.class(Label::Malicious).into_iter().take(limit).collect();
    if targets.is_empty() {
        return Err("corpus has no malicious samples".into());
    }
    let mut outcomes = Vec::new();
    for trace in targets {
        let o = full_sequence_attack(
            oracle,
            trace,
            Arc::clone(&vocab),
            cfg,
            benign.as_ref(),
            &pools,
        )?;
        println!(
            "{}: evaded={} queries={} overhead={:.1}%{}",
            o.sample_id,
            o.evaded,
            o.queries_used,
            o.overhead * 100.0,
            if o.throttled { " (throttled)" } else { "" }
        );
        outcomes.push(o);
    }
    let attacked: Vec<_> = outcomes.iter().filter(|o| o.initially_malicious).collect();
    let evaded = attacked.iter().filter(|o| o.evaded).count();
    println!(
        "effectiveness {:.1}% ({}/{}), mean overhead {:.1}%",
        if attacked.is_empty() { 0.0 } else { 100.0 * evaded as f64 / attacked.len() as f64 },
        evaded,
        attacked.len(),
        compute_overhead_avg(&outcomes, true),
    );
    if let Some(path) = out {
        let mut lines = String::new();
        for o in &outcomes {
            lines.push_str(&serde_json::to_string(&serde_json::json!({
                "sample_id": o.sample_id,
                "evaded": o.evaded,
                "initially_malicious": o.initially_malicious,
                "queries_used": o.queries_used,
                "overhead": o.overhead,
                "ledger_digest": o.ledger_digest,
                "throttled": o.throttled,
                "final_trace": o.final_trace.type_ids(),
            }))?);
            lines.push('\n');
        }
        std::fs::write(path, lines)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Box<dyn Error>> {
    match cli.command {
        Command::GenCorpus { config, seed, out } => {
            let mut spec: CorpusSpec = match config {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                None => CorpusSpec::default(),
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let corpus = generate_corpus(&spec)?;
            corpus.save_dir(&out)?;
            println!(
                "wrote {} traces ({} malicious / {} benign) to {}",
                corpus.traces.len(),
                corpus.class(Label::Malicious).len(),
                corpus.class(Label::Benign).len(),
                out.display()
            );
        }
        Command::Train { corpus, model_kind, window, seed, out } => {
            let corpus = Corpus::load_dir(&corpus)?;
            let [train_set, _val, test] = holdout_split(&corpus, [0.8, 0.1, 0.1], seed)?;
            let params = TrainParams { seed, ..TrainParams::default() };
            let model =
                train(&train_set.traces, model_kind.into(), window, &corpus.vocab, &params)?;
            let report = evaluate(&model, &test.traces)?;
            save_model(&model, &out)?;
            println!(
                "test accuracy {:.1}% (fp {:.1}%, fn {:.1}%, n={}) -> {}",
                report.accuracy * 100.0,
                report.fp_rate * 100.0,
                report.fn_rate * 100.0,
                report.n,
                out.display()
            );
        }
        Command::Attack { corpus, model, endpoint, flags, limit, out } => {
            let corpus = Corpus::load_dir(&corpus)?;
            let cfg = flags.to_config();
            let meter = Arc::new(QueryMeter::new());
            match (model, endpoint) {
                (Some(path), None) => {
                    let model = load_trained(&path, &corpus.vocab)?;
                    let oracle = make_oracle(model, cfg.knowledge, meter)?;
                    run_attack(&corpus, &oracle, &cfg, limit, out.as_ref())?;
                }
                (None, Some(addr)) => {
                    let addr = addr.parse()?;
                    let backend =
                        RemoteBackend::new(addr, "cli", cfg.knowledge == Knowledge::Score);
                    let oracle = make_oracle(backend, cfg.knowledge, meter)?;
                    run_attack(&corpus, &oracle, &cfg, limit, out.as_ref())?;
                }
                _ => return Err("pass exactly one of --model or --endpoint".into()),
            }
        }
        Command::Bench { corpus, model, budgets, seeds, limit, window, mw, window_budget, out } => {
            let corpus_dir = corpus.display().to_string();
            let model_path = model.display().to_string();
            let corpus = Corpus::load_dir(&corpus)?;
            let model = load_trained(&model, &corpus.vocab)?;
            let mut matrix = BenchMatrix::standard();
            matrix.budgets = budgets;
            matrix.seeds = (0..seeds).collect();
            let mut base = AttackConfig::new(
                Knowledge::Decision,
                PerturbType::Random,
                AddingMethod::LinearIteration,
            );
            base.n = window;
            base.m_w = mw;
            base.b = window_budget;
            let targets: Vec<_> = corpus
                .class(Label::Malicious)
                .into_iter()
                .take(limit)
                .cloned()
                .collect();
            let benign = benign_provider(&corpus);
            let report = bench(
                &model,
                &targets,
                Arc::new(corpus.vocab.clone()),
                benign.as_ref(),
                &ArgPools::new(),
                &base,
                &matrix,
                &corpus_dir,
                &model_path,
            )?;
            write_csv(&report.rows, &out)?;
            print!("{}", render_table(&report));
            println!("wrote {}", out.display());
        }
        Command::Serve { model, vocab, addr, cost, throttle_max, throttle_window_ms, score } => {
            let vocab = Vocabulary::load(&vocab)?;
            let model = load_trained(&model, &vocab)?;
            let policy = BillingPolicy {
                cost_per_query: cost,
                throttle: throttle_max
                    .map(|max_queries| ThrottlePolicy { max_queries, window_ms: throttle_window_ms }),
                knowledge_mode: if score { Knowledge::Score } else { Knowledge::Decision },
            };
            let handle = serve(model, policy, &addr)?;
            println!("serving on {}", handle.addr());
            loop {
                std::thread::park();
            }
        }
        Command::Stats { endpoint } => {
            let clients = fetch_stats(endpoint.parse()?)?;
            println!("{:<24} {:>12} {:>12}", "client", "queries", "spend");
            for c in clients {
                println!("{:<24} {:>12} {:>12.2}", c.client_id, c.queries_total, c.spend_total);
            }
        }
        Command::Report { input } => {
            let rows = read_csv(&input)?;
            let report = BenchmarkReport {
                rows,
                corpus_ref: String::new(),
                model_ref: String::new(),
                version: env!("CARGO_PKG_VERSION").to_string(),
            };
            print!("{}", render_table(&report));
        }
    }
    Ok(())
}

// Exit codes: 0 success, 1 usage error, 2 runtime failure.
fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let ok = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
