use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde_json::json;
use sqlharness::corpus::{emit_train_profile, export_corpus, CorpusSpec, TrainMethod, TrainProfile};
use sqlharness::dataset::{DatasetBundle, ExampleTriple, Split};
use sqlharness::inference::{
    finalize_predictions, predict_batch_with, read_predictions, ChatClient, FailureKind, Prediction,
    PredictionFailure, PredictionWriter,
};
use sqlharness::inference::stub::{StubConfig, StubMode, StubServer};
use sqlharness::metrics::{score_run, write_eval_records};
use sqlharness::par::{self, Parallelism};
use sqlharness::prompt::PromptBuilder;
use sqlharness::report::{compare as compare_runs, parse_summary_csv, render_delta, render_summary, summarize, ReportFormat};
use sqlharness::selector::{build_index, SelectionPolicy, Selector, ShotMode, Strategy, TrigramEmbedder};

use crate::config::RunConfig;
use crate::{CliError, Format, Global};

fn load_config(g: &Global) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&g.config)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &g.output_dir {
        // Command-line paths are relative to the working directory.
        cfg.output_dir = std::path::absolute(dir).map_err(|e| CliError::Validation(e.to_string()))?;
    }
    if let Some(id) = &g.run_id {
        cfg.run_id = Some(id.clone());
    }
    cfg.check()?;
    Ok(cfg)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, body).map_err(io_err(path))
}

fn run_id_of(dir: &Path) -> String {
    dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn split_examples(bundle: &DatasetBundle, split: Split) -> Result<&[ExampleTriple], CliError> {
    if !bundle.splits.contains_key(&split) {
        return Err(CliError::Validation(format!("split `{split}` is not configured")));
    }
    Ok(bundle.split(split))
}

pub fn ingest(g: &Global) -> Result<(), CliError> {
    let cfg = load_config(g)?;
    let bundle = cfg.load_bundle()?;
    let dir = cfg.run_dir(true);

    let mut per_db: BTreeMap<&str, BTreeMap<Split, usize>> = BTreeMap::new();
    for (split, examples) in &bundle.splits {
        for ex in examples {
            *per_db.entry(ex.db_id.as_str()).or_default().entry(*split).or_default() += 1;
        }
    }
    let manifest = json!({
        "dataset": bundle.name,
        "dialect": bundle.dialect(),
        "config_fingerprint": cfg.fingerprint(),
        "seed": cfg.seed,
        "splits": bundle.splits.iter().map(|(s, e)| (s.to_string(), e.len())).collect::<BTreeMap<_, _>>(),
        "schemas": bundle.schemas.len(),
        "databases": per_db,
        "db_files_found": bundle.db_files.keys().collect::<Vec<_>>(),
    });
    let path = dir.join("manifest.json");
    write_file(&path, &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"))?;
    for (split, examples) in &bundle.splits {
        println!("{split}: {} examples", examples.len());
    }
    println!("{} databases, {} with files", bundle.schemas.len(), bundle.db_files.len());
    println!("{}", dir.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    FixedK,
    RandomShot,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Random,
    QuestionSimilarity,
    DualSimilarity,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Random => Strategy::Random,
            StrategyArg::QuestionSimilarity => Strategy::QuestionSimilarity,
            StrategyArg::DualSimilarity => Strategy::DualSimilarity,
        }
    }
}

#[derive(Args)]
pub struct CorpusArgs {
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Shot counts for fixed-k mode, e.g. `--k 0,1,3,5`.
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    /// Shot choices for random-shot mode.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    choices: Vec<i64>,
    #[arg(long)]
    split: Option<Split>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
}

pub fn build_corpus(g: &Global, a: &CorpusArgs) -> Result<(), CliError> {
    let cfg = load_config(g)?;
    let bundle = cfg.load_bundle()?;
    let dir = cfg.run_dir(false).join("corpus");
    let split = a.split.unwrap_or(cfg.corpus.split);
    let examples = split_examples(&bundle, split)?;
    let mode = match a.mode {
        Some(Mode::FixedK) => ShotMode::FixedK,
        Some(Mode::RandomShot) => ShotMode::RandomShot,
        None => cfg.corpus.mode,
    };
    let choices = if a.choices.is_empty() { cfg.corpus.choices.clone() } else { a.choices.clone() };
    if choices.iter().any(|c| *c < 0) {
        return Err(CliError::Validation("shot choices must be non-negative".into()));
    }
    let base = SelectionPolicy {
        strategy: a.strategy.map(Strategy::from).unwrap_or(cfg.corpus.strategy),
        ..cfg.policy()
    };
    let embedder = TrigramEmbedder::default();

    let jobs: Vec<(String, SelectionPolicy)> = match mode {
        ShotMode::FixedK => {
            let ks = if a.k.is_empty() { cfg.corpus.ks.clone() } else { a.k.clone() };
            ks.into_iter()
                .map(|k| (format!("{split}_{k}shot"), SelectionPolicy { k, ..base.clone() }))
                .collect()
        }
        ShotMode::RandomShot => vec![(format!("{split}_random-shot"), base.clone())],
    };
    for (stem, policy) in jobs {
        let spec = CorpusSpec {
            template: &cfg.prompt.template,
            budget: cfg.prompt.budget,
            policy: &policy,
            mode,
            choices: &choices,
            embedder: &embedder,
            parallelism: Parallelism::default(),
        };
        let out = dir.join(format!("{stem}.jsonl"));
        let summary = export_corpus(examples, &bundle, &spec, &out).map_err(|e| CliError::Runtime(e.to_string()))?;
        write_file(
            &dir.join(format!("{stem}.summary.json")),
            &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
        )?;
        println!(
            "{}: {} records, {} skipped",
            out.display(),
            summary.records,
            summary.skipped.len()
        );
    }
    Ok(())
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    split: Option<Split>,
    /// Exemplars per prompt.
    #[arg(long)]
    shots: Option<usize>,
    /// Only the first N examples of the split.
    #[arg(long)]
    limit: Option<usize>,
}

fn failed(index: usize, message: String) -> Prediction {
    Prediction {
        example_index: index,
        raw_text: String::new(),
        extracted_sql: String::new(),
        latency_ms: 0,
        attempt_count: 0,
        error: Some(PredictionFailure {
            kind: FailureKind::Permanent,
            status: None,
            message,
        }),
    }
}

pub fn predict(g: &Global, a: &PredictArgs) -> Result<(), CliError> {
    let cfg = load_config(g)?;
    let bundle = cfg.load_bundle()?;
    let split = a.split.unwrap_or(cfg.predict.split);
    let shots = a.shots.unwrap_or(cfg.predict.shots);
    let mut targets = split_examples(&bundle, split)?;
    if let Some(n) = a.limit {
        targets = &targets[..n.min(targets.len())];
    }
    let dir = cfg.run_dir(false).join("predictions");
    let dest = dir.join(format!("{split}_{shots}shot.jsonl"));
    if dest.exists() {
        println!("{} already complete", dest.display());
        return Ok(());
    }
    let partial = dest.with_extension("partial");
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    let done: BTreeSet<usize> = if partial.exists() {
        read_predictions(&partial)
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .into_iter()
            .map(|p| p.example_index)
            .collect()
    } else {
        BTreeSet::new()
    };
    let todo: Vec<&ExampleTriple> = targets.iter().filter(|e| !done.contains(&e.index)).collect();
    if !done.is_empty() {
        tracing::info!(done = done.len(), remaining = todo.len(), "resuming");
    }

    let policy = SelectionPolicy { k: shots, ..cfg.policy() };
    let pool = split_examples(&bundle, policy.pool)?;
    let available = pool.len() - usize::from(policy.pool == split && policy.exclude_same_example);
    if shots > available {
        return Err(CliError::Validation(format!(
            "{shots} shots requested but the {} pool has only {available} candidates",
            policy.pool
        )));
    }
    let embedder = TrigramEmbedder::default();
    let index = if shots > 0 && policy.strategy != Strategy::Random {
        build_index(pool, &embedder, Parallelism::default()).map_err(|e| CliError::Runtime(e.to_string()))?
    } else {
        Default::default()
    };
    let selector = Selector {
        pool,
        index: &index,
        embedder: &embedder,
    };
    let builder = PromptBuilder::new(&cfg.prompt.template).with_budget(cfg.prompt.budget);
    let built = par::map(&todo, Parallelism::default(), |ex| {
        let exemplars = selector.select(ex, &policy, None).map_err(|e| failed(ex.index, e.to_string()))?;
        builder
            .build(ex, &exemplars, &bundle.schemas)
            .map_err(|e| failed(ex.index, e.to_string()))
    });

    let mut writer = PredictionWriter::open_append(&partial).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut envelopes = Vec::with_capacity(built.len());
    for b in built {
        match b {
            Ok(env) => envelopes.push(env),
            Err(p) => writer.write(&p).map_err(|e| CliError::Runtime(e.to_string()))?,
        }
    }

    let client = ChatClient::new(cfg.endpoint()).map_err(|e| CliError::Runtime(e.to_string()))?;
    let rt = runtime()?;
    let mut write_error = None;
    let interrupted = rt.block_on(async {
        let batch = predict_batch_with(&envelopes, &client, |p| {
            if write_error.is_none() {
                if let Err(e) = writer.write(p) {
                    write_error = Some(e);
                }
            }
        });
        tokio::select! {
            _ = batch => false,
            _ = tokio::signal::ctrl_c() => true,
        }
    });
    if let Some(e) = write_error {
        return Err(CliError::Runtime(e.to_string()));
    }
    drop(writer);
    if interrupted {
        return Err(CliError::Runtime(format!(
            "interrupted; completed predictions are kept in {} and a rerun resumes from there",
            partial.display()
        )));
    }

    let preds = finalize_predictions(&partial, &dest).map_err(|e| CliError::Runtime(e.to_string()))?;
    let failures = preds.iter().filter(|p| p.error.is_some()).count();
    println!("{}: {} predictions, {} failed", dest.display(), preds.len(), failures);
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Prediction file; defaults to the configured predict split and shots.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Split the predictions belong to.
    #[arg(long)]
    split: Option<Split>,
    /// Skip execution accuracy.
    #[arg(long)]
    em_only: bool,
}

pub fn evaluate(g: &Global, a: &EvaluateArgs) -> Result<(), CliError> {
    let cfg = load_config(g)?;
    let bundle = cfg.load_bundle()?;
    let run_dir = cfg.run_dir(false);
    let split = a.split.unwrap_or(cfg.predict.split);
    let path = match &a.predictions {
        Some(p) => p.clone(),
        None => run_dir
            .join("predictions")
            .join(format!("{split}_{}shot.jsonl", cfg.predict.shots)),
    };
    if !path.is_file() {
        return Err(CliError::Validation(format!("prediction file not found: {}", path.display())));
    }
    let preds = read_predictions(&path).map_err(|e| CliError::Validation(e.to_string()))?;
    let predicted: BTreeSet<usize> = preds.iter().map(|p| p.example_index).collect();
    let all = split_examples(&bundle, split)?;
    let examples: Vec<ExampleTriple> = all.iter().filter(|e| predicted.contains(&e.index)).cloned().collect();
    if examples.len() < all.len() {
        tracing::warn!(
            unpredicted = all.len() - examples.len(),
            "scoring only the examples present in the prediction file"
        );
    }
    let unknown = predicted.len() - examples.len();
    if unknown > 0 {
        tracing::warn!(unknown, "predictions for indices not in the {split} split are ignored");
    }

    let mut opts = cfg.metrics.clone();
    if a.em_only {
        opts.ex = false;
        opts.ves = false;
    }
    let records = score_run(&examples, &preds, &bundle, &opts);
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    let eval_path = run_dir.join("eval").join(format!("{stem}.jsonl"));
    if let Some(d) = eval_path.parent() {
        std::fs::create_dir_all(d).map_err(io_err(d))?;
    }
    write_eval_records(&eval_path, &records).map_err(io_err(&eval_path))?;

    let scheme = bundle.dialect().difficulty_scheme();
    let summary = summarize(&records, &run_id_of(&run_dir), scheme, &cfg.fingerprint());
    let reports = run_dir.join("reports");
    let table = render_summary(&summary, ReportFormat::PlainTable);
    write_file(&reports.join(format!("{stem}.txt")), &table)?;
    write_file(&reports.join(format!("{stem}.csv")), &render_summary(&summary, ReportFormat::Csv))?;
    write_file(&reports.join(format!("{stem}.json")), &render_summary(&summary, ReportFormat::Structured))?;
    print!("{table}");
    Ok(())
}

#[derive(Args)]
pub struct CompareArgs {
    /// Summary CSV of the baseline run.
    base: PathBuf,
    /// Summary CSV of the run being compared.
    target: PathBuf,
    #[arg(long, value_enum, default_value = "plain")]
    format: Format,
    /// Also write the delta here.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn compare(a: &CompareArgs) -> Result<(), CliError> {
    let load = |p: &Path| {
        let text = std::fs::read_to_string(p)
            .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
        parse_summary_csv(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))
    };
    let base = load(&a.base)?;
    let target = load(&a.target)?;
    let delta = compare_runs(&base, &target).map_err(|e| CliError::Validation(e.to_string()))?;
    let text = render_delta(&delta, a.format.into());
    if let Some(out) = &a.out {
        write_file(out, &text)?;
    }
    print!("{text}");
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Lora,
    Qlora,
}

#[derive(Args)]
pub struct ProfileArgs {
    #[arg(long, value_enum, default_value = "lora")]
    method: MethodArg,
    #[arg(long)]
    model_name: Option<String>,
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Output file; defaults to `train/{method}.toml` in the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn emit_profile(g: &Global, a: &ProfileArgs) -> Result<(), CliError> {
    let method = match a.method {
        MethodArg::Lora => TrainMethod::Lora,
        MethodArg::Qlora => TrainMethod::Qlora,
    };
    let mut profile = TrainProfile::with_method(method);
    if let Some(m) = &a.model_name {
        profile.model_name = m.clone();
    }
    if let Some(e) = a.epochs {
        profile.epochs = e;
    }
    if let Some(lr) = a.learning_rate {
        profile.learning_rate = lr;
    }
    profile.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let out = match &a.out {
        Some(p) => p.clone(),
        None => {
            let name = match method {
                TrainMethod::Lora => "lora.toml",
                TrainMethod::Qlora => "qlora.toml",
            };
            load_config(g)?.run_dir(false).join("train").join(name)
        }
    };
    let written = emit_train_profile(&profile, &out).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{}", written.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StubModeArg {
    /// Answer with the gold SQL of the question in the prompt.
    Echo,
    /// Answer with `--sql` every time.
    Fixed,
}

#[derive(Args)]
pub struct StubArgs {
    #[arg(long, value_enum, default_value = "echo")]
    mode: StubModeArg,
    #[arg(long, default_value = "SELECT 1")]
    sql: String,
    #[arg(long, default_value_t = 8000)]
    port: u16,
}

pub fn stub_server(g: &Global, a: &StubArgs) -> Result<(), CliError> {
    let mode = match a.mode {
        StubModeArg::Fixed => StubMode::Fixed(a.sql.clone()),
        StubModeArg::Echo => {
            let bundle = load_config(g)?.load_bundle()?;
            let golds: HashMap<String, String> = bundle
                .splits
                .values()
                .flatten()
                .map(|e| (e.question.trim().to_string(), e.gold_sql.clone()))
                .collect();
            StubMode::GoldEcho(golds)
        }
    };
    let rt = runtime()?;
    rt.block_on(async {
        let addr = std::net::SocketAddr::from(([127, 0, 0, 1], a.port));
        let server = StubServer::bind(StubConfig::new(mode), addr)
            .await
            .map_err(|e| CliError::Runtime(format!("cannot bind {addr}: {e}")))?;
        println!("{}", server.base_url());
        let _ = tokio::signal::ctrl_c().await;
        server.shutdown().await;
        Ok(())
    })
}
