use std::collections::BTreeMap;
use std::path::PathBuf;

use proptest::prelude::*;
use sqlharness::corpus::{
    build_corpus, emit_train_profile, export_corpus, load_train_profile, read_corpus, CorpusSpec, TrainMethod,
    TrainProfile,
};
use sqlharness::dataset::{load_examples, load_schemas, DatasetBundle, Dialect, ExampleTriple};
use sqlharness::par::Parallelism;
use sqlharness::prompt::{PromptTemplate, TokenBudget};
use sqlharness::selector::{SelectionPolicy, ShotMode, Strategy, TrigramEmbedder, DEFAULT_SHOT_CHOICES};

fn spider() -> (DatasetBundle, Vec<ExampleTriple>) {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/spider");
    let mut bundle = DatasetBundle::new("spider", Dialect::Spider);
    bundle.add_schemas(load_schemas(&dir.join("tables.json")).unwrap()).unwrap();
    let dev = load_examples(&dir.join("dev.json"), &bundle).unwrap();
    (bundle, dev)
}

fn spec<'a>(
    template: &'a PromptTemplate,
    policy: &'a SelectionPolicy,
    mode: ShotMode,
    embedder: &'a TrigramEmbedder,
    parallelism: Parallelism,
) -> CorpusSpec<'a> {
    CorpusSpec {
        template,
        budget: TokenBudget::default(),
        policy,
        mode,
        choices: &DEFAULT_SHOT_CHOICES,
        embedder,
        parallelism,
    }
}

#[test]
fn zero_shot_over_ten_examples() {
    let (bundle, dev) = spider();
    let template = PromptTemplate::sentence();
    let policy = SelectionPolicy::default();
    let e = TrigramEmbedder::default();
    let s = spec(&template, &policy, ShotMode::FixedK, &e, Parallelism::default());
    let (records, summary) = build_corpus(&dev[..10], &bundle, &s).unwrap();
    assert_eq!(records.len(), 10);
    assert_eq!(summary.shot_histogram, BTreeMap::from([(0, 10)]));
    for (r, ex) in records.iter().zip(&dev) {
        assert_eq!(r.output, ex.gold_sql);
        assert!(r.meta.exemplar_ids.is_empty());
    }
}

fn scan(records: &[sqlharness::corpus::CorpusRecord], limit: usize) {
    for r in records {
        assert!(r.instruction.ends_with("Response: "));
        let questions = r.instruction.lines().filter(|l| l.starts_with("Q: ")).count();
        assert_eq!(questions, r.meta.shots + 1, "record {}", r.meta.example_index);
        assert_eq!(r.meta.exemplar_ids.len(), r.meta.shots);
        assert!(!r.meta.exemplar_ids.contains(&r.meta.example_index));
        assert!(sqlharness::prompt::estimate_tokens(&r.instruction) <= limit);
    }
}

#[test]
fn random_shot_export_is_deterministic_and_well_formed() {
    let (bundle, dev) = spider();
    let split = &dev[..120];
    let template = PromptTemplate::sentence();
    let policy = SelectionPolicy {
        strategy: Strategy::Random,
        seed: 7,
        ..Default::default()
    };
    let e = TrigramEmbedder::default();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let s = spec(&template, &policy, ShotMode::RandomShot, &e, Parallelism::Parallel);
    let sum_a = export_corpus(split, &bundle, &s, &a).unwrap();
    let s = spec(&template, &policy, ShotMode::RandomShot, &e, Parallelism::Sequential);
    let sum_b = export_corpus(split, &bundle, &s, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(sum_a, sum_b);
    assert!(!a.with_extension("partial").exists());

    let records = read_corpus(&a).unwrap();
    assert_eq!(records.len() + sum_a.skipped.len(), split.len());
    scan(&records, TokenBudget::default().prompt_limit());
}

#[test]
fn similarity_corpora_do_not_leak() {
    let (bundle, dev) = spider();
    let template = PromptTemplate::sentence();
    let e = TrigramEmbedder::default();
    for strategy in [Strategy::QuestionSimilarity, Strategy::DualSimilarity] {
        let policy = SelectionPolicy {
            strategy,
            k: 3,
            ..Default::default()
        };
        let s = spec(&template, &policy, ShotMode::FixedK, &e, Parallelism::default());
        let (records, _) = build_corpus(&dev[..60], &bundle, &s).unwrap();
        scan(&records, TokenBudget::default().prompt_limit());
        assert!(records.iter().all(|r| r.meta.shots == 3));
    }
}

#[test]
fn over_budget_examples_are_reported() {
    let (bundle, dev) = spider();
    let template = PromptTemplate::sentence();
    let policy = SelectionPolicy::default();
    let e = TrigramEmbedder::default();
    let mut s = spec(&template, &policy, ShotMode::FixedK, &e, Parallelism::default());
    s.budget = TokenBudget {
        max_context: 120,
        reserved_response: 100,
    };
    let (records, summary) = build_corpus(&dev[..5], &bundle, &s).unwrap();
    assert!(records.is_empty());
    assert_eq!(summary.skipped.len(), 5);
    assert!(summary.skipped[0].reason.contains("budget"));
}

fn synthetic(n: usize) -> (DatasetBundle, Vec<ExampleTriple>) {
    let (spider_bundle, _) = spider();
    let mut bundle = DatasetBundle::new("synthetic", Dialect::Spider);
    let schema = spider_bundle.schema("concert_singer").unwrap().clone();
    bundle.add_schemas(vec![schema]).unwrap();
    let examples = (0..n)
        .map(|i| ExampleTriple {
            index: i,
            question: format!("How many singers are older than {i}?"),
            gold_sql: format!("SELECT count(*) FROM singer WHERE age > {i}"),
            db_id: "concert_singer".into(),
            difficulty: None,
            evidence: None,
        })
        .collect();
    (bundle, examples)
}

#[test]
fn random_shot_mixing_is_uniform() {
    let (bundle, examples) = synthetic(10_000);
    let template = PromptTemplate::sentence();
    let policy = SelectionPolicy {
        strategy: Strategy::Random,
        ..Default::default()
    };
    let e = TrigramEmbedder::default();
    let s = spec(&template, &policy, ShotMode::RandomShot, &e, Parallelism::default());
    let (records, summary) = build_corpus(&examples, &bundle, &s).unwrap();
    assert!(summary.skipped.is_empty());
    assert_eq!(summary.records, 10_000);
    for k in [0, 1, 3, 5] {
        let share = summary.shot_histogram[&k] as f64 / 10_000.0;
        assert!((share - 0.25).abs() <= 0.02, "{k}: {share}");
    }
    assert!(records.iter().all(|r| !r.meta.exemplar_ids.contains(&r.meta.example_index)));
    assert!(summary.token_estimates.max <= 2048 - 512);
}

#[test]
fn default_profile_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = emit_train_profile(&TrainProfile::default(), &dir.path().join("lora.toml")).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    for line in [
        "method = \"lora\"",
        "lora_rank = 64",
        "lora_alpha = 32",
        "learning_rate = 0.0002",
        "epochs = 8",
        "max_source_length = 2048",
        "max_target_length = 512",
    ] {
        assert!(text.lines().any(|l| l == line), "missing `{line}` in\n{text}");
    }
    assert_eq!(load_train_profile(&path).unwrap(), TrainProfile::default());

    let q = TrainProfile::with_method(TrainMethod::Qlora);
    let qpath = emit_train_profile(&q, &dir.path().join("qlora.toml")).unwrap();
    let loaded = load_train_profile(&qpath).unwrap();
    assert_eq!(loaded, q);
    assert_eq!(
        TrainProfile {
            method: TrainMethod::Lora,
            ..loaded
        },
        TrainProfile::default()
    );
}

proptest! {
    #[test]
    fn profiles_round_trip(
        rank in 1u32..512,
        alpha in 1u32..512,
        lr in 1e-6f64..1.0,
        epochs in 1u32..50,
        qlora in any::<bool>(),
        name in "[a-zA-Z0-9/_.-]{1,40}",
    ) {
        let p = TrainProfile {
            method: if qlora { TrainMethod::Qlora } else { TrainMethod::Lora },
            lora_rank: rank,
            lora_alpha: alpha,
            learning_rate: lr,
            epochs,
            model_name: name,
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let path = emit_train_profile(&p, &dir.path().join("p.toml")).unwrap();
        prop_assert_eq!(load_train_profile(&path).unwrap(), p);
    }
}
