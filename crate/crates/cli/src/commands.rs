use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use aswa_core::checkpoint::{self, CheckpointMeta, ENSEMBLE_SUFFIX};
use aswa_core::eval::evaluate_split_with;
use aswa_core::kg::{load_dataset, load_dataset_with, LoadOptions};
use aswa_core::optim::training_graph;
use aswa_core::queries::{
    evaluate_queries_with, from_jsonl, generate_queries, to_jsonl, QaConfig, QueryType,
};
use aswa_core::{
    run_training, EmbeddingSet, Exec, KnowledgeGraph, ModelKind, RankingReport, Split,
    StrategyKind, TrainConfig,
};
use serde::Serialize;

use crate::args::{EvalArgs, GenQueriesArgs, QaArgs, StrategyName, TrainArgs};
use crate::summary::{DatasetInfo, Metrics, SeedRun, SplitMetrics, Summary};
use crate::CliError;

/// Present while a training run is in progress or after it failed.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn strategy(args: &TrainArgs) -> StrategyKind {
    match args.strategy {
        StrategyName::None => StrategyKind::None,
        StrategyName::Swa => StrategyKind::Swa {
            start_epoch: args.swa_start,
        },
        StrategyName::Aswa => StrategyKind::Aswa,
        StrategyName::EarlyStop => StrategyKind::EarlyStopping {
            patience: args.patience,
        },
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn evaluate_all(
    kg: &KnowledgeGraph,
    params: &EmbeddingSet,
    model: ModelKind,
    exec: Exec,
) -> SplitMetrics {
    [Split::Train, Split::Valid, Split::Test]
        .into_iter()
        .filter(|&s| !kg.split(s).is_empty())
        .map(|s| {
            (
                s.name().to_owned(),
                Metrics::from(&evaluate_split_with(kg, params, model, s, exec)),
            )
        })
        .collect()
}

fn train_seed(kg: &KnowledgeGraph, config: &TrainConfig, dir: &Path) -> Result<SeedRun, CliError> {
    let report = run_training(kg, config)?;
    // metrics use the same splits the run saw, holdout included
    let seen = training_graph(kg, config)?;
    let running_params = report
        .running_params
        .as_ref()
        .expect("run keeps its parameters");

    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write(
        &dir.join("report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    write(&dir.join("curves.csv"), report.curves_csv())?;
    let meta = CheckpointMeta::new(config.model, kg, running_params, config.seed);
    checkpoint::save(&dir.join("checkpoint"), &meta, running_params)?;

    let running = evaluate_all(&seen, running_params, config.model, config.exec);
    let ensemble = match &report.ensemble_params {
        Some(theta) => {
            checkpoint::save(
                &dir.join(format!("checkpoint{ENSEMBLE_SUFFIX}")),
                &meta,
                theta,
            )?;
            Some(evaluate_all(&seen, theta, config.model, config.exec))
        }
        None => None,
    };
    Ok(SeedRun {
        seed: config.seed,
        epochs_run: report.epochs.len(),
        stopped_at: report.stopped_at,
        running,
        ensemble,
    })
}

/// Trains one model per seed under `args.out` and writes `summary.json`.
pub fn train(args: &TrainArgs, exec: Exec) -> Result<Summary, CliError> {
    if args.seeds.is_empty() {
        return Err(CliError::Usage("at least one seed is required".into()));
    }
    if args.seeds.iter().collect::<BTreeSet<_>>().len() != args.seeds.len() {
        return Err(CliError::Usage(format!(
            "seeds must be distinct: {:?}",
            args.seeds
        )));
    }
    let base = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        d: args.d,
        seed: args.seeds[0],
        label_smoothing: args.label_smoothing,
        model: args.model,
        strategy: strategy(args),
        holdout_ratio: args.holdout_ratio,
        forced_policy: None,
        exec,
    };
    base.validate()?;
    let kg = load_dataset_with(
        &args.dataset,
        LoadOptions {
            no_test: args.no_test,
        },
    )?;

    let out = &args.out;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let marker = out.join(INCOMPLETE_MARKER);
    write(
        &marker,
        "training in progress or failed; outputs here are partial\n",
    )?;
    let summary_path = out.join("summary.json");
    if summary_path.exists() {
        fs::remove_file(&summary_path).map_err(|e| CliError::io(&summary_path, e))?;
    }

    let mut runs = Vec::with_capacity(args.seeds.len());
    for &seed in &args.seeds {
        let config = TrainConfig { seed, ..base };
        runs.push(train_seed(&kg, &config, &out.join(format!("seed-{seed}")))?);
    }

    let mut config = serde_json::to_value(base)?;
    if let Some(map) = config.as_object_mut() {
        map.remove("seed");
    }
    let dataset = DatasetInfo {
        name: dataset_name(&args.dataset),
        vocab_hash: kg.vocab_hash(),
        stats: kg.stats(),
    };
    let summary = Summary::new(dataset, config, runs);
    write(&summary_path, crate::summary::to_json(&summary))?;
    fs::remove_file(&marker).map_err(|e| CliError::io(&marker, e))?;
    Ok(summary)
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    model: String,
    d: usize,
    report: &'a RankingReport,
}

pub fn eval(args: &EvalArgs, exec: Exec) -> Result<(), CliError> {
    let (meta, params) = checkpoint::load(&args.checkpoint)?;
    // datasets trained without a test file are evaluated the same way
    let no_test = !args.dataset.join("test.txt").exists();
    let kg = load_dataset_with(&args.dataset, LoadOptions { no_test })?;
    meta.check_dataset(&kg)?;
    let triples = kg.split(args.split);
    if triples.is_empty() {
        return Err(CliError::Data(format!(
            "{} split is empty",
            args.split.name()
        )));
    }
    let report = evaluate_split_with(&kg, &params, meta.model, args.split, exec);

    if let Some(path) = &args.per_query {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["head", "relation", "answer", "direction", "rank"])?;
        let label = |i: usize| kg.entities().label(i).unwrap_or_default().to_owned();
        for (q, rank) in report.per_query_ranks.iter().enumerate() {
            let t = triples[q / 2];
            let relation = kg
                .relations()
                .label(t.relation)
                .unwrap_or_default()
                .to_owned();
            let (head, answer, direction) = if q % 2 == 0 {
                (label(t.head), label(t.tail), "tail")
            } else {
                (label(t.tail), label(t.head), "head")
            };
            w.write_record([
                head,
                relation,
                answer,
                direction.to_owned(),
                rank.to_string(),
            ])?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }

    let out = EvalOutput {
        model: meta.model.to_string(),
        d: meta.d,
        report: &report,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

pub fn gen_queries(args: &GenQueriesArgs) -> Result<(), CliError> {
    let kg = load_dataset(&args.dataset)?;
    let types: Vec<QueryType> = if args.types.is_empty() {
        QueryType::ALL.to_vec()
    } else {
        args.types.clone()
    };
    let mut text = String::new();
    let mut counts = BTreeMap::new();
    for qtype in types {
        let queries = generate_queries(&kg, qtype, args.count, args.seed)?;
        text.push_str(&to_jsonl(&queries)?);
        counts.insert(qtype.name(), queries.len());
    }
    write(&args.out, text)?;
    println!("{}", serde_json::to_string_pretty(&counts)?);
    Ok(())
}

#[derive(Serialize)]
struct QaOutput {
    model: String,
    config: QaConfig,
    overall: RankingReport,
    by_type: BTreeMap<&'static str, RankingReport>,
}

pub fn qa(args: &QaArgs, exec: Exec) -> Result<(), CliError> {
    if args.beam_k == 0 {
        return Err(CliError::Usage("--beam-k must be at least 1".into()));
    }
    let (meta, params) = checkpoint::load(&args.checkpoint)?;
    let text = fs::read_to_string(&args.queries).map_err(|e| CliError::io(&args.queries, e))?;
    let queries = from_jsonl(&text)?;
    if queries.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no queries",
            args.queries.display()
        )));
    }
    for q in &queries {
        q.validate(meta.entity_count, meta.base_relation_count)
            .map_err(|e| CliError::Data(format!("{}: {e}", args.queries.display())))?;
    }
    let config = QaConfig {
        beam_k: args.beam_k,
        tnorm: args.tnorm,
        tconorm: args.tconorm,
    };

    let overall = evaluate_queries_with(&params, meta.model, &queries, &config, exec)?;
    let mut by_type = BTreeMap::new();
    for qtype in QueryType::ALL {
        let group: Vec<_> = queries
            .iter()
            .filter(|q| q.qtype == qtype)
            .cloned()
            .collect();
        if !group.is_empty() {
            by_type.insert(
                qtype.name(),
                evaluate_queries_with(&params, meta.model, &group, &config, exec)?,
            );
        }
    }

    if let Some(path) = &args.out {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["query", "type", "answer", "rank"])?;
        let mut ranks = overall.per_query_ranks.iter();
        for (i, q) in queries.iter().enumerate() {
            for &a in &q.answers {
                let rank = ranks.next().expect("one rank per answer");
                w.write_record([
                    i.to_string(),
                    q.qtype.name().to_owned(),
                    a.to_string(),
                    rank.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }

    let out = QaOutput {
        model: meta.model.to_string(),
        config,
        overall,
        by_type,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
