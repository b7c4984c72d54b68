mod support;

use aswa_core::ensemble::{EnsembleState, ForcedPolicy, StrategyKind};
use aswa_core::exec::Exec;
use aswa_core::kg::{KnowledgeGraph, Triple};
use aswa_core::matrix::Matrix;
use aswa_core::models::{init_embeddings, EmbeddingSet, ModelKind};
use aswa_core::optim::{run_training, train_epoch, training_graph, AdamState, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_kg(seed: u64) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triple = || {
        Triple::new(
            rng.random_range(0..30),
            rng.random_range(0..4),
            rng.random_range(0..30),
        )
    };
    let train: Vec<Triple> = (0..300).map(|_| triple()).collect();
    let valid: Vec<Triple> = (0..30).map(|_| triple()).collect();
    let test: Vec<Triple> = (0..30).map(|_| triple()).collect();
    KnowledgeGraph::from_indexed(30, 4, train, valid, test).unwrap()
}

fn config(model: ModelKind, strategy: StrategyKind) -> TrainConfig {
    TrainConfig {
        epochs: 12,
        batch_size: 64,
        learning_rate: 0.05,
        d: 8,
        seed: 5,
        model,
        strategy,
        ..TrainConfig::default()
    }
}

/// Elementwise mean computed in one pass, independent of the running update.
fn batch_mean(snapshots: &[EmbeddingSet]) -> EmbeddingSet {
    let n = snapshots.len() as f64;
    let mean = |pick: fn(&EmbeddingSet) -> &Matrix| {
        let first = pick(&snapshots[0]);
        let mut sum = vec![0.0; first.as_slice().len()];
        for s in snapshots {
            for (acc, x) in sum.iter_mut().zip(pick(s).as_slice()) {
                *acc += x;
            }
        }
        Matrix::from_vec(
            first.rows(),
            first.cols(),
            sum.into_iter().map(|x| x / n).collect(),
        )
        .unwrap()
    };
    EmbeddingSet::new(mean(|s| &s.entity), mean(|s| &s.relation)).unwrap()
}

fn assert_close(a: &EmbeddingSet, b: &EmbeddingSet, tol: f64) {
    for (x, y) in a.values().zip(b.values()) {
        assert!((x - y).abs() <= tol * y.abs().max(1.0), "{x} vs {y}");
    }
}

#[test]
fn running_average_matches_batch_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let snapshots: Vec<EmbeddingSet> = (0..50)
        .map(|_| {
            let mut p = init_embeddings(ModelKind::QMult, 7, 3, 8, rng.random()).unwrap();
            for x in p.entity.as_mut_slice() {
                *x *= rng.random_range(1.0..50.0);
            }
            p
        })
        .collect();
    let mut state = EnsembleState::new();
    for s in &snapshots {
        state.swa_update(s).unwrap();
    }
    assert_eq!(state.weight_sum(), 50.0);
    assert_close(state.theta().unwrap(), &batch_mean(&snapshots), 1e-9);
}

#[test]
fn swa_from_zero_is_the_mean_of_epoch_snapshots() {
    let kg = random_kg(1);
    let cfg = config(ModelKind::ComplEx, StrategyKind::Swa { start_epoch: 0 });
    let report = run_training(&kg, &cfg).unwrap();

    let kg = training_graph(&kg, &cfg).unwrap();
    let mut params = init_embeddings(
        cfg.model,
        kg.entity_count(),
        kg.augmented_relation_count(),
        cfg.d,
        cfg.seed,
    )
    .unwrap();
    let mut adam = AdamState::new(&params);
    let mut snapshots = Vec::new();
    for epoch in 0..cfg.epochs {
        train_epoch(&kg, &mut params, &mut adam, &cfg, epoch).unwrap();
        snapshots.push(params.clone());
    }
    assert_eq!(report.running_params.as_ref().unwrap(), &params);
    assert_close(
        report.ensemble_params.as_ref().unwrap(),
        &batch_mean(&snapshots),
        1e-9,
    );
}

#[test]
fn swa_start_epoch_skips_early_snapshots() {
    let kg = random_kg(2);
    let cfg = config(ModelKind::DistMult, StrategyKind::Swa { start_epoch: 8 });
    let report = run_training(&kg, &cfg).unwrap();
    assert_eq!(report.ensemble.as_ref().unwrap().weight_sum, 4.0);
    assert!(report.epochs[..8].iter().all(|e| e.val_ensemble.is_none()));
}

#[test]
fn accept_all_reproduces_swa_bit_for_bit() {
    let kg = random_kg(3);
    for model in ModelKind::ALL {
        let swa = run_training(&kg, &config(model, StrategyKind::Swa { start_epoch: 0 })).unwrap();
        let mut forced = config(model, StrategyKind::Aswa);
        forced.forced_policy = Some(ForcedPolicy::AcceptAll);
        let aswa = run_training(&kg, &forced).unwrap();
        assert_eq!(swa.ensemble_params, aswa.ensemble_params, "{model}");
    }
}

#[test]
fn reject_all_keeps_no_ensemble() {
    let kg = random_kg(3);
    let mut cfg = config(ModelKind::DistMult, StrategyKind::Aswa);
    cfg.forced_policy = Some(ForcedPolicy::RejectAll);
    let report = run_training(&kg, &cfg).unwrap();
    assert_eq!(report.ensemble.as_ref().unwrap().weight_sum, 0.0);
}

#[test]
fn adaptive_val_best_never_decreases() {
    let kg = random_kg(4);
    let report = run_training(&kg, &config(ModelKind::QMult, StrategyKind::Aswa)).unwrap();
    let log = &report.ensemble.as_ref().unwrap().decision_log;
    assert_eq!(log.len(), 12);
    for pair in report.epochs.windows(2) {
        assert!(pair[1].val_ensemble >= pair[0].val_ensemble);
    }
}

#[test]
fn sequential_and_parallel_runs_are_identical() {
    let kg = random_kg(5);
    let mut cfg = config(ModelKind::QMult, StrategyKind::Aswa);
    cfg.exec = Exec::Sequential;
    let seq = run_training(&kg, &cfg).unwrap();
    cfg.exec = Exec::Parallel;
    let par = run_training(&kg, &cfg).unwrap();
    assert_eq!(seq.running_params, par.running_params);
    assert_eq!(seq.ensemble_params, par.ensemble_params);
    assert_eq!(seq.losses(), par.losses());
}

#[test]
fn loss_decreases_on_a_learnable_graph() {
    let kg = support::fifteen_entity_kg();
    let mut cfg = config(ModelKind::DistMult, StrategyKind::None);
    cfg.epochs = 40;
    cfg.d = 16;
    let losses = run_training(&kg, &cfg).unwrap().losses();
    assert!(losses.last().unwrap() < &(losses[0] * 0.5), "{losses:?}");
}

#[test]
fn early_stopping_halts_and_keeps_the_best_snapshot() {
    let kg = random_kg(6);
    let mut cfg = config(
        ModelKind::DistMult,
        StrategyKind::EarlyStopping { patience: 2 },
    );
    cfg.epochs = 60;
    cfg.learning_rate = 0.3;
    let report = run_training(&kg, &cfg).unwrap();
    let history: Vec<f64> = report
        .epochs
        .iter()
        .map(|e| e.val_running.unwrap())
        .collect();
    let best = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(report.ensemble.as_ref().unwrap().val_best, best);
    if let Some(stop) = report.stopped_at {
        let first_best = history.iter().position(|&v| v == best).unwrap();
        assert_eq!(stop, first_best + 2);
    }
}
