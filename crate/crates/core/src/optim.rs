//! KvsAll binary cross-entropy, Adam, and the epoch loop that drives the
//! ensemble strategies.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::ensemble::{
    early_stop_check, Decision, DecisionRecord, EnsembleState, ForcedPolicy, StrategyKind,
};
use crate::error::{Error, Result};
use crate::eval::validation_metric_with;
use crate::exec::Exec;
use crate::kg::{DatasetStats, KnowledgeGraph};
use crate::matrix::Matrix;
use crate::models::{
    combine_rows, grad_from_combined, init_embeddings, score_combined, EmbeddingSet, ModelKind,
};
use crate::rng::{stream_rng, Stream};

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy over all cells and its gradient w.r.t. the
/// logits. With smoothing `s`, targets become `y (1 - s) + s / columns`.
pub fn bce_with_logits(
    scores: &Matrix,
    targets: &Matrix,
    label_smoothing: f64,
) -> Result<(f64, Matrix)> {
    bce_with_logits_with(scores, targets, label_smoothing, Exec::default())
}

pub fn bce_with_logits_with(
    scores: &Matrix,
    targets: &Matrix,
    label_smoothing: f64,
    exec: Exec,
) -> Result<(f64, Matrix)> {
    scores.check_same_shape(targets, "scores vs targets")?;
    let (rows, cols) = scores.shape();
    let cells = (rows * cols) as f64;
    let smooth = |y: f64| y * (1.0 - label_smoothing) + label_smoothing / cols as f64;

    // log(1 + e^x) - x y, written to stay finite for large |x|
    let row_losses = exec.map(rows, |i| {
        scores
            .row(i)
            .iter()
            .zip(targets.row(i))
            .map(|(&x, &y)| x.max(0.0) - x * smooth(y) + (-x.abs()).exp().ln_1p())
            .sum::<f64>()
    });
    let loss = row_losses.iter().sum::<f64>() / cells;

    let mut grad = Matrix::zeros(rows, cols);
    exec.for_each_row(grad.as_mut_slice(), cols, |i, out| {
        for ((g, &x), &y) in out.iter_mut().zip(scores.row(i)).zip(targets.row(i)) {
            *g = (sigmoid(x) - smooth(y)) / cells;
        }
    });
    Ok((loss, grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
struct Moments {
    m: Matrix,
    v: Matrix,
}

impl Moments {
    fn like(p: &Matrix) -> Self {
        Self {
            m: Matrix::zeros(p.rows(), p.cols()),
            v: Matrix::zeros(p.rows(), p.cols()),
        }
    }
}

/// Bias-corrected Adam over the entity and relation matrices.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub hyper: AdamHyper,
    step: u64,
    entity: Moments,
    relation: Moments,
}

impl AdamState {
    pub fn new(params: &EmbeddingSet) -> Self {
        Self::with_hyper(params, AdamHyper::default())
    }

    pub fn with_hyper(params: &EmbeddingSet, hyper: AdamHyper) -> Self {
        Self {
            hyper,
            step: 0,
            entity: Moments::like(&params.entity),
            relation: Moments::like(&params.relation),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn adam_step(
        &mut self,
        params: &mut EmbeddingSet,
        grad_entity: &Matrix,
        grad_relation: &Matrix,
        lr: f64,
    ) -> Result<()> {
        params
            .entity
            .check_same_shape(grad_entity, "entity gradient")?;
        params
            .relation
            .check_same_shape(grad_relation, "relation gradient")?;
        if !grad_entity.is_finite() {
            return Err(Error::NonFinite("entity gradient".into()));
        }
        if !grad_relation.is_finite() {
            return Err(Error::NonFinite("relation gradient".into()));
        }
        self.step += 1;
        let AdamHyper { beta1, beta2, eps } = self.hyper;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (p, g, mo) in [
            (&mut params.entity, grad_entity, &mut self.entity),
            (&mut params.relation, grad_relation, &mut self.relation),
        ] {
            let ps = p.as_mut_slice();
            let ms = mo.m.as_mut_slice();
            let vs = mo.v.as_mut_slice();
            for (((p, &g), m), v) in ps.iter_mut().zip(g.as_slice()).zip(ms).zip(vs) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub d: usize,
    pub seed: u64,
    pub label_smoothing: f64,
    pub model: ModelKind,
    pub strategy: StrategyKind,
    /// Share of the training split kept for training when a validation
    /// split has to be carved out.
    pub holdout_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced_policy: Option<ForcedPolicy>,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 128,
            batch_size: 1024,
            learning_rate: 0.1,
            d: 128,
            seed: 0,
            label_smoothing: 0.0,
            model: ModelKind::DistMult,
            strategy: StrategyKind::None,
            holdout_ratio: 0.95,
            forced_policy: None,
            exec: Exec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning rate {} must be positive",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return fail(format!(
                "label smoothing {} outside [0, 1)",
                self.label_smoothing
            ));
        }
        self.model.check_dim(self.d)?;
        self.strategy.validate()
    }
}

/// One pass over the shuffled KvsAll pairs; returns the mean batch loss.
pub fn train_epoch(
    kg: &KnowledgeGraph,
    params: &mut EmbeddingSet,
    adam: &mut AdamState,
    config: &TrainConfig,
    epoch_index: usize,
) -> Result<f64> {
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::Config(format!(
            "learning rate {}",
            config.learning_rate
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let exec = config.exec;
    let mut pairs = kg.kvsall_pairs();
    pairs.shuffle(&mut stream_rng(
        config.seed,
        Stream::Shuffle,
        epoch_index as u64,
    ));

    let mut total = 0.0;
    let mut batches = 0usize;
    for (b, batch) in pairs.chunks(config.batch_size).enumerate() {
        let targets = kg.kvsall_targets(batch)?;
        let combined = combine_rows(config.model, params, batch, exec)?;
        let scores = score_combined(&combined, &params.entity, exec);
        let (loss, d_scores) =
            bce_with_logits_with(&scores, &targets, config.label_smoothing, exec)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss at epoch {epoch_index}, batch {b}"
            )));
        }
        let grads = grad_from_combined(config.model, params, batch, &combined, &d_scores, exec)?
            .accumulate(batch, params.relation_count());
        adam.adam_step(params, &grads.entity, &grads.relation, config.learning_rate)?;
        debug_assert!(
            params.is_finite(),
            "non-finite parameters after epoch {epoch_index} batch {b}"
        );
        total += loss;
        batches += 1;
    }
    Ok(if batches == 0 {
        0.0
    } else {
        total / batches as f64
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_running: Option<f64>,
    pub val_ensemble: Option<f64>,
    pub decision: Option<Decision>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub weight_sum: f64,
    pub val_best: f64,
    pub decision_log: Vec<DecisionRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainingReport {
    pub config: TrainConfig,
    pub dataset: DatasetStats,
    pub holdout: bool,
    pub epochs: Vec<EpochRecord>,
    /// Epoch after which early stopping halted training.
    pub stopped_at: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSummary>,
    #[serde(skip)]
    pub running_params: Option<EmbeddingSet>,
    #[serde(skip)]
    pub ensemble_params: Option<EmbeddingSet>,
}

impl TrainingReport {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }

    /// `epoch,loss,val_running,val_ensemble,decision` learning curves.
    pub fn curves_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("epoch,loss,val_running,val_ensemble,decision\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch,
                e.loss,
                opt(e.val_running),
                opt(e.val_ensemble),
                e.decision.map(|d| d.to_string()).unwrap_or_default()
            ));
        }
        out
    }
}

/// The graph the run actually trains on: a holdout is carved out of the
/// training split when the strategy needs validation and none exists.
pub fn training_graph(kg: &KnowledgeGraph, config: &TrainConfig) -> Result<KnowledgeGraph> {
    if config.strategy.needs_validation() && kg.valid().is_empty() {
        kg.with_holdout(config.holdout_ratio, config.seed)
    } else {
        Ok(kg.clone())
    }
}

pub fn run_training(kg: &KnowledgeGraph, config: &TrainConfig) -> Result<TrainingReport> {
    config.validate()?;
    let kg = training_graph(kg, config)?;
    let model = config.model;
    let exec = config.exec;
    let has_validation = !kg.valid().is_empty();
    let validate = |p: &EmbeddingSet| -> Result<Option<f64>> {
        if has_validation {
            validation_metric_with(&kg, p, model, exec).map(Some)
        } else {
            Ok(None)
        }
    };

    let mut params = init_embeddings(
        model,
        kg.entity_count(),
        kg.augmented_relation_count(),
        config.d,
        config.seed,
    )?;
    let mut adam = AdamState::new(&params);
    let mut state = EnsembleState::new();
    state.forced_mode(config.forced_policy);
    let mut history = Vec::new();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut stopped_at = None;

    for epoch in 0..config.epochs {
        let loss = train_epoch(&kg, &mut params, &mut adam, config, epoch)?;
        let mut record = EpochRecord {
            epoch,
            loss,
            val_running: None,
            val_ensemble: None,
            decision: None,
        };
        match config.strategy {
            StrategyKind::None => record.val_running = validate(&params)?,
            StrategyKind::Swa { start_epoch } => {
                record.val_running = validate(&params)?;
                if epoch >= start_epoch {
                    state.swa_update(&params)?;
                    if let Some(theta) = state.theta() {
                        record.val_ensemble = validate(theta)?;
                    }
                }
            }
            StrategyKind::Aswa => {
                let val_fn = |p: &EmbeddingSet| {
                    validation_metric_with(&kg, p, model, exec).unwrap_or(f64::NAN)
                };
                let decision = state.aswa_step(epoch, &params, val_fn)?;
                let logged = state.decision_log().last().copied();
                record.decision = Some(decision);
                record.val_running = logged.map(|l| l.val_running);
                record.val_ensemble = Some(state.val_best());
            }
            StrategyKind::EarlyStopping { patience } => {
                let score = validate(&params)?
                    .ok_or_else(|| Error::Config("early stopping needs validation data".into()))?;
                if !score.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "validation score at epoch {epoch}"
                    )));
                }
                history.push(score);
                let check = early_stop_check(&history, patience);
                if check.best_epoch == epoch {
                    state.select(&params, score);
                }
                record.val_running = Some(score);
                record.val_ensemble = Some(state.val_best());
                if check.stop {
                    stopped_at = Some(epoch);
                }
            }
        }
        epochs.push(record);
        if stopped_at.is_some() {
            break;
        }
    }

    let ensemble = config.strategy.has_ensemble().then(|| EnsembleSummary {
        weight_sum: state.weight_sum(),
        val_best: state.val_best(),
        decision_log: state.decision_log().to_vec(),
    });
    Ok(TrainingReport {
        config: *config,
        dataset: kg.stats(),
        holdout: kg.uses_holdout(),
        epochs,
        stopped_at,
        ensemble,
        running_params: Some(params),
        ensemble_params: state.into_theta(),
    })
}
