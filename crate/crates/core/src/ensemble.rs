//! Parameter ensembles over epoch-boundary snapshots: stochastic weight
//! averaging, adaptive SWA and early stopping.
//!
//! Adaptive SWA keeps a running average of running-model snapshots and
//! decides each epoch between three updates:
//!
//! * **Hard**: the running model beats both the ensemble and the look-ahead
//!   average, so the ensemble restarts from the running model.
//! * **Soft**: the look-ahead average improves on the ensemble and is committed.
//! * **Reject**: neither improves, the ensemble is left untouched.
//!
//! All comparisons are strict, so ties reject.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::EmbeddingSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StrategyKind {
    None,
    Swa { start_epoch: usize },
    Aswa,
    EarlyStopping { patience: usize },
}

impl StrategyKind {
    pub fn needs_validation(self) -> bool {
        matches!(
            self,
            StrategyKind::Aswa | StrategyKind::EarlyStopping { .. }
        )
    }

    pub fn validate(self) -> Result<()> {
        match self {
            StrategyKind::EarlyStopping { patience: 0 } => Err(Error::Config(
                "early-stopping patience must be at least 1".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn has_ensemble(self) -> bool {
        !matches!(self, StrategyKind::None)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyKind::None => f.write_str("none"),
            StrategyKind::Swa { start_epoch } => write!(f, "swa:{start_epoch}"),
            StrategyKind::Aswa => f.write_str("aswa"),
            StrategyKind::EarlyStopping { patience } => write!(f, "early-stop:{patience}"),
        }
    }
}

/// Accepts `none`, `aswa`, `swa[:start]` and `early-stop[:patience]`.
impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let number = |default: usize| -> Result<usize> {
            arg.map_or(Ok(default), |a| {
                a.parse()
                    .map_err(|_| Error::Config(format!("malformed strategy `{s}`")))
            })
        };
        let kind = match name {
            "none" => StrategyKind::None,
            "aswa" => StrategyKind::Aswa,
            "swa" => StrategyKind::Swa {
                start_epoch: number(0)?,
            },
            "early-stop" | "early_stop" | "early-stopping" => StrategyKind::EarlyStopping {
                patience: number(10)?,
            },
            _ => return Err(Error::Config(format!("unknown strategy `{s}`"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Soft,
    Hard,
    Reject,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Soft => "soft",
            Decision::Hard => "hard",
            Decision::Reject => "reject",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub epoch: usize,
    pub decision: Decision,
    pub val_lookahead: f64,
    pub val_running: f64,
    /// Ensemble score before the decision.
    pub val_ensemble: f64,
}

/// Test-only overrides of the adaptive rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcedPolicy {
    /// Every step is a soft update (plain SWA).
    AcceptAll,
    /// Every step is rejected.
    RejectAll,
}

/// Initial ensemble score, below any MRR.
pub const INITIAL_VAL_BEST: f64 = -1.0;

#[derive(Clone, Debug)]
pub struct EnsembleState {
    theta: Option<EmbeddingSet>,
    weight_sum: f64,
    val_best: f64,
    decision_log: Vec<DecisionRecord>,
    forced: Option<ForcedPolicy>,
}

impl Default for EnsembleState {
    fn default() -> Self {
        Self::new()
    }
}

/// `(theta * n + params) / (n + 1)`, or `params` when `n == 0`.
fn averaged(theta: Option<&EmbeddingSet>, n: f64, params: &EmbeddingSet) -> Result<EmbeddingSet> {
    let Some(theta) = theta.filter(|_| n > 0.0) else {
        return Ok(params.clone());
    };
    theta.check_congruent(params)?;
    let mix = |acc: &Matrix, new: &Matrix| {
        let data = acc
            .as_slice()
            .iter()
            .zip(new.as_slice())
            .map(|(a, p)| (a * n + p) / (n + 1.0))
            .collect();
        Matrix::from_vec(acc.rows(), acc.cols(), data)
    };
    EmbeddingSet::new(
        mix(&theta.entity, &params.entity)?,
        mix(&theta.relation, &params.relation)?,
    )
}

impl EnsembleState {
    pub fn new() -> Self {
        Self {
            theta: None,
            weight_sum: 0.0,
            val_best: INITIAL_VAL_BEST,
            decision_log: Vec::new(),
            forced: None,
        }
    }

    pub fn theta(&self) -> Option<&EmbeddingSet> {
        self.theta.as_ref()
    }

    pub fn into_theta(self) -> Option<EmbeddingSet> {
        self.theta
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight_sum
    }

    pub fn val_best(&self) -> f64 {
        self.val_best
    }

    pub fn decision_log(&self) -> &[DecisionRecord] {
        &self.decision_log
    }

    pub fn forced_mode(&mut self, policy: Option<ForcedPolicy>) {
        self.forced = policy;
    }

    pub fn forced(&self) -> Option<ForcedPolicy> {
        self.forced
    }

    /// Averages `params` into the ensemble with equal weight.
    pub fn swa_update(&mut self, params: &EmbeddingSet) -> Result<()> {
        let next = averaged(self.theta.as_ref(), self.weight_sum, params)?;
        self.theta = Some(next);
        self.weight_sum += 1.0;
        Ok(())
    }

    /// The ensemble that a soft update with `params` would produce.
    pub fn lookahead(&self, params: &EmbeddingSet) -> Result<EmbeddingSet> {
        averaged(self.theta.as_ref(), self.weight_sum, params)
    }

    /// One adaptive step at the end of `epoch`. `val_fn` scores a parameter
    /// set on validation data, higher is better.
    pub fn aswa_step<F>(
        &mut self,
        epoch: usize,
        params: &EmbeddingSet,
        mut val_fn: F,
    ) -> Result<Decision>
    where
        F: FnMut(&EmbeddingSet) -> f64,
    {
        let candidate = self.lookahead(params)?;
        let val_running = val_fn(params);
        let val_lookahead = val_fn(&candidate);
        for (name, v) in [("running", val_running), ("look-ahead", val_lookahead)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "{name} validation score at epoch {epoch}"
                )));
            }
        }
        let val_ensemble = self.val_best;

        let decision = match self.forced {
            Some(ForcedPolicy::AcceptAll) => Decision::Soft,
            Some(ForcedPolicy::RejectAll) => Decision::Reject,
            None if val_running > val_lookahead && val_running > val_ensemble => Decision::Hard,
            None if val_lookahead > val_ensemble => Decision::Soft,
            None => Decision::Reject,
        };
        match decision {
            Decision::Hard => {
                self.theta = Some(params.clone());
                self.weight_sum = 1.0;
                self.val_best = val_running;
            }
            Decision::Soft => {
                self.theta = Some(candidate);
                self.weight_sum += 1.0;
                self.val_best = val_lookahead;
            }
            Decision::Reject => {}
        }
        self.decision_log.push(DecisionRecord {
            epoch,
            decision,
            val_lookahead,
            val_running,
            val_ensemble,
        });
        Ok(decision)
    }

    /// Replaces the ensemble with a single snapshot (early-stopping selection).
    pub fn select(&mut self, params: &EmbeddingSet, score: f64) {
        self.theta = Some(params.clone());
        self.weight_sum = 1.0;
        self.val_best = score;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub stop: bool,
    pub best_epoch: usize,
}

/// Stops once the best score (earliest on ties) is `patience` epochs old.
pub fn early_stop_check(history: &[f64], patience: usize) -> EarlyStop {
    if history.is_empty() {
        return EarlyStop {
            stop: false,
            best_epoch: 0,
        };
    }
    let mut best_epoch = 0;
    for (i, &v) in history.iter().enumerate().skip(1) {
        if v > history[best_epoch] {
            best_epoch = i;
        }
    }
    EarlyStop {
        stop: history.len() - 1 - best_epoch >= patience,
        best_epoch,
    }
}
