//! Knowledge-graph embedding training with parameter ensembles.
//!
//! The crate trains bilinear link predictors (DistMult, ComplEx, QMult and
//! Keci over `Cl_{0,0}`) with KvsAll binary cross-entropy and Adam, and
//! builds a parameter ensemble at every epoch boundary with one of:
//!
//! * stochastic weight averaging from a fixed start epoch,
//! * adaptive SWA, which only commits snapshots that improve validation MRR
//!   and restarts the average when the running model dominates,
//! * early stopping.
//!
//! Models are evaluated with filtered MRR/Hits@k and can answer multi-hop
//! conjunctive and disjunctive queries by beam search.
//!
//! With the default `parallel` feature the scoring, ranking and query loops
//! run on rayon; results are bit-identical to [`Exec::Sequential`].

pub mod checkpoint;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod exec;
pub mod kg;
pub mod matrix;
pub mod models;
pub mod optim;
pub mod queries;
pub mod rng;

pub use ensemble::{Decision, EnsembleState, ForcedPolicy, StrategyKind};
pub use error::{Error, Result};
pub use eval::RankingReport;
pub use exec::Exec;
pub use kg::{load_dataset, KnowledgeGraph, Split, Triple};
pub use matrix::Matrix;
pub use models::{EmbeddingSet, ModelKind};
pub use optim::{run_training, TrainConfig, TrainingReport};
pub use queries::{QaConfig, Query, QueryType};
