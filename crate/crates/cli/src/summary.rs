//! The multi-seed `summary.json` document.

use std::collections::BTreeMap;

use aswa_core::kg::DatasetStats;
use aswa_core::RankingReport;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single seed.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

impl From<&RankingReport> for Metrics {
    fn from(r: &RankingReport) -> Self {
        Self {
            mrr: r.mrr,
            hits1: r.hits1,
            hits3: r.hits3,
            hits10: r.hits10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub mrr: MeanStd,
    pub hits1: MeanStd,
    pub hits3: MeanStd,
    pub hits10: MeanStd,
}

/// Split name to metrics.
pub type SplitMetrics = BTreeMap<String, Metrics>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub epochs_run: usize,
    pub stopped_at: Option<usize>,
    pub running: SplitMetrics,
    pub ensemble: Option<SplitMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub vocab_hash: String,
    pub stats: DatasetStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub dataset: DatasetInfo,
    /// Training configuration shared by all seeds.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub runs: Vec<SeedRun>,
    pub running: BTreeMap<String, AggregateMetrics>,
    pub ensemble: Option<BTreeMap<String, AggregateMetrics>>,
}

fn aggregate(per_seed: &[&SplitMetrics]) -> BTreeMap<String, AggregateMetrics> {
    let Some(first) = per_seed.first() else {
        return BTreeMap::new();
    };
    first
        .keys()
        .map(|split| {
            let col = |f: fn(&Metrics) -> f64| {
                MeanStd::of(&per_seed.iter().map(|m| f(&m[split])).collect::<Vec<_>>())
            };
            let agg = AggregateMetrics {
                mrr: col(|m| m.mrr),
                hits1: col(|m| m.hits1),
                hits3: col(|m| m.hits3),
                hits10: col(|m| m.hits10),
            };
            (split.clone(), agg)
        })
        .collect()
}

impl Summary {
    pub fn new(dataset: DatasetInfo, config: serde_json::Value, runs: Vec<SeedRun>) -> Self {
        let running = aggregate(&runs.iter().map(|r| &r.running).collect::<Vec<_>>());
        let ensembles: Option<Vec<&SplitMetrics>> =
            runs.iter().map(|r| r.ensemble.as_ref()).collect();
        Self {
            schema_version: SCHEMA_VERSION,
            dataset,
            config,
            seeds: runs.iter().map(|r| r.seed).collect(),
            running,
            ensemble: ensembles.map(|e| aggregate(&e)),
            runs,
        }
    }
}

pub(crate) fn to_json(summary: &Summary) -> String {
    serde_json::to_string_pretty(summary).expect("summary serialises") + "\n"
}
