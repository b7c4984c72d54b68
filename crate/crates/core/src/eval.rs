//! Filtered link-prediction metrics: MRR and Hits@{1,3,10}.
//!
//! Ranks are tie-aware mid-ranks: a true answer tied with `k` unfiltered
//! competitors sits halfway between its optimistic and pessimistic rank.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::kg::{KnowledgeGraph, Split, Triple};
use crate::models::{score_row, EmbeddingSet, ModelKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub split: String,
    pub query_count: usize,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    #[serde(skip)]
    pub per_query_ranks: Vec<f64>,
}

impl RankingReport {
    pub fn from_ranks(split: impl Into<String>, ranks: Vec<f64>) -> Self {
        let n = ranks.len();
        let (mut rr, mut h1, mut h3, mut h10) = (0.0, 0usize, 0usize, 0usize);
        for &rank in &ranks {
            rr += 1.0 / rank;
            h1 += usize::from(rank <= 1.0);
            h3 += usize::from(rank <= 3.0);
            h10 += usize::from(rank <= 10.0);
        }
        let frac = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
        Self {
            split: split.into(),
            query_count: n,
            mrr: if n == 0 { 0.0 } else { rr / n as f64 },
            hits1: frac(h1),
            hits3: frac(h3),
            hits10: frac(h10),
            per_query_ranks: ranks,
        }
    }

    /// `MRR, @1, @3, @10` as a table row.
    pub fn table_row(&self) -> [f64; 4] {
        [self.mrr, self.hits1, self.hits3, self.hits10]
    }
}

/// Filtered mid-rank of `true_tail`; entities in `mask` are ignored.
pub fn rank_query(scores: &[f64], true_tail: usize, mask: &[usize]) -> Result<f64> {
    if true_tail >= scores.len() {
        return Err(Error::IndexOutOfRange(format!("true tail {true_tail}")));
    }
    if mask.contains(&true_tail) {
        return Err(Error::TrueTailMasked(true_tail));
    }
    let mut mask = mask.to_vec();
    mask.sort_unstable();
    mask.dedup();
    Ok(filtered_rank(scores, true_tail, mask.iter().copied()))
}

/// `mask` must not contain duplicates or `true_tail`.
fn filtered_rank(scores: &[f64], true_tail: usize, mask: impl Iterator<Item = usize>) -> f64 {
    let target = scores[true_tail];
    let (mut greater, mut ties) = (0usize, 0usize);
    for (j, &s) in scores.iter().enumerate() {
        if s > target {
            greater += 1;
        } else if s == target && j != true_tail {
            ties += 1;
        }
    }
    for j in mask {
        let s = scores[j];
        if s > target {
            greater -= 1;
        } else if s == target {
            ties -= 1;
        }
    }
    1.0 + greater as f64 + ties as f64 / 2.0
}

/// Ranks every triple in both directions, filtering with all known triples.
pub fn evaluate_triples(
    kg: &KnowledgeGraph,
    params: &EmbeddingSet,
    model: ModelKind,
    triples: &[Triple],
    name: &str,
    exec: Exec,
) -> RankingReport {
    let base = kg.base_relation_count();
    let ranks = exec.map(2 * triples.len(), |q| {
        let t = triples[q / 2];
        let (head, relation, answer) = if q % 2 == 0 {
            (t.head, t.relation, t.tail)
        } else {
            (t.tail, t.relation + base, t.head)
        };
        let scores = score_row(model, params, head, relation);
        let mask = kg
            .known_tails(head, relation)
            .iter()
            .copied()
            .filter(|&e| e != answer);
        filtered_rank(&scores, answer, mask)
    });
    RankingReport::from_ranks(name, ranks)
}

pub fn evaluate_split(
    kg: &KnowledgeGraph,
    params: &EmbeddingSet,
    model: ModelKind,
    split: Split,
) -> RankingReport {
    evaluate_split_with(kg, params, model, split, Exec::default())
}

pub fn evaluate_split_with(
    kg: &KnowledgeGraph,
    params: &EmbeddingSet,
    model: ModelKind,
    split: Split,
    exec: Exec,
) -> RankingReport {
    evaluate_triples(kg, params, model, kg.split(split), split.name(), exec)
}

/// Filtered MRR on the validation split.
pub fn validation_metric(
    kg: &KnowledgeGraph,
    params: &EmbeddingSet,
    model: ModelKind,
) -> Result<f64> {
    validation_metric_with(kg, params, model, Exec::default())
}

pub fn validation_metric_with(
    kg: &KnowledgeGraph,
    params: &EmbeddingSet,
    model: ModelKind,
    exec: Exec,
) -> Result<f64> {
    if kg.valid().is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    Ok(evaluate_split_with(kg, params, model, Split::Valid, exec).mrr)
}
