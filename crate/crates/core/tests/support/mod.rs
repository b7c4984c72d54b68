//! Independent oracles shared by the integration and acceptance tests. None
//! of these reuse the code paths they check.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use aswa_core::kg::{KnowledgeGraph, Triple};
use aswa_core::models::{grad_step_inputs, score_all_tails, EmbeddingSet, ModelKind};
use aswa_core::optim::bce_with_logits;
use aswa_core::queries::{Query, QueryType, TConorm, TNorm};

pub fn five_entity_kg() -> KnowledgeGraph {
    KnowledgeGraph::from_indexed(
        5,
        2,
        vec![
            Triple::new(0, 0, 1),
            Triple::new(0, 0, 2),
            Triple::new(1, 1, 3),
            Triple::new(2, 0, 4),
            Triple::new(4, 1, 0),
            Triple::new(3, 0, 3),
        ],
        vec![],
        vec![],
    )
    .unwrap()
}

fn coord(p: &mut EmbeddingSet, k: usize) -> &mut f64 {
    let n = p.entity.as_slice().len();
    if k < n {
        &mut p.entity.as_mut_slice()[k]
    } else {
        &mut p.relation.as_mut_slice()[k - n]
    }
}

/// Max relative error between analytic KvsAll gradients and central finite
/// differences of the scalar loss, over every parameter coordinate.
pub fn gradient_check(
    kg: &KnowledgeGraph,
    model: ModelKind,
    params: &EmbeddingSet,
    step: f64,
) -> f64 {
    let mut pairs = kg.kvsall_pairs();
    pairs.push(pairs[0]);
    let targets = kg.kvsall_targets(&pairs).unwrap();
    let loss = |p: &EmbeddingSet| {
        let scores = score_all_tails(model, p, &pairs).unwrap();
        bce_with_logits(&scores, &targets, 0.1).unwrap().0
    };

    let scores = score_all_tails(model, params, &pairs).unwrap();
    let (_, d_scores) = bce_with_logits(&scores, &targets, 0.1).unwrap();
    let grads = grad_step_inputs(model, params, &pairs, &d_scores)
        .unwrap()
        .accumulate(&pairs, params.relation_count());
    let analytic: Vec<f64> = grads
        .entity
        .as_slice()
        .iter()
        .chain(grads.relation.as_slice())
        .copied()
        .collect();

    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (k, &a) in analytic.iter().enumerate() {
        let original = *coord(&mut probe, k);
        *coord(&mut probe, k) = original + step;
        let up = loss(&probe);
        *coord(&mut probe, k) = original - step;
        let down = loss(&probe);
        *coord(&mut probe, k) = original;
        let numeric = (up - down) / (2.0 * step);
        let scale = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / scale);
    }
    worst
}

/// Sort-based filtered mid-rank: the average position of the answer's tie
/// group among unmasked entities sorted by descending score.
pub fn sort_rank(scores: &[f64], answer: usize, mask: &[usize]) -> f64 {
    let mut kept: Vec<f64> = scores
        .iter()
        .enumerate()
        .filter(|(j, _)| !mask.contains(j))
        .map(|(_, &s)| s)
        .collect();
    kept.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let target = scores[answer];
    let first = kept.iter().position(|&s| s == target).unwrap() + 1;
    let last = kept.iter().rposition(|&s| s == target).unwrap() + 1;
    (first + last) as f64 / 2.0
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Exhaustive evaluation of a query formula: every assignment of the
/// existential variables is scored and the best one kept per answer.
pub fn brute_force_answer(
    params: &EmbeddingSet,
    model: ModelKind,
    query: &Query,
    tnorm: TNorm,
    tconorm: TConorm,
) -> Vec<f64> {
    let n = params.entity_count();
    let truth = |h: usize, r: usize, t: usize| {
        sigmoid(aswa_core::models::score_triple(model, params, h, r, t).unwrap())
    };
    let and = |a: f64, b: f64| match tnorm {
        TNorm::Product => a * b,
        TNorm::Min => a.min(b),
    };
    let or = |a: f64, b: f64| match tconorm {
        TConorm::ProbabilisticSum => a + b - a * b,
        TConorm::Max => a.max(b),
    };
    let e = &query.anchors;
    let r = &query.relations;
    (0..n)
        .map(|y| {
            let mut best = f64::NEG_INFINITY;
            match query.qtype {
                QueryType::P2 => {
                    for v1 in 0..n {
                        best = best.max(and(truth(e[0], r[0], v1), truth(v1, r[1], y)));
                    }
                }
                QueryType::P3 => {
                    for v1 in 0..n {
                        for v2 in 0..n {
                            let path = and(
                                and(truth(e[0], r[0], v1), truth(v1, r[1], v2)),
                                truth(v2, r[2], y),
                            );
                            best = best.max(path);
                        }
                    }
                }
                QueryType::I2 => best = and(truth(e[0], r[0], y), truth(e[1], r[1], y)),
                QueryType::I3 => {
                    best = and(
                        and(truth(e[0], r[0], y), truth(e[1], r[1], y)),
                        truth(e[2], r[2], y),
                    )
                }
                QueryType::Ip => {
                    for v1 in 0..n {
                        let meet = and(truth(e[0], r[0], v1), truth(e[1], r[1], v1));
                        best = best.max(and(meet, truth(v1, r[2], y)));
                    }
                }
                QueryType::Pi => {
                    let mut chain = f64::NEG_INFINITY;
                    for v1 in 0..n {
                        chain = chain.max(and(truth(e[0], r[0], v1), truth(v1, r[1], y)));
                    }
                    best = and(chain, truth(e[1], r[2], y));
                }
                QueryType::U2 => best = or(truth(e[0], r[0], y), truth(e[1], r[1], y)),
                QueryType::Up => {
                    for v1 in 0..n {
                        let either = or(truth(e[0], r[0], v1), truth(e[1], r[1], v1));
                        best = best.max(and(either, truth(v1, r[2], y)));
                    }
                }
            }
            best
        })
        .collect()
}

/// Answers by checking every candidate substitution against the raw set of
/// known forward triples.
pub fn brute_force_traverse(kg: &KnowledgeGraph, query: &Query) -> BTreeSet<usize> {
    let facts: HashSet<(usize, usize, usize)> = kg
        .train()
        .iter()
        .chain(kg.valid())
        .chain(kg.test())
        .map(|t| (t.head, t.relation, t.tail))
        .collect();
    let n = kg.entity_count();
    let holds = |h: usize, r: usize, t: usize| facts.contains(&(h, r, t));
    let e = &query.anchors;
    let r = &query.relations;
    (0..n)
        .filter(|&y| match query.qtype {
            QueryType::P2 => (0..n).any(|v| holds(e[0], r[0], v) && holds(v, r[1], y)),
            QueryType::P3 => (0..n).any(|v1| {
                holds(e[0], r[0], v1) && (0..n).any(|v2| holds(v1, r[1], v2) && holds(v2, r[2], y))
            }),
            QueryType::I2 => holds(e[0], r[0], y) && holds(e[1], r[1], y),
            QueryType::I3 => holds(e[0], r[0], y) && holds(e[1], r[1], y) && holds(e[2], r[2], y),
            QueryType::Ip => {
                (0..n).any(|v| holds(e[0], r[0], v) && holds(e[1], r[1], v) && holds(v, r[2], y))
            }
            QueryType::Pi => {
                (0..n).any(|v| holds(e[0], r[0], v) && holds(v, r[1], y)) && holds(e[1], r[2], y)
            }
            QueryType::U2 => holds(e[0], r[0], y) || holds(e[1], r[1], y),
            QueryType::Up => {
                (0..n).any(|v| (holds(e[0], r[0], v) || holds(e[1], r[1], v)) && holds(v, r[2], y))
            }
        })
        .collect()
}

/// A 15-entity, 3-relation graph dense enough for every query template.
pub fn fifteen_entity_kg() -> KnowledgeGraph {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for h in 0..15usize {
        for (r, step) in [(0usize, 1usize), (1, 3), (2, 7)] {
            let t = (h * 2 + step) % 15;
            let triple = Triple::new(h, r, t);
            if (h + r) % 4 == 0 {
                test.push(triple);
            } else {
                train.push(triple);
            }
            train.push(Triple::new(h, r, (h + step + 5) % 15));
        }
    }
    KnowledgeGraph::from_indexed(15, 3, train, vec![], test).unwrap()
}
