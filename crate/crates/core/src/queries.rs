//! Multi-hop query generation and beam-search answering.
//!
//! Atom truth values are sigmoid-normalised triple scores. Conjunctions use a
//! t-norm, disjunctions a t-conorm, and each existential variable keeps the
//! `beam_k` entities with the best substitution score. Because both t-norms
//! are monotone, a beam as wide as the entity set is exact.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{rank_query, RankingReport};
use crate::exec::Exec;
use crate::kg::KnowledgeGraph;
use crate::models::{score_row, EmbeddingSet, ModelKind};
use crate::optim::sigmoid;
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryType {
    #[serde(rename = "2p")]
    P2,
    #[serde(rename = "3p")]
    P3,
    #[serde(rename = "2i")]
    I2,
    #[serde(rename = "3i")]
    I3,
    #[serde(rename = "ip")]
    Ip,
    #[serde(rename = "pi")]
    Pi,
    #[serde(rename = "2u")]
    U2,
    #[serde(rename = "up")]
    Up,
}

impl QueryType {
    pub const ALL: [QueryType; 8] = [
        QueryType::P2,
        QueryType::P3,
        QueryType::I2,
        QueryType::I3,
        QueryType::Ip,
        QueryType::Pi,
        QueryType::U2,
        QueryType::Up,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QueryType::P2 => "2p",
            QueryType::P3 => "3p",
            QueryType::I2 => "2i",
            QueryType::I3 => "3i",
            QueryType::Ip => "ip",
            QueryType::Pi => "pi",
            QueryType::U2 => "2u",
            QueryType::Up => "up",
        }
    }

    /// `(anchors, relations)` of the template.
    pub fn arity(self) -> (usize, usize) {
        match self {
            QueryType::P2 => (1, 2),
            QueryType::P3 => (1, 3),
            QueryType::I2 | QueryType::U2 => (2, 2),
            QueryType::I3 => (3, 3),
            QueryType::Ip | QueryType::Pi | QueryType::Up => (2, 3),
        }
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QueryType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QueryType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown query type `{s}`")))
    }
}

/// One query; atoms follow the template order:
///
/// | type | formula |
/// |------|---------|
/// | 2p | `r1(e, E1) ∧ r2(E1, ?)` |
/// | 3p | `r1(e, E1) ∧ r2(E1, E2) ∧ r3(E2, ?)` |
/// | 2i | `r1(e1, ?) ∧ r2(e2, ?)` |
/// | 3i | `r1(e1, ?) ∧ r2(e2, ?) ∧ r3(e3, ?)` |
/// | ip | `r1(e1, E1) ∧ r2(e2, E1) ∧ r3(E1, ?)` |
/// | pi | `r1(e1, E1) ∧ r2(E1, ?) ∧ r3(e2, ?)` |
/// | 2u | `r1(e1, ?) ∨ r2(e2, ?)` |
/// | up | `[r1(e1, E1) ∨ r2(e2, E1)] ∧ r3(E1, ?)` |
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    #[serde(rename = "type")]
    pub qtype: QueryType,
    pub anchors: Vec<usize>,
    pub relations: Vec<usize>,
    pub answers: Vec<usize>,
}

impl Query {
    pub fn validate(&self, entity_count: usize, relation_count: usize) -> Result<()> {
        let (a, r) = self.qtype.arity();
        if self.anchors.len() != a || self.relations.len() != r {
            return Err(Error::Config(format!(
                "{} query needs {a} anchors and {r} relations",
                self.qtype
            )));
        }
        if self.answers.is_empty() {
            return Err(Error::Config(format!(
                "{} query without answers",
                self.qtype
            )));
        }
        if self
            .anchors
            .iter()
            .chain(&self.answers)
            .any(|&e| e >= entity_count)
            || self.relations.iter().any(|&r| r >= relation_count)
        {
            return Err(Error::IndexOutOfRange(format!(
                "{} query {:?}",
                self.qtype, self.anchors
            )));
        }
        Ok(())
    }
}

pub fn to_jsonl(queries: &[Query]) -> Result<String> {
    let mut out = String::new();
    for q in queries {
        out.push_str(&serde_json::to_string(q)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn from_jsonl(text: &str) -> Result<Vec<Query>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

fn project(kg: &KnowledgeGraph, from: &BTreeSet<usize>, relation: usize) -> BTreeSet<usize> {
    from.iter()
        .flat_map(|&e| kg.known_tails(e, relation).iter().copied())
        .collect()
}

/// Answer set of a template instance over every known triple.
pub fn traverse(
    kg: &KnowledgeGraph,
    qtype: QueryType,
    anchors: &[usize],
    relations: &[usize],
) -> BTreeSet<usize> {
    let one = |e: usize| BTreeSet::from([e]);
    let hop = |e: usize, r: usize| project(kg, &one(e), r);
    let r = relations;
    match qtype {
        QueryType::P2 => project(kg, &hop(anchors[0], r[0]), r[1]),
        QueryType::P3 => project(kg, &project(kg, &hop(anchors[0], r[0]), r[1]), r[2]),
        QueryType::I2 => &hop(anchors[0], r[0]) & &hop(anchors[1], r[1]),
        QueryType::I3 => {
            &(&hop(anchors[0], r[0]) & &hop(anchors[1], r[1])) & &hop(anchors[2], r[2])
        }
        QueryType::Ip => project(kg, &(&hop(anchors[0], r[0]) & &hop(anchors[1], r[1])), r[2]),
        QueryType::Pi => &project(kg, &hop(anchors[0], r[0]), r[1]) & &hop(anchors[1], r[2]),
        QueryType::U2 => &hop(anchors[0], r[0]) | &hop(anchors[1], r[1]),
        QueryType::Up => project(kg, &(&hop(anchors[0], r[0]) | &hop(anchors[1], r[1])), r[2]),
    }
}

/// Forward edges `(source, relation)` into each entity, base relations only.
fn incoming_edges(kg: &KnowledgeGraph) -> Vec<Vec<(usize, usize)>> {
    let base = kg.base_relation_count();
    let mut incoming = vec![Vec::new(); kg.entity_count()];
    for (&(source, relation), tails) in kg.er_vocab_all() {
        if relation < base {
            for &t in tails {
                incoming[t].push((source, relation));
            }
        }
    }
    incoming
}

/// Seeded rejection sampling of `count` distinct queries. Each draw starts
/// from a test triple as the atom that produces the answer and walks the
/// template backwards over known edges.
pub fn generate_queries(
    kg: &KnowledgeGraph,
    qtype: QueryType,
    count: usize,
    seed: u64,
) -> Result<Vec<Query>> {
    let insufficient = |found| Error::InsufficientQueries {
        qtype: qtype.name(),
        requested: count,
        found,
    };
    if kg.test().is_empty() && count > 0 {
        return Err(insufficient(0));
    }
    let incoming = incoming_edges(kg);
    let mut rng = stream_rng(seed, Stream::Queries, qtype as u64);
    let mut seen = HashSet::new();
    let mut queries = Vec::with_capacity(count);

    let max_attempts = 100 * count;
    let mut attempts = 0;
    while queries.len() < count && attempts < max_attempts {
        attempts += 1;
        let t = kg.test()[rng.random_range(0..kg.test().len())];
        let Some((anchors, relations)) =
            instantiate(qtype, t.head, t.relation, t.tail, &incoming, &mut rng)
        else {
            continue;
        };
        if !seen.insert((anchors.clone(), relations.clone())) {
            continue;
        }
        let answers: Vec<usize> = traverse(kg, qtype, &anchors, &relations)
            .into_iter()
            .collect();
        if answers.is_empty() {
            continue;
        }
        queries.push(Query {
            qtype,
            anchors,
            relations,
            answers,
        });
    }
    if queries.len() < count {
        return Err(insufficient(queries.len()));
    }
    Ok(queries)
}

/// `k` distinct random incoming edges of `node`, none equal to `exclude`.
fn distinct_edges<R: Rng>(
    incoming: &[Vec<(usize, usize)>],
    node: usize,
    k: usize,
    exclude: Option<(usize, usize)>,
    rng: &mut R,
) -> Option<Vec<(usize, usize)>> {
    let pool: Vec<(usize, usize)> = incoming[node]
        .iter()
        .copied()
        .filter(|&e| Some(e) != exclude)
        .collect();
    if pool.len() < k {
        return None;
    }
    let picked: Vec<(usize, usize)> = pool.choose_multiple(rng, k).copied().collect();
    Some(picked)
}

fn instantiate<R: Rng>(
    qtype: QueryType,
    head: usize,
    relation: usize,
    tail: usize,
    incoming: &[Vec<(usize, usize)>],
    rng: &mut R,
) -> Option<(Vec<usize>, Vec<usize>)> {
    let last = (head, relation);
    let pick = |node: usize, rng: &mut R| incoming[node].choose(rng).copied();
    Some(match qtype {
        QueryType::P2 => {
            let (e, r1) = pick(head, rng)?;
            (vec![e], vec![r1, relation])
        }
        QueryType::P3 => {
            let (mid, r2) = pick(head, rng)?;
            let (e, r1) = pick(mid, rng)?;
            (vec![e], vec![r1, r2, relation])
        }
        QueryType::I2 | QueryType::U2 => {
            let other = distinct_edges(incoming, tail, 1, Some(last), rng)?;
            let (e2, r2) = other[0];
            (vec![head, e2], vec![relation, r2])
        }
        QueryType::I3 => {
            let others = distinct_edges(incoming, tail, 2, Some(last), rng)?;
            (
                vec![head, others[0].0, others[1].0],
                vec![relation, others[0].1, others[1].1],
            )
        }
        QueryType::Ip | QueryType::Up => {
            let branches = distinct_edges(incoming, head, 2, None, rng)?;
            (
                vec![branches[0].0, branches[1].0],
                vec![branches[0].1, branches[1].1, relation],
            )
        }
        QueryType::Pi => {
            let (e1, r1) = pick(head, rng)?;
            let other = distinct_edges(incoming, tail, 1, Some(last), rng)?;
            (vec![e1, other[0].0], vec![r1, relation, other[0].1])
        }
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TNorm {
    #[default]
    Product,
    Min,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TConorm {
    #[default]
    ProbabilisticSum,
    Max,
}

impl TNorm {
    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            TNorm::Product => a * b,
            TNorm::Min => a.min(b),
        }
    }
}

impl TConorm {
    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            TConorm::ProbabilisticSum => a + b - a * b,
            TConorm::Max => a.max(b),
        }
    }
}

impl FromStr for TNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "product" | "prod" => Ok(TNorm::Product),
            "min" => Ok(TNorm::Min),
            _ => Err(Error::Config(format!("unknown t-norm `{s}`"))),
        }
    }
}

impl FromStr for TConorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probabilistic_sum" | "probabilistic-sum" | "prob" => Ok(TConorm::ProbabilisticSum),
            "max" => Ok(TConorm::Max),
            _ => Err(Error::Config(format!("unknown t-conorm `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaConfig {
    pub beam_k: usize,
    pub tnorm: TNorm,
    pub tconorm: TConorm,
}

impl Default for QaConfig {
    fn default() -> Self {
        Self {
            beam_k: 10,
            tnorm: TNorm::default(),
            tconorm: TConorm::default(),
        }
    }
}

struct Scorer<'a> {
    model: ModelKind,
    params: &'a EmbeddingSet,
    config: QaConfig,
}

impl Scorer<'_> {
    /// Truth values of `relation(head, x)` for every entity `x`.
    fn atom(&self, head: usize, relation: usize) -> Vec<f64> {
        score_row(self.model, self.params, head, relation)
            .into_iter()
            .map(sigmoid)
            .collect()
    }

    /// Keeps the `beam_k` best substitutions of a variable, then scores every
    /// entity by its best path through them.
    fn project(&self, variable: &[f64], relation: usize) -> Vec<f64> {
        let mut order: Vec<usize> = (0..variable.len()).collect();
        order.sort_by(|&a, &b| variable[b].total_cmp(&variable[a]).then(a.cmp(&b)));
        order.truncate(self.config.beam_k.max(1));
        let mut out = vec![0.0f64; variable.len()];
        for &c in &order {
            let hop = self.atom(c, relation);
            for (o, &s) in out.iter_mut().zip(&hop) {
                *o = o.max(self.config.tnorm.apply(variable[c], s));
            }
        }
        out
    }

    fn and(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| self.config.tnorm.apply(x, y))
            .collect()
    }

    fn or(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| self.config.tconorm.apply(x, y))
            .collect()
    }
}

/// Aggregated truth value of the query for every candidate answer.
pub fn answer_query(
    params: &EmbeddingSet,
    model: ModelKind,
    query: &Query,
    config: &QaConfig,
) -> Result<Vec<f64>> {
    if config.beam_k == 0 {
        return Err(Error::Config("beam size must be at least 1".into()));
    }
    let (a, r) = query.qtype.arity();
    if query.anchors.len() != a || query.relations.len() != r {
        return Err(Error::Config(format!("malformed {} query", query.qtype)));
    }
    if query.anchors.iter().any(|&e| e >= params.entity_count())
        || query
            .relations
            .iter()
            .any(|&x| x >= params.relation_count())
    {
        return Err(Error::IndexOutOfRange(format!(
            "{} query {:?}",
            query.qtype, query.anchors
        )));
    }
    let s = Scorer {
        model,
        params,
        config: *config,
    };
    let e = &query.anchors;
    let r = &query.relations;
    Ok(match query.qtype {
        QueryType::P2 => s.project(&s.atom(e[0], r[0]), r[1]),
        QueryType::P3 => s.project(&s.project(&s.atom(e[0], r[0]), r[1]), r[2]),
        QueryType::I2 => s.and(&s.atom(e[0], r[0]), &s.atom(e[1], r[1])),
        QueryType::I3 => s.and(
            &s.and(&s.atom(e[0], r[0]), &s.atom(e[1], r[1])),
            &s.atom(e[2], r[2]),
        ),
        QueryType::Ip => s.project(&s.and(&s.atom(e[0], r[0]), &s.atom(e[1], r[1])), r[2]),
        QueryType::Pi => s.and(&s.project(&s.atom(e[0], r[0]), r[1]), &s.atom(e[1], r[2])),
        QueryType::U2 => s.or(&s.atom(e[0], r[0]), &s.atom(e[1], r[1])),
        QueryType::Up => s.project(&s.or(&s.atom(e[0], r[0]), &s.atom(e[1], r[1])), r[2]),
    })
}

/// Ranks every answer of every query against all entities, with the query's
/// other answers filtered. MRR averages over `(query, answer)` pairs.
pub fn evaluate_queries(
    params: &EmbeddingSet,
    model: ModelKind,
    queries: &[Query],
    config: &QaConfig,
) -> Result<RankingReport> {
    evaluate_queries_with(params, model, queries, config, Exec::default())
}

pub fn evaluate_queries_with(
    params: &EmbeddingSet,
    model: ModelKind,
    queries: &[Query],
    config: &QaConfig,
    exec: Exec,
) -> Result<RankingReport> {
    let per_query = exec.map(queries.len(), |i| -> Result<Vec<f64>> {
        let q = &queries[i];
        let scores = answer_query(params, model, q, config)?;
        q.answers
            .iter()
            .map(|&a| {
                let mask: Vec<usize> = q.answers.iter().copied().filter(|&x| x != a).collect();
                rank_query(&scores, a, &mask)
            })
            .collect()
    });
    let mut ranks = Vec::new();
    for r in per_query {
        ranks.extend(r?);
    }
    let name = match queries.first() {
        Some(q) if queries.iter().all(|x| x.qtype == q.qtype) => q.qtype.name().to_owned(),
        _ => "mixed".to_owned(),
    };
    Ok(RankingReport::from_ranks(name, ranks))
}

/// Per-type reports in template order.
pub fn evaluate_queries_by_type(
    params: &EmbeddingSet,
    model: ModelKind,
    queries: &[Query],
    config: &QaConfig,
) -> Result<BTreeMap<QueryType, RankingReport>> {
    let mut groups: BTreeMap<QueryType, Vec<Query>> = BTreeMap::new();
    for q in queries {
        groups.entry(q.qtype).or_default().push(q.clone());
    }
    groups
        .into_iter()
        .map(|(t, qs)| evaluate_queries(params, model, &qs, config).map(|r| (t, r)))
        .collect()
}
