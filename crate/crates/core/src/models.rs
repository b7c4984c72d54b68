//! Embedding storage and the bilinear scoring functions.
//!
//! Every supported model scores a triple as `combine(h, r) · t` over the `d`
//! real coordinates of an embedding row. ComplEx packs real and imaginary
//! parts as two contiguous halves; QMult packs the four quaternion components
//! as contiguous quarters.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::matrix::{axpy, dot, Matrix};
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ModelKind {
    DistMult,
    ComplEx,
    QMult,
    /// Clifford-algebra model; only the `Cl_{0,0}` signature is supported.
    Keci {
        p: u32,
        q: u32,
    },
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::DistMult,
        ModelKind::ComplEx,
        ModelKind::QMult,
        ModelKind::Keci { p: 0, q: 0 },
    ];

    pub fn validate(self) -> Result<()> {
        match self {
            ModelKind::Keci { p, q } if p != 0 || q != 0 => Err(Error::Config(format!(
                "unsupported Keci signature ({p},{q}): only keci:0,0 is available"
            ))),
            _ => Ok(()),
        }
    }

    /// Number of real coordinates per algebra element.
    pub fn block(self) -> usize {
        match self {
            ModelKind::DistMult | ModelKind::Keci { .. } => 1,
            ModelKind::ComplEx => 2,
            ModelKind::QMult => 4,
        }
    }

    pub fn check_dim(self, d: usize) -> Result<()> {
        self.validate()?;
        if d < 4 {
            return Err(Error::Config(format!("embedding width {d} is below 4")));
        }
        if !d.is_multiple_of(self.block()) {
            return Err(Error::Config(format!(
                "{self} needs an embedding width divisible by {}, got {d}",
                self.block()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::DistMult => f.write_str("distmult"),
            ModelKind::ComplEx => f.write_str("complex"),
            ModelKind::QMult => f.write_str("qmult"),
            ModelKind::Keci { p, q } => write!(f, "keci:{p},{q}"),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let kind = match lower.as_str() {
            "distmult" => ModelKind::DistMult,
            "complex" => ModelKind::ComplEx,
            "qmult" => ModelKind::QMult,
            "keci" => ModelKind::Keci { p: 0, q: 0 },
            other => {
                let sig = other
                    .strip_prefix("keci:")
                    .ok_or_else(|| Error::Config(format!("unknown model `{s}`")))?;
                let parse = |x: Option<&str>| {
                    x.and_then(|v| v.trim().parse::<u32>().ok())
                        .ok_or_else(|| Error::Config(format!("malformed Keci signature `{s}`")))
                };
                let mut parts = sig.split(',');
                let p = parse(parts.next())?;
                let q = parse(parts.next())?;
                if parts.next().is_some() {
                    return Err(Error::Config(format!("malformed Keci signature `{s}`")));
                }
                ModelKind::Keci { p, q }
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    pub entity: Matrix,
    pub relation: Matrix,
}

impl EmbeddingSet {
    pub fn new(entity: Matrix, relation: Matrix) -> Result<Self> {
        if entity.cols() != relation.cols() {
            return Err(Error::Shape(format!(
                "entity width {} vs relation width {}",
                entity.cols(),
                relation.cols()
            )));
        }
        Ok(Self { entity, relation })
    }

    pub fn dim(&self) -> usize {
        self.entity.cols()
    }

    pub fn entity_count(&self) -> usize {
        self.entity.rows()
    }

    pub fn relation_count(&self) -> usize {
        self.relation.rows()
    }

    pub fn check_congruent(&self, other: &EmbeddingSet) -> Result<()> {
        self.entity
            .check_same_shape(&other.entity, "entity matrix")?;
        self.relation
            .check_same_shape(&other.relation, "relation matrix")
    }

    pub fn is_finite(&self) -> bool {
        self.entity.is_finite() && self.relation.is_finite()
    }

    /// Both matrices as one flat coordinate sequence (entity first).
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.entity
            .as_slice()
            .iter()
            .chain(self.relation.as_slice())
    }

    /// SHA-256 of the exact bit patterns, for cheap bitwise comparisons.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for m in [&self.entity, &self.relation] {
            hasher.update((m.rows() as u64).to_le_bytes());
            hasher.update((m.cols() as u64).to_le_bytes());
            for x in m.as_slice() {
                hasher.update(x.to_bits().to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

/// Glorot-uniform initialisation, `U[-b, b]` with `b = sqrt(6 / (rows + d))`
/// per matrix.
pub fn init_embeddings(
    model: ModelKind,
    entity_count: usize,
    relation_count: usize,
    d: usize,
    seed: u64,
) -> Result<EmbeddingSet> {
    model.check_dim(d)?;
    let fill = |rows: usize, index: u64| {
        let bound = (6.0 / (rows + d) as f64).sqrt();
        let mut rng = stream_rng(seed, Stream::Init, index);
        let data = (0..rows * d)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Matrix::from_vec(rows, d, data)
    };
    EmbeddingSet::new(fill(entity_count, 0)?, fill(relation_count, 1)?)
}

/// Writes `f(h, r)` into `out`, so that `score(h, r, t) = out · t`.
pub fn combine_into(model: ModelKind, h: &[f64], r: &[f64], out: &mut [f64]) {
    debug_assert!(h.len() == r.len() && r.len() == out.len());
    match model {
        ModelKind::DistMult | ModelKind::Keci { .. } => {
            for ((o, a), b) in out.iter_mut().zip(h).zip(r) {
                *o = a * b;
            }
        }
        ModelKind::ComplEx => {
            // Re(<h, r, conj(t)>) = (h r)_re · t_re + (h r)_im · t_im
            let k = h.len() / 2;
            let (h_re, h_im) = h.split_at(k);
            let (r_re, r_im) = r.split_at(k);
            let (o_re, o_im) = out.split_at_mut(k);
            for i in 0..k {
                o_re[i] = h_re[i] * r_re[i] - h_im[i] * r_im[i];
                o_im[i] = h_re[i] * r_im[i] + h_im[i] * r_re[i];
            }
        }
        ModelKind::QMult => {
            let k = h.len() / 4;
            for i in 0..k {
                let q = hamilton(
                    [h[i], h[k + i], h[2 * k + i], h[3 * k + i]],
                    [r[i], r[k + i], r[2 * k + i], r[3 * k + i]],
                );
                out[i] = q[0];
                out[k + i] = q[1];
                out[2 * k + i] = q[2];
                out[3 * k + i] = q[3];
            }
        }
    }
}

pub fn combine(model: ModelKind, h: &[f64], r: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; h.len()];
    combine_into(model, h, r, &mut out);
    out
}

/// Hamilton product of `(w, x, y, z)` quaternions.
#[inline]
pub fn hamilton(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    let [a1, b1, c1, d1] = a;
    let [a2, b2, c2, d2] = b;
    [
        a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
        a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
        a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
        a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
    ]
}

/// Vector-Jacobian product of `combine`: accumulates `J_h^T g` into `dh` and
/// `J_r^T g` into `dr`.
pub fn combine_backward(
    model: ModelKind,
    h: &[f64],
    r: &[f64],
    g: &[f64],
    dh: &mut [f64],
    dr: &mut [f64],
) {
    match model {
        ModelKind::DistMult | ModelKind::Keci { .. } => {
            for i in 0..h.len() {
                dh[i] += g[i] * r[i];
                dr[i] += g[i] * h[i];
            }
        }
        ModelKind::ComplEx => {
            let k = h.len() / 2;
            for i in 0..k {
                let (hr, hi, rr, ri) = (h[i], h[k + i], r[i], r[k + i]);
                let (gr, gi) = (g[i], g[k + i]);
                dh[i] += gr * rr + gi * ri;
                dh[k + i] += -gr * ri + gi * rr;
                dr[i] += gr * hr + gi * hi;
                dr[k + i] += -gr * hi + gi * hr;
            }
        }
        ModelKind::QMult => {
            let k = h.len() / 4;
            for i in 0..k {
                let (a1, b1, c1, d1) = (h[i], h[k + i], h[2 * k + i], h[3 * k + i]);
                let (a2, b2, c2, d2) = (r[i], r[k + i], r[2 * k + i], r[3 * k + i]);
                let (gw, gx, gy, gz) = (g[i], g[k + i], g[2 * k + i], g[3 * k + i]);
                dh[i] += gw * a2 + gx * b2 + gy * c2 + gz * d2;
                dh[k + i] += -gw * b2 + gx * a2 - gy * d2 + gz * c2;
                dh[2 * k + i] += -gw * c2 + gx * d2 + gy * a2 - gz * b2;
                dh[3 * k + i] += -gw * d2 - gx * c2 + gy * b2 + gz * a2;
                dr[i] += gw * a1 + gx * b1 + gy * c1 + gz * d1;
                dr[k + i] += -gw * b1 + gx * a1 + gy * d1 - gz * c1;
                dr[2 * k + i] += -gw * c1 - gx * d1 + gy * a1 + gz * b1;
                dr[3 * k + i] += -gw * d1 + gx * c1 - gy * b1 + gz * a1;
            }
        }
    }
}

fn check_pairs(params: &EmbeddingSet, pairs: &[(usize, usize)]) -> Result<()> {
    for &(h, r) in pairs {
        if h >= params.entity_count() || r >= params.relation_count() {
            return Err(Error::IndexOutOfRange(format!(
                "pair ({h}, {r}) for {} entities and {} relations",
                params.entity_count(),
                params.relation_count()
            )));
        }
    }
    Ok(())
}

/// `combine(h_i, r_i)` for every pair, one row each.
pub fn combine_rows(
    model: ModelKind,
    params: &EmbeddingSet,
    pairs: &[(usize, usize)],
    exec: Exec,
) -> Result<Matrix> {
    check_pairs(params, pairs)?;
    let d = params.dim();
    let mut out = Matrix::zeros(pairs.len(), d);
    exec.for_each_row(out.as_mut_slice(), d, |i, row| {
        let (h, r) = pairs[i];
        combine_into(model, params.entity.row(h), params.relation.row(r), row);
    });
    Ok(out)
}

/// Scores of every pair against every entity: `combine(h, r) · E^T`.
pub fn score_all_tails(
    model: ModelKind,
    params: &EmbeddingSet,
    pairs: &[(usize, usize)],
) -> Result<Matrix> {
    score_all_tails_with(model, params, pairs, Exec::default())
}

pub fn score_all_tails_with(
    model: ModelKind,
    params: &EmbeddingSet,
    pairs: &[(usize, usize)],
    exec: Exec,
) -> Result<Matrix> {
    let combined = combine_rows(model, params, pairs, exec)?;
    Ok(score_combined(&combined, &params.entity, exec))
}

/// Rows of `combined` against every entity row.
pub fn score_combined(combined: &Matrix, entity: &Matrix, exec: Exec) -> Matrix {
    let n = entity.rows();
    let mut scores = Matrix::zeros(combined.rows(), n);
    exec.for_each_row(scores.as_mut_slice(), n, |i, row| {
        let f = combined.row(i);
        for (j, s) in row.iter_mut().enumerate() {
            *s = dot(f, entity.row(j));
        }
    });
    scores
}

/// One score row for a single `(head, relation)` query.
pub fn score_row(
    model: ModelKind,
    params: &EmbeddingSet,
    head: usize,
    relation: usize,
) -> Vec<f64> {
    let f = combine(
        model,
        params.entity.row(head),
        params.relation.row(relation),
    );
    params.entity.iter_rows().map(|e| dot(&f, e)).collect()
}

pub fn score_triple(
    model: ModelKind,
    params: &EmbeddingSet,
    head: usize,
    relation: usize,
    tail: usize,
) -> Result<f64> {
    check_pairs(params, &[(head, relation)])?;
    if tail >= params.entity_count() {
        return Err(Error::IndexOutOfRange(format!("tail {tail}")));
    }
    let f = combine(
        model,
        params.entity.row(head),
        params.relation.row(relation),
    );
    Ok(dot(&f, params.entity.row(tail)))
}

/// Gradients of a batch loss with respect to the inputs of `score_all_tails`.
#[derive(Clone, Debug)]
pub struct BatchGradients {
    /// Entity matrix in its role as the tail side (`entity_count x d`).
    pub d_entity: Matrix,
    /// Per-pair head-row gradients (`pairs x d`).
    pub d_heads: Matrix,
    /// Per-pair relation-row gradients (`pairs x d`).
    pub d_relations: Matrix,
}

/// Dense gradients congruent to an [`EmbeddingSet`].
#[derive(Clone, Debug)]
pub struct EmbeddingGrads {
    pub entity: Matrix,
    pub relation: Matrix,
}

impl BatchGradients {
    /// Sums every contribution into dense matrices, scattering per-pair rows
    /// in pair order.
    pub fn accumulate(&self, pairs: &[(usize, usize)], relation_count: usize) -> EmbeddingGrads {
        let mut entity = self.d_entity.clone();
        let mut relation = Matrix::zeros(relation_count, self.d_entity.cols());
        for (i, &(h, r)) in pairs.iter().enumerate() {
            axpy(1.0, self.d_heads.row(i), entity.row_mut(h));
            axpy(1.0, self.d_relations.row(i), relation.row_mut(r));
        }
        EmbeddingGrads { entity, relation }
    }
}

pub fn grad_step_inputs(
    model: ModelKind,
    params: &EmbeddingSet,
    pairs: &[(usize, usize)],
    d_scores: &Matrix,
) -> Result<BatchGradients> {
    let combined = combine_rows(model, params, pairs, Exec::default())?;
    grad_from_combined(model, params, pairs, &combined, d_scores, Exec::default())
}

/// Backward pass given the already computed `combine` rows.
pub fn grad_from_combined(
    model: ModelKind,
    params: &EmbeddingSet,
    pairs: &[(usize, usize)],
    combined: &Matrix,
    d_scores: &Matrix,
    exec: Exec,
) -> Result<BatchGradients> {
    let n = params.entity_count();
    let d = params.dim();
    if d_scores.shape() != (pairs.len(), n) || combined.shape() != (pairs.len(), d) {
        return Err(Error::Shape(format!(
            "score gradient {:?} for {} pairs and {n} entities",
            d_scores.shape(),
            pairs.len()
        )));
    }
    check_pairs(params, pairs)?;

    // d_entity[j] = sum_i d_scores[i, j] * combined[i]
    let batch = pairs.len();
    let mut transposed = Matrix::zeros(n, batch);
    for i in 0..batch {
        for (j, &g) in d_scores.row(i).iter().enumerate() {
            transposed.set(j, i, g);
        }
    }
    let mut d_entity = Matrix::zeros(n, d);
    exec.for_each_row(d_entity.as_mut_slice(), d, |j, out| {
        for (i, &g) in transposed.row(j).iter().enumerate() {
            if g != 0.0 {
                axpy(g, combined.row(i), out);
            }
        }
    });

    // d_combined[i] = d_scores[i] · E, then through the combine Jacobian.
    let mut packed = Matrix::zeros(batch, 2 * d);
    exec.for_each_row(packed.as_mut_slice(), 2 * d, |i, out| {
        let mut g = vec![0.0; d];
        for (j, &s) in d_scores.row(i).iter().enumerate() {
            if s != 0.0 {
                axpy(s, params.entity.row(j), &mut g);
            }
        }
        let (h, r) = pairs[i];
        let (dh, dr) = out.split_at_mut(d);
        combine_backward(
            model,
            params.entity.row(h),
            params.relation.row(r),
            &g,
            dh,
            dr,
        );
    });
    let mut d_heads = Matrix::zeros(batch, d);
    let mut d_relations = Matrix::zeros(batch, d);
    for i in 0..batch {
        let (dh, dr) = packed.row(i).split_at(d);
        d_heads.row_mut(i).copy_from_slice(dh);
        d_relations.row_mut(i).copy_from_slice(dr);
    }
    Ok(BatchGradients {
        d_entity,
        d_heads,
        d_relations,
    })
}
