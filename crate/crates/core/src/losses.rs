//! Bi-encoder training objectives evaluated directly on embedding matrices.
//!
//! A [`LossBatch`] holds `B` (query, positive, negative) embedding triples as
//! the rows of three `B × dim` matrices. Every loss returns its batch mean,
//! the per-row values, and analytic gradients with respect to all three
//! matrices.

use nalgebra::{DMatrix, DVector};

use crate::corpus::Triple;
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 5.0;
pub const DEFAULT_BETA: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct LossBatch {
    pub queries: DMatrix<f64>,
    pub positives: DMatrix<f64>,
    pub negatives: DMatrix<f64>,
    /// Triplet margin.
    pub alpha: f64,
    /// Weight of the in-batch term in the combined loss.
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    /// Mean of `per_row`.
    pub loss: f64,
    pub per_row: Vec<f64>,
    pub grad_queries: DMatrix<f64>,
    pub grad_positives: DMatrix<f64>,
    pub grad_negatives: DMatrix<f64>,
}

impl LossBatch {
    pub fn new(queries: DMatrix<f64>, positives: DMatrix<f64>, negatives: DMatrix<f64>) -> Result<Self> {
        let batch = Self {
            queries,
            positives,
            negatives,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    /// Assembles a batch by looking triple members up in embedding stores.
    pub fn from_triples(
        triples: &[Triple],
        query_embeddings: &EmbeddingMatrix,
        doc_embeddings: &EmbeddingMatrix,
    ) -> Result<Self> {
        let dim = query_embeddings.dim();
        if doc_embeddings.dim() != dim {
            return Err(Error::arg(format!(
                "query dim {dim} differs from document dim {}",
                doc_embeddings.dim()
            )));
        }
        let gather = |store: &EmbeddingMatrix, ids: Vec<&str>| -> Result<DMatrix<f64>> {
            let mut m = DMatrix::zeros(ids.len(), dim);
            for (r, id) in ids.into_iter().enumerate() {
                let v = store
                    .get(id)
                    .ok_or_else(|| Error::invalid(format!("no embedding for `{id}`")))?;
                for (c, &x) in v.iter().enumerate() {
                    m[(r, c)] = f64::from(x);
                }
            }
            Ok(m)
        };
        Self::new(
            gather(query_embeddings, triples.iter().map(|t| t.query_id.as_str()).collect())?,
            gather(doc_embeddings, triples.iter().map(|t| t.pos_doc_id.as_str()).collect())?,
            gather(doc_embeddings, triples.iter().map(|t| t.neg_doc_id.as_str()).collect())?,
        )
    }

    pub fn size(&self) -> usize {
        self.queries.nrows()
    }

    pub fn dim(&self) -> usize {
        self.queries.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.queries.shape();
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::arg("a loss batch needs at least one row and one column"));
        }
        if self.positives.shape() != shape || self.negatives.shape() != shape {
            return Err(Error::arg(format!(
                "inconsistent batch shapes: {:?}, {:?}, {:?}",
                shape,
                self.positives.shape(),
                self.negatives.shape()
            )));
        }
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        if !(finite(&self.queries) && finite(&self.positives) && finite(&self.negatives)) {
            return Err(Error::arg("batch contains non-finite entries"));
        }
        if !self.alpha.is_finite() {
            return Err(Error::arg("alpha must be finite"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::arg(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        Ok(())
    }

    fn zeros(&self) -> DMatrix<f64> {
        DMatrix::zeros(self.size(), self.dim())
    }
}

/// Softmax cross-entropy of each query against all 2B batch documents
/// (every positive and every negative), with its own positive as target.
pub fn inbatch_nll(batch: &LossBatch) -> Result<LossOutput> {
    batch.validate()?;
    let b = batch.size();
    let inv_b = 1.0 / b as f64;
    // scores[(i, j)] = q_i · pos_j ; scores[(i, B + j)] = q_i · neg_j
    let mut scores = DMatrix::zeros(b, 2 * b);
    scores
        .columns_mut(0, b)
        .copy_from(&(&batch.queries * batch.positives.transpose()));
    scores
        .columns_mut(b, b)
        .copy_from(&(&batch.queries * batch.negatives.transpose()));

    let mut per_row = Vec::with_capacity(b);
    let mut coeff = DMatrix::zeros(b, 2 * b);
    for i in 0..b {
        let row = scores.row(i);
        let max = row.max();
        let total: f64 = row.iter().map(|s| (s - max).exp()).sum();
        let log_z = max + total.ln();
        per_row.push(log_z - scores[(i, i)]);
        for j in 0..2 * b {
            coeff[(i, j)] = (scores[(i, j)] - log_z).exp() * inv_b;
        }
        coeff[(i, i)] -= inv_b;
    }

    let grad_queries =
        coeff.columns(0, b) * &batch.positives + coeff.columns(b, b) * &batch.negatives;
    let grad_positives = coeff.columns(0, b).transpose() * &batch.queries;
    let grad_negatives = coeff.columns(b, b).transpose() * &batch.queries;
    Ok(LossOutput {
        loss: per_row.iter().sum::<f64>() * inv_b,
        per_row,
        grad_queries,
        grad_positives,
        grad_negatives,
    })
}

fn unit_or_zero(v: DVector<f64>) -> (f64, DVector<f64>) {
    let norm = v.norm();
    if norm == 0.0 {
        (0.0, v)
    } else {
        (norm, v / norm)
    }
}

/// Hinge `max(0, ‖q − d⁺‖ − ‖q − d⁻‖ + α)` with Euclidean distances.
/// The subgradient is zero where the hinge is not strictly active.
pub fn triplet_loss(batch: &LossBatch) -> Result<LossOutput> {
    batch.validate()?;
    let b = batch.size();
    let inv_b = 1.0 / b as f64;
    let mut grad_queries = batch.zeros();
    let mut grad_positives = batch.zeros();
    let mut grad_negatives = batch.zeros();
    let mut per_row = Vec::with_capacity(b);
    for i in 0..b {
        let q = batch.queries.row(i).transpose();
        let (d_pos, u_pos) = unit_or_zero(&q - batch.positives.row(i).transpose());
        let (d_neg, u_neg) = unit_or_zero(&q - batch.negatives.row(i).transpose());
        let margin = d_pos - d_neg + batch.alpha;
        if margin > 0.0 {
            per_row.push(margin);
            grad_queries.set_row(i, &((&u_pos - &u_neg) * inv_b).transpose());
            grad_positives.set_row(i, &(-&u_pos * inv_b).transpose());
            grad_negatives.set_row(i, &(&u_neg * inv_b).transpose());
        } else {
            per_row.push(0.0);
        }
    }
    Ok(LossOutput {
        loss: per_row.iter().sum::<f64>() * inv_b,
        per_row,
        grad_queries,
        grad_positives,
        grad_negatives,
    })
}

/// `β · in-batch + (1 − β) · triplet`, gradients combined linearly.
pub fn combined_loss(batch: &LossBatch) -> Result<LossOutput> {
    let inbatch = inbatch_nll(batch)?;
    let triplet = triplet_loss(batch)?;
    let (w_i, w_t) = (batch.beta, 1.0 - batch.beta);
    Ok(LossOutput {
        loss: w_i * inbatch.loss + w_t * triplet.loss,
        per_row: inbatch
            .per_row
            .iter()
            .zip(&triplet.per_row)
            .map(|(a, b)| w_i * a + w_t * b)
            .collect(),
        grad_queries: inbatch.grad_queries * w_i + triplet.grad_queries * w_t,
        grad_positives: inbatch.grad_positives * w_i + triplet.grad_positives * w_t,
        grad_negatives: inbatch.grad_negatives * w_i + triplet.grad_negatives * w_t,
    })
}
