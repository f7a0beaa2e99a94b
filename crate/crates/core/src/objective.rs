//! One-class and self-supervised losses, the joint objective, and the
//! composite anomaly score.
//!
//! The plain-value functions (`svdd_loss`, `ssl_loss`, …) are the reference
//! definitions. [`graph_objective`] and [`regularizer`] build the same
//! quantities on a tape so training can differentiate them; the batch loss
//! is the sum of one `graph_objective` per graph plus one `regularizer`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hetgraph::HeteroGraph;
use crate::layers::{model_forward, ModelError, ModelParams};
use crate::numerics::{Matrix, NumericsError, ParamKind, ParamSet, Tape, Var};

/// Probabilities are clamped to `[PROB_FLOOR, 1 − PROB_FLOOR]` before any
/// logarithm.
pub const PROB_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvddState {
    pub center: Vec<f64>,
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("cannot compute a center from an empty batch")]
    EmptyBatch,
    #[error("embedding has {got} dimensions, center has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("center is not frozen yet")]
    NotFrozen,
    #[error("probability {0} is outside (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("self-supervised loss needs at least one graph")]
    NoGraphs,
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<NumericsError> for ObjectiveError {
    fn from(e: NumericsError) -> Self {
        ObjectiveError::Model(ModelError::Numerics(e))
    }
}

/// Elementwise mean of the batch embeddings; the result is frozen.
pub fn compute_center(embeddings: &[Vec<f64>]) -> Result<SvddState, ObjectiveError> {
    let first = embeddings.first().ok_or(ObjectiveError::EmptyBatch)?;
    let mut center = vec![0.0; first.len()];
    for e in embeddings {
        if e.len() != center.len() {
            return Err(ObjectiveError::DimensionMismatch { expected: center.len(), got: e.len() });
        }
        for (c, v) in center.iter_mut().zip(e) {
            *c += v;
        }
    }
    let n = embeddings.len() as f64;
    center.iter_mut().for_each(|c| *c /= n);
    Ok(SvddState { center, frozen: true })
}

/// `‖e − c‖²`.
pub fn svdd_distance(embedding: &[f64], state: &SvddState) -> Result<f64, ObjectiveError> {
    if embedding.len() != state.center.len() {
        return Err(ObjectiveError::DimensionMismatch { expected: state.center.len(), got: embedding.len() });
    }
    Ok(embedding.iter().zip(&state.center).map(|(e, c)| (e - c) * (e - c)).sum())
}

/// `(λ/2) Σ ‖W‖²_F` over weight matrices; biases are not penalized.
pub fn weight_penalty(params: &ParamSet, lambda: f64) -> f64 {
    let sum: f64 = params.iter().filter(|(_, p)| p.kind == ParamKind::Weight).map(|(_, p)| p.value.frobenius_sq()).sum();
    0.5 * lambda * sum
}

/// Mean squared distance to the center plus the weight penalty.
pub fn svdd_loss(
    embeddings: &[Vec<f64>],
    state: &SvddState,
    params: &ParamSet,
    lambda: f64,
) -> Result<f64, ObjectiveError> {
    if !state.frozen {
        return Err(ObjectiveError::NotFrozen);
    }
    let mut total = 0.0;
    for e in embeddings {
        total += svdd_distance(e, state)?;
    }
    let mean = if embeddings.is_empty() { 0.0 } else { total / embeddings.len() as f64 };
    Ok(mean + weight_penalty(params, lambda))
}

/// Binary cross-entropy over the pooled set, labelling originals 0 and
/// augmented graphs 1.
pub fn ssl_loss(probs_original: &[f64], probs_augmented: &[f64]) -> Result<f64, ObjectiveError> {
    let n = probs_original.len() + probs_augmented.len();
    if n == 0 {
        return Err(ObjectiveError::NoGraphs);
    }
    let mut total = 0.0;
    for (&p, augmented) in probs_original.iter().map(|p| (p, false)).chain(probs_augmented.iter().map(|p| (p, true))) {
        if !(p > 0.0 && p < 1.0) {
            return Err(ObjectiveError::ProbabilityOutOfRange(p));
        }
        total -= if augmented { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(total / n as f64)
}

pub fn joint_loss(svdd: f64, ssl: f64, alpha: f64) -> f64 {
    svdd + alpha * ssl
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredGraph {
    pub graph_id: String,
    pub svdd_distance: f64,
    pub ssl_prob: f64,
    pub score: f64,
}

/// Distance times abnormality probability when the self-supervised branch
/// is active, the bare distance otherwise.
pub fn anomaly_score(
    graph_id: &str,
    embedding: &[f64],
    ssl_prob: f64,
    state: &SvddState,
    ssl_active: bool,
) -> Result<ScoredGraph, ObjectiveError> {
    if !state.frozen {
        return Err(ObjectiveError::NotFrozen);
    }
    let svdd_distance = svdd_distance(embedding, state)?;
    let score = if ssl_active { svdd_distance * ssl_prob } else { svdd_distance };
    Ok(ScoredGraph { graph_id: graph_id.to_string(), svdd_distance, ssl_prob, score })
}

/// Normalizers of one batch: SVDD terms are divided by `svdd_count`, the
/// cross-entropy terms by `ssl_count` and weighted by `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchScale {
    pub svdd_count: usize,
    pub ssl_count: usize,
    pub alpha: f64,
}

/// Scalar values of one graph's contribution, for logging.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GraphTerms {
    pub distance: f64,
    /// Unnormalized cross-entropy of the original and its partner; zero
    /// without a partner.
    pub cross_entropy: f64,
}

fn clamped_log(tape: &mut Tape<'_>, prob: Var, augmented: bool) -> Result<Var, ObjectiveError> {
    let p = tape.clamp(prob, PROB_FLOOR, 1.0 - PROB_FLOOR);
    let q = if augmented { p } else { tape.affine(p, -1.0, 1.0) };
    Ok(tape.log(q)?)
}

/// One graph's share of the batch loss:
/// `‖φ₁(g) − c‖² / n + α · (−ln(1 − φ₂(g)) − ln φ₂(g̃)) / N`, where the
/// cross-entropy part is present only when `partner` is given.
pub fn graph_objective(
    graph: &HeteroGraph,
    partner: Option<&HeteroGraph>,
    params: &ModelParams,
    center: &[f64],
    scale: BatchScale,
    tape: &mut Tape<'_>,
) -> Result<(Var, GraphTerms), ObjectiveError> {
    let out = model_forward(graph, params, tape)?;
    let c = tape.constant(Matrix::row_vector(center));
    let dist = tape.sq_distance(out.embedding, c)?;
    let mut terms = GraphTerms { distance: tape.value(dist).item(), cross_entropy: 0.0 };
    let mut loss = tape.scale(dist, 1.0 / scale.svdd_count as f64);
    if let Some(aug) = partner {
        let aug_out = model_forward(aug, params, tape)?;
        let lo = clamped_log(tape, out.ssl_prob, false)?;
        let la = clamped_log(tape, aug_out.ssl_prob, true)?;
        let ll = tape.sum(&[lo, la])?;
        terms.cross_entropy = -tape.value(ll).item();
        let ce = tape.scale(ll, -scale.alpha / scale.ssl_count as f64);
        loss = tape.sum(&[loss, ce])?;
    }
    Ok((loss, terms))
}

/// `(λ/2) Σ ‖W‖²_F` on the tape, over every weight-kind parameter.
pub fn regularizer(params: &ModelParams, lambda: f64, tape: &mut Tape<'_>) -> Result<Var, ObjectiveError> {
    let mut terms = Vec::new();
    for (id, p) in params.set.iter() {
        if p.kind == ParamKind::Weight {
            let v = tape.param(id);
            terms.push(tape.frob_norm_sq(v));
        }
    }
    if terms.is_empty() {
        return Ok(tape.constant(Matrix::scalar(0.0)));
    }
    let total = tape.sum(&terms)?;
    Ok(tape.scale(total, 0.5 * lambda))
}
