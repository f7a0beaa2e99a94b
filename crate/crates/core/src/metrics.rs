//! Ranking metrics and the evaluation report.
//!
//! Higher scores mean "more anomalous"; label 1 is the positive class.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hetgraph::{HeteroGraph, Label};
use crate::layers::ModelParams;
use crate::objective::{ScoredGraph, SvddState};
use crate::train::{score_graphs, TrainError, Workers};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("labels must contain both classes")]
    SingleClass,
    #[error("average precision needs at least one positive")]
    NoPositives,
    #[error("{0} scores but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("labels required: graph {0} is unlabeled")]
    Unlabeled(String),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Probability that a random positive outranks a random negative; ties
/// count one half. Computed from mid-ranks in `O(n log n)`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Mean of precision@k over the ranks k of the positives, ranking by
/// descending score with ties kept in input order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 {
        return Err(MetricError::NoPositives);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (k, &i) in idx.iter().enumerate() {
        if labels[i] {
            hits += 1;
            total += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(total / pos as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    #[serde(flatten)]
    pub scored: ScoredGraph,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Mean wall-clock seconds per training batch step, when known.
    pub train_batch_seconds: Option<f64>,
    pub inference_seconds_per_graph: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub ap: f64,
    pub graph_count: usize,
    pub anomalous_count: usize,
    pub records: Vec<ReportRecord>,
    pub timings: Timings,
}

impl EvalReport {
    /// Builds a report from scored records; metrics come from exactly these
    /// records.
    pub fn from_records(records: Vec<ReportRecord>, timings: Timings) -> Result<Self, MetricError> {
        let scores: Vec<f64> = records.iter().map(|r| r.scored.score).collect();
        let labels: Vec<bool> = records.iter().map(|r| r.label == 1).collect();
        Ok(Self {
            auc: auc(&scores, &labels)?,
            ap: average_precision(&scores, &labels)?,
            graph_count: records.len(),
            anomalous_count: labels.iter().filter(|&&l| l).count(),
            records,
            timings,
        })
    }

    /// Per-graph scores as CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("graph_id,label,svdd_distance,ssl_prob,score\n");
        for r in &self.records {
            let s = &r.scored;
            out.push_str(&format!("{},{},{:?},{:?},{:?}\n", s.graph_id, r.label, s.svdd_distance, s.ssl_prob, s.score));
        }
        out
    }
}

/// Scores every labeled graph and assembles the report.
pub fn evaluate(
    params: &ModelParams,
    svdd: &SvddState,
    ssl_active: bool,
    graphs: &[HeteroGraph],
    workers: &Workers,
    train_batch_seconds: Option<f64>,
) -> Result<EvalReport, MetricError> {
    let labels: Vec<u8> = graphs
        .iter()
        .map(|g| g.label.map(Label::as_u8).ok_or_else(|| MetricError::Unlabeled(g.id.clone())))
        .collect::<Result<_, _>>()?;
    let started = Instant::now();
    let scored = score_graphs(params, svdd, ssl_active, graphs, workers)?;
    let per_graph = started.elapsed().as_secs_f64() / graphs.len().max(1) as f64;
    let records = scored.into_iter().zip(labels).map(|(scored, label)| ReportRecord { scored, label }).collect();
    EvalReport::from_records(records, Timings { train_batch_seconds, inference_seconds_per_graph: per_graph })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(labels: &[u8]) -> Vec<bool> {
        labels.iter().map(|&l| l == 1).collect()
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &b(&[1, 1, 0, 0])).unwrap(), 1.0);
        assert_eq!(auc(&[0.3, 0.7], &b(&[1, 0])).unwrap(), 0.0);
        assert_eq!(auc(&[0.4, 0.4], &b(&[1, 0])).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &b(&[1, 1])), Err(MetricError::SingleClass)));
    }

    #[test]
    fn ap_examples() {
        let ap = average_precision(&[0.9, 0.8, 0.7], &b(&[1, 0, 1])).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(average_precision(&[3.0, 2.0, 1.0], &b(&[1, 1, 0])).unwrap(), 1.0);
        assert!((average_precision(&[4.0, 3.0, 2.0, 1.0], &b(&[0, 0, 0, 1])).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(average_precision(&[1.0], &b(&[0])), Err(MetricError::NoPositives)));
    }

    #[test]
    fn ap_ties_follow_input_order() {
        // tied pair: the positive listed first is ranked first
        assert_eq!(average_precision(&[0.5, 0.5], &b(&[1, 0])).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.5, 0.5], &b(&[0, 1])).unwrap(), 0.5);
    }

    #[test]
    fn csv_lists_every_record() {
        let records = vec![
            ReportRecord {
                scored: ScoredGraph { graph_id: "a".into(), svdd_distance: 2.0, ssl_prob: 0.5, score: 1.0 },
                label: 1,
            },
            ReportRecord {
                scored: ScoredGraph { graph_id: "b".into(), svdd_distance: 0.5, ssl_prob: 0.5, score: 0.25 },
                label: 0,
            },
        ];
        let report = EvalReport::from_records(records, Timings { train_batch_seconds: None, inference_seconds_per_graph: 0.0 }).unwrap();
        assert_eq!(report.auc, 1.0);
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("a,1,2.0,0.5,1.0"));
    }
}
