//! Distribution-aware corruptions of heterogeneous graphs for the
//! self-supervised branch.
//!
//! All operators keep the node set, the feature matrix, and the schema
//! ranges; they only rewire edges or relabel types. Randomness comes from
//! caller-supplied streams so results replay exactly.

use std::collections::{BTreeMap, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hetgraph::{Edge, EdgeType, HeteroGraph, NodeType, TypeHistograms};

/// Intensities of the four operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub p_perturb: f64,
    pub p_replace: f64,
    pub p_node_swap: f64,
    pub p_edge_swap: f64,
}

impl AugmentConfig {
    pub const DISABLED: AugmentConfig =
        AugmentConfig { enabled: false, p_perturb: 0.0, p_replace: 0.0, p_node_swap: 0.0, p_edge_swap: 0.0 };

    /// Tuned values for trace-log style graphs.
    pub fn tracelog() -> Self {
        Self { enabled: true, p_perturb: 0.84, p_replace: 0.13, p_node_swap: 0.1, p_edge_swap: 0.17 }
    }

    /// Tuned values for flow-graph style graphs; perturbation and edge-type
    /// swapping are off.
    pub fn flowgraph() -> Self {
        Self { enabled: true, p_perturb: 0.0, p_replace: 0.39, p_node_swap: 0.52, p_edge_swap: 0.0 }
    }

    /// Returns the name and value of the first intensity outside `[0, 1]`.
    pub fn check(&self) -> Result<(), (&'static str, f64)> {
        for (name, v) in [
            ("augment.p_perturb", self.p_perturb),
            ("augment.p_replace", self.p_replace),
            ("augment.p_node_swap", self.p_node_swap),
            ("augment.p_edge_swap", self.p_edge_swap),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err((name, v));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AugmentError {
    #[error("graph has no edges")]
    NoEdges,
    #[error("graph has {present} distinct {kind} types present, need at least 2")]
    TooFewTypes { kind: &'static str, present: usize },
}

/// `round(p · count)`.
fn rounded(p: f64, count: usize) -> usize {
    ((p * count as f64).round() as usize).min(count)
}

/// `⌈p · count⌉`, tolerant to representation error in the product
/// (`0.1 · 30` must give 3).
fn ceiled(p: f64, count: usize) -> usize {
    ((p * count as f64 - 1e-9).ceil().max(0.0) as usize).min(count)
}

fn pick<R: Rng + ?Sized, T: Copy>(items: &[T], rng: &mut R) -> T {
    items[rng.random_range(0..items.len())]
}

/// Sparse `A ⊕ C`: flips `k = round(p·|E|)` present entries to absent and
/// up to `k` absent entries to present. New endpoints are drawn by node
/// type pair from `pair_probs`, uniform within each type, with the edge
/// type drawn from `edge_type_probs`. Self-loops are never added, since
/// every node already carries an implicit one. A draw hitting an existing
/// entry is retried up to 100 times, then that addition is skipped.
pub fn edge_perturb<R: Rng + ?Sized>(graph: &HeteroGraph, hist: &TypeHistograms, p: f64, rng: &mut R) -> HeteroGraph {
    let m = graph.edge_count();
    let k = rounded(p, m);
    if k == 0 {
        return graph.clone();
    }
    let removed: HashSet<usize> = sample(rng, m, k).into_iter().collect();
    let occupied: HashSet<(usize, usize)> = graph.edges.iter().map(|e| (e.src, e.dst)).collect();

    let mut out = graph.clone();
    out.edges.clear();
    out.edge_types.clear();
    for (i, (e, t)) in graph.typed_edges().enumerate() {
        if !removed.contains(&i) {
            out.edges.push(e);
            out.edge_types.push(t);
        }
    }

    let pairs: Vec<(NodeType, NodeType)> = hist.pair_probs.keys().copied().collect();
    let pair_w: Vec<f64> = hist.pair_probs.values().copied().collect();
    let etypes: Vec<EdgeType> = hist.edge_type_probs.keys().copied().collect();
    let et_w: Vec<f64> = hist.edge_type_probs.values().copied().collect();
    let (Ok(pair_dist), Ok(et_dist)) = (WeightedIndex::new(&pair_w), WeightedIndex::new(&et_w)) else {
        return out;
    };
    let by_type = graph.nodes_by_type(graph.node_types.iter().copied().max().map_or(0, |t| t + 1));
    let members = |t: NodeType| by_type.get(t).map(|v| v.as_slice()).unwrap_or(&[]);
    let mut added: HashSet<(usize, usize)> = HashSet::new();
    for _ in 0..k {
        for _attempt in 0..100 {
            let (s, d) = pairs[pair_dist.sample(rng)];
            let (srcs, dsts) = (members(s), members(d));
            if srcs.is_empty() || dsts.is_empty() {
                continue;
            }
            let (src, dst) = (pick(srcs, rng), pick(dsts, rng));
            if src == dst || occupied.contains(&(src, dst)) || added.contains(&(src, dst)) {
                continue;
            }
            added.insert((src, dst));
            out.edges.push(Edge { src, dst });
            out.edge_types.push(etypes[et_dist.sample(rng)]);
            break;
        }
    }
    out
}

/// Buckets a replacement edge may land in for `graph`, with probability
/// proportional to the inverse prior. Only buckets with a nonzero prior and
/// both endpoint types present in the graph qualify.
pub fn inverse_prior_law(graph: &HeteroGraph, hist: &TypeHistograms) -> Vec<((NodeType, NodeType, EdgeType), f64)> {
    let present: HashSet<NodeType> = graph.node_types.iter().copied().collect();
    let raw: Vec<_> = hist
        .triple_probs
        .iter()
        .filter(|(&(s, d, _), &p)| p > 0.0 && present.contains(&s) && present.contains(&d))
        .map(|(&key, &p)| (key, 1.0 / p))
        .collect();
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    raw.into_iter().map(|(k, w)| (k, w / total)).collect()
}

/// Replaces `k = round(p·|E|)` edges: `k` new edges drawn from
/// [`inverse_prior_law`], and `k` existing edges removed one at a time from
/// whichever `(src, dst, edge)` bucket currently holds the most edges (ties
/// to the smallest key). The edge count is preserved exactly.
pub fn edge_replace<R: Rng + ?Sized>(
    graph: &HeteroGraph,
    hist: &TypeHistograms,
    p: f64,
    rng: &mut R,
) -> Result<HeteroGraph, AugmentError> {
    let m = graph.edge_count();
    if m == 0 {
        return Err(AugmentError::NoEdges);
    }
    let k = rounded(p, m);
    let law = inverse_prior_law(graph, hist);
    if k == 0 || law.is_empty() {
        return Ok(graph.clone());
    }
    let weights: Vec<f64> = law.iter().map(|(_, w)| *w).collect();
    let dist = WeightedIndex::new(&weights).expect("positive inverse weights");
    let by_type = graph.nodes_by_type(graph.node_types.iter().copied().max().map_or(0, |t| t + 1));

    let mut new_edges = Vec::with_capacity(k);
    for _ in 0..k {
        let (s, d, e) = law[dist.sample(rng)].0;
        let src = pick(&by_type[s], rng);
        let dst = pick(&by_type[d], rng);
        new_edges.push((Edge { src, dst }, e));
    }

    let mut buckets: BTreeMap<(NodeType, NodeType, EdgeType), Vec<usize>> = BTreeMap::new();
    for (i, (e, t)) in graph.typed_edges().enumerate() {
        buckets.entry((graph.node_types[e.src], graph.node_types[e.dst], t)).or_default().push(i);
    }
    let mut removed = HashSet::with_capacity(k);
    for _ in 0..k {
        let fullest = buckets
            .iter_mut()
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then_with(|| b.0.cmp(a.0)))
            .map(|(_, v)| v)
            .expect("edges remain");
        let pos = rng.random_range(0..fullest.len());
        removed.insert(fullest.swap_remove(pos));
    }

    let mut out = graph.clone();
    out.edges.clear();
    out.edge_types.clear();
    for (i, (e, t)) in graph.typed_edges().enumerate() {
        if !removed.contains(&i) {
            out.edges.push(e);
            out.edge_types.push(t);
        }
    }
    for (e, t) in new_edges {
        out.edges.push(e);
        out.edge_types.push(t);
    }
    Ok(out)
}

/// Picks an unordered pair of distinct present labels uniformly, then
/// swaps `⌈p·|a|⌉` uniformly chosen `a` labels with `⌈p·|b|⌉` `b` labels.
fn swap_labels<R: Rng + ?Sized>(labels: &mut [usize], p: f64, kind: &'static str, rng: &mut R) -> Result<(), AugmentError> {
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(AugmentError::TooFewTypes { kind, present: present.len() });
    }
    let mut pairs = Vec::new();
    for (i, &a) in present.iter().enumerate() {
        for &b in &present[i + 1..] {
            pairs.push((a, b));
        }
    }
    let (a, b) = pick(&pairs, rng);
    let of_a: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == a).collect();
    let of_b: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == b).collect();
    let chosen_a = sample(rng, of_a.len(), ceiled(p, of_a.len()));
    let chosen_b = sample(rng, of_b.len(), ceiled(p, of_b.len()));
    for i in chosen_a {
        labels[of_a[i]] = b;
    }
    for i in chosen_b {
        labels[of_b[i]] = a;
    }
    Ok(())
}

pub fn swap_node_types<R: Rng + ?Sized>(graph: &HeteroGraph, p: f64, rng: &mut R) -> Result<HeteroGraph, AugmentError> {
    let mut out = graph.clone();
    swap_labels(&mut out.node_types, p, "node", rng)?;
    Ok(out)
}

pub fn swap_edge_types<R: Rng + ?Sized>(graph: &HeteroGraph, p: f64, rng: &mut R) -> Result<HeteroGraph, AugmentError> {
    let mut out = graph.clone();
    swap_labels(&mut out.edge_types, p, "edge", rng)?;
    Ok(out)
}

/// Applies perturb → replace → node swap → edge swap in that order, each at
/// its configured intensity. Operators whose precondition fails on the
/// intermediate graph are skipped. A disabled config returns a copy.
pub fn augment<R: Rng + ?Sized>(
    graph: &HeteroGraph,
    hist: &TypeHistograms,
    config: &AugmentConfig,
    rng: &mut R,
) -> HeteroGraph {
    if !config.enabled {
        return graph.clone();
    }
    let mut g = edge_perturb(graph, hist, config.p_perturb, rng);
    if let Ok(next) = edge_replace(&g, hist, config.p_replace, rng) {
        g = next;
    }
    if let Ok(next) = swap_node_types(&g, config.p_node_swap, rng) {
        g = next;
    }
    if let Ok(next) = swap_edge_types(&g, config.p_edge_swap, rng) {
        g = next;
    }
    g
}
