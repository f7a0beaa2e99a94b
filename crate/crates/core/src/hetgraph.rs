//! Attributed heterogeneous graphs and the structural queries the model
//! builds on.
//!
//! Graphs are directed: messages flow from source to destination, and the
//! neighbourhood of a node is its set of incoming edges. Duplicate edges
//! are legal and each one counts independently.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::Matrix;

pub type NodeType = usize;
pub type EdgeType = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GraphSchema {
    pub num_node_types: usize,
    pub num_edge_types: usize,
    pub feature_dim: usize,
}

impl GraphSchema {
    pub fn new(num_node_types: usize, num_edge_types: usize, feature_dim: usize) -> Result<Self, GraphError> {
        let schema = Self { num_node_types, num_edge_types, feature_dim };
        schema.check()?;
        Ok(schema)
    }

    pub fn check(&self) -> Result<(), GraphError> {
        if self.num_node_types == 0 || self.num_edge_types == 0 || self.feature_dim == 0 {
            return Err(GraphError::InvalidSchema(*self));
        }
        Ok(())
    }
}

impl fmt::Display for GraphSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{{node types: {}, edge types: {}, features: {}}}",
            self.num_node_types, self.num_edge_types, self.feature_dim
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Normal => 0,
            Label::Anomalous => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Normal),
            1 => Some(Label::Anomalous),
            _ => None,
        }
    }
}

/// One directed, typed edge `src → dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    pub id: String,
    pub node_types: Vec<NodeType>,
    /// `node_count × feature_dim`.
    pub features: Matrix,
    pub edges: Vec<Edge>,
    pub edge_types: Vec<EdgeType>,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("schema counts must all be positive, got {0}")]
    InvalidSchema(GraphSchema),
    #[error("node index {index} out of range for a graph with {node_count} nodes")]
    NodeOutOfRange { index: usize, node_count: usize },
    #[error("no edges to estimate type distributions from")]
    NoEdges,
}

/// A single invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NodeTypeOutOfRange { node: usize, node_type: NodeType },
    EdgeTypeOutOfRange { edge: usize, edge_type: EdgeType },
    EndpointOutOfRange { edge: usize, endpoint: usize },
    EdgeTypeCountMismatch { edges: usize, edge_types: usize },
    FeatureRowMismatch { rows: usize, nodes: usize },
    FeatureDimMismatch { cols: usize, expected: usize },
    NonFiniteFeature { node: usize, dim: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NodeTypeOutOfRange { node, node_type } => {
                write!(f, "node {node} has node type {node_type} outside the schema")
            }
            Violation::EdgeTypeOutOfRange { edge, edge_type } => {
                write!(f, "edge {edge} has edge type {edge_type} outside the schema")
            }
            Violation::EndpointOutOfRange { edge, endpoint } => {
                write!(f, "edge {edge} references missing node {endpoint}")
            }
            Violation::EdgeTypeCountMismatch { edges, edge_types } => {
                write!(f, "{edges} edges but {edge_types} edge types")
            }
            Violation::FeatureRowMismatch { rows, nodes } => {
                write!(f, "{rows} feature rows for {nodes} nodes")
            }
            Violation::FeatureDimMismatch { cols, expected } => {
                write!(f, "feature width {cols}, schema expects {expected}")
            }
            Violation::NonFiniteFeature { node, dim } => {
                write!(f, "feature {dim} of node {node} is not finite")
            }
        }
    }
}

/// Lists every invariant violation of `graph` under `schema`; empty means
/// valid.
pub fn validate(graph: &HeteroGraph, schema: &GraphSchema) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = graph.node_count();
    for (node, &t) in graph.node_types.iter().enumerate() {
        if t >= schema.num_node_types {
            out.push(Violation::NodeTypeOutOfRange { node, node_type: t });
        }
    }
    if graph.features.rows() != n {
        out.push(Violation::FeatureRowMismatch { rows: graph.features.rows(), nodes: n });
    }
    if graph.features.cols() != schema.feature_dim && !(graph.features.rows() == 0 && n == 0) {
        out.push(Violation::FeatureDimMismatch { cols: graph.features.cols(), expected: schema.feature_dim });
    }
    for node in 0..graph.features.rows() {
        for (dim, v) in graph.features.row(node).iter().enumerate() {
            if !v.is_finite() {
                out.push(Violation::NonFiniteFeature { node, dim });
            }
        }
    }
    if graph.edges.len() != graph.edge_types.len() {
        out.push(Violation::EdgeTypeCountMismatch { edges: graph.edges.len(), edge_types: graph.edge_types.len() });
    }
    for (i, e) in graph.edges.iter().enumerate() {
        for endpoint in [e.src, e.dst] {
            if endpoint >= n {
                out.push(Violation::EndpointOutOfRange { edge: i, endpoint });
            }
        }
    }
    for (i, &t) in graph.edge_types.iter().enumerate() {
        if t >= schema.num_edge_types {
            out.push(Violation::EdgeTypeOutOfRange { edge: i, edge_type: t });
        }
    }
    out
}

impl HeteroGraph {
    pub fn node_count(&self) -> usize {
        self.node_types.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Iterator over `(edge, edge_type)` in insertion order.
    pub fn typed_edges(&self) -> impl Iterator<Item = (Edge, EdgeType)> + '_ {
        self.edges.iter().copied().zip(self.edge_types.iter().copied())
    }

    /// In-degree plus one for the implicit self-loop.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![1usize; self.node_count()];
        for e in &self.edges {
            deg[e.dst] += 1;
        }
        deg
    }

    /// Incoming `(source, edge_type)` pairs of node `i`, in insertion order.
    pub fn neighbors(&self, i: usize) -> Result<Vec<(usize, EdgeType)>, GraphError> {
        if i >= self.node_count() {
            return Err(GraphError::NodeOutOfRange { index: i, node_count: self.node_count() });
        }
        Ok(self.typed_edges().filter(|(e, _)| e.dst == i).map(|(e, t)| (e.src, t)).collect())
    }

    /// Relabels nodes so that old node `i` becomes node `perm[i]`. Edge order
    /// is kept.
    pub fn permuted(&self, perm: &[usize]) -> HeteroGraph {
        assert_eq!(perm.len(), self.node_count(), "permutation length");
        let n = self.node_count();
        let mut node_types = vec![0; n];
        let mut features = Matrix::zeros(n, self.features.cols());
        for (old, &new) in perm.iter().enumerate() {
            node_types[new] = self.node_types[old];
            features.row_mut(new).copy_from_slice(self.features.row(old));
        }
        let edges = self.edges.iter().map(|e| Edge { src: perm[e.src], dst: perm[e.dst] }).collect();
        HeteroGraph {
            id: self.id.clone(),
            node_types,
            features,
            edges,
            edge_types: self.edge_types.clone(),
            label: self.label,
        }
    }

    /// Node types present in the graph, ascending.
    pub fn present_node_types(&self) -> Vec<NodeType> {
        let mut t = self.node_types.clone();
        t.sort_unstable();
        t.dedup();
        t
    }

    pub fn present_edge_types(&self) -> Vec<EdgeType> {
        let mut t = self.edge_types.clone();
        t.sort_unstable();
        t.dedup();
        t
    }

    /// Nodes grouped by type.
    pub fn nodes_by_type(&self, num_node_types: usize) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); num_node_types];
        for (i, &t) in self.node_types.iter().enumerate() {
            if t < num_node_types {
                groups[t].push(i);
            }
        }
        groups
    }
}

/// Empirical type distributions pooled over a collection of graphs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TypeHistograms {
    pub pair_probs: BTreeMap<(NodeType, NodeType), f64>,
    pub edge_type_probs: BTreeMap<EdgeType, f64>,
    pub triple_probs: BTreeMap<(NodeType, NodeType, EdgeType), f64>,
}

pub fn type_histograms<'a, I>(graphs: I) -> Result<TypeHistograms, GraphError>
where
    I: IntoIterator<Item = &'a HeteroGraph>,
{
    let mut pairs: BTreeMap<(NodeType, NodeType), usize> = BTreeMap::new();
    let mut edge_types: BTreeMap<EdgeType, usize> = BTreeMap::new();
    let mut triples: BTreeMap<(NodeType, NodeType, EdgeType), usize> = BTreeMap::new();
    let mut total = 0usize;
    for g in graphs {
        for (e, t) in g.typed_edges() {
            let (s, d) = (g.node_types[e.src], g.node_types[e.dst]);
            *pairs.entry((s, d)).or_default() += 1;
            *edge_types.entry(t).or_default() += 1;
            *triples.entry((s, d, t)).or_default() += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(GraphError::NoEdges);
    }
    Ok(TypeHistograms {
        pair_probs: normalize(pairs, total),
        edge_type_probs: normalize(edge_types, total),
        triple_probs: normalize(triples, total),
    })
}

fn normalize<K: Ord>(counts: BTreeMap<K, usize>, total: usize) -> BTreeMap<K, f64> {
    counts.into_iter().map(|(k, c)| (k, c as f64 / total as f64)).collect()
}

/// The three-node fixture used throughout the tests: types `[A, B, A]`,
/// features `[1,0], [0,1], [1,1]`, edges `0→1` (type 0) and `2→1` (type 1).
pub fn fixture_g3() -> HeteroGraph {
    HeteroGraph {
        id: "g3".into(),
        node_types: vec![0, 1, 0],
        features: Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
        edges: vec![Edge { src: 0, dst: 1 }, Edge { src: 2, dst: 1 }],
        edge_types: vec![0, 1],
        label: Some(Label::Normal),
    }
}

/// Schema of [`fixture_g3`].
pub fn fixture_g3_schema() -> GraphSchema {
    GraphSchema { num_node_types: 2, num_edge_types: 2, feature_dim: 2 }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn g3_is_valid() {
        assert!(validate(&fixture_g3(), &fixture_g3_schema()).is_empty());
    }

    #[test]
    fn bad_node_type_is_reported() {
        let mut g = fixture_g3();
        g.node_types[2] = 5;
        let v = validate(&g, &fixture_g3_schema());
        assert_eq!(v, vec![Violation::NodeTypeOutOfRange { node: 2, node_type: 5 }]);
    }

    #[test]
    fn edge_type_length_mismatch_is_reported() {
        let mut g = fixture_g3();
        g.edges.push(Edge { src: 0, dst: 2 });
        let v = validate(&g, &fixture_g3_schema());
        assert_eq!(v, vec![Violation::EdgeTypeCountMismatch { edges: 3, edge_types: 2 }]);
    }

    #[test]
    fn schema_rejects_zero_counts() {
        assert!(GraphSchema::new(0, 1, 1).is_err());
        assert!(GraphSchema::new(2, 2, 2).is_ok());
    }

    #[test]
    fn degrees_count_incoming_plus_self() {
        assert_eq!(fixture_g3().degrees(), vec![1, 3, 1]);

        let single = HeteroGraph {
            id: "one".into(),
            node_types: vec![0],
            features: Matrix::zeros(1, 2),
            edges: vec![],
            edge_types: vec![],
            label: None,
        };
        assert_eq!(single.degrees(), vec![1]);

        let mut dup = fixture_g3();
        dup.edges.push(Edge { src: 0, dst: 1 });
        dup.edge_types.push(0);
        assert_eq!(dup.degrees(), vec![1, 4, 1]);
    }

    #[test]
    fn neighbors_are_incoming_in_order() {
        let g = fixture_g3();
        assert_eq!(g.neighbors(1).unwrap(), vec![(0, 0), (2, 1)]);
        assert_eq!(g.neighbors(0).unwrap(), vec![]);
        assert_eq!(g.neighbors(9), Err(GraphError::NodeOutOfRange { index: 9, node_count: 3 }));
    }

    #[test]
    fn histograms_of_g3() {
        let h = type_histograms([&fixture_g3()]).unwrap();
        assert_eq!(h.pair_probs, BTreeMap::from([((0, 1), 1.0)]));
        assert_eq!(h.edge_type_probs, BTreeMap::from([(0, 0.5), (1, 0.5)]));
        assert_eq!(h.triple_probs, BTreeMap::from([((0, 1, 0), 0.5), ((0, 1, 1), 0.5)]));

        let g = fixture_g3();
        assert_eq!(type_histograms([&g, &g]).unwrap(), h);
    }

    #[test]
    fn histograms_need_edges() {
        let mut g = fixture_g3();
        g.edges.clear();
        g.edge_types.clear();
        assert_eq!(type_histograms([&g]), Err(GraphError::NoEdges));
    }

    fn arb_graph() -> impl Strategy<Value = HeteroGraph> {
        (1usize..12).prop_flat_map(|n| {
            let types = prop::collection::vec(0usize..3, n);
            let edges = prop::collection::vec((0..n, 0..n, 0usize..3), 0..30);
            (types, edges).prop_map(move |(types, edges)| HeteroGraph {
                id: "p".into(),
                features: Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()),
                node_types: types,
                edge_types: edges.iter().map(|e| e.2).collect(),
                edges: edges.iter().map(|&(s, d, _)| Edge { src: s, dst: d }).collect(),
                label: None,
            })
        })
    }

    proptest! {
        #[test]
        fn degrees_are_permutation_equivariant(g in arb_graph(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut perm: Vec<usize> = (0..g.node_count()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let d = g.degrees();
            let dp = g.permuted(&perm).degrees();
            for (old, &new) in perm.iter().enumerate() {
                prop_assert_eq!(d[old], dp[new]);
            }
        }

        #[test]
        fn histograms_sum_to_one_and_marginalize(g in arb_graph()) {
            prop_assume!(g.edge_count() > 0);
            let h = type_histograms([&g]).unwrap();
            for map_sum in [
                h.pair_probs.values().sum::<f64>(),
                h.edge_type_probs.values().sum::<f64>(),
                h.triple_probs.values().sum::<f64>(),
            ] {
                prop_assert!((map_sum - 1.0).abs() <= 1e-9);
            }
            let mut pair_marg: BTreeMap<(usize, usize), f64> = BTreeMap::new();
            let mut et_marg: BTreeMap<usize, f64> = BTreeMap::new();
            for (&(s, d, e), &p) in &h.triple_probs {
                *pair_marg.entry((s, d)).or_default() += p;
                *et_marg.entry(e).or_default() += p;
            }
            for (k, p) in &h.pair_probs {
                prop_assert!((pair_marg[k] - p).abs() <= 1e-9);
            }
            for (k, p) in &h.edge_type_probs {
                prop_assert!((et_marg[k] - p).abs() <= 1e-9);
            }
        }
    }
}
