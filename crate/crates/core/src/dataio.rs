//! `hrgad-v1` JSONL datasets, train/val/test splits, and the synthetic
//! generator used when no real corpus is at hand.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hetgraph::{validate, Edge, EdgeType, GraphSchema, HeteroGraph, Label, NodeType};
use crate::numerics::Matrix;

pub const FORMAT: &str = "hrgad-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: GraphSchema,
    pub graphs: Vec<HeteroGraph>,
    pub split_assignment: Option<BTreeMap<String, Split>>,
}

impl Dataset {
    pub fn new(schema: GraphSchema, graphs: Vec<HeteroGraph>) -> Self {
        Self { schema, graphs, split_assignment: None }
    }

    /// Graphs assigned to `split`, in dataset order. Empty when no split
    /// has been made.
    pub fn subset(&self, split: Split) -> Vec<&HeteroGraph> {
        let Some(assign) = &self.split_assignment else { return Vec::new() };
        self.graphs.iter().filter(|g| assign.get(&g.id) == Some(&split)).collect()
    }

    pub fn subset_owned(&self, split: Split) -> Vec<HeteroGraph> {
        self.subset(split).into_iter().cloned().collect()
    }

    pub fn anomalous_count(&self) -> usize {
        self.graphs.iter().filter(|g| g.label == Some(Label::Anomalous)).count()
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("missing schema record")]
    MissingSchema,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: graph {id}: {message}")]
    InvalidGraph { line: usize, id: String, message: String },
    #[error("duplicate graph id {0}")]
    DuplicateId(String),
    #[error("no normal graphs to draw train/val splits from")]
    NoNormalGraphs,
    #[error("split fractions must be nonnegative and sum to at most 1, got train {train} + val {val}")]
    BadFractions { train: f64, val: f64 },
    #[error("generator: {0}")]
    Generator(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaRecord {
    format: String,
    num_node_types: usize,
    num_edge_types: usize,
    feature_dim: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    id: String,
    label: Option<u8>,
    node_types: Vec<NodeType>,
    node_features: Vec<Vec<f64>>,
    edges: Vec<[usize; 3]>,
}

impl GraphRecord {
    fn from_graph(g: &HeteroGraph) -> Self {
        Self {
            id: g.id.clone(),
            label: g.label.map(Label::as_u8),
            node_types: g.node_types.clone(),
            node_features: (0..g.features.rows()).map(|i| g.features.row(i).to_vec()).collect(),
            edges: g.typed_edges().map(|(e, t)| [e.src, e.dst, t]).collect(),
        }
    }

    fn into_graph(self, schema: &GraphSchema) -> Result<HeteroGraph, String> {
        let label = match self.label {
            None => None,
            Some(v) => Some(Label::from_u8(v).ok_or_else(|| format!("label must be 0, 1 or null, got {v}"))?),
        };
        if self.node_features.len() != self.node_types.len() {
            return Err(format!(
                "{} node types but {} feature rows",
                self.node_types.len(),
                self.node_features.len()
            ));
        }
        let d = schema.feature_dim;
        let mut data = Vec::with_capacity(self.node_features.len() * d);
        for (i, row) in self.node_features.iter().enumerate() {
            if row.len() != d {
                return Err(format!("node {i} has {} features, schema expects {d}", row.len()));
            }
            data.extend_from_slice(row);
        }
        let graph = HeteroGraph {
            id: self.id,
            features: Matrix::from_vec(self.node_types.len(), d, data),
            node_types: self.node_types,
            edges: self.edges.iter().map(|e| Edge { src: e[0], dst: e[1] }).collect(),
            edge_types: self.edges.iter().map(|e| e[2]).collect(),
            label,
        };
        if let Some(v) = validate(&graph, schema).first() {
            return Err(v.to_string());
        }
        Ok(graph)
    }
}

/// Reads a dataset, validating every graph against the schema line.
pub fn load_jsonl(path: &Path) -> Result<Dataset, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines().enumerate().map(|(i, l)| (i + 1, l));
    let schema = loop {
        let Some((line, text)) = lines.next() else { return Err(DataError::MissingSchema) };
        let text = text.map_err(io_err(path))?;
        if text.trim().is_empty() {
            continue;
        }
        let rec: SchemaRecord = serde_json::from_str(&text)
            .map_err(|e| DataError::Malformed { line, message: format!("schema record: {e}") })?;
        if rec.format != FORMAT {
            return Err(DataError::Malformed { line, message: format!("unsupported format {:?}", rec.format) });
        }
        break GraphSchema::new(rec.num_node_types, rec.num_edge_types, rec.feature_dim)
            .map_err(|e| DataError::Malformed { line, message: e.to_string() })?;
    };
    let mut graphs = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (line, text) in lines {
        let text = text.map_err(io_err(path))?;
        if text.trim().is_empty() {
            continue;
        }
        let rec: GraphRecord =
            serde_json::from_str(&text).map_err(|e| DataError::Malformed { line, message: e.to_string() })?;
        let id = rec.id.clone();
        let graph = rec.into_graph(&schema).map_err(|message| DataError::InvalidGraph { line, id: id.clone(), message })?;
        if !seen.insert(id.clone()) {
            return Err(DataError::DuplicateId(id));
        }
        graphs.push(graph);
    }
    Ok(Dataset::new(schema, graphs))
}

/// Writes a dataset; floats use shortest round-trip decimal form, so
/// loading the file reproduces every feature bit for bit.
pub fn save_jsonl(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    save_graphs(&dataset.schema, dataset.graphs.iter(), path)
}

pub fn save_graphs<'a, I>(schema: &GraphSchema, graphs: I, path: &Path) -> Result<(), DataError>
where
    I: IntoIterator<Item = &'a HeteroGraph>,
{
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let header = SchemaRecord {
        format: FORMAT.to_string(),
        num_node_types: schema.num_node_types,
        num_edge_types: schema.num_edge_types,
        feature_dim: schema.feature_dim,
    };
    let write = |w: &mut BufWriter<File>, text: String| writeln!(w, "{text}").map_err(io_err(path));
    write(&mut w, serde_json::to_string(&header).expect("schema record serializes"))?;
    for g in graphs {
        write(&mut w, serde_json::to_string(&GraphRecord::from_graph(g)).expect("graph record serializes"))?;
    }
    w.flush().map_err(io_err(path))
}

/// Assigns train and val from the normal population, everything else to
/// test. Unlabeled graphs count as normal: training is unsupervised and an
/// unlabeled corpus is presumed clean.
pub fn split(dataset: &Dataset, train_frac: f64, val_frac: f64, seed: u64) -> Result<Dataset, DataError> {
    if !(train_frac >= 0.0 && val_frac >= 0.0 && train_frac + val_frac <= 1.0 + 1e-12) {
        return Err(DataError::BadFractions { train: train_frac, val: val_frac });
    }
    let mut normal: Vec<usize> = (0..dataset.graphs.len())
        .filter(|&i| dataset.graphs[i].label != Some(Label::Anomalous))
        .collect();
    if normal.is_empty() {
        return Err(DataError::NoNormalGraphs);
    }
    normal.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = normal.len();
    let n_train = ((train_frac * n as f64).round() as usize).min(n);
    let n_val = ((val_frac * n as f64).round() as usize).min(n - n_train);
    let mut assign: BTreeMap<String, Split> =
        dataset.graphs.iter().map(|g| (g.id.clone(), Split::Test)).collect();
    for (rank, &i) in normal.iter().enumerate() {
        let s = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        assign.insert(dataset.graphs[i].id.clone(), s);
    }
    Ok(Dataset { split_assignment: Some(assign), ..dataset.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// 30% of edges rewired onto type pairs the normal law never produces.
    PairShift,
    /// Every edge type moved to the next one, permuting the marginal.
    EdgeTypeShift,
    /// The last node type's feature mean moved by three noise scales.
    FeatureShift,
}

/// One anomaly kind, or several assigned round-robin across the anomalous
/// graphs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnomalyKinds {
    One(AnomalyKind),
    Mix(Vec<AnomalyKind>),
}

impl AnomalyKinds {
    pub fn as_slice(&self) -> &[AnomalyKind] {
        match self {
            AnomalyKinds::One(k) => std::slice::from_ref(k),
            AnomalyKinds::Mix(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub num_graphs: usize,
    pub anomaly_fraction: f64,
    pub schema: GraphSchema,
    pub mean_nodes: usize,
    pub mean_edges: usize,
    pub anomaly_kind: AnomalyKinds,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            num_graphs: 600,
            anomaly_fraction: 1.0 / 6.0,
            schema: GraphSchema { num_node_types: 8, num_edge_types: 4, feature_dim: 7 },
            mean_nodes: 24,
            mean_edges: 40,
            anomaly_kind: AnomalyKinds::One(AnomalyKind::PairShift),
            seed: 7,
        }
    }
}

/// Share of edges rewired by a pair shift.
pub const PAIR_SHIFT_FRACTION: f64 = 0.3;
/// Feature mean offset of a feature shift, in noise standard deviations.
pub const FEATURE_SHIFT: f64 = 3.0;

impl GeneratorConfig {
    pub fn check(&self) -> Result<(), DataError> {
        let fail = |m: String| Err(DataError::Generator(m));
        self.schema.check().map_err(|e| DataError::Generator(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.anomaly_fraction) {
            return fail(format!("anomaly_fraction must be within [0, 1], got {}", self.anomaly_fraction));
        }
        if self.mean_nodes == 0 {
            return fail("mean_nodes must be positive".into());
        }
        if self.mean_edges + 1 < self.mean_nodes {
            return fail(format!(
                "mean_edges ({}) must be at least mean_nodes - 1 ({})",
                self.mean_edges,
                self.mean_nodes - 1
            ));
        }
        let kinds = self.anomaly_kind.as_slice();
        if kinds.is_empty() {
            return fail("anomaly_kind must name at least one kind".into());
        }
        let t = self.schema.num_node_types;
        for k in kinds {
            match k {
                AnomalyKind::PairShift if t < 2 => return fail("pair_shift needs at least 2 node types".into()),
                AnomalyKind::EdgeTypeShift if self.schema.num_edge_types < 2 => {
                    return fail("edge_type_shift needs at least 2 edge types".into())
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// The fixed generative law of normal graphs for a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalModel {
    pub schema: GraphSchema,
    /// Categorical over node types beyond the first `T` nodes, `∝ 1/(t+1)`.
    pub node_type_weights: Vec<f64>,
    /// Normal `(src_type, dst_type)` support with probabilities.
    pub pairs: Vec<((NodeType, NodeType), f64)>,
    /// Pairs the normal law never emits.
    pub complement_pairs: Vec<(NodeType, NodeType)>,
    /// Per-type feature means, `T × d`.
    pub feature_means: Matrix,
}

impl NormalModel {
    pub fn new(schema: &GraphSchema) -> Self {
        let t = schema.num_node_types;
        let node_type_weights: Vec<f64> = (0..t).map(|i| 1.0 / (i + 1) as f64).collect();
        let wsum: f64 = node_type_weights.iter().sum();
        let mut pairs = Vec::new();
        for s in 0..t {
            let ws = node_type_weights[s] / wsum;
            match t {
                1 => pairs.push(((0, 0), 1.0)),
                2 => pairs.push(((s, 1 - s), ws)),
                _ => {
                    pairs.push(((s, (s + 1) % t), 0.65 * ws));
                    pairs.push(((s, (s + 2) % t), 0.35 * ws));
                }
            }
        }
        let complement_pairs = (0..t * t)
            .map(|p| (p / t, p % t))
            .filter(|q| !pairs.iter().any(|(p, _)| p == q))
            .collect();
        let d = schema.feature_dim;
        let means = (0..t * d)
            .map(|k| {
                let (ty, dim) = ((k / d) as f64, (k % d) as f64);
                2.0 * (1.7 * ty + 0.9 * dim * (ty + 1.0)).cos()
            })
            .collect();
        Self { schema: *schema, node_type_weights, pairs, complement_pairs, feature_means: Matrix::from_vec(t, d, means) }
    }

    /// Edge-type law of the `p`-th normal pair: mostly `p mod E`, sometimes
    /// the next type.
    pub fn edge_type_law(&self, pair_index: usize) -> [(EdgeType, f64); 2] {
        let e = self.schema.num_edge_types;
        [(pair_index % e, 0.8), ((pair_index + 1) % e, 0.2)]
    }

    /// Exact `(src, dst, edge)` distribution of normal edges.
    pub fn triple_probs(&self) -> BTreeMap<(NodeType, NodeType, EdgeType), f64> {
        let mut out = BTreeMap::new();
        for (p, &((s, d), w)) in self.pairs.iter().enumerate() {
            for (e, we) in self.edge_type_law(p) {
                *out.entry((s, d, e)).or_insert(0.0) += w * we;
            }
        }
        out
    }
}

fn sample_normal_edge(
    model: &NormalModel,
    pair_dist: &WeightedIndex<f64>,
    rng: &mut ChaCha8Rng,
) -> (NodeType, NodeType, EdgeType) {
    let p = pair_dist.sample(rng);
    let (s, d) = model.pairs[p].0;
    let [(e_main, w_main), (e_alt, _)] = model.edge_type_law(p);
    let e = if rng.random::<f64>() < w_main { e_main } else { e_alt };
    (s, d, e)
}

fn generate_graph(
    config: &GeneratorConfig,
    model: &NormalModel,
    index: usize,
    anomaly: Option<AnomalyKind>,
) -> HeteroGraph {
    let schema = &config.schema;
    let (t, d) = (schema.num_node_types, schema.feature_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);

    let scale = rng.random_range(0.75..=1.25);
    let n = ((config.mean_nodes as f64 * scale).round() as usize).max(t).max(1);
    let m = ((config.mean_edges as f64 * n as f64 / config.mean_nodes as f64).round() as usize).max(n.saturating_sub(1));

    let type_dist = WeightedIndex::new(&model.node_type_weights).expect("positive weights");
    let node_types: Vec<NodeType> = (0..n).map(|i| if i < t { i } else { type_dist.sample(&mut rng) }).collect();
    let mut by_type = vec![Vec::new(); t];
    for (i, &ty) in node_types.iter().enumerate() {
        by_type[ty].push(i);
    }

    let mut features = Matrix::zeros(n, d);
    for (i, &ty) in node_types.iter().enumerate() {
        let shift = if anomaly == Some(AnomalyKind::FeatureShift) && ty == t - 1 { FEATURE_SHIFT } else { 0.0 };
        for k in 0..d {
            let noise: f64 = StandardNormal.sample(&mut rng);
            features[(i, k)] = model.feature_means[(ty, k)] + shift + noise;
        }
    }

    let pair_dist = WeightedIndex::new(model.pairs.iter().map(|(_, w)| *w)).expect("positive pair weights");
    let shifted = if anomaly == Some(AnomalyKind::PairShift) { (PAIR_SHIFT_FRACTION * m as f64).round() as usize } else { 0 };
    let mut edges = Vec::with_capacity(m);
    let mut edge_types = Vec::with_capacity(m);
    for k in 0..m {
        let (s, dt, e) = if k < shifted {
            let (s, dt) = model.complement_pairs[rng.random_range(0..model.complement_pairs.len())];
            (s, dt, rng.random_range(0..schema.num_edge_types))
        } else {
            sample_normal_edge(model, &pair_dist, &mut rng)
        };
        let src = by_type[s][rng.random_range(0..by_type[s].len())];
        let dst = by_type[dt][rng.random_range(0..by_type[dt].len())];
        edges.push(Edge { src, dst });
        edge_types.push(if anomaly == Some(AnomalyKind::EdgeTypeShift) { (e + 1) % schema.num_edge_types } else { e });
    }
    // Shifted edges were drawn first; spread them through the edge list.
    // `perm` is a random order; the node set and degrees are unchanged.
    if shifted > 0 {
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng);
        edges = perm.iter().map(|&i| edges[i]).collect();
        edge_types = perm.iter().map(|&i| edge_types[i]).collect();
    }

    HeteroGraph {
        id: format!("g{index:05}"),
        node_types,
        features,
        edges,
        edge_types,
        label: Some(if anomaly.is_some() { Label::Anomalous } else { Label::Normal }),
    }
}

/// Synthesizes a labeled dataset. Exactly `round(anomaly_fraction · N)`
/// graphs are anomalous, placed at seeded random positions; each graph
/// draws from its own random stream, so output depends only on the config.
pub fn generate(config: &GeneratorConfig) -> Result<Dataset, DataError> {
    config.check()?;
    let model = NormalModel::new(&config.schema);
    let n = config.num_graphs;
    let n_anom = ((config.anomaly_fraction * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut placement = ChaCha8Rng::seed_from_u64(config.seed);
    placement.set_stream(u64::MAX);
    order.shuffle(&mut placement);
    let mut anomalous: Vec<usize> = order[..n_anom].to_vec();
    anomalous.sort_unstable();
    let kinds = config.anomaly_kind.as_slice();
    let mut kind_of = vec![None; n];
    for (rank, &i) in anomalous.iter().enumerate() {
        kind_of[i] = Some(kinds[rank % kinds.len()]);
    }
    let graphs = (0..n).map(|i| generate_graph(config, &model, i, kind_of[i])).collect();
    Ok(Dataset::new(config.schema, graphs))
}
