//! Shared helpers for the integration tests: a random graph source and a
//! dense reference implementation of every convolution variant.
//!
//! The reference materializes one masked, degree-normalized `n × n`
//! adjacency per bucket and multiplies through with plain nested loops. It
//! looks weights up by parameter name and derives bucket keys itself, so it
//! shares no aggregation code with the sparse implementation.

#![allow(dead_code)]

use hrgad::augment::AugmentConfig;
use hrgad::hetgraph::{Edge, GraphSchema, HeteroGraph};
use hrgad::layers::{ModelConfig, ModelParams, OptimizerKind, R2Form, Variant};
use hrgad::numerics::{Matrix, ParamSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Dense = Vec<Vec<f64>>;

pub fn model_config(variant: Variant, hidden: usize, layers: usize) -> ModelConfig {
    ModelConfig {
        variant,
        hidden_dim: hidden,
        num_layers: layers,
        rep_dim: hidden,
        ssl_weight: 0.3,
        reg_lambda: 0.01,
        learning_rate: 0.01,
        batch_size: 4,
        seed: 5,
        augment: AugmentConfig::DISABLED,
        r2_form: R2Form::Composed,
        optimizer: OptimizerKind::Adam,
        max_epochs: 5,
        patience: 10,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_nodes: usize,
    pub node_types: usize,
    pub edge_types: usize,
    pub feature_dim: usize,
}

/// A random graph with every node type present when `node_count` allows;
/// duplicate edges and self-loops may occur.
pub fn random_graph(rng: &mut ChaCha8Rng, shape: Shape, id: &str) -> HeteroGraph {
    let n = rng.random_range(1..=shape.max_nodes);
    let node_types: Vec<usize> =
        (0..n).map(|i| if i < shape.node_types { i } else { rng.random_range(0..shape.node_types) }).collect();
    let m = rng.random_range(0..=2 * n);
    let edges: Vec<Edge> = (0..m).map(|_| Edge { src: rng.random_range(0..n), dst: rng.random_range(0..n) }).collect();
    let edge_types = (0..m).map(|_| rng.random_range(0..shape.edge_types)).collect();
    let features = Matrix::from_vec(
        n,
        shape.feature_dim,
        (0..n * shape.feature_dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
    );
    HeteroGraph { id: id.to_string(), node_types, features, edges, edge_types, label: None }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn schema_of(shape: Shape) -> GraphSchema {
    GraphSchema { num_node_types: shape.node_types, num_edge_types: shape.edge_types, feature_dim: shape.feature_dim }
}

/// Overwrites every parameter, biases included, with seeded values so tests
/// exercise nonzero biases.
pub fn randomize(set: &mut ParamSet, seed: u64) {
    let mut r = rng(seed);
    for p in set.iter_mut() {
        for v in p.value.as_mut_slice() {
            *v = r.random_range(-0.8..0.8);
        }
    }
}

fn to_dense(m: &Matrix) -> Dense {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn weight(set: &ParamSet, name: &str) -> Dense {
    to_dense(&set.by_name(name).unwrap_or_else(|| panic!("no parameter {name}")).value)
}

fn mm(a: &Dense, b: &Dense, inner: usize, cols: usize) -> Dense {
    a.iter()
        .map(|row| {
            (0..cols).map(|c| (0..inner).map(|k| row[k] * b[k][c]).sum()).collect()
        })
        .collect()
}

fn zeros(r: usize, c: usize) -> Dense {
    vec![vec![0.0; c]; r]
}

/// `(key, mix label, chain of transform names)` for every bucket of a
/// layer, in ascending `(edge, src, dst)` order over the fields the variant
/// distinguishes.
fn buckets(variant: Variant, form: R2Form, t: usize, e: usize, layer: usize) -> Vec<(BucketKey, String, Vec<String>)> {
    let k = layer;
    let mut out = Vec::new();
    match variant {
        Variant::Gcn => unreachable!(),
        Variant::HetGcn => {
            for s in 0..t {
                out.push((BucketKey { src: Some(s), dst: None, edge: None }, format!("type.{s}"), vec![format!("layer.{k}.type.{s}.weight")]));
            }
        }
        Variant::HrgcnSdr => {
            for s in 0..t {
                for d in 0..t {
                    let label = format!("pair.({s},{d})");
                    out.push((BucketKey { src: Some(s), dst: Some(d), edge: None }, label.clone(), vec![format!("layer.{k}.{label}.weight")]));
                }
            }
        }
        Variant::HrgcnEr => {
            for et in 0..e {
                out.push((BucketKey { src: None, dst: None, edge: Some(et) }, format!("edge.{et}"), vec![format!("layer.{k}.edge.{et}.weight")]));
            }
        }
        Variant::HrgcnR2 => {
            for et in 0..e {
                for s in 0..t {
                    for d in 0..t {
                        let label = format!("pair.({s},{d}).et.{et}");
                        let chain = match form {
                            R2Form::Composed => {
                                vec![format!("layer.{k}.pair.({s},{d}).weight"), format!("layer.{k}.edge.{et}.weight")]
                            }
                            R2Form::Independent => vec![format!("layer.{k}.{label}.weight")],
                        };
                        out.push((BucketKey { src: Some(s), dst: Some(d), edge: Some(et) }, label, chain));
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct BucketKey {
    src: Option<usize>,
    dst: Option<usize>,
    edge: Option<usize>,
}

impl BucketKey {
    fn admits(&self, s: usize, d: usize, e: usize) -> bool {
        self.src.is_none_or(|x| x == s) && self.dst.is_none_or(|x| x == d) && self.edge.is_none_or(|x| x == e)
    }
}

fn degrees(g: &HeteroGraph) -> Vec<f64> {
    let mut deg = vec![1.0; g.node_count()];
    for e in &g.edges {
        deg[e.dst] += 1.0;
    }
    deg
}

/// Masked normalized adjacency of one bucket: `A[i][j]` sums
/// `1/√(deg i · deg j)` over edges `j → i` the bucket admits.
fn masked_adjacency(g: &HeteroGraph, key: BucketKey) -> Dense {
    let n = g.node_count();
    let deg = degrees(g);
    let mut a = zeros(n, n);
    for (e, &et) in g.edges.iter().zip(&g.edge_types) {
        if key.admits(g.node_types[e.src], g.node_types[e.dst], et) {
            a[e.dst][e.src] += 1.0 / (deg[e.dst].sqrt() * deg[e.src].sqrt());
        }
    }
    a
}

/// Dense result of one layer: the pre-mixing concatenation (bucket slots
/// then the self slot) and the activated output.
pub struct DenseLayer {
    pub pre_mix: Dense,
    pub output: Dense,
}

pub fn dense_layer(g: &HeteroGraph, x: &Dense, params: &ModelParams, form: R2Form, layer: usize) -> DenseLayer {
    let set = &params.set;
    let n = g.node_count();
    let in_dim = x.first().map_or(0, |r| r.len());
    let h = params.hidden_dim;
    let k = layer;
    let bias = weight(set, &format!("layer.{k}.bias"));
    if params.scheme.variant == Variant::Gcn {
        let deg = degrees(g);
        let mut a = zeros(n, n);
        for e in &g.edges {
            a[e.dst][e.src] += 1.0 / (deg[e.dst].sqrt() * deg[e.src].sqrt());
        }
        for i in 0..n {
            a[i][i] += 1.0 / deg[i];
        }
        let w = weight(set, &format!("layer.{k}.weight"));
        let axw = mm(&mm(&a, x, n, in_dim), &w, in_dim, h);
        let output = axw.iter().map(|r| r.iter().zip(&bias[0]).map(|(v, b)| (v + b).max(0.0)).collect()).collect();
        return DenseLayer { pre_mix: axw, output };
    }
    let (t, e) = (params.schema.num_node_types, params.schema.num_edge_types);
    let mut concat = zeros(n, 0);
    let mut mix_rows: Dense = Vec::new();
    for (key, label, chain) in buckets(params.scheme.variant, form, t, e, k) {
        let a = masked_adjacency(g, key);
        let mut slot = mm(&a, x, n, in_dim);
        let mut width = in_dim;
        for name in &chain {
            let w = weight(set, name);
            slot = mm(&slot, &w, width, w[0].len());
            width = w[0].len();
        }
        for (row, s) in concat.iter_mut().zip(&slot) {
            row.extend_from_slice(s);
        }
        mix_rows.extend(weight(set, &format!("layer.{k}.mix.{label}.weight")));
    }
    let deg = degrees(g);
    let scaled: Dense = x.iter().zip(&deg).map(|(r, d)| r.iter().map(|v| v / d).collect()).collect();
    let self_term = mm(&scaled, &weight(set, &format!("layer.{k}.self.weight")), in_dim, h);
    for (row, s) in concat.iter_mut().zip(&self_term) {
        row.extend_from_slice(s);
    }
    mix_rows.extend(weight(set, &format!("layer.{k}.mix.self.weight")));
    let width = concat.first().map_or(0, |r| r.len());
    let mixed = mm(&concat, &mix_rows, width, h);
    let output = mixed.iter().map(|r| r.iter().zip(&bias[0]).map(|(v, b)| (v + b).max(0.0)).collect()).collect();
    DenseLayer { pre_mix: concat, output }
}

pub struct DenseForward {
    pub first_pre_mix: Dense,
    pub nodes: Dense,
    pub embedding: Vec<f64>,
    pub ssl_prob: f64,
}

pub fn dense_forward(g: &HeteroGraph, params: &ModelParams, form: R2Form) -> DenseForward {
    let mut x = to_dense(&g.features);
    let mut first_pre_mix = Vec::new();
    for layer in 1..=params.layers.len() {
        let out = dense_layer(g, &x, params, form, layer);
        if layer == 1 {
            first_pre_mix = out.pre_mix;
        }
        x = out.output;
    }
    let h = params.hidden_dim;
    let pooled: Vec<f64> = (0..h).map(|c| x.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let set = &params.set;
    let head = weight(set, "svdd_head.weight");
    let embedding = (0..head[0].len()).map(|c| (0..h).map(|k| pooled[k] * head[k][c]).sum()).collect();
    let ssl = weight(set, "ssl_head.weight");
    let b = weight(set, "ssl_head.bias")[0][0];
    let logit: f64 = (0..h).map(|k| pooled[k] * ssl[k][0]).sum::<f64>() + b;
    DenseForward { first_pre_mix, nodes: x, embedding, ssl_prob: 1.0 / (1.0 + (-logit).exp()) }
}

pub fn max_abs_diff(a: &Dense, b: &Matrix) -> f64 {
    assert_eq!((a.len(), a.first().map_or(b.cols(), |r| r.len())), b.shape(), "shape");
    let mut worst: f64 = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((v - b[(i, j)]).abs());
        }
    }
    worst
}
