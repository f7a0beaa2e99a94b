//! Graph convolution variants, readout, and the two-headed model.
//!
//! Every heterogeneous variant follows the same pipeline per layer:
//! messages are bucketed by a typed key, each bucket is degree-normalized
//! and summed, passed through its own transform, and the bucket slots plus
//! a dedicated self slot are mixed back to the hidden width:
//!
//! ```text
//! slot_β(i) = Σ_{j→i ∈ β} x_j W_β / √(deg i · deg j)
//! self(i)   = x_i W_self / deg i
//! x_i'      = relu( Σ_β slot_β(i) M_β + self(i) M_self + b )
//! ```
//!
//! The mixing matrix is stored as one `h × h` block per slot, which is the
//! same map as a single `(B+1)h × h` matrix applied to the concatenation of
//! all slots in canonical bucket order. Absent buckets are zero slots.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentConfig;
use crate::hetgraph::{validate, GraphSchema, HeteroGraph, Violation};
use crate::numerics::{Entry, Matrix, NumericsError, ParamId, ParamKind, ParamSet, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "GCN")]
    Gcn,
    #[serde(rename = "HETGCN")]
    HetGcn,
    #[serde(rename = "HRGCN_ER")]
    HrgcnEr,
    #[serde(rename = "HRGCN_SDR")]
    HrgcnSdr,
    #[serde(rename = "HRGCN_R2")]
    HrgcnR2,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Gcn, Variant::HetGcn, Variant::HrgcnEr, Variant::HrgcnSdr, Variant::HrgcnR2];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Gcn => "GCN",
            Variant::HetGcn => "HETGCN",
            Variant::HrgcnEr => "HRGCN_ER",
            Variant::HrgcnSdr => "HRGCN_SDR",
            Variant::HrgcnR2 => "HRGCN_R2",
        }
    }
}

/// How `HRGCN_R2` parameterizes its `(src, dst, edge)` buckets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum R2Form {
    /// A pair transform followed by an edge-type transform.
    #[default]
    Composed,
    /// One independent transform per triple.
    Independent,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub rep_dim: usize,
    pub ssl_weight: f64,
    pub reg_lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub augment: AugmentConfig,
    #[serde(default)]
    pub r2_form: R2Form,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
}

fn default_max_epochs() -> usize {
    100
}

fn default_patience() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{field} must be {requirement}, got {value}")]
    Invalid { field: &'static str, requirement: &'static str, value: String },
}

impl ModelConfig {
    pub fn check(&self) -> Result<(), ConfigError> {
        let fail = |field, requirement, value: String| Err(ConfigError::Invalid { field, requirement, value });
        if self.hidden_dim == 0 {
            return fail("hidden_dim", "positive", self.hidden_dim.to_string());
        }
        if self.num_layers == 0 {
            return fail("num_layers", "positive", self.num_layers.to_string());
        }
        if self.rep_dim == 0 {
            return fail("rep_dim", "positive", self.rep_dim.to_string());
        }
        if !(self.ssl_weight >= 0.0 && self.ssl_weight.is_finite()) {
            return fail("ssl_weight", "a finite value >= 0", self.ssl_weight.to_string());
        }
        if !(self.reg_lambda >= 0.0 && self.reg_lambda.is_finite()) {
            return fail("reg_lambda", "a finite value >= 0", self.reg_lambda.to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate", "a finite value > 0", self.learning_rate.to_string());
        }
        if self.batch_size == 0 {
            return fail("batch_size", "positive", self.batch_size.to_string());
        }
        if self.max_epochs == 0 {
            return fail("max_epochs", "positive", self.max_epochs.to_string());
        }
        self.augment.check().map_err(|(field, value)| ConfigError::Invalid {
            field,
            requirement: "within [0, 1]",
            value: value.to_string(),
        })
    }

    /// True when the self-supervised branch takes part in training and
    /// scoring.
    pub fn ssl_active(&self) -> bool {
        self.augment.enabled && self.ssl_weight > 0.0
    }
}

/// Bucket layout of a layer: how many transform slots exist and which
/// transform(s) serve a given `(src_type, dst_type, edge_type)` message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BucketScheme {
    pub variant: Variant,
    pub r2_form: R2Form,
    pub node_types: usize,
    pub edge_types: usize,
}

impl BucketScheme {
    pub fn new(variant: Variant, r2_form: R2Form, schema: &GraphSchema) -> Self {
        Self { variant, r2_form, node_types: schema.num_node_types, edge_types: schema.num_edge_types }
    }

    /// Number of message buckets (concat slots, excluding the self slot).
    pub fn bucket_count(&self) -> usize {
        let (t, e) = (self.node_types, self.edge_types);
        match self.variant {
            Variant::Gcn => 1,
            Variant::HetGcn => t,
            Variant::HrgcnSdr => t * t,
            Variant::HrgcnEr => e,
            Variant::HrgcnR2 => e * t * t,
        }
    }

    /// Canonical bucket index, ascending in `(edge_type, src_type, dst_type)`
    /// over the keys the variant distinguishes.
    pub fn bucket(&self, src_type: usize, dst_type: usize, edge_type: usize) -> usize {
        let t = self.node_types;
        match self.variant {
            Variant::Gcn => 0,
            Variant::HetGcn => src_type,
            Variant::HrgcnSdr => src_type * t + dst_type,
            Variant::HrgcnEr => edge_type,
            Variant::HrgcnR2 => edge_type * t * t + src_type * t + dst_type,
        }
    }

    /// Human-readable key of a bucket, used in parameter names.
    pub fn label(&self, bucket: usize) -> String {
        let t = self.node_types;
        match self.variant {
            Variant::Gcn => "shared".to_string(),
            Variant::HetGcn => format!("type.{bucket}"),
            Variant::HrgcnSdr => format!("pair.({},{})", bucket / t, bucket % t),
            Variant::HrgcnEr => format!("edge.{bucket}"),
            Variant::HrgcnR2 => {
                let e = bucket / (t * t);
                let rest = bucket % (t * t);
                format!("pair.({},{}).et.{e}", rest / t, rest % t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Gcn {
        weight: ParamId,
        bias: ParamId,
    },
    Mixed {
        /// First transform of each bucket, `in × h`. Indexed by pair for the
        /// composed R2 form, by bucket otherwise.
        primary: Vec<ParamId>,
        /// Composed R2 only: per-edge-type `h × h` transform applied after
        /// the pair transform.
        edge: Vec<ParamId>,
        self_weight: ParamId,
        /// `h × h` mixing block per bucket.
        mix: Vec<ParamId>,
        mix_self: ParamId,
        bias: ParamId,
    },
}

/// Weight banks of a full model, allocated for every bucket up front so the
/// parameter set does not depend on which types a graph contains.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub set: ParamSet,
    pub schema: GraphSchema,
    pub scheme: BucketScheme,
    pub hidden_dim: usize,
    pub rep_dim: usize,
    pub layers: Vec<LayerParams>,
    pub svdd_head: ParamId,
    pub ssl_head: ParamId,
    pub ssl_bias: ParamId,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Matrix::from_vec(rows, cols, data)
}

impl ModelParams {
    /// Allocates and initializes every weight bank. Weights are uniform in
    /// `±√(6/(fan_in+fan_out))`, biases start at zero.
    pub fn init(schema: &GraphSchema, config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = ParamSet::new();
        let scheme = BucketScheme::new(config.variant, config.r2_form, schema);
        let h = config.hidden_dim;
        let t = schema.num_node_types;
        let weight = |set: &mut ParamSet, rng: &mut ChaCha8Rng, name: String, r: usize, c: usize| {
            set.insert(name, ParamKind::Weight, glorot(rng, r, c))
        };
        let mut layers = Vec::with_capacity(config.num_layers);
        for k in 1..=config.num_layers {
            let in_dim = if k == 1 { schema.feature_dim } else { h };
            let lp = if config.variant == Variant::Gcn {
                let w = weight(&mut set, &mut rng, format!("layer.{k}.weight"), in_dim, h);
                let b = set.insert(format!("layer.{k}.bias"), ParamKind::Bias, Matrix::zeros(1, h));
                LayerParams::Gcn { weight: w, bias: b }
            } else {
                let mut primary = Vec::new();
                let mut edge = Vec::new();
                if config.variant == Variant::HrgcnR2 && config.r2_form == R2Form::Composed {
                    for pair in 0..t * t {
                        let name = format!("layer.{k}.pair.({},{}).weight", pair / t, pair % t);
                        primary.push(weight(&mut set, &mut rng, name, in_dim, h));
                    }
                    for e in 0..schema.num_edge_types {
                        edge.push(weight(&mut set, &mut rng, format!("layer.{k}.edge.{e}.weight"), h, h));
                    }
                } else {
                    for b in 0..scheme.bucket_count() {
                        let name = format!("layer.{k}.{}.weight", scheme.label(b));
                        primary.push(weight(&mut set, &mut rng, name, in_dim, h));
                    }
                }
                let self_weight = weight(&mut set, &mut rng, format!("layer.{k}.self.weight"), in_dim, h);
                let mix = (0..scheme.bucket_count())
                    .map(|b| weight(&mut set, &mut rng, format!("layer.{k}.mix.{}.weight", scheme.label(b)), h, h))
                    .collect();
                let mix_self = weight(&mut set, &mut rng, format!("layer.{k}.mix.self.weight"), h, h);
                let bias = set.insert(format!("layer.{k}.bias"), ParamKind::Bias, Matrix::zeros(1, h));
                LayerParams::Mixed { primary, edge, self_weight, mix, mix_self, bias }
            };
            layers.push(lp);
        }
        let svdd_head = weight(&mut set, &mut rng, "svdd_head.weight".into(), h, config.rep_dim);
        let ssl_head = weight(&mut set, &mut rng, "ssl_head.weight".into(), h, 1);
        let ssl_bias = set.insert("ssl_head.bias", ParamKind::Bias, Matrix::zeros(1, 1));
        Self {
            set,
            schema: *schema,
            scheme,
            hidden_dim: h,
            rep_dim: config.rep_dim,
            layers,
            svdd_head,
            ssl_head,
            ssl_bias,
        }
    }

    /// Same structure with the values of `set` swapped in. `set` must come
    /// from a model with identical layout.
    pub fn with_set(&self, set: ParamSet) -> Self {
        Self { set, ..self.clone() }
    }

    /// Transform ids that serve `bucket`, in application order.
    pub fn bucket_transforms(&self, layer: usize, bucket: usize) -> Vec<ParamId> {
        match &self.layers[layer] {
            LayerParams::Gcn { weight, .. } => vec![*weight],
            LayerParams::Mixed { primary, edge, .. } => {
                if edge.is_empty() {
                    vec![primary[bucket]]
                } else {
                    let tt = self.scheme.node_types * self.scheme.node_types;
                    vec![primary[bucket % tt], edge[bucket / tt]]
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("graph {id} does not fit the model schema: {violation}")]
    SchemaMismatch { id: String, violation: String },
    #[error("graph {0} has no nodes")]
    EmptyGraph(String),
}

/// Per-graph aggregation plan shared by all layers of one forward pass.
#[derive(Debug, Clone)]
pub struct GraphPlan {
    pub node_count: usize,
    pub degrees: Vec<usize>,
    pub buckets: Vec<BucketPlan>,
    pub self_entries: Vec<Entry>,
    /// Full normalized adjacency with self-loops, for the plain GCN layer.
    pub gcn_entries: Vec<Entry>,
}

/// Messages of one bucket, compacted to the destination rows they reach.
#[derive(Debug, Clone)]
pub struct BucketPlan {
    pub bucket: usize,
    /// Destination node per compact row, ascending.
    pub targets: Vec<usize>,
    /// `row` indexes `targets`.
    pub entries: Vec<Entry>,
}

impl GraphPlan {
    pub fn new(graph: &HeteroGraph, scheme: &BucketScheme) -> Self {
        let n = graph.node_count();
        let degrees = graph.degrees();
        let norm = |i: usize, j: usize| 1.0 / ((degrees[i] as f64).sqrt() * (degrees[j] as f64).sqrt());
        let mut grouped: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        let mut gcn_entries = Vec::with_capacity(graph.edge_count() + n);
        for (e, et) in graph.typed_edges() {
            let b = scheme.bucket(graph.node_types[e.src], graph.node_types[e.dst], et);
            grouped.entry(b).or_default().push((e.dst, e.src));
            gcn_entries.push(Entry { row: e.dst, src: e.src, coef: norm(e.dst, e.src) });
        }
        let self_entries: Vec<Entry> =
            (0..n).map(|i| Entry { row: i, src: i, coef: 1.0 / degrees[i] as f64 }).collect();
        gcn_entries.extend_from_slice(&self_entries);
        let buckets = grouped
            .into_iter()
            .map(|(bucket, msgs)| {
                let mut targets: Vec<usize> = msgs.iter().map(|m| m.0).collect();
                targets.sort_unstable();
                targets.dedup();
                let entries = msgs
                    .iter()
                    .map(|&(dst, src)| Entry {
                        row: targets.binary_search(&dst).expect("target present"),
                        src,
                        coef: norm(dst, src),
                    })
                    .collect();
                BucketPlan { bucket, targets, entries }
            })
            .collect();
        Self { node_count: n, degrees, buckets, self_entries, gcn_entries }
    }
}

/// Pre-mixing view of one heterogeneous layer.
#[derive(Debug, Clone)]
pub struct PreMix {
    pub slots: Vec<Slot>,
    pub self_term: Var,
    pub width: usize,
    pub bucket_count: usize,
    pub node_count: usize,
}

#[derive(Debug, Clone)]
pub struct Slot {
    pub bucket: usize,
    pub targets: Vec<usize>,
    /// `targets.len() × width`.
    pub value: Var,
}

impl PreMix {
    /// Dense `n × (B+1)·width` concatenation: bucket slots in canonical
    /// order followed by the self slot.
    pub fn dense(&self, tape: &Tape<'_>) -> Matrix {
        let w = self.width;
        let mut out = Matrix::zeros(self.node_count, (self.bucket_count + 1) * w);
        for slot in &self.slots {
            let v = tape.value(slot.value);
            for (r, &node) in slot.targets.iter().enumerate() {
                out.row_mut(node)[slot.bucket * w..(slot.bucket + 1) * w].copy_from_slice(v.row(r));
            }
        }
        let s = tape.value(self.self_term);
        for i in 0..self.node_count {
            out.row_mut(i)[self.bucket_count * w..].copy_from_slice(s.row(i));
        }
        out
    }

    /// Sum of all slots per node: the homogeneous aggregation when every
    /// bucket shares one transform.
    pub fn collapsed(&self, tape: &Tape<'_>) -> Matrix {
        let mut out = tape.value(self.self_term).clone();
        for slot in &self.slots {
            let v = tape.value(slot.value);
            for (r, &node) in slot.targets.iter().enumerate() {
                for (o, x) in out.row_mut(node).iter_mut().zip(v.row(r)) {
                    *o += x;
                }
            }
        }
        out
    }
}

/// `Â X W + b`, where `Â` is the symmetric-normalized adjacency with
/// self-loops. No activation.
pub fn gcn_layer(
    plan: &GraphPlan,
    x: Var,
    params: &ModelParams,
    layer: usize,
    tape: &mut Tape<'_>,
) -> Result<Var, ModelError> {
    let LayerParams::Gcn { weight, bias } = &params.layers[layer] else {
        panic!("gcn_layer called on a heterogeneous layer");
    };
    let (w, b) = (tape.param(*weight), tape.param(*bias));
    let xw = tape.matmul(x, w)?;
    let agg = tape.aggregate(xw, plan.gcn_entries.clone(), plan.node_count)?;
    Ok(tape.add_row(agg, b)?)
}

/// Bucketed aggregation of a heterogeneous layer, before mixing.
pub fn pre_mix(
    plan: &GraphPlan,
    x: Var,
    params: &ModelParams,
    layer: usize,
    tape: &mut Tape<'_>,
) -> Result<PreMix, ModelError> {
    let LayerParams::Mixed { self_weight, .. } = &params.layers[layer] else {
        panic!("pre_mix called on a GCN layer");
    };
    let mut slots = Vec::with_capacity(plan.buckets.len());
    for bp in &plan.buckets {
        let mut value = tape.aggregate(x, bp.entries.clone(), bp.targets.len())?;
        for w in params.bucket_transforms(layer, bp.bucket) {
            let wv = tape.param(w);
            value = tape.matmul(value, wv)?;
        }
        slots.push(Slot { bucket: bp.bucket, targets: bp.targets.clone(), value });
    }
    let self_agg = tape.aggregate(x, plan.self_entries.clone(), plan.node_count)?;
    let ws = tape.param(*self_weight);
    let self_term = tape.matmul(self_agg, ws)?;
    Ok(PreMix {
        slots,
        self_term,
        width: params.hidden_dim,
        bucket_count: params.scheme.bucket_count(),
        node_count: plan.node_count,
    })
}

/// `relu(concat(slots) · M + b)` evaluated block-wise.
pub fn mix(pre: &PreMix, params: &ModelParams, layer: usize, tape: &mut Tape<'_>) -> Result<Var, ModelError> {
    let LayerParams::Mixed { mix, mix_self, bias, .. } = &params.layers[layer] else {
        panic!("mix called on a GCN layer");
    };
    let ms = tape.param(*mix_self);
    let mut acc = tape.matmul(pre.self_term, ms)?;
    for slot in &pre.slots {
        let m = tape.param(mix[slot.bucket]);
        let local = tape.matmul(slot.value, m)?;
        let scatter = slot.targets.iter().enumerate().map(|(r, &node)| Entry { row: node, src: r, coef: 1.0 }).collect();
        let spread = tape.aggregate(local, scatter, pre.node_count)?;
        acc = tape.add(acc, spread)?;
    }
    let b = tape.param(*bias);
    let shifted = tape.add_row(acc, b)?;
    Ok(tape.relu(shifted))
}

/// Source-type buckets (`HETGCN`).
pub fn hetgcn_layer(
    plan: &GraphPlan,
    x: Var,
    params: &ModelParams,
    layer: usize,
    tape: &mut Tape<'_>,
) -> Result<Var, ModelError> {
    debug_assert_eq!(params.scheme.variant, Variant::HetGcn);
    let pre = pre_mix(plan, x, params, layer, tape)?;
    mix(&pre, params, layer, tape)
}

/// Ordered `(src_type, dst_type)` buckets (`HRGCN_SDR`).
pub fn hrgcn_sdr_layer(
    plan: &GraphPlan,
    x: Var,
    params: &ModelParams,
    layer: usize,
    tape: &mut Tape<'_>,
) -> Result<Var, ModelError> {
    debug_assert_eq!(params.scheme.variant, Variant::HrgcnSdr);
    let pre = pre_mix(plan, x, params, layer, tape)?;
    mix(&pre, params, layer, tape)
}

/// Edge-type buckets (`HRGCN_ER`), or `(src, dst, edge)` triples when the
/// model was built as `HRGCN_R2`.
pub fn hrgcn_er_layer(
    plan: &GraphPlan,
    x: Var,
    params: &ModelParams,
    layer: usize,
    tape: &mut Tape<'_>,
) -> Result<Var, ModelError> {
    debug_assert!(matches!(params.scheme.variant, Variant::HrgcnEr | Variant::HrgcnR2));
    let pre = pre_mix(plan, x, params, layer, tape)?;
    mix(&pre, params, layer, tape)
}

/// One message-passing round of whatever variant `params` was built for,
/// including the activation.
pub fn apply_layer(
    plan: &GraphPlan,
    x: Var,
    params: &ModelParams,
    layer: usize,
    tape: &mut Tape<'_>,
) -> Result<Var, ModelError> {
    match params.scheme.variant {
        Variant::Gcn => {
            let out = gcn_layer(plan, x, params, layer, tape)?;
            Ok(tape.relu(out))
        }
        Variant::HetGcn => hetgcn_layer(plan, x, params, layer, tape),
        Variant::HrgcnSdr => hrgcn_sdr_layer(plan, x, params, layer, tape),
        Variant::HrgcnEr | Variant::HrgcnR2 => hrgcn_er_layer(plan, x, params, layer, tape),
    }
}

/// Elementwise max over node rows.
pub fn readout(x: Var, tape: &mut Tape<'_>) -> Result<Var, ModelError> {
    Ok(tape.rowmax(x)?)
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    pub nodes: Var,
    pub pooled: Var,
    /// `1 × rep_dim` graph embedding of the SVDD head.
    pub embedding: Var,
    /// `1 × 1` probability that the graph is augmented/abnormal.
    pub ssl_prob: Var,
}

fn check_graph(graph: &HeteroGraph, schema: &GraphSchema) -> Result<(), ModelError> {
    if graph.node_count() == 0 {
        return Err(ModelError::EmptyGraph(graph.id.clone()));
    }
    let violations: Vec<Violation> = validate(graph, schema);
    if let Some(v) = violations.first() {
        return Err(ModelError::SchemaMismatch { id: graph.id.clone(), violation: v.to_string() });
    }
    Ok(())
}

/// Final node representations after all `K` rounds.
pub fn node_embeddings(graph: &HeteroGraph, params: &ModelParams, tape: &mut Tape<'_>) -> Result<Var, ModelError> {
    check_graph(graph, &params.schema)?;
    let plan = GraphPlan::new(graph, &params.scheme);
    let mut x = tape.constant(graph.features.clone());
    for layer in 0..params.layers.len() {
        x = apply_layer(&plan, x, params, layer, tape)?;
    }
    Ok(x)
}

/// Shared trunk, max-pool readout, then the SVDD head `pooled · W` and the
/// self-supervised head `sigmoid(pooled · w + b)`.
pub fn model_forward(graph: &HeteroGraph, params: &ModelParams, tape: &mut Tape<'_>) -> Result<ForwardOutput, ModelError> {
    let nodes = node_embeddings(graph, params, tape)?;
    let pooled = readout(nodes, tape)?;
    let svdd_w = tape.param(params.svdd_head);
    let embedding = tape.matmul(pooled, svdd_w)?;
    let ssl_w = tape.param(params.ssl_head);
    let ssl_b = tape.param(params.ssl_bias);
    let logit = tape.matmul(pooled, ssl_w)?;
    let logit = tape.add(logit, ssl_b)?;
    let ssl_prob = tape.sigmoid(logit);
    Ok(ForwardOutput { nodes, pooled, embedding, ssl_prob })
}

/// Forward without keeping the tape: `(embedding, ssl probability)`.
pub fn infer(graph: &HeteroGraph, params: &ModelParams) -> Result<(Vec<f64>, f64), ModelError> {
    let mut tape = Tape::new(&params.set);
    let out = model_forward(graph, params, &mut tape)?;
    Ok((tape.value(out.embedding).as_slice().to_vec(), tape.value(out.ssl_prob).item()))
}
