//! Training loop, optimizers, validation-based model selection, and
//! checkpoints.
//!
//! One batch step: forward the originals for the SVDD term (fixing the
//! center on the very first batch), forward each original's augmented
//! partner for the cross-entropy term, backpropagate the joint loss, and
//! update. Per-graph tapes may run in parallel; their gradients are always
//! reduced in batch order, so the thread count never changes the result.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::augment;
use crate::hetgraph::{type_histograms, GraphSchema, HeteroGraph, TypeHistograms};
use crate::layers::{infer, ConfigError, ModelConfig, ModelError, ModelParams, OptimizerKind};
use crate::numerics::{Gradients, Matrix, ParamSet, Tape};
use crate::objective::{
    anomaly_score, compute_center, graph_objective, regularizer, svdd_distance, weight_penalty, BatchScale,
    ObjectiveError, ScoredGraph, SvddState,
};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("validation set is empty")]
    EmptyValidationSet,
    #[error("training graph {0} is labeled anomalous")]
    AnomalousTrainingGraph(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("thread pool: {0}")]
    Threads(String),
}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Objective(ObjectiveError::Model(e))
    }
}

/// Runs per-graph work either inline or on a fixed-size pool. Output order
/// always matches input order.
pub struct Workers {
    pool: Option<rayon::ThreadPool>,
}

impl Workers {
    pub fn new(threads: usize) -> Result<Self, TrainError> {
        if threads <= 1 {
            return Ok(Self { pool: None });
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| TrainError::Threads(e.to_string()))?;
        Ok(Self { pool: Some(pool) })
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match &self.pool {
            None => items.iter().map(f).collect(),
            Some(pool) => pool.install(|| items.par_iter().map(f).collect()),
        }
    }
}

/// Adaptive-moment state, one moment pair per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub step: u64,
    pub first: Vec<Matrix>,
    pub second: Vec<Matrix>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &ParamSet) -> Self {
        let zeros = || params.iter().map(|(_, p)| Matrix::zeros(p.value.rows(), p.value.cols())).collect();
        Self { kind, step: 0, first: zeros(), second: zeros() }
    }
}

/// Applies one update from the accumulated `Param::grad` values, then
/// zeroes them. Adam uses `β₁ = 0.9`, `β₂ = 0.999`, `ε = 1e-8` with bias
/// correction.
pub fn optimizer_step(params: &mut ParamSet, opt: &mut Optimizer, learning_rate: f64) {
    opt.step += 1;
    let t = opt.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (k, p) in params.iter_mut().enumerate() {
        match opt.kind {
            OptimizerKind::Sgd => p.value.add_scaled(&p.grad, -learning_rate),
            OptimizerKind::Adam => {
                let (m, v) = (opt.first[k].as_mut_slice(), opt.second[k].as_mut_slice());
                let w = p.value.as_mut_slice();
                for (i, &g) in p.grad.as_slice().iter().enumerate() {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                    if m[i] != 0.0 {
                        w[i] -= learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPSILON);
                    }
                }
            }
        }
        p.grad.fill(0.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub svdd: SvddState,
    pub optimizer: Optimizer,
    /// Completed epochs.
    pub epoch: usize,
    pub best_val_metric: f64,
}

pub fn init_params(schema: &GraphSchema, config: &ModelConfig, seed: u64) -> ModelParams {
    ModelParams::init(schema, config, seed)
}

impl TrainState {
    pub fn new(schema: &GraphSchema, config: &ModelConfig) -> Result<Self, TrainError> {
        config.check()?;
        let params = init_params(schema, config, config.seed);
        let optimizer = Optimizer::new(config.optimizer, &params.set);
        Ok(Self {
            config: config.clone(),
            params,
            svdd: SvddState { center: Vec::new(), frozen: false },
            optimizer,
            epoch: 0,
            best_val_metric: f64::NEG_INFINITY,
        })
    }
}

/// FNV-1a over the bytes of `parts`; a stable, platform-independent key for
/// deriving sub-seeds.
fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stream used to augment `graph_id` in `epoch` of a run seeded with `seed`.
pub fn augment_rng(seed: u64, epoch: u64, graph_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stable_hash(&[&seed.to_le_bytes(), &epoch.to_le_bytes(), graph_id.as_bytes()]))
}

/// Epoch key of the fixed validation augmentation stream.
pub const VALIDATION_EPOCH: u64 = u64::MAX;

pub fn augmented_partners(
    graphs: &[&HeteroGraph],
    hist: &TypeHistograms,
    config: &ModelConfig,
    epoch: u64,
    workers: &Workers,
) -> Vec<HeteroGraph> {
    workers.map(graphs, |g| augment(g, hist, &config.augment, &mut augment_rng(config.seed, epoch, &g.id)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    /// Mean over batches of the SVDD term, including the weight penalty.
    pub svdd: f64,
    /// Mean over batches of the cross-entropy; zero when the branch is off.
    pub ssl: f64,
    pub joint: f64,
    /// Wall-clock seconds per batch step.
    pub batch_seconds: f64,
}

/// Loss and gradient of one batch. `partners[i]` is the augmented graph of
/// `batch[i]`, or `None` for all graphs when the branch is off.
pub fn batch_gradients(
    params: &ModelParams,
    batch: &[&HeteroGraph],
    partners: Option<&[HeteroGraph]>,
    center: &[f64],
    config: &ModelConfig,
    workers: &Workers,
) -> Result<(f64, EpochLosses, Gradients), TrainError> {
    let scale = BatchScale {
        svdd_count: batch.len(),
        ssl_count: 2 * batch.len(),
        alpha: config.ssl_weight,
    };
    let idx: Vec<usize> = (0..batch.len()).collect();
    let per_graph = workers.map(&idx, |&i| {
        let mut tape = Tape::new(&params.set);
        let partner = partners.map(|p| &p[i]);
        let (loss, terms) = graph_objective(batch[i], partner, params, center, scale, &mut tape)?;
        let grads = tape.backward(loss).map_err(ObjectiveError::from)?;
        Ok::<_, ObjectiveError>((tape.value(loss).item(), terms, grads))
    });
    let mut total = Gradients::empty(params.set.len());
    let mut loss = 0.0;
    let (mut dist, mut ce) = (0.0, 0.0);
    for r in per_graph {
        let (l, terms, g) = r?;
        loss += l;
        dist += terms.distance;
        ce += terms.cross_entropy;
        total.merge(&g);
    }
    let penalty = if config.reg_lambda > 0.0 {
        let mut tape = Tape::new(&params.set);
        let reg = regularizer(params, config.reg_lambda, &mut tape)?;
        total.merge(&tape.backward(reg).map_err(ObjectiveError::from)?);
        tape.value(reg).item()
    } else {
        0.0
    };
    loss += penalty;
    let svdd = dist / scale.svdd_count as f64 + penalty;
    let ssl = if partners.is_some() { ce / scale.ssl_count as f64 } else { 0.0 };
    Ok((loss, EpochLosses { svdd, ssl, joint: svdd + config.ssl_weight * ssl, batch_seconds: 0.0 }, total))
}

/// Plain-value evaluation of the same batch loss, for gradient audits.
pub fn batch_loss(
    params: &ModelParams,
    set: &ParamSet,
    batch: &[&HeteroGraph],
    partners: Option<&[HeteroGraph]>,
    center: &[f64],
    config: &ModelConfig,
) -> Result<f64, TrainError> {
    let scale = BatchScale { svdd_count: batch.len(), ssl_count: 2 * batch.len(), alpha: config.ssl_weight };
    let mut loss = 0.0;
    for (i, g) in batch.iter().enumerate() {
        let mut tape = Tape::new(set);
        let (l, _) = graph_objective(g, partners.map(|p| &p[i]), params, center, scale, &mut tape)?;
        loss += tape.value(l).item();
    }
    Ok(loss + weight_penalty(set, config.reg_lambda))
}

fn embeddings(params: &ModelParams, graphs: &[&HeteroGraph], workers: &Workers) -> Result<Vec<Vec<f64>>, TrainError> {
    workers.map(graphs, |g| infer(g, params).map(|(e, _)| e)).into_iter().map(|r| r.map_err(TrainError::from)).collect()
}

/// One pass over `graphs` in a seeded shuffled order, batch by batch.
pub fn train_epoch(
    state: &mut TrainState,
    graphs: &[HeteroGraph],
    hist: &TypeHistograms,
    workers: &Workers,
) -> Result<EpochLosses, TrainError> {
    if graphs.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if let Some(g) = graphs.iter().find(|g| g.label == Some(crate::hetgraph::Label::Anomalous)) {
        return Err(TrainError::AnomalousTrainingGraph(g.id.clone()));
    }
    let config = state.config.clone();
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut shuffle = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle.set_stream(state.epoch as u64 + 1);
    order.shuffle(&mut shuffle);

    let mut sums = EpochLosses::default();
    let mut batches = 0usize;
    for chunk in order.chunks(config.batch_size) {
        let started = Instant::now();
        let batch: Vec<&HeteroGraph> = chunk.iter().map(|&i| &graphs[i]).collect();
        if !state.svdd.frozen {
            state.svdd = compute_center(&embeddings(&state.params, &batch, workers)?)?;
        }
        let partners =
            config.ssl_active().then(|| augmented_partners(&batch, hist, &config, state.epoch as u64, workers));
        let (_, losses, grads) =
            batch_gradients(&state.params, &batch, partners.as_deref(), &state.svdd.center, &config, workers)?;
        state.params.set.zero_grads();
        state.params.set.accumulate(&grads);
        optimizer_step(&mut state.params.set, &mut state.optimizer, config.learning_rate);
        sums.svdd += losses.svdd;
        sums.ssl += losses.ssl;
        sums.joint += losses.joint;
        sums.batch_seconds += started.elapsed().as_secs_f64();
        batches += 1;
    }
    state.epoch += 1;
    let n = batches as f64;
    Ok(EpochLosses { svdd: sums.svdd / n, ssl: sums.ssl / n, joint: sums.joint / n, batch_seconds: sums.batch_seconds / n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub mean_distance: f64,
    /// Share of originals and partners the head classifies correctly; a
    /// probability of exactly 0.5 counts as wrong for both. Zero when the
    /// branch is off.
    pub ssl_accuracy: f64,
    /// `ssl_accuracy − mean_distance`; higher is better.
    pub metric: f64,
}

pub fn validate(
    state: &TrainState,
    graphs: &[HeteroGraph],
    hist: &TypeHistograms,
    workers: &Workers,
) -> Result<ValidationMetrics, TrainError> {
    if graphs.is_empty() {
        return Err(TrainError::EmptyValidationSet);
    }
    let refs: Vec<&HeteroGraph> = graphs.iter().collect();
    let outs: Vec<(Vec<f64>, f64)> =
        workers.map(&refs, |g| infer(g, &state.params)).into_iter().collect::<Result<_, _>>()?;
    let mut total = 0.0;
    for (e, _) in &outs {
        total += svdd_distance(e, &state.svdd)?;
    }
    let mean_distance = total / graphs.len() as f64;
    let ssl_accuracy = if state.config.ssl_active() {
        let partners = augmented_partners(&refs, hist, &state.config, VALIDATION_EPOCH, workers);
        let aug: Vec<f64> = workers
            .map(&partners, |g| infer(g, &state.params).map(|(_, p)| p))
            .into_iter()
            .collect::<Result<_, _>>()?;
        let correct = outs.iter().filter(|(_, p)| *p < 0.5).count() + aug.iter().filter(|&&p| p > 0.5).count();
        correct as f64 / (2 * graphs.len()) as f64
    } else {
        0.0
    };
    Ok(ValidationMetrics { mean_distance, ssl_accuracy, metric: ssl_accuracy - mean_distance })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub losses: EpochLosses,
    pub validation: Option<ValidationMetrics>,
    pub improved: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// State at the best validation epoch (the last epoch without a
    /// validation set).
    pub best: TrainState,
    pub log: Vec<EpochRecord>,
}

/// Trains for up to `max_epochs`, keeping the epoch with the best
/// validation metric and stopping after `patience` epochs without
/// improvement. Augmentation histograms come from the training graphs.
pub fn fit(
    schema: &GraphSchema,
    config: &ModelConfig,
    train: &[HeteroGraph],
    val: &[HeteroGraph],
    threads: usize,
) -> Result<FitResult, TrainError> {
    let workers = Workers::new(threads)?;
    let mut state = TrainState::new(schema, config)?;
    if train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let hist = type_histograms(train).unwrap_or_default();
    let mut best = state.clone();
    let mut log = Vec::new();
    let mut stale = 0usize;
    for _ in 0..config.max_epochs {
        let started = Instant::now();
        let losses = train_epoch(&mut state, train, &hist, &workers)?;
        let validation = if val.is_empty() { None } else { Some(validate(&state, val, &hist, &workers)?) };
        let metric = validation.map_or(f64::INFINITY, |v| v.metric);
        let improved = validation.is_none() || metric > state.best_val_metric;
        if improved {
            state.best_val_metric = metric;
            best = state.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        log.push(EpochRecord { epoch: state.epoch, losses, validation, improved, seconds: started.elapsed().as_secs_f64() });
        if stale >= config.patience {
            break;
        }
    }
    Ok(FitResult { best, log })
}

/// Scores graphs in input order.
pub fn score_graphs(
    params: &ModelParams,
    svdd: &SvddState,
    ssl_active: bool,
    graphs: &[HeteroGraph],
    workers: &Workers,
) -> Result<Vec<ScoredGraph>, TrainError> {
    workers
        .map(graphs, |g| {
            let (e, p) = infer(g, params)?;
            Ok(anomaly_score(&g.id, &e, p, svdd, ssl_active)?)
        })
        .into_iter()
        .collect()
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HRGADCK1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("parameter {name}: checkpoint has shape {found:?}, model expects {expected:?}")]
    ShapeMismatch { name: String, found: (usize, usize), expected: (usize, usize) },
    #[error("parameter {0} missing from checkpoint")]
    MissingParam(String),
    #[error("checkpoint schema {found} does not match {expected}")]
    SchemaMismatch { found: GraphSchema, expected: GraphSchema },
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    config: ModelConfig,
    schema: GraphSchema,
    epoch: usize,
    params: Vec<ParamEntry>,
    center_len: usize,
    center_frozen: bool,
}

/// Everything needed to score with a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub svdd: SvddState,
    pub epoch: usize,
}

impl Checkpoint {
    pub fn from_state(state: &TrainState) -> Self {
        Self { config: state.config.clone(), params: state.params.clone(), svdd: state.svdd.clone(), epoch: state.epoch }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = Manifest {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            schema: self.params.schema,
            epoch: self.epoch,
            params: self
                .params
                .set
                .iter()
                .map(|(_, p)| ParamEntry { name: p.name.clone(), rows: p.value.rows(), cols: p.value.cols() })
                .collect(),
            center_len: self.svdd.center.len(),
            center_frozen: self.svdd.frozen,
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(20 + json.len() + 8 * (self.params.set.scalar_count() + self.svdd.center.len()));
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, p) in self.params.set.iter() {
            for v in p.value.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for v in &self.svdd.center {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a checkpoint and rebuilds the model layout from its own config.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let (manifest, payload) = parse_container(bytes)?;
        manifest.config.check().map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        let layout = init_params(&manifest.schema, &manifest.config, 0);
        let (params, center) = fill_params(&manifest, payload, layout)?;
        Ok(Self {
            config: manifest.config,
            params,
            svdd: SvddState { center, frozen: manifest.center_frozen },
            epoch: manifest.epoch,
        })
    }

    /// Loads the stored values into the layout `config` implies, failing on
    /// the first parameter whose shape differs.
    pub fn params_for(bytes: &[u8], schema: &GraphSchema, config: &ModelConfig) -> Result<Self, CheckpointError> {
        let (manifest, payload) = parse_container(bytes)?;
        if manifest.schema != *schema {
            return Err(CheckpointError::SchemaMismatch { found: manifest.schema, expected: *schema });
        }
        let layout = init_params(schema, config, 0);
        let (params, center) = fill_params(&manifest, payload, layout)?;
        Ok(Self {
            config: config.clone(),
            params,
            svdd: SvddState { center, frozen: manifest.center_frozen },
            epoch: manifest.epoch,
        })
    }
}

fn parse_container(bytes: &[u8]) -> Result<(Manifest, &[u8]), CheckpointError> {
    if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < 20 {
        return Err(CheckpointError::Corrupt("truncated header".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version { found: version, expected: CHECKPOINT_VERSION });
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bytes[20..];
    if body.len() < len {
        return Err(CheckpointError::Corrupt("truncated manifest".into()));
    }
    let manifest: Manifest =
        serde_json::from_slice(&body[..len]).map_err(|e| CheckpointError::Corrupt(format!("manifest: {e}")))?;
    if manifest.version != version {
        return Err(CheckpointError::Corrupt("manifest version disagrees with header".into()));
    }
    Ok((manifest, &body[len..]))
}

fn fill_params(manifest: &Manifest, payload: &[u8], mut layout: ModelParams) -> Result<(ModelParams, Vec<f64>), CheckpointError> {
    let scalars: usize = manifest.params.iter().map(|p| p.rows * p.cols).sum::<usize>() + manifest.center_len;
    if payload.len() != 8 * scalars {
        return Err(CheckpointError::Corrupt(format!("payload holds {} bytes, manifest needs {}", payload.len(), 8 * scalars)));
    }
    let mut values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut stored = std::collections::HashMap::new();
    for entry in &manifest.params {
        let data: Vec<f64> = values.by_ref().take(entry.rows * entry.cols).collect();
        stored.insert(entry.name.as_str(), (entry.rows, entry.cols, data));
    }
    let center: Vec<f64> = values.collect();
    let ids: Vec<_> = layout.set.ids().collect();
    for id in ids {
        let p = layout.set.get_mut(id);
        let Some((rows, cols, data)) = stored.remove(p.name.as_str()) else {
            return Err(CheckpointError::MissingParam(p.name.clone()));
        };
        if (rows, cols) != p.value.shape() {
            return Err(CheckpointError::ShapeMismatch { name: p.name.clone(), found: (rows, cols), expected: p.value.shape() });
        }
        p.value = Matrix::from_vec(rows, cols, data);
    }
    if let Some(extra) = stored.keys().next() {
        return Err(CheckpointError::Corrupt(format!("unexpected parameter {extra}")));
    }
    Ok((layout, center))
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io { path: path.display().to_string(), source };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&checkpoint.to_bytes()).map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::AugmentConfig;
    use crate::hetgraph::{fixture_g3, fixture_g3_schema};
    use crate::layers::{R2Form, Variant};
    use crate::numerics::ParamKind;

    fn config(variant: Variant, h: usize) -> ModelConfig {
        ModelConfig {
            variant,
            hidden_dim: h,
            num_layers: 2,
            rep_dim: h,
            ssl_weight: 0.0,
            reg_lambda: 0.0,
            learning_rate: 0.01,
            batch_size: 2,
            seed: 11,
            augment: AugmentConfig::DISABLED,
            r2_form: R2Form::Composed,
            optimizer: OptimizerKind::Adam,
            max_epochs: 3,
            patience: 10,
        }
    }

    fn g3_copies(n: usize) -> Vec<HeteroGraph> {
        (0..n)
            .map(|i| {
                let mut g = fixture_g3();
                g.id = format!("c{i}");
                g.features.as_mut_slice().iter_mut().enumerate().for_each(|(k, v)| *v += 0.1 * ((i + k) % 3) as f64);
                g
            })
            .collect()
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut set = ParamSet::new();
        set.insert("w", ParamKind::Weight, Matrix::scalar(1.0));
        let mut opt = Optimizer::new(OptimizerKind::Adam, &set);
        set.iter_mut().next().unwrap().grad = Matrix::scalar(1.0);
        optimizer_step(&mut set, &mut opt, 0.01);
        let w = set.iter().next().unwrap().1;
        assert!((w.value.item() - 0.99).abs() < 1e-9);
        assert_eq!(w.grad.item(), 0.0);
    }

    #[test]
    fn zero_gradients_leave_params_alone() {
        let mut set = ParamSet::new();
        set.insert("w", ParamKind::Weight, Matrix::from_rows(&[[0.3, -0.2]]));
        let before = set.clone();
        let mut opt = Optimizer::new(OptimizerKind::Adam, &set);
        optimizer_step(&mut set, &mut opt, 0.1);
        assert_eq!(set.iter().next().unwrap().1.value, before.iter().next().unwrap().1.value);
        let mut sgd = Optimizer::new(OptimizerKind::Sgd, &set);
        optimizer_step(&mut set, &mut sgd, 0.1);
        assert_eq!(set, before);
    }

    #[test]
    fn single_batch_center_is_the_initial_mean() {
        let graphs = g3_copies(2);
        let cfg = config(Variant::HetGcn, 3);
        let mut state = TrainState::new(&fixture_g3_schema(), &cfg).unwrap();
        let initial = state.params.clone();
        let hist = type_histograms(&graphs).unwrap();
        train_epoch(&mut state, &graphs, &hist, &Workers::new(1).unwrap()).unwrap();
        let refs: Vec<&HeteroGraph> = graphs.iter().collect();
        let expected = compute_center(&embeddings(&initial, &refs, &Workers::new(1).unwrap()).unwrap()).unwrap();
        assert_eq!(state.svdd, expected);
    }

    #[test]
    fn tiny_width_trains_on_g3() {
        let graphs = g3_copies(3);
        let result = fit(&fixture_g3_schema(), &config(Variant::HrgcnR2, 1), &graphs, &graphs, 1).unwrap();
        assert!(!result.log.is_empty() && result.log.len() <= 3);
    }

    #[test]
    fn disabled_branch_matches_pure_svdd() {
        let graphs = g3_copies(2);
        let refs: Vec<&HeteroGraph> = graphs.iter().collect();
        let mut with_alpha = config(Variant::HrgcnSdr, 3);
        with_alpha.ssl_weight = 0.0;
        let params = init_params(&fixture_g3_schema(), &with_alpha, 4);
        let w = Workers::new(1).unwrap();
        let (_, a_loss, a) = batch_gradients(&params, &refs, None, &[0.1, 0.2, 0.3], &with_alpha, &w).unwrap();
        assert_eq!(a_loss.ssl, 0.0);
        let mut with_data = with_alpha.clone();
        with_data.augment = AugmentConfig::flowgraph();
        with_data.augment.enabled = false;
        let (_, _, b) = batch_gradients(&params, &refs, None, &[0.1, 0.2, 0.3], &with_data, &w).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn thread_count_does_not_change_gradients() {
        let graphs = g3_copies(6);
        let refs: Vec<&HeteroGraph> = graphs.iter().collect();
        let mut cfg = config(Variant::HrgcnR2, 4);
        cfg.ssl_weight = 0.3;
        cfg.reg_lambda = 0.01;
        cfg.augment = AugmentConfig::tracelog();
        let params = init_params(&fixture_g3_schema(), &cfg, 4);
        let hist = type_histograms(&graphs).unwrap();
        let one = Workers::new(1).unwrap();
        let four = Workers::new(4).unwrap();
        let partners = augmented_partners(&refs, &hist, &cfg, 0, &one);
        assert_eq!(partners, augmented_partners(&refs, &hist, &cfg, 0, &four));
        let c = [0.0; 4];
        let (l1, _, g1) = batch_gradients(&params, &refs, Some(&partners), &c, &cfg, &one).unwrap();
        let (l4, _, g4) = batch_gradients(&params, &refs, Some(&partners), &c, &cfg, &four).unwrap();
        assert_eq!(l1.to_bits(), l4.to_bits());
        assert_eq!(g1, g4);
        let plain = batch_loss(&params, &params.set, &refs, Some(&partners), &c, &cfg).unwrap();
        assert!((plain - l1).abs() < 1e-12);
    }

    #[test]
    fn untrained_validation_has_even_accuracy() {
        let graphs = g3_copies(4);
        let mut cfg = config(Variant::HetGcn, 3);
        cfg.ssl_weight = 0.5;
        cfg.augment = AugmentConfig::tracelog();
        let mut state = TrainState::new(&fixture_g3_schema(), &cfg).unwrap();
        // a zero head outputs exactly 0.5: wrong for both populations
        let head = state.params.ssl_head;
        state.params.set.get_mut(head).value.fill(0.0);
        state.svdd = SvddState { center: vec![0.0; 3], frozen: true };
        let hist = type_histograms(&graphs).unwrap();
        let v = validate(&state, &graphs, &hist, &Workers::new(1).unwrap()).unwrap();
        assert_eq!(v.ssl_accuracy, 0.0);
        assert!(v.mean_distance >= 0.0);
        assert!(matches!(validate(&state, &[], &hist, &Workers::new(1).unwrap()), Err(TrainError::EmptyValidationSet)));
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let graphs = g3_copies(3);
        let result = fit(&fixture_g3_schema(), &config(Variant::HrgcnSdr, 4), &graphs, &graphs, 1).unwrap();
        let ck = Checkpoint::from_state(&result.best);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_checkpoint(&ck, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        let w = Workers::new(1).unwrap();
        let a = score_graphs(&ck.params, &ck.svdd, false, &graphs, &w).unwrap();
        let b = score_graphs(&back.params, &back.svdd, false, &graphs, &w).unwrap();
        assert_eq!(a, b);

        let mut bytes = ck.to_bytes();
        bytes[8] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::Version { found: 9, .. })));

        let wider = config(Variant::HrgcnSdr, 6);
        let err = Checkpoint::params_for(&ck.to_bytes(), &fixture_g3_schema(), &wider).unwrap_err();
        assert!(matches!(&err, CheckpointError::ShapeMismatch { name, .. } if name.starts_with("layer.1.")), "{err}");
        assert!(matches!(Checkpoint::from_bytes(b"junk"), Err(CheckpointError::BadMagic)));
        let truncated = &ck.to_bytes()[..100];
        assert!(Checkpoint::from_bytes(truncated).is_err());
    }
}
