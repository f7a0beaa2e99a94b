//! Run configuration: named profile defaults, deep-merged with a TOML file
//! and `--set key=value` overrides, then checked.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::dataio::GeneratorConfig;
use crate::layers::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    #[serde(rename = "tracelog-like")]
    TracelogLike,
    #[serde(rename = "flowgraph-like")]
    FlowgraphLike,
    #[serde(rename = "custom")]
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_frac: f64,
    pub val_frac: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    /// Input dataset for `train`/`score`; output path for `generate`.
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    /// Defaults to `out_dir/checkpoint.bin`.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset scored by `evaluate`; defaults to the test split written by
    /// `train`.
    #[serde(default)]
    pub eval_dataset: Option<PathBuf>,
    /// Dataset scored by `score`; defaults to `dataset`.
    #[serde(default)]
    pub score_dataset: Option<PathBuf>,
    /// Forces a single worker thread.
    pub deterministic: bool,
    pub threads: usize,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub generator: GeneratorConfig,
}

impl RunConfig {
    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out_dir.join("checkpoint.bin"))
    }

    pub fn eval_dataset_path(&self) -> PathBuf {
        self.eval_dataset.clone().unwrap_or_else(|| self.out_dir.join("test.jsonl"))
    }

    pub fn score_dataset_path(&self) -> PathBuf {
        self.score_dataset.clone().unwrap_or_else(|| self.dataset.clone())
    }

    pub fn worker_threads(&self) -> usize {
        if self.deterministic {
            1
        } else {
            self.threads.max(1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigFileError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("--set {0}: expected key=value")]
    BadOverride(String),
    #[error("--set {key}: {message}")]
    OverrideConflict { key: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn parse_table(text: &str) -> Table {
    text.parse::<Table>().expect("built-in profile parses")
}

/// Default keys of a named profile, as a TOML table. `custom` supplies only
/// run plumbing, so every model field must come from the file.
pub fn profile_defaults(profile: Profile) -> Table {
    let common = r#"
        dataset = "data/synthetic.jsonl"
        out_dir = "runs/latest"
        deterministic = true
        threads = 1

        [generator]
        num_graphs = 600
        anomaly_fraction = 0.16666666666666666
        mean_nodes = 24
        mean_edges = 40
        anomaly_kind = "pair_shift"
        seed = 7

        [generator.schema]
        num_node_types = 8
        num_edge_types = 4
        feature_dim = 7
    "#;
    let specific = match profile {
        Profile::TracelogLike => {
            r#"
            [split]
            train_frac = 0.6
            val_frac = 0.2
            seed = 0

            [model]
            variant = "HRGCN_R2"
            num_layers = 2
            rep_dim = 300
            ssl_weight = 0.001
            reg_lambda = 0.0
            learning_rate = 0.0001
            batch_size = 8
            seed = 0

            [model.augment]
            enabled = true
            p_perturb = 0.84
            p_replace = 0.13
            p_node_swap = 0.1
            p_edge_swap = 0.17
            "#
        }
        Profile::FlowgraphLike => {
            r#"
            [split]
            train_frac = 0.6
            val_frac = 0.15
            seed = 0

            [model]
            variant = "HRGCN_R2"
            num_layers = 2
            rep_dim = 32
            ssl_weight = 0.21
            reg_lambda = 0.0
            learning_rate = 0.01
            batch_size = 25
            seed = 0

            [model.augment]
            enabled = true
            p_perturb = 0.0
            p_replace = 0.39
            p_node_swap = 0.52
            p_edge_swap = 0.0
            "#
        }
        Profile::Custom => "",
    };
    let mut table = parse_table(common);
    deep_merge(&mut table, parse_table(specific));
    table.insert("profile".into(), Value::try_from(profile).expect("profile serializes"));
    table
}

/// Recursively overlays `overlay` onto `base`; tables merge, everything
/// else replaces.
pub fn deep_merge(base: &mut Table, overlay: Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => deep_merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses the right-hand side of `--set` as a TOML value, falling back to a
/// bare string (so `model.variant=HRGCN_SDR` works unquoted).
fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}

pub fn apply_override(table: &mut Table, assignment: &str) -> Result<(), ConfigFileError> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| ConfigFileError::BadOverride(assignment.into()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigFileError::BadOverride(assignment.into()));
    }
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(ConfigFileError::OverrideConflict {
                    key: key.into(),
                    message: format!("{part} is not a table"),
                })
            }
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Resolves a config from file text plus overrides. `origin` names the
/// source in error messages.
pub fn resolve(text: &str, origin: &str, overrides: &[String]) -> Result<RunConfig, ConfigFileError> {
    let file: Table = text.parse().map_err(|e: toml::de::Error| ConfigFileError::Parse {
        path: origin.into(),
        message: e.message().to_string(),
    })?;
    let mut scratch = file.clone();
    for o in overrides {
        apply_override(&mut scratch, o)?;
    }
    let profile = match scratch.get("profile") {
        None => Profile::Custom,
        Some(v) => v
            .clone()
            .try_into::<Profile>()
            .map_err(|_| ConfigFileError::Invalid(format!("profile: unknown profile {v}")))?,
    };
    let mut table = profile_defaults(profile);
    deep_merge(&mut table, file);
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    if let Some(Value::Table(model)) = table.get_mut("model") {
        if !model.contains_key("hidden_dim") {
            if let Some(rep) = model.get("rep_dim").cloned() {
                model.insert("hidden_dim".into(), rep);
            }
        }
    }
    let config: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigFileError::Invalid(e.message().to_string()))?;
    config.model.check().map_err(|e| ConfigFileError::Invalid(e.to_string()))?;
    config.generator.check().map_err(|e| ConfigFileError::Invalid(e.to_string()))?;
    let s = &config.split;
    if !(s.train_frac >= 0.0 && s.val_frac >= 0.0 && s.train_frac + s.val_frac <= 1.0) {
        return Err(ConfigFileError::Invalid(format!(
            "split.train_frac + split.val_frac must be within [0, 1], got {} + {}",
            s.train_frac, s.val_frac
        )));
    }
    Ok(config)
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig, ConfigFileError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigFileError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    resolve(&text, &path.display().to_string(), overrides)
}
