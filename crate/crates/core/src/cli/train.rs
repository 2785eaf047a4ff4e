use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Args;
use serde::{Deserialize, Serialize};

use super::evaluate::evaluate_samples;
use super::{create_dir, load_cache, read_json, write_json, write_text, CliError, Result};
use crate::dfg::DfgVariant;
use crate::eventlog::cache::{read_partition, Partition};
use crate::eventlog::vocab::ClassSpace;
use crate::gnn::{ModelConfig, ModelSizes, PpmModel, Task};
use crate::nncore::{save_checkpoint, ParamStore};
use crate::sampling::log_samples;
use crate::training::{encode_samples, train, EpochRecord, TrainConfig};

/// Resolved run configuration, echoed into every run directory.
pub const RUN_CONFIG: &str = "config.json";
pub const SUMMARY: &str = "summary.json";

fn d_layers() -> usize {
    5
}
fn d_hidden() -> usize {
    64
}
fn d_embed() -> usize {
    16
}
fn d_heads() -> usize {
    1
}

/// Model hyperparameters; the graph family and edge mode come from the
/// run's variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "d_layers")]
    pub num_layers: usize,
    #[serde(default = "d_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "d_embed")]
    pub activity_embed_dim: usize,
    #[serde(default = "d_embed")]
    pub resource_embed_dim: usize,
    #[serde(default = "d_heads")]
    pub attention_heads: usize,
    #[serde(default = "d_hidden")]
    pub mlp_hidden_dim: usize,
    #[serde(default)]
    pub dropout_rate: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

impl ModelSection {
    pub fn to_config(&self, variant: DfgVariant) -> ModelConfig {
        ModelConfig {
            gnn_kind: variant.gnn_kind,
            edge_mode: variant.edge_mode,
            num_layers: self.num_layers,
            hidden_dim: self.hidden_dim,
            activity_embed_dim: self.activity_embed_dim,
            resource_embed_dim: self.resource_embed_dim,
            attention_heads: self.attention_heads,
            mlp_hidden_dim: self.mlp_hidden_dim,
            dropout_rate: self.dropout_rate,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Ingested cache directory.
    #[serde(default)]
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub variant: Option<DfgVariant>,
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    /// Parent directory of run directories.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Metadata stored with every checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub variant: DfgVariant,
    pub task: Task,
    pub model: ModelConfig,
    pub sizes: ModelSizes,
    pub epoch: usize,
    pub activity_vocab: Vec<String>,
    pub resource_vocab: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset: String,
    pub variant: DfgVariant,
    pub task: Task,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub num_parameters: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Dataset name under the cache root, used when no cache path is set.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub variant: Option<DfgVariant>,
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Parent directory for run directories (default `runs`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl TrainArgs {
    fn resolve(&self, cache_root: &Path) -> Result<RunConfig> {
        let mut cfg: RunConfig = match &self.config {
            Some(path) => read_json(path)?,
            None => RunConfig::default(),
        };
        if let Some(c) = &self.cache {
            cfg.cache = Some(c.clone());
        } else if let Some(d) = &self.dataset {
            cfg.cache = Some(cache_root.join(d));
        }
        cfg.variant = self.variant.or(cfg.variant);
        cfg.task = self.task.or(cfg.task);
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        if let Some(e) = self.max_epochs {
            cfg.train.max_epochs = e;
            cfg.train.patience = cfg.train.patience.map(|p| p.min(e));
        }
        if let Some(o) = &self.out {
            cfg.output_dir = Some(o.clone());
        }
        if cfg.output_dir.is_none() {
            cfg.output_dir = Some(PathBuf::from("runs"));
        }
        let missing = |what: &str| CliError::Usage(format!("no {what} given (flag or config file)"));
        let variant = cfg.variant.ok_or_else(|| missing("--variant"))?;
        cfg.task.ok_or_else(|| missing("--task"))?;
        cfg.cache.as_ref().ok_or_else(|| missing("--cache"))?;
        cfg.model.to_config(variant).validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }
}

fn fresh_run_dir(parent: &Path, stem: &str) -> Result<PathBuf> {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    let stamp = chrono::DateTime::from_timestamp(now.as_secs() as i64, now.subsec_nanos())
        .map(|t| t.format("%Y%m%dT%H%M%S%.3f").to_string())
        .unwrap_or_else(|| now.as_millis().to_string());
    let mut dir = parent.join(format!("{stem}_{stamp}"));
    let mut n = 1;
    while dir.exists() {
        dir = parent.join(format!("{stem}_{stamp}-{n}"));
        n += 1;
    }
    create_dir(&dir)?;
    Ok(dir)
}

/// `epoch,train_loss,val_loss` with shortest round-trip float formatting.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for r in history {
        let _ = writeln!(out, "{},{:?},{:?}", r.epoch, r.train_loss, r.val_loss);
    }
    out
}

fn timing_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,seconds\n");
    for r in history {
        let _ = writeln!(out, "{},{:.3}", r.epoch, r.seconds);
    }
    out
}

pub fn cmd_train(args: &TrainArgs, cache_root: &Path) -> Result<PathBuf> {
    let cfg = args.resolve(cache_root)?;
    let (variant, task) = (cfg.variant.unwrap(), cfg.task.unwrap());
    let cache_dir = cfg.cache.clone().unwrap();
    let cache = load_cache(&cache_dir)?;
    let (av, rv) = cache.log.vocabs()?;
    let normalizer = cache.normalizer(variant)?;
    let train_log = read_partition(&cache_dir, &cache.log, Partition::Train)?;
    let val_log = read_partition(&cache_dir, &cache.log, Partition::Val)?;
    let train_set = encode_samples(&log_samples(&train_log), &av, &rv, variant, normalizer)?;
    let val_set = encode_samples(&log_samples(&val_log), &av, &rv, variant, normalizer)?;

    let sizes = ModelSizes {
        activity_vocab: av.len(),
        resource_vocab: rv.len(),
        num_classes: ClassSpace::new(&av).num_classes(),
    };
    let model_cfg = cfg.model.to_config(variant);
    let mut model = PpmModel::new(model_cfg.clone(), task, sizes, cfg.train.seed)?;
    log::info!(
        "{} {variant} {task}: {} train / {} val prefixes, {} parameters",
        cache.log.dataset,
        train_set.len(),
        val_set.len(),
        model.num_parameters()
    );

    let parent = cfg.output_dir.clone().unwrap().join(&cache.log.dataset);
    let run_dir = fresh_run_dir(&parent, &format!("{variant}_{task}"))?;
    write_json(&run_dir.join(RUN_CONFIG), &cfg)?;

    let history_path = run_dir.join("history.csv");
    let outcome = train(&mut model, &train_set, &val_set, &cache.target_scaler, &cfg.train, |_, _| {
        ControlFlow::Continue(())
    })?;
    write_text(&history_path, &history_csv(&outcome.history))?;
    write_text(&run_dir.join("timing.csv"), &timing_csv(&outcome.history))?;

    let batches = train_set.len().div_ceil(cfg.train.batch_size) as u64;
    let save = |name: &str, params: &ParamStore, epoch: usize, step: u64| -> Result<()> {
        let meta = CheckpointMeta {
            variant,
            task,
            model: model_cfg.clone(),
            sizes,
            epoch,
            activity_vocab: av.entries().to_vec(),
            resource_vocab: rv.entries().to_vec(),
        };
        let meta = serde_json::to_value(meta).expect("serializable");
        save_checkpoint(&run_dir.join(name), params, cfg.train.seed, step, meta)?;
        Ok(())
    };
    save("best", &outcome.best_params, outcome.best_epoch, outcome.best_epoch as u64 * batches)?;
    save("final", &model.params, outcome.history.len(), outcome.steps)?;

    let summary = RunSummary {
        dataset: cache.log.dataset.clone(),
        variant,
        task,
        epochs_run: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        best_val_loss: outcome.best_val_loss,
        stopped_early: outcome.stopped_early,
        num_parameters: model.num_parameters(),
    };
    write_json(&run_dir.join(SUMMARY), &summary)?;

    let best = PpmModel::from_params(model_cfg, task, sizes, outcome.best_params)?;
    let report = evaluate_samples(&best, &val_set, &cache, Partition::Val, true, cfg.train.batch_size)?;
    write_json(&run_dir.join("val_report.json"), &report)?;
    println!("{}", report.table());
    Ok(run_dir)
}
