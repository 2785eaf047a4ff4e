use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use super::train::{CheckpointMeta, RunConfig, RUN_CONFIG};
use super::{load_cache, read_json, write_json, CacheManifest, CliError, Result};
use crate::eventlog::cache::{read_partition, Partition};
use crate::eventlog::vocab::ClassSpace;
use crate::gnn::{GnnError, PpmModel, Task};
use crate::metrics::{classification_metrics, regression_metrics, EvalReport};
use crate::nncore::load_checkpoint;
use crate::sampling::log_samples;
use crate::training::{encode_samples, is_supervised, mean_loss, predict_all, EncodedSample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PartitionArg {
    Train,
    Val,
    Test,
}

impl From<PartitionArg> for Partition {
    fn from(p: PartitionArg) -> Self {
        match p {
            PartitionArg::Train => Partition::Train,
            PartitionArg::Val => Partition::Val,
            PartitionArg::Test => Partition::Test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CheckpointArg {
    Best,
    Final,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, value_enum, default_value = "best")]
    pub checkpoint: CheckpointArg,
    #[arg(long, value_enum, default_value = "test")]
    pub partition: PartitionArg,
    /// Drop prefixes whose next-activity label is END.
    #[arg(long)]
    pub exclude_end: bool,
    /// Cache to evaluate on; defaults to the run's training cache.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Report path; defaults to `<run>/eval_<partition>[_noend].json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Metrics of `model` on encoded samples of one partition.
pub fn evaluate_samples(
    model: &PpmModel,
    samples: &[EncodedSample],
    cache: &CacheManifest,
    partition: Partition,
    include_end: bool,
    batch_size: usize,
) -> Result<EvalReport> {
    let kept: Vec<&EncodedSample> = samples.iter().filter(|s| include_end || !s.is_end).collect();
    let labelled: Vec<&EncodedSample> = kept.iter().copied().filter(|s| is_supervised(s, model.task)).collect();
    let scaler = &cache.target_scaler;
    let loss = mean_loss(model, &labelled, scaler, batch_size)?;
    let out = predict_all(model, &kept, batch_size)?;
    let mut report = EvalReport {
        task: model.task,
        variant: model.config.variant().to_string(),
        partition: partition.name().to_owned(),
        include_end,
        num_samples: kept.len(),
        num_end_samples: kept.iter().filter(|s| s.is_end).count(),
        num_unseen_targets: kept.iter().filter(|s| s.class.is_none()).count(),
        loss,
        classification: None,
        regression: None,
    };
    match model.task {
        Task::NextActivity => {
            let (av, _) = cache.log.vocabs()?;
            let classes = ClassSpace::new(&av);
            let names: Vec<String> = (0..classes.num_classes())
                .map(|c| {
                    let idx = classes.vocab_index_of(c).expect("class in range");
                    av.name(idx).unwrap_or("?").to_owned()
                })
                .collect();
            let labels: Vec<Option<usize>> = kept.iter().map(|s| s.class).collect();
            report.classification = Some(classification_metrics(&out, &labels, &names)?);
        }
        Task::RemainingTime => {
            let preds: Vec<f64> = (0..out.rows()).map(|r| scaler.inverse(out.get(r, 0))).collect();
            let labels: Vec<f64> = kept.iter().map(|s| s.remaining_hours).collect();
            report.regression = Some(regression_metrics(&preds, &labels)?);
        }
    }
    Ok(report)
}

/// Loads a run's checkpoint as a model, checking it against `cache`.
pub fn load_run_model(run: &Path, checkpoint: &str, cache: &CacheManifest) -> Result<(PpmModel, RunConfig)> {
    let cfg: RunConfig = read_json(&run.join(RUN_CONFIG))?;
    let (params, manifest) = load_checkpoint(&run.join(checkpoint))?;
    let meta: CheckpointMeta = serde_json::from_value(manifest.metadata)
        .map_err(|e| CliError::Mismatch(format!("unreadable checkpoint metadata: {e}")))?;
    if meta.activity_vocab != cache.log.activity_vocab {
        return Err(CliError::Mismatch(format!(
            "activity vocabulary of size {} vs cache size {}",
            meta.activity_vocab.len(),
            cache.log.activity_vocab.len()
        )));
    }
    if meta.resource_vocab != cache.log.resource_vocab {
        return Err(CliError::Mismatch(format!(
            "resource vocabulary of size {} vs cache size {}",
            meta.resource_vocab.len(),
            cache.log.resource_vocab.len()
        )));
    }
    if cfg.variant != Some(meta.variant) || cfg.task != Some(meta.task) {
        return Err(CliError::Mismatch("run config and checkpoint disagree on variant or task".into()));
    }
    let model = PpmModel::from_params(meta.model, meta.task, meta.sizes, params).map_err(|e| match e {
        GnnError::Mismatch(m) => CliError::Mismatch(m),
        other => other.into(),
    })?;
    Ok((model, cfg))
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<PathBuf> {
    let run_cfg: RunConfig = read_json(&args.run.join(RUN_CONFIG))?;
    let cache_dir = args
        .cache
        .clone()
        .or(run_cfg.cache)
        .ok_or_else(|| CliError::Usage("run config names no cache; pass --cache".into()))?;
    let cache = load_cache(&cache_dir)?;
    let ckpt = match args.checkpoint {
        CheckpointArg::Best => "best",
        CheckpointArg::Final => "final",
    };
    let (model, cfg) = load_run_model(&args.run, ckpt, &cache)?;
    let variant = model.config.variant();
    let partition = Partition::from(args.partition);
    let (av, rv) = cache.log.vocabs()?;
    let log = read_partition(&cache_dir, &cache.log, partition)?;
    let samples = encode_samples(&log_samples(&log), &av, &rv, variant, cache.normalizer(variant)?)?;
    let report = evaluate_samples(&model, &samples, &cache, partition, !args.exclude_end, cfg.train.batch_size)?;
    let out = args.out.clone().unwrap_or_else(|| {
        let suffix = if args.exclude_end { "_noend" } else { "" };
        args.run.join(format!("eval_{}{suffix}.json", partition.name()))
    });
    write_json(&out, &report)?;
    println!("{}", report.table());
    Ok(out)
}
