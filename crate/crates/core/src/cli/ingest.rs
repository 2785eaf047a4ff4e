use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use super::{create_dir, read_json, write_json, CliError, Result};
use crate::dfg::{build_dfg, DfgVariant, FeatureNormalizer};
use crate::eventlog::cache::{partition_info, write_partition, LogFormat, LogManifest, Partition};
use crate::eventlog::{parse_csv, parse_xes, split_log, ColumnMap, EventLog, SplitRatios};
use crate::sampling::{log_samples, TargetScaler};

pub const CACHE_MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Xes,
    Csv,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, value_enum)]
    pub format: InputFormat,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cache directory; defaults to `<cache-root>/<dataset>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dataset name; defaults to the input file stem.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Keep only events with this lifecycle transition (e.g. `complete`).
    #[arg(long)]
    pub lifecycle: Option<String>,
    #[arg(long, default_value_t = 0.8)]
    pub train_ratio: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val_ratio: f64,
    #[arg(long, default_value_t = 0.1)]
    pub test_ratio: f64,
    #[arg(long, default_value = "case")]
    pub case_column: String,
    #[arg(long, default_value = "activity")]
    pub activity_column: String,
    #[arg(long, default_value = "timestamp")]
    pub timestamp_column: String,
    /// Empty string for logs without resources.
    #[arg(long, default_value = "resource")]
    pub resource_column: String,
    #[arg(long)]
    pub lifecycle_column: Option<String>,
    /// `rfc3339` or a strftime pattern.
    #[arg(long, default_value = "rfc3339")]
    pub timestamp_format: String,
}

/// Cache manifest: log split plus everything fitted on the training part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheManifest {
    pub log: LogManifest,
    pub target_scaler: TargetScaler,
    pub normalizers: BTreeMap<DfgVariant, FeatureNormalizer>,
}

impl CacheManifest {
    pub fn normalizer(&self, variant: DfgVariant) -> Result<&FeatureNormalizer> {
        self.normalizers
            .get(&variant)
            .ok_or_else(|| CliError::Mismatch(format!("cache has no normalizer for {variant}")))
    }
}

pub fn load_cache(dir: &Path) -> Result<CacheManifest> {
    read_json(&dir.join(CACHE_MANIFEST))
}

fn read_log(args: &IngestArgs) -> Result<EventLog> {
    let log = match args.format {
        InputFormat::Xes => parse_xes(&args.input)?,
        InputFormat::Csv => {
            let columns = ColumnMap {
                case: args.case_column.clone(),
                activity: args.activity_column.clone(),
                timestamp: args.timestamp_column.clone(),
                resource: Some(args.resource_column.clone()).filter(|c| !c.is_empty()),
                lifecycle: args.lifecycle_column.clone(),
            };
            parse_csv(&args.input, &columns, &args.timestamp_format)?
        }
    };
    Ok(match &args.lifecycle {
        Some(keep) => log.filter_lifecycle(keep)?,
        None => log,
    })
}

pub fn cmd_ingest(args: &IngestArgs, cache_root: &Path) -> Result<PathBuf> {
    let ratios = SplitRatios {
        train: args.train_ratio,
        val: args.val_ratio,
        test: args.test_ratio,
    };
    ratios.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let dataset = args.dataset.clone().unwrap_or_else(|| {
        args.input
            .file_stem()
            .map_or_else(|| "dataset".to_owned(), |s| s.to_string_lossy().into_owned())
    });
    let out = args.out.clone().unwrap_or_else(|| cache_root.join(&dataset));

    let log = read_log(args)?;
    let (train, val, test) = split_log(&log, ratios, args.seed)?;
    log::info!(
        "{dataset}: {} traces, {} events -> {}/{}/{} traces",
        log.traces.len(),
        log.num_events(),
        train.traces.len(),
        val.traces.len(),
        test.traces.len()
    );

    let samples = log_samples(&train);
    let (av, rv) = (&train.activity_vocab, &train.resource_vocab);
    let mut normalizers = BTreeMap::new();
    for variant in DfgVariant::ALL {
        let graphs = samples
            .iter()
            .map(|s| build_dfg(s, av, rv, variant))
            .collect::<Result<Vec<_>, _>>()?;
        normalizers.insert(variant, FeatureNormalizer::fit(variant, &graphs)?);
    }

    create_dir(&out)?;
    let mut partitions = BTreeMap::new();
    for (part, plog) in [(Partition::Train, &train), (Partition::Val, &val), (Partition::Test, &test)] {
        write_partition(&out, part, plog)?;
        partitions.insert(part, partition_info(part, plog));
    }
    let manifest = CacheManifest {
        log: LogManifest {
            dataset,
            format: match args.format {
                InputFormat::Xes => LogFormat::Xes,
                InputFormat::Csv => LogFormat::Csv,
            },
            source: args.input.display().to_string(),
            seed: args.seed,
            ratios,
            lifecycle_filter: args.lifecycle.clone(),
            activity_vocab: av.entries().to_vec(),
            resource_vocab: rv.entries().to_vec(),
            partitions,
        },
        target_scaler: TargetScaler::fit(&samples),
        normalizers,
    };
    write_json(&out.join(CACHE_MANIFEST), &manifest)?;
    Ok(out)
}
