//! Graph neural networks over DFG batches: GCN, GAT and GREAT layers,
//! sum + last-node readout, and the task heads.

mod batch;
pub mod layers;
mod model;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dfg::{DfgError, DfgVariant, EdgeMode, GnnKind};
use crate::nncore::NnError;

pub use batch::GraphBatch;
pub use model::{ModelSizes, PpmModel, Targets};

#[derive(Debug, Error)]
pub enum GnnError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dfg(#[from] DfgError),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("graph {index} is {actual}, batch expects {expected}")]
    MixedVariants {
        index: usize,
        expected: DfgVariant,
        actual: DfgVariant,
    },
    #[error("graph {0} has no nodes")]
    EmptyGraph(usize),
    #[error("model predicts {model}, asked for {asked}")]
    TaskMismatch { model: Task, asked: Task },
    #[error("model/data mismatch: {0}")]
    Mismatch(String),
}

pub type Result<T, E = GnnError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    NextActivity,
    RemainingTime,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::NextActivity => "next-activity",
            Task::RemainingTime => "remaining-time",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "next-activity" => Ok(Task::NextActivity),
            "remaining-time" => Ok(Task::RemainingTime),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

fn default_layers() -> usize {
    5
}
fn default_hidden() -> usize {
    64
}
fn default_act_embed() -> usize {
    16
}
fn default_res_embed() -> usize {
    16
}
fn default_heads() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub gnn_kind: GnnKind,
    pub edge_mode: EdgeMode,
    #[serde(default = "default_layers")]
    pub num_layers: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_act_embed")]
    pub activity_embed_dim: usize,
    #[serde(default = "default_res_embed")]
    pub resource_embed_dim: usize,
    #[serde(default = "default_heads")]
    pub attention_heads: usize,
    #[serde(default = "default_hidden")]
    pub mlp_hidden_dim: usize,
    #[serde(default)]
    pub dropout_rate: f64,
}

impl ModelConfig {
    pub fn new(variant: DfgVariant) -> Self {
        Self {
            gnn_kind: variant.gnn_kind,
            edge_mode: variant.edge_mode,
            num_layers: default_layers(),
            hidden_dim: default_hidden(),
            activity_embed_dim: default_act_embed(),
            resource_embed_dim: default_res_embed(),
            attention_heads: default_heads(),
            mlp_hidden_dim: default_hidden(),
            dropout_rate: 0.0,
        }
    }

    pub fn variant(&self) -> DfgVariant {
        DfgVariant::new(self.gnn_kind, self.edge_mode)
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.attention_heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(GnnError::InvalidConfig(m.to_owned()));
        if self.num_layers == 0 {
            return fail("num_layers must be >= 1");
        }
        if self.hidden_dim == 0 || self.mlp_hidden_dim == 0 {
            return fail("hidden dimensions must be >= 1");
        }
        if self.activity_embed_dim == 0 || self.resource_embed_dim == 0 {
            return fail("embedding dimensions must be >= 1");
        }
        if self.attention_heads == 0 || !self.hidden_dim.is_multiple_of(self.attention_heads) {
            return fail("attention_heads must divide hidden_dim");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail("dropout_rate must be in [0, 1)");
        }
        Ok(())
    }
}
