//! Directly-follows-graph representations of trace prefixes.
//!
//! Every graph has one node per training activity plus a `START` node, a
//! self-loop on every node, and one transition edge per direct succession
//! (collapsed per ordered node pair in single mode, one per occurrence in
//! multi mode). The first event is reached from `START`.

mod build;
mod dot;
mod normalize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nncore::Tensor;

pub use build::{build_dfg, build_dfg_from_events};
pub use dot::to_dot;
pub use normalize::{encode_features, ColumnStats, FeatureNormalizer};

/// How many trailing events count as the recent suffix.
pub const SUFFIX_LEN: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum DfgError {
    #[error("activity `{0}` is not in the training vocabulary")]
    UnknownActivity(String),
    #[error("feature normalizer has not been fitted")]
    UnfittedNormalizer,
    #[error("graph features are already normalized")]
    AlreadyNormalized,
    #[error("normalizer fitted for {expected}, graph is {actual}")]
    VariantMismatch { expected: DfgVariant, actual: DfgVariant },
    #[error("invalid node permutation")]
    InvalidPermutation,
    #[error("unknown variant `{0}`")]
    UnknownVariant(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnnKind {
    Gcn,
    Gat,
    Great,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMode {
    Single,
    Multi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DfgVariant {
    pub gnn_kind: GnnKind,
    pub edge_mode: EdgeMode,
}

impl DfgVariant {
    pub const ALL: [DfgVariant; 6] = [
        DfgVariant::new(GnnKind::Gcn, EdgeMode::Single),
        DfgVariant::new(GnnKind::Gcn, EdgeMode::Multi),
        DfgVariant::new(GnnKind::Gat, EdgeMode::Single),
        DfgVariant::new(GnnKind::Gat, EdgeMode::Multi),
        DfgVariant::new(GnnKind::Great, EdgeMode::Single),
        DfgVariant::new(GnnKind::Great, EdgeMode::Multi),
    ];

    pub const fn new(gnn_kind: GnnKind, edge_mode: EdgeMode) -> Self {
        Self { gnn_kind, edge_mode }
    }

    pub fn name(&self) -> &'static str {
        use EdgeMode::*;
        use GnnKind::*;
        match (self.gnn_kind, self.edge_mode) {
            (Gcn, Single) => "gcn-single",
            (Gcn, Multi) => "gcn-multi",
            (Gat, Single) => "gat-single",
            (Gat, Multi) => "gat-multi",
            (Great, Single) => "great-single",
            (Great, Multi) => "great-multi",
        }
    }

    pub fn node_layout(&self) -> &'static [Column] {
        match self.gnn_kind {
            GnnKind::Gcn | GnnKind::Gat => NODE_COLUMNS,
            GnnKind::Great => GREAT_NODE_COLUMNS,
        }
    }

    pub fn edge_layout(&self) -> &'static [Column] {
        match (self.gnn_kind, self.edge_mode) {
            (GnnKind::Gcn, _) => &[],
            (GnnKind::Gat, EdgeMode::Single) => GAT_SINGLE_EDGE_COLUMNS,
            (GnnKind::Gat, EdgeMode::Multi) => GAT_MULTI_EDGE_COLUMNS,
            (GnnKind::Great, EdgeMode::Single) => GREAT_SINGLE_EDGE_COLUMNS,
            (GnnKind::Great, EdgeMode::Multi) => GREAT_MULTI_EDGE_COLUMNS,
        }
    }
}

impl fmt::Display for DfgVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DfgVariant {
    type Err = DfgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| DfgError::UnknownVariant(s.to_owned()))
    }
}

impl Serialize for DfgVariant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for DfgVariant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    /// Activity-vocab index, embedded by the model.
    Activity,
    /// Resource-vocab index, embedded by the model.
    Resource,
    /// Real value; log1p-standardized by the normalizer.
    Numeric,
    /// 0/1 value, left untouched.
    Flag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Column {
    pub name: &'static str,
    pub kind: ColumnKind,
}

const fn col(name: &'static str, kind: ColumnKind) -> Column {
    Column { name, kind }
}

use ColumnKind::{Activity as A, Flag as F, Numeric as N, Resource as R};

const NODE_COLUMNS: &[Column] = &[
    col("activity", A),
    col("resource", R),
    col("count", N),
    col("in_suffix5", F),
    col("is_last", F),
];

const GREAT_NODE_COLUMNS: &[Column] = &[col("placeholder", F)];

const GAT_SINGLE_EDGE_COLUMNS: &[Column] = &[
    col("last_duration_h", N),
    col("avg_duration_h", N),
    col("max_duration_h", N),
    col("traversal_count", N),
    col("self_loop", F),
    col("in_suffix5", F),
    col("is_last", F),
];

const GAT_MULTI_EDGE_COLUMNS: &[Column] = &[
    col("duration_h", N),
    col("self_loop", F),
    col("in_suffix5", F),
    col("is_last", F),
];

const GREAT_SINGLE_EDGE_COLUMNS: &[Column] = &[
    col("target_activity", A),
    col("last_resource", R),
    col("last_duration_h", N),
    col("avg_duration_h", N),
    col("max_duration_h", N),
    col("traversal_count", N),
    col("self_loop", F),
    col("in_suffix5", F),
    col("is_last", F),
];

const GREAT_MULTI_EDGE_COLUMNS: &[Column] = &[
    col("target_activity", A),
    col("resource", R),
    col("duration_h", N),
    col("self_loop", F),
    col("in_suffix5", F),
    col("is_last", F),
];

#[derive(Clone, Debug, PartialEq)]
pub struct NodeRecord {
    /// Activity-vocab index (`START` for node 0).
    pub activity: usize,
    pub count: usize,
    /// Resource of the last event with this activity, `UNK` if unvisited.
    pub resource: usize,
    pub in_suffix5: bool,
    pub is_last: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeRecord {
    pub tail: usize,
    pub head: usize,
    pub self_loop: bool,
    /// Activity-vocab index of the head node.
    pub target_activity: usize,
    /// One duration (hours) per traversal, in trace order.
    pub durations_h: Vec<f64>,
    /// Resource of the event reached by each traversal.
    pub resources: Vec<usize>,
    pub in_suffix5: bool,
    pub is_last: bool,
}

impl EdgeRecord {
    pub fn count(&self) -> usize {
        self.durations_h.len()
    }

    pub fn last_duration(&self) -> f64 {
        self.durations_h.last().copied().unwrap_or(0.0)
    }

    pub fn avg_duration(&self) -> f64 {
        if self.durations_h.is_empty() {
            0.0
        } else {
            self.durations_h.iter().sum::<f64>() / self.durations_h.len() as f64
        }
    }

    pub fn max_duration(&self) -> f64 {
        self.durations_h.iter().copied().fold(0.0, f64::max)
    }

    pub fn last_resource(&self) -> usize {
        self.resources.last().copied().unwrap_or(crate::eventlog::vocab::UNK_INDEX)
    }
}

/// A variant-specific attributed directed (multi-)graph of one prefix.
#[derive(Clone, Debug, PartialEq)]
pub struct DfgGraph {
    pub variant: DfgVariant,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    /// `num_nodes x variant.node_layout().len()`
    pub node_features: Tensor,
    /// `num_edges x variant.edge_layout().len()`
    pub edge_features: Tensor,
    /// Node of the prefix's last event.
    pub last_node: usize,
    pub normalized: bool,
}

impl DfgGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn transition_edges(&self) -> impl Iterator<Item = &EdgeRecord> {
        self.edges.iter().filter(|e| !e.self_loop)
    }

    /// Relabels nodes: node `i` becomes node `perm[i]`. Edge order is kept.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<DfgGraph, DfgError> {
        let n = self.nodes.len();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(DfgError::InvalidPermutation);
        }
        let mut inverse = vec![0; n];
        for (old, &new) in perm.iter().enumerate() {
            inverse[new] = old;
        }
        let nodes = inverse.iter().map(|&old| self.nodes[old].clone()).collect();
        let edges = self
            .edges
            .iter()
            .map(|e| EdgeRecord {
                tail: perm[e.tail],
                head: perm[e.head],
                ..e.clone()
            })
            .collect();
        Ok(DfgGraph {
            variant: self.variant,
            nodes,
            edges,
            node_features: self.node_features.select_rows(&inverse),
            edge_features: self.edge_features.clone(),
            last_node: perm[self.last_node],
            normalized: self.normalized,
        })
    }

    /// Reorders edges: new edge `j` is old edge `order[j]`.
    pub fn reorder_edges(&self, order: &[usize]) -> DfgGraph {
        DfgGraph {
            edges: order.iter().map(|&i| self.edges[i].clone()).collect(),
            edge_features: self.edge_features.select_rows(order),
            ..self.clone()
        }
    }
}
