use serde::{Deserialize, Serialize};

use super::{Column, ColumnKind, DfgError, DfgGraph, DfgVariant};
use crate::nncore::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: String,
    /// Present for numeric columns once fitted.
    pub stats: Option<ColumnStats>,
}

/// Per-column `log1p` + standardization of numeric features, fitted on the
/// training graphs of one variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub variant: DfgVariant,
    pub fitted: bool,
    pub node_columns: Vec<ColumnSpec>,
    pub edge_columns: Vec<ColumnSpec>,
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn stats(&self) -> ColumnStats {
        let std = if self.n > 0.0 { (self.m2 / self.n).sqrt() } else { 0.0 };
        ColumnStats {
            mean: self.mean,
            std: if std > 1e-12 { std } else { 1.0 },
        }
    }
}

fn specs(layout: &[Column]) -> Vec<ColumnSpec> {
    layout
        .iter()
        .map(|c| ColumnSpec {
            name: c.name.to_owned(),
            kind: serde_json::to_value(c.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
            stats: None,
        })
        .collect()
}

fn accumulate(layout: &[Column], features: &Tensor, moments: &mut [Moments]) {
    for r in 0..features.rows() {
        for (c, col) in layout.iter().enumerate() {
            if col.kind == ColumnKind::Numeric {
                moments[c].push(features.get(r, c).ln_1p());
            }
        }
    }
}

fn apply(layout: &[Column], specs: &[ColumnSpec], features: &mut Tensor) {
    for r in 0..features.rows() {
        for (c, col) in layout.iter().enumerate() {
            if col.kind == ColumnKind::Numeric {
                let s = specs[c].stats.expect("fitted numeric column");
                let v = features.get(r, c).ln_1p();
                features.set(r, c, (v - s.mean) / s.std);
            }
        }
    }
}

impl FeatureNormalizer {
    /// An unfitted normalizer; encoding with it is an error.
    pub fn unfitted(variant: DfgVariant) -> Self {
        Self {
            variant,
            fitted: false,
            node_columns: specs(variant.node_layout()),
            edge_columns: specs(variant.edge_layout()),
        }
    }

    /// Fits numeric-column moments over every node and edge row of the
    /// given (raw) graphs.
    pub fn fit<'a, I>(variant: DfgVariant, graphs: I) -> Result<Self, DfgError>
    where
        I: IntoIterator<Item = &'a DfgGraph>,
    {
        let node_layout = variant.node_layout();
        let edge_layout = variant.edge_layout();
        let mut node_m = vec![Moments::default(); node_layout.len()];
        let mut edge_m = vec![Moments::default(); edge_layout.len()];
        for g in graphs {
            if g.variant != variant {
                return Err(DfgError::VariantMismatch {
                    expected: variant,
                    actual: g.variant,
                });
            }
            if g.normalized {
                return Err(DfgError::AlreadyNormalized);
            }
            accumulate(node_layout, &g.node_features, &mut node_m);
            accumulate(edge_layout, &g.edge_features, &mut edge_m);
        }
        let mut out = Self::unfitted(variant);
        out.fitted = true;
        let fill = |specs: &mut [ColumnSpec], layout: &[Column], m: &[Moments]| {
            for (i, col) in layout.iter().enumerate() {
                if col.kind == ColumnKind::Numeric {
                    specs[i].stats = Some(m[i].stats());
                }
            }
        };
        fill(&mut out.node_columns, node_layout, &node_m);
        fill(&mut out.edge_columns, edge_layout, &edge_m);
        Ok(out)
    }
}

/// Applies `log1p` + standardization to the numeric columns of a raw graph.
/// Categorical columns stay integer indices, flags stay 0/1.
pub fn encode_features(graph: &DfgGraph, normalizer: &FeatureNormalizer) -> Result<DfgGraph, DfgError> {
    if !normalizer.fitted {
        return Err(DfgError::UnfittedNormalizer);
    }
    if graph.normalized {
        return Err(DfgError::AlreadyNormalized);
    }
    if graph.variant != normalizer.variant {
        return Err(DfgError::VariantMismatch {
            expected: normalizer.variant,
            actual: graph.variant,
        });
    }
    let mut out = graph.clone();
    apply(graph.variant.node_layout(), &normalizer.node_columns, &mut out.node_features);
    apply(graph.variant.edge_layout(), &normalizer.edge_columns, &mut out.edge_features);
    out.normalized = true;
    Ok(out)
}
