use std::rc::Rc;

use super::{GnnError, Result};
use crate::dfg::{DfgGraph, DfgVariant, EdgeMode, GnnKind};
use crate::nncore::{Indices, Tensor};

/// Edge numeric columns seen by the model, whatever the edge mode:
/// `[last_h, avg_h, max_h, count, self_loop, in_suffix5, is_last]`.
pub const EDGE_NUMERIC_DIM: usize = 7;
/// Node numeric columns: `[count, in_suffix5, is_last]`.
pub const NODE_NUMERIC_DIM: usize = 3;

/// Disjoint union of graphs of one variant, with global node/edge indices
/// and the index lists the layers gather and scatter with.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub variant: DfgVariant,
    pub num_graphs: usize,
    pub num_nodes: usize,
    pub num_edges: usize,
    /// `node_offsets[g]..node_offsets[g + 1]` are the nodes of graph `g`.
    pub node_offsets: Vec<usize>,
    pub edge_offsets: Vec<usize>,
    pub node_graph: Indices,
    pub edge_src: Indices,
    pub edge_dst: Indices,
    pub last_node: Indices,
    pub node_activity: Indices,
    pub node_resource: Indices,
    pub node_numeric: Tensor,
    pub edge_activity: Indices,
    pub edge_resource: Indices,
    pub edge_numeric: Tensor,
    /// `1 / sqrt((1 + deg_in(dst)) (1 + deg_out(src)))` per edge, degrees
    /// counting transition edges only.
    pub gcn_norm: Tensor,
    /// Edge pairs `(e, p)` where `p` ends where `e` starts.
    pub pred_center: Indices,
    pub pred_neighbor: Indices,
    /// Edge pairs `(e, s)` where `s` starts where `e` ends.
    pub succ_center: Indices,
    pub succ_neighbor: Indices,
}

fn idx(v: Vec<usize>) -> Indices {
    Rc::from(v)
}

fn as_index(x: f64) -> usize {
    x.max(0.0).round() as usize
}

impl GraphBatch {
    pub fn new(graphs: &[&DfgGraph]) -> Result<Self> {
        let first = graphs.first().ok_or(GnnError::EmptyBatch)?;
        let variant = first.variant;
        let mut node_offsets = vec![0];
        let mut edge_offsets = vec![0];
        let (mut node_graph, mut src, mut dst, mut last) = (vec![], vec![], vec![], vec![]);
        let (mut node_act, mut node_res, mut node_num) = (vec![], vec![], vec![]);
        let (mut edge_act, mut edge_res, mut edge_num) = (vec![], vec![], vec![]);

        for (g, graph) in graphs.iter().enumerate() {
            if graph.variant != variant {
                return Err(GnnError::MixedVariants { index: g, expected: variant, actual: graph.variant });
            }
            if graph.num_nodes() == 0 {
                return Err(GnnError::EmptyGraph(g));
            }
            let base = *node_offsets.last().unwrap();
            node_graph.extend(std::iter::repeat_n(g, graph.num_nodes()));
            last.push(base + graph.last_node);
            for e in &graph.edges {
                src.push(base + e.tail);
                dst.push(base + e.head);
            }
            if variant.gnn_kind != GnnKind::Great {
                let nf = &graph.node_features;
                for r in 0..nf.rows() {
                    let row = nf.row(r);
                    node_act.push(as_index(row[0]));
                    node_res.push(as_index(row[1]));
                    node_num.extend_from_slice(&row[2..5]);
                }
            }
            let ef = &graph.edge_features;
            for r in 0..ef.rows() {
                let row = ef.row(r);
                let numeric = match variant.gnn_kind {
                    GnnKind::Gcn => continue,
                    GnnKind::Gat => row,
                    GnnKind::Great => {
                        edge_act.push(as_index(row[0]));
                        edge_res.push(as_index(row[1]));
                        &row[2..]
                    }
                };
                match variant.edge_mode {
                    EdgeMode::Single => edge_num.extend_from_slice(numeric),
                    EdgeMode::Multi => {
                        let (d, self_loop) = (numeric[0], numeric[1]);
                        edge_num.extend_from_slice(&[d, d, d, 1.0 - self_loop, self_loop, numeric[2], numeric[3]]);
                    }
                }
            }
            node_offsets.push(base + graph.num_nodes());
            edge_offsets.push(edge_offsets.last().unwrap() + graph.num_edges());
        }

        let num_nodes = *node_offsets.last().unwrap();
        let num_edges = src.len();
        let tensor = |rows: usize, cols: usize, data: Vec<f64>| {
            if data.is_empty() {
                Tensor::zeros(0, cols)
            } else {
                Tensor::new(rows, cols, data).expect("feature width checked by layout")
            }
        };

        let mut deg_in = vec![0usize; num_nodes];
        let mut deg_out = vec![0usize; num_nodes];
        let mut in_edges = vec![Vec::new(); num_nodes];
        let mut out_edges = vec![Vec::new(); num_nodes];
        for e in 0..num_edges {
            if src[e] != dst[e] {
                deg_in[dst[e]] += 1;
                deg_out[src[e]] += 1;
            }
            in_edges[dst[e]].push(e);
            out_edges[src[e]].push(e);
        }
        let gcn_norm = Tensor::column(
            (0..num_edges)
                .map(|e| 1.0 / (((1 + deg_in[dst[e]]) * (1 + deg_out[src[e]])) as f64).sqrt())
                .collect(),
        );

        let (mut pc, mut pn, mut sc, mut sn) = (vec![], vec![], vec![], vec![]);
        if variant.gnn_kind == GnnKind::Great {
            for e in 0..num_edges {
                for &p in &in_edges[src[e]] {
                    pc.push(e);
                    pn.push(p);
                }
                for &s in &out_edges[dst[e]] {
                    sc.push(e);
                    sn.push(s);
                }
            }
        }

        Ok(Self {
            variant,
            num_graphs: graphs.len(),
            num_nodes,
            num_edges,
            node_offsets,
            edge_offsets,
            node_graph: idx(node_graph),
            edge_src: idx(src),
            edge_dst: idx(dst),
            last_node: idx(last),
            node_numeric: tensor(num_nodes, NODE_NUMERIC_DIM, node_num),
            node_activity: idx(node_act),
            node_resource: idx(node_res),
            edge_numeric: tensor(num_edges, EDGE_NUMERIC_DIM, edge_num),
            edge_activity: idx(edge_act),
            edge_resource: idx(edge_res),
            gcn_norm,
            pred_center: idx(pc),
            pred_neighbor: idx(pn),
            succ_center: idx(sc),
            succ_neighbor: idx(sn),
        })
    }

    pub fn node_range(&self, g: usize) -> std::ops::Range<usize> {
        self.node_offsets[g]..self.node_offsets[g + 1]
    }

    pub fn edge_range(&self, g: usize) -> std::ops::Range<usize> {
        self.edge_offsets[g]..self.edge_offsets[g + 1]
    }
}
