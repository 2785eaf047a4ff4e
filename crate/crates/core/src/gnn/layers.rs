//! Message-passing layers, readout and task head as tape operations.
//!
//! Features are row vectors: `x` is `num_nodes x hidden` (GCN, GAT) or
//! `num_edges x hidden` (GREAT) and weights multiply from the right.

use std::rc::Rc;

use super::{GraphBatch, Result};
use crate::nncore::{Indices, Tape, Tensor, Var};

pub struct GcnParams {
    pub w1: Var,
    pub w2: Var,
    pub b: Var,
}

/// Query/key/value projections split column-wise into heads. `edge` adds
/// `f We` to keys and messages (GAT only); `mix` follows the head
/// concatenation when there is more than one head.
pub struct AttentionParams {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub edge: Option<Var>,
    pub mix: Option<Var>,
}

pub struct GatParams {
    pub w1: Var,
    pub b: Var,
    pub attn: AttentionParams,
}

pub struct GreatParams {
    pub w1: Var,
    pub b: Var,
    pub pred: AttentionParams,
    pub succ: AttentionParams,
}

pub struct HeadParams {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// `x_i' = relu(x_i W1 + b + sum_{j->i} beta_ji x_j W2)`, self-loops included.
pub fn gcn_layer(tape: &mut Tape, x: Var, batch: &GraphBatch, p: &GcnParams) -> Result<Var> {
    let own = tape.matmul(x, p.w1)?;
    let own = tape.add_row(own, p.b)?;
    let xw = tape.matmul(x, p.w2)?;
    let msg = tape.gather_rows(xw, batch.edge_src.clone())?;
    let beta = tape.constant(batch.gcn_norm.clone());
    let msg = tape.mul_col(msg, beta)?;
    let agg = tape.segment_sum(msg, batch.edge_dst.clone(), batch.num_nodes)?;
    let out = tape.add(own, agg)?;
    Ok(tape.relu(out))
}

/// Block indicator `hidden x heads` mapping feature columns to their head.
fn head_indicator(hidden: usize, heads: usize) -> Tensor {
    let hd = hidden / heads;
    let mut t = Tensor::zeros(hidden, heads);
    for c in 0..hidden {
        t.set(c, c / hd, 1.0);
    }
    t
}

/// Scaled dot-product attention over `(center, neighbor)` pairs.
/// `centers_x` and `neighbors_x` hold the rows the pair indices point into;
/// `pair_features` is the per-pair edge input when `p.edge` is set.
#[allow(clippy::too_many_arguments)]
pub fn attend(
    tape: &mut Tape,
    centers_x: Var,
    neighbors_x: Var,
    center: &Indices,
    neighbor: &Indices,
    num_centers: usize,
    pair_features: Option<Var>,
    heads: usize,
    p: &AttentionParams,
) -> Result<Var> {
    let hidden = tape.value(p.wq).cols();
    let q = tape.matmul(centers_x, p.wq)?;
    let q = tape.gather_rows(q, center.clone())?;
    let k = tape.matmul(neighbors_x, p.wk)?;
    let mut k = tape.gather_rows(k, neighbor.clone())?;
    let v = tape.matmul(neighbors_x, p.wv)?;
    let mut v = tape.gather_rows(v, neighbor.clone())?;
    if let (Some(we), Some(f)) = (p.edge, pair_features) {
        let fe = tape.matmul(f, we)?;
        k = tape.add(k, fe)?;
        v = tape.add(v, fe)?;
    }
    let qk = tape.mul(q, k)?;
    let ind = head_indicator(hidden, heads);
    let spread = tape.constant(ind.transpose());
    let ind = tape.constant(ind);
    let scores = tape.matmul(qk, ind)?;
    let scores = tape.scale(scores, 1.0 / ((hidden / heads) as f64).sqrt());
    let alpha = tape.segment_softmax(scores, center.clone(), num_centers)?;
    let alpha = tape.matmul(alpha, spread)?;
    let weighted = tape.mul(v, alpha)?;
    let agg = tape.segment_sum(weighted, center.clone(), num_centers)?;
    match p.mix {
        Some(wo) => Ok(tape.matmul(agg, wo)?),
        None => Ok(agg),
    }
}

/// `x_i' = relu(x_i W1 + b + sum_{e=(j->i)} alpha_e (x_j Wv + f_e We))`,
/// `alpha` a softmax over the edges entering `i`.
pub fn gat_layer(tape: &mut Tape, x: Var, edge_x: Var, batch: &GraphBatch, heads: usize, p: &GatParams) -> Result<Var> {
    let own = tape.matmul(x, p.w1)?;
    let own = tape.add_row(own, p.b)?;
    let agg = attend(
        tape,
        x,
        x,
        &batch.edge_dst,
        &batch.edge_src,
        batch.num_nodes,
        Some(edge_x),
        heads,
        &p.attn,
    )?;
    let out = tape.add(own, agg)?;
    Ok(tape.relu(out))
}

/// Edge update from attention over predecessor and successor edges.
pub fn great_layer(tape: &mut Tape, h: Var, batch: &GraphBatch, heads: usize, p: &GreatParams) -> Result<Var> {
    let own = tape.matmul(h, p.w1)?;
    let own = tape.add_row(own, p.b)?;
    let m = batch.num_edges;
    let pred = attend(tape, h, h, &batch.pred_center, &batch.pred_neighbor, m, None, heads, &p.pred)?;
    let succ = attend(tape, h, h, &batch.succ_center, &batch.succ_neighbor, m, None, heads, &p.succ)?;
    let out = tape.add(own, pred)?;
    let out = tape.add(out, succ)?;
    Ok(tape.relu(out))
}

/// Incoming-edge sums: node features from GREAT edge features.
pub fn edges_to_nodes(tape: &mut Tape, h: Var, batch: &GraphBatch) -> Result<Var> {
    Ok(tape.segment_sum(h, batch.edge_dst.clone(), batch.num_nodes)?)
}

/// `[sum_i x_i ; x_last]` per graph, `num_graphs x 2 hidden`.
pub fn readout(tape: &mut Tape, x: Var, batch: &GraphBatch) -> Result<Var> {
    let pooled = tape.segment_sum(x, batch.node_graph.clone(), batch.num_graphs)?;
    let last = tape.gather_rows(x, Rc::clone(&batch.last_node))?;
    Ok(tape.concat_cols(&[pooled, last])?)
}

/// Two-layer MLP head: logits (next activity) or a scalar (remaining time).
pub fn predict(tape: &mut Tape, trace_vectors: Var, p: &HeadParams) -> Result<Var> {
    let h = tape.matmul(trace_vectors, p.w1)?;
    let h = tape.add_row(h, p.b1)?;
    let h = tape.relu(h);
    let out = tape.matmul(h, p.w2)?;
    Ok(tape.add_row(out, p.b2)?)
}
