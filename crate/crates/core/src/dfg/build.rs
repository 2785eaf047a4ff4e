use std::collections::HashMap;

use super::{DfgError, DfgGraph, DfgVariant, EdgeMode, EdgeRecord, GnnKind, NodeRecord, SUFFIX_LEN};
use crate::eventlog::vocab::{START_INDEX, UNK_INDEX};
use crate::eventlog::{hours_between, Event, Vocab};
use crate::nncore::Tensor;
use crate::sampling::PrefixSample;

/// Node holding an activity-vocab index. Node 0 is `START`; `END` has no node.
fn node_of(activity: usize) -> Option<usize> {
    match activity {
        START_INDEX => Some(0),
        a if a >= 2 => Some(a - 1),
        _ => None,
    }
}

fn activity_of(node: usize) -> usize {
    if node == 0 {
        START_INDEX
    } else {
        node + 1
    }
}

pub fn build_dfg(
    prefix: &PrefixSample,
    activity_vocab: &Vocab,
    resource_vocab: &Vocab,
    variant: DfgVariant,
) -> Result<DfgGraph, DfgError> {
    build_dfg_from_events(&prefix.events, activity_vocab, resource_vocab, variant)
}

/// Builds the graph of a prefix given as its events. An empty prefix yields
/// the bare `START` + unvisited-node graph with `START` as last node.
pub fn build_dfg_from_events(
    events: &[Event],
    activity_vocab: &Vocab,
    resource_vocab: &Vocab,
    variant: DfgVariant,
) -> Result<DfgGraph, DfgError> {
    let num_nodes = activity_vocab.len() - 1;
    let mut nodes: Vec<NodeRecord> = (0..num_nodes)
        .map(|n| NodeRecord {
            activity: activity_of(n),
            count: 0,
            resource: UNK_INDEX,
            in_suffix5: false,
            is_last: false,
        })
        .collect();

    let k = events.len();
    let suffix_start = k.saturating_sub(SUFFIX_LEN);
    let mut visits = Vec::with_capacity(k);
    for e in events {
        let node = activity_vocab
            .get(&e.activity)
            .and_then(node_of)
            .filter(|&n| n > 0)
            .ok_or_else(|| DfgError::UnknownActivity(e.activity.clone()))?;
        visits.push((node, resource_vocab.get_or_unk(e.resource.as_deref())));
    }
    for (i, &(node, resource)) in visits.iter().enumerate() {
        let rec = &mut nodes[node];
        rec.count += 1;
        rec.resource = resource;
        rec.in_suffix5 |= i >= suffix_start;
        rec.is_last = i + 1 == k;
    }
    let last_node = visits.last().map_or(0, |v| v.0);

    let mut edges: Vec<EdgeRecord> = (0..num_nodes)
        .map(|n| EdgeRecord {
            tail: n,
            head: n,
            self_loop: true,
            target_activity: activity_of(n),
            durations_h: Vec::new(),
            resources: Vec::new(),
            in_suffix5: false,
            is_last: false,
        })
        .collect();
    let mut single_index: HashMap<(usize, usize), usize> = HashMap::new();
    for (i, &(head, resource)) in visits.iter().enumerate() {
        let (tail, duration) = if i == 0 {
            (0, 0.0)
        } else {
            (
                visits[i - 1].0,
                hours_between(events[i - 1].timestamp_ms, events[i].timestamp_ms),
            )
        };
        let slot = match variant.edge_mode {
            EdgeMode::Single => *single_index.entry((tail, head)).or_insert(edges.len()),
            EdgeMode::Multi => edges.len(),
        };
        if slot == edges.len() {
            edges.push(EdgeRecord {
                tail,
                head,
                self_loop: false,
                target_activity: activity_of(head),
                durations_h: Vec::new(),
                resources: Vec::new(),
                in_suffix5: false,
                is_last: false,
            });
        }
        let edge = &mut edges[slot];
        edge.durations_h.push(duration);
        edge.resources.push(resource);
        edge.in_suffix5 |= i >= suffix_start;
        edge.is_last |= i + 1 == k;
    }

    let node_features = node_matrix(variant, &nodes);
    let edge_features = edge_matrix(variant, &edges);
    Ok(DfgGraph {
        variant,
        nodes,
        edges,
        node_features,
        edge_features,
        last_node,
        normalized: false,
    })
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn node_matrix(variant: DfgVariant, nodes: &[NodeRecord]) -> Tensor {
    let width = variant.node_layout().len();
    let data: Vec<f64> = match variant.gnn_kind {
        GnnKind::Great => vec![1.0; nodes.len()],
        GnnKind::Gcn | GnnKind::Gat => nodes
            .iter()
            .flat_map(|n| {
                [
                    n.activity as f64,
                    n.resource as f64,
                    n.count as f64,
                    flag(n.in_suffix5),
                    flag(n.is_last),
                ]
            })
            .collect(),
    };
    Tensor::new(nodes.len(), width, data).expect("layout width")
}

fn edge_row(variant: DfgVariant, e: &EdgeRecord) -> Vec<f64> {
    let flags = [flag(e.self_loop), flag(e.in_suffix5), flag(e.is_last)];
    let aggregates = [
        e.last_duration(),
        e.avg_duration(),
        e.max_duration(),
        e.count() as f64,
    ];
    let mut row = Vec::with_capacity(9);
    match (variant.gnn_kind, variant.edge_mode) {
        (GnnKind::Gcn, _) => return row,
        (GnnKind::Gat, EdgeMode::Single) => row.extend(aggregates),
        (GnnKind::Gat, EdgeMode::Multi) => row.push(e.last_duration()),
        (GnnKind::Great, EdgeMode::Single) => {
            row.extend([e.target_activity as f64, e.last_resource() as f64]);
            row.extend(aggregates);
        }
        (GnnKind::Great, EdgeMode::Multi) => row.extend([
            e.target_activity as f64,
            e.last_resource() as f64,
            e.last_duration(),
        ]),
    }
    row.extend(flags);
    row
}

fn edge_matrix(variant: DfgVariant, edges: &[EdgeRecord]) -> Tensor {
    let width = variant.edge_layout().len();
    let data: Vec<f64> = edges.iter().flat_map(|e| edge_row(variant, e)).collect();
    Tensor::new(edges.len(), width, data).expect("layout width")
}
