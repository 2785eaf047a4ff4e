use std::fmt::Write;

use super::DfgGraph;
use crate::eventlog::Vocab;

fn hm(hours: f64) -> String {
    let minutes = (hours * 60.0).round() as i64;
    format!("{}:{:02}", minutes / 60, minutes % 60)
}

/// Graphviz rendering for debugging: nodes labelled by activity, transition
/// edges by their durations (h:mm). Unvisited nodes are dashed.
pub fn to_dot(graph: &DfgGraph, activity_vocab: &Vocab) -> String {
    let mut out = String::from("digraph dfg {\n  rankdir=LR;\n");
    for (i, n) in graph.nodes.iter().enumerate() {
        let name = activity_vocab.name(n.activity).unwrap_or("?");
        let style = if n.count == 0 && i != 0 { ", style=dashed" } else { "" };
        let bold = if i == graph.last_node { ", penwidth=2" } else { "" };
        let _ = writeln!(out, "  n{i} [label=\"{}\"{style}{bold}];", name.replace('"', "\\\""));
    }
    for e in graph.transition_edges() {
        let label: Vec<String> = e.durations_h.iter().map(|&d| hm(d)).collect();
        let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"];", e.tail, e.head, label.join(", "));
    }
    out.push_str("}\n");
    out
}
