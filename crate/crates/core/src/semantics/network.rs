use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::SquareMatrix;
use crate::error::{Error, Result};
use crate::labels::LabelSet;

pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.55;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub label: String,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: String,
    pub b: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticNetwork {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

/// One node per label; an undirected edge for every pair whose similarity
/// is strictly above `edge_threshold`, in (i, j) row-major order with i < j.
pub fn build_network(
    similarity: &SquareMatrix,
    labels: &LabelSet,
    assignment: &[usize],
    edge_threshold: f64,
) -> Result<SemanticNetwork> {
    let n = similarity.n();
    if labels.len() != n || assignment.len() != n {
        return Err(Error::Shape(format!(
            "{} labels and {} assignments for a {n}x{n} similarity matrix",
            labels.len(),
            assignment.len()
        )));
    }
    if !(edge_threshold > -1.0 && edge_threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "edge threshold must lie in (-1, 1), got {edge_threshold}"
        )));
    }
    let names = labels.as_slice();
    let nodes = names
        .iter()
        .zip(assignment)
        .map(|(label, &cluster)| Node {
            label: label.clone(),
            cluster,
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = similarity.get(i, j);
            if s > edge_threshold {
                edges.push(Edge {
                    a: names[i].clone(),
                    b: names[j].clone(),
                    weight: s,
                });
            }
        }
    }
    Ok(SemanticNetwork { nodes, edges })
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

impl SemanticNetwork {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    /// GraphML with `label` and `cluster` node attributes and a `weight`
    /// edge attribute. Node ids are `n<index>` in label order.
    pub fn to_graphml(&self) -> String {
        let mut out = String::new();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        out.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
        out.push_str("  <key id=\"label\" for=\"node\" attr.name=\"label\" attr.type=\"string\"/>\n");
        out.push_str("  <key id=\"cluster\" for=\"node\" attr.name=\"cluster\" attr.type=\"int\"/>\n");
        out.push_str("  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n");
        out.push_str("  <graph id=\"semantic_network\" edgedefault=\"undirected\">\n");
        let index: std::collections::HashMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.label.as_str(), i))
            .collect();
        for (i, node) in self.nodes.iter().enumerate() {
            let _ = writeln!(
                out,
                "    <node id=\"n{i}\"><data key=\"label\">{}</data><data key=\"cluster\">{}</data></node>",
                xml_escape(&node.label),
                node.cluster
            );
        }
        for (e, edge) in self.edges.iter().enumerate() {
            let _ = writeln!(
                out,
                "    <edge id=\"e{e}\" source=\"n{}\" target=\"n{}\"><data key=\"weight\">{}</data></edge>",
                index[edge.a.as_str()],
                index[edge.b.as_str()],
                edge.weight
            );
        }
        out.push_str("  </graph>\n</graphml>\n");
        out
    }
}
