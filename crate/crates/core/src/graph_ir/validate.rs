use std::collections::HashSet;
use std::fmt;

use super::GraphDoc;
use crate::EMBED_DIM;

/// Graphs above this size are rejected; extraction of larger graphs is not
/// feasible in memory.
pub const MAX_NODES: usize = 90_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoNodes,
    NodeCapExceeded(usize),
    EmptyId { position: usize },
    DuplicateId(String),
    NodeWithoutContent(String),
    FeatureDimension { id: String, len: usize },
    NonFiniteFeature(String),
    UnknownEndpoint(String),
    DuplicateEdge(String, String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoNodes => write!(f, "graph has no nodes"),
            Violation::NodeCapExceeded(n) => write!(f, "node cap exceeded ({n} > {MAX_NODES})"),
            Violation::EmptyId { position } => write!(f, "node at position {position} has an empty id"),
            Violation::DuplicateId(id) => write!(f, "duplicate node id {id}"),
            Violation::NodeWithoutContent(id) => write!(f, "node {id} has neither opcodes nor a feature vector"),
            Violation::FeatureDimension { id, len } => {
                write!(f, "node {id} feature has {len} entries, expected {EMBED_DIM}")
            }
            Violation::NonFiniteFeature(id) => write!(f, "node {id} feature is not finite"),
            Violation::UnknownEndpoint(id) => write!(f, "unknown endpoint {id}"),
            Violation::DuplicateEdge(a, b) => write!(f, "duplicate edge {a} -> {b}"),
        }
    }
}

/// Checks every document invariant and reports all violations found.
pub fn validate_graph(doc: &GraphDoc) -> Vec<Violation> {
    let mut out = Vec::new();
    if doc.nodes.is_empty() {
        out.push(Violation::NoNodes);
    }
    if doc.nodes.len() > MAX_NODES {
        out.push(Violation::NodeCapExceeded(doc.nodes.len()));
    }

    let mut ids: HashSet<&str> = HashSet::with_capacity(doc.nodes.len());
    for (position, node) in doc.nodes.iter().enumerate() {
        if node.id.is_empty() {
            out.push(Violation::EmptyId { position });
        } else if !ids.insert(node.id.as_str()) {
            out.push(Violation::DuplicateId(node.id.clone()));
        }
        match &node.feature {
            Some(feature) => {
                if feature.len() != EMBED_DIM {
                    out.push(Violation::FeatureDimension { id: node.id.clone(), len: feature.len() });
                }
                if !feature.iter().all(|x| x.is_finite()) {
                    out.push(Violation::NonFiniteFeature(node.id.clone()));
                }
            }
            None if node.opcodes.is_empty() => out.push(Violation::NodeWithoutContent(node.id.clone())),
            None => {}
        }
    }

    let mut seen_edges: HashSet<(&str, &str)> = HashSet::with_capacity(doc.edges.len());
    for (src, dst) in &doc.edges {
        for end in [src, dst] {
            if !ids.contains(end.as_str()) {
                out.push(Violation::UnknownEndpoint(end.clone()));
            }
        }
        if !seen_edges.insert((src.as_str(), dst.as_str())) {
            out.push(Violation::DuplicateEdge(src.clone(), dst.clone()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::graph_ir::{GraphNode, Label, Layer};

    fn doc(nodes: Vec<GraphNode>, edges: Vec<(&str, &str)>) -> GraphDoc {
        GraphDoc {
            graph_id: "t".into(),
            layer: Layer::Bytecode,
            label: Label::Unknown,
            nodes,
            edges: edges.into_iter().map(|(a, b)| (a.into(), b.into())).collect(),
            meta: BTreeMap::new(),
        }
    }

    fn node(id: &str) -> GraphNode {
        GraphNode {
            id: id.into(),
            kind: crate::graph_ir::NodeKind::BasicBlock,
            class_desc: String::new(),
            method_desc: String::new(),
            opcodes: vec!["nop".into()],
            feature: None,
        }
    }

    #[test]
    fn valid_doc_has_no_violations() {
        assert!(validate_graph(&doc(vec![node("a"), node("b")], vec![("a", "b")])).is_empty());
    }

    #[test]
    fn duplicate_id() {
        assert_eq!(validate_graph(&doc(vec![node("a"), node("a")], vec![])), vec![Violation::DuplicateId("a".into())]);
    }

    #[test]
    fn node_without_content() {
        let mut n = node("a");
        n.opcodes.clear();
        assert_eq!(validate_graph(&doc(vec![n], vec![])), vec![Violation::NodeWithoutContent("a".into())]);
    }

    #[test]
    fn feature_only_node_is_fine() {
        let mut n = node("a");
        n.opcodes.clear();
        n.feature = Some(vec![0.0; EMBED_DIM]);
        assert!(validate_graph(&doc(vec![n], vec![])).is_empty());
    }

    #[test]
    fn bad_features() {
        let mut n = node("a");
        n.feature = Some(vec![f64::NAN; 3]);
        let v = validate_graph(&doc(vec![n], vec![]));
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn duplicate_edges_are_rejected() {
        let v = validate_graph(&doc(vec![node("a"), node("b")], vec![("a", "b"), ("a", "b")]));
        assert_eq!(v, vec![Violation::DuplicateEdge("a".into(), "b".into())]);
    }

    #[test]
    fn node_cap() {
        let nodes: Vec<GraphNode> = (0..MAX_NODES + 1).map(|i| node(&format!("n{i}"))).collect();
        let v = validate_graph(&doc(nodes, vec![]));
        assert_eq!(v, vec![Violation::NodeCapExceeded(MAX_NODES + 1)]);
        assert!(v[0].to_string().starts_with("node cap exceeded"));

        let nodes: Vec<GraphNode> = (0..MAX_NODES).map(|i| node(&format!("n{i}"))).collect();
        assert!(validate_graph(&doc(nodes, vec![])).is_empty());
    }

    #[test]
    fn reports_every_violation() {
        let mut empty = node("");
        empty.opcodes.clear();
        let v = validate_graph(&doc(vec![node("a"), empty, node("a")], vec![("a", "z"), ("q", "a")]));
        assert_eq!(v.len(), 5, "{v:?}");
    }
}
