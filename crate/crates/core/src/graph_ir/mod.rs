//! Graph interchange format shared by the byte-code (PDG) and native (FCG)
//! layers.
//!
//! A [`GraphDoc`] holds nodes carrying either an opcode sequence or a
//! precomputed feature vector, directed edges between node ids, a label and a
//! layer tag. Documents are exchanged as canonical JSON: nodes sorted by id,
//! edges sorted lexicographically, floats written with 17 significant digits.

mod adjacency;
mod manifest;
mod synth;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use adjacency::{build_adjacency, AdjacencyMatrix};
pub use manifest::{DatasetManifest, ManifestEntry, Split};
pub use synth::{synth_generate, token_alphabet, SynthParams};
pub use validate::{validate_graph, Violation, MAX_NODES};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    BasicBlock,
    Function,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Bytecode,
    Native,
}

impl Layer {
    pub const ALL: [Layer; 2] = [Layer::Bytecode, Layer::Native];

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Bytecode => "bytecode",
            Layer::Native => "native",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Malware,
    Benign,
    Unknown,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Malware => "malware",
            Label::Benign => "benign",
            Label::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default)]
    pub class_desc: String,
    #[serde(default)]
    pub method_desc: String,
    #[serde(default)]
    pub opcodes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<Vec<f64>>,
}

impl GraphNode {
    /// A basic-block node named by its enclosing class, method and block index.
    pub fn basic_block(class_desc: &str, method_desc: &str, block_index: usize, opcodes: Vec<String>) -> Self {
        Self {
            id: node_id(class_desc, method_desc, block_index),
            kind: NodeKind::BasicBlock,
            class_desc: class_desc.to_owned(),
            method_desc: method_desc.to_owned(),
            opcodes,
            feature: None,
        }
    }

    /// A native function node. Native code has no class, so the id is
    /// `"/<function>/0"`.
    pub fn function(name: &str, opcodes: Vec<String>) -> Self {
        Self {
            id: node_id("", name, 0),
            kind: NodeKind::Function,
            class_desc: String::new(),
            method_desc: name.to_owned(),
            opcodes,
            feature: None,
        }
    }
}

/// Globally unique node name: `class/method/block`.
pub fn node_id(class_desc: &str, method_desc: &str, block_index: usize) -> String {
    format!("{class_desc}/{method_desc}/{block_index}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDoc {
    pub graph_id: String,
    pub layer: Layer,
    pub label: Label,
    pub nodes: Vec<GraphNode>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl GraphDoc {
    /// Sorts nodes by id and edges lexicographically, in place.
    pub fn canonicalize(&mut self) {
        self.nodes.sort_by(|a, b| a.id.cmp(&b.id));
        self.edges.sort();
    }

    pub fn is_canonical(&self) -> bool {
        self.nodes.windows(2).all(|w| w[0].id <= w[1].id) && self.edges.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Parses and validates a document from its JSON wire form.
pub fn parse_graph_doc(bytes: &[u8]) -> Result<GraphDoc> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::Parse { offset: e.valid_up_to(), message: "input is not valid UTF-8".into() })?;
    let doc: GraphDoc = serde_json::from_str(text)
        .map_err(|e| Error::Parse { offset: byte_offset(text, e.line(), e.column()), message: e.to_string() })?;
    let violations = validate_graph(&doc);
    if violations.is_empty() {
        Ok(doc)
    } else {
        Err(Error::Validation(violations))
    }
}

/// Canonical JSON encoding. Independent of the in-memory node and edge order.
pub fn serialize_graph_doc(doc: &GraphDoc) -> Vec<u8> {
    let mut canon = doc.clone();
    canon.canonicalize();
    crate::json::to_vec_pretty(&canon).expect("graph documents always serialize")
}

// serde_json reports 1-based line and column; column counts bytes.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> GraphDoc {
        GraphDoc {
            graph_id: "g".into(),
            layer: Layer::Bytecode,
            label: Label::Benign,
            nodes: vec![GraphNode::basic_block("LA;", "m", 0, vec!["move".into()])],
            edges: vec![],
            meta: BTreeMap::new(),
        }
    }

    #[test]
    fn parses_minimal_document() {
        let text = r#"{"graph_id":"g","layer":"bytecode","label":"benign",
            "nodes":[{"id":"a","kind":"basic_block","class_desc":"","method_desc":"","opcodes":["nop"]}],
            "edges":[],"meta":{}}"#;
        let doc = parse_graph_doc(text.as_bytes()).unwrap();
        assert_eq!(doc.node_count(), 1);
        assert_eq!(doc.label, Label::Benign);
    }

    #[test]
    fn unknown_endpoint_is_a_validation_error() {
        let text = r#"{"graph_id":"g","layer":"native","label":"benign",
            "nodes":[{"id":"a","kind":"function","opcodes":["mov"]}],
            "edges":[["a","x"]],"meta":{}}"#;
        match parse_graph_doc(text.as_bytes()) {
            Err(Error::Validation(v)) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].to_string(), "unknown endpoint x");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_byte_offset() {
        let text = "{\"graph_id\": \"g\",\n  \"layer\": bytecode}";
        match parse_graph_doc(text.as_bytes()) {
            Err(Error::Parse { offset, .. }) => assert_eq!(&text[offset..offset + 1], "b"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_utf8_reports_offset() {
        let bytes = b"{\"graph_id\": \"\xff\"}";
        match parse_graph_doc(bytes) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 14),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn serialization_is_deterministic() {
        let doc = minimal();
        let a = serialize_graph_doc(&doc);
        let b = serialize_graph_doc(&parse_graph_doc(&a).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn edges_are_sorted_on_output() {
        let mut doc = minimal();
        doc.nodes.push(GraphNode::basic_block("LA;", "m", 1, vec!["goto".into()]));
        doc.nodes.push(GraphNode::basic_block("LA;", "m", 2, vec!["goto".into()]));
        doc.edges = vec![
            ("LA;/m/2".into(), "LA;/m/0".into()),
            ("LA;/m/0".into(), "LA;/m/1".into()),
            ("LA;/m/1".into(), "LA;/m/2".into()),
        ];
        let back = parse_graph_doc(&serialize_graph_doc(&doc)).unwrap();
        assert!(back.is_canonical());
        assert_eq!(back.edges[0], ("LA;/m/0".to_string(), "LA;/m/1".to_string()));
        assert_eq!(back.edges[2], ("LA;/m/2".to_string(), "LA;/m/0".to_string()));
    }

    #[test]
    fn feature_vectors_survive_bit_exact() {
        let mut doc = minimal();
        doc.nodes[0].feature = Some((0..64).map(|i| (i as f64).sin() / 7.0).collect());
        let back = parse_graph_doc(&serialize_graph_doc(&doc)).unwrap();
        assert_eq!(back, doc);
    }
}
