//! Node feature matrices for whole graph documents.
//!
//! Byte-code nodes are basic blocks and get the mean of their opcode vectors.
//! Native nodes are functions and get SIF embeddings. A node that already
//! carries a feature vector keeps it.

use crate::error::Result;
use crate::graph_ir::{GraphDoc, GraphNode};
use crate::linalg::Matrix;
use crate::opcode_embed::{block_embedding, EmbeddingTable};
use crate::sif::{FunctionInput, InstructionFrequencyTable, SifModel};
use crate::EMBED_DIM;

/// Rows follow sorted node-id order, matching
/// [`build_adjacency`](crate::graph_ir::build_adjacency).
fn sorted_nodes(doc: &GraphDoc) -> Vec<&GraphNode> {
    let mut nodes: Vec<&GraphNode> = doc.nodes.iter().collect();
    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    nodes
}

fn fill<F>(doc: &GraphDoc, mut compute: F) -> Result<Matrix>
where
    F: FnMut(&GraphNode) -> Result<Vec<f64>>,
{
    let nodes = sorted_nodes(doc);
    let mut m = Matrix::zeros(nodes.len(), EMBED_DIM);
    for (i, node) in nodes.into_iter().enumerate() {
        let row = match &node.feature {
            Some(f) => f.clone(),
            None => compute(node)?,
        };
        m.row_mut(i).copy_from_slice(&row);
    }
    Ok(m)
}

pub fn block_features(doc: &GraphDoc, table: &EmbeddingTable) -> Result<Matrix> {
    fill(doc, |node| block_embedding(table, &node.opcodes))
}

pub fn function_input(node: &GraphNode, table: &EmbeddingTable) -> FunctionInput {
    FunctionInput::from_table(node.id.clone(), node.opcodes.clone(), table)
}

pub fn function_features(
    doc: &GraphDoc,
    table: &EmbeddingTable,
    freq: &InstructionFrequencyTable,
    sif: &SifModel,
) -> Result<Matrix> {
    fill(doc, |node| sif.embed(&function_input(node, table), freq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_ir::{synth_generate, Label, SynthParams};
    use crate::opcode_embed::{train_skipgram, SkipGramConfig};

    #[test]
    fn rows_follow_sorted_ids_and_features_win() {
        let mut doc = synth_generate(&SynthParams::new(Label::Benign, 12, 2)).unwrap();
        let corpus: Vec<Vec<String>> = doc.nodes.iter().map(|n| n.opcodes.clone()).collect();
        let table = train_skipgram(&corpus, &SkipGramConfig::default()).unwrap();
        doc.nodes.reverse();
        doc.nodes[0].feature = Some(vec![0.5; EMBED_DIM]);
        let fixed_id = doc.nodes[0].id.clone();
        let m = block_features(&doc, &table).unwrap();
        let mut ids: Vec<&str> = doc.nodes.iter().map(|n| n.id.as_str()).collect();
        ids.sort();
        let pos = ids.iter().position(|&i| i == fixed_id).unwrap();
        assert_eq!(m.row(pos), vec![0.5; EMBED_DIM].as_slice());
        let first = doc.nodes.iter().find(|n| n.id == ids[0]).unwrap();
        if first.feature.is_none() {
            assert_eq!(m.row(0), block_embedding(&table, &first.opcodes).unwrap().as_slice());
        }
    }
}
