use std::collections::HashMap;

use super::GraphDoc;

/// Square, directed 0/1 adjacency stored as sorted out-neighbour lists.
///
/// Row `i` is the source `node_order[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    node_order: Vec<String>,
    out: Vec<Vec<usize>>,
}

impl AdjacencyMatrix {
    /// Builds from index pairs; node names default to their index.
    /// Duplicate pairs are stored once.
    pub fn from_index_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut out = vec![Vec::new(); n];
        for &(a, b) in edges {
            assert!(a < n && b < n, "edge ({a}, {b}) out of range for {n} nodes");
            out[a].push(b);
        }
        for row in &mut out {
            row.sort_unstable();
            row.dedup();
        }
        Self { node_order: (0..n).map(|i| i.to_string()).collect(), out }
    }

    pub fn n(&self) -> usize {
        self.out.len()
    }

    pub fn node_order(&self) -> &[String] {
        &self.node_order
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.out[i].binary_search(&j).is_ok()
    }

    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out[i]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out[i].len()
    }

    /// Number of ones in the matrix.
    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        let n = self.n();
        self.out
            .iter()
            .map(|row| {
                let mut dense = vec![0u8; n];
                for &j in row {
                    dense[j] = 1;
                }
                dense
            })
            .collect()
    }

    /// For each node, the sorted union of its in- and out-neighbours.
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = self.out.clone();
        for (i, row) in self.out.iter().enumerate() {
            for &j in row {
                nb[j].push(i);
            }
        }
        for row in &mut nb {
            row.sort_unstable();
            row.dedup();
        }
        nb
    }
}

/// Adjacency of a valid document with rows/columns in sorted node-id order.
pub fn build_adjacency(doc: &GraphDoc) -> AdjacencyMatrix {
    let mut node_order: Vec<String> = doc.nodes.iter().map(|n| n.id.clone()).collect();
    node_order.sort();
    let index: HashMap<&str, usize> = node_order.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut out = vec![Vec::new(); node_order.len()];
    for (src, dst) in &doc.edges {
        out[index[src.as_str()]].push(index[dst.as_str()]);
    }
    for row in &mut out {
        row.sort_unstable();
        row.dedup();
    }
    AdjacencyMatrix { node_order, out }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::graph_ir::{synth_generate, GraphNode, Label, Layer, SynthParams};

    #[test]
    fn two_nodes_one_edge() {
        let doc = GraphDoc {
            graph_id: "g".into(),
            layer: Layer::Bytecode,
            label: Label::Benign,
            nodes: vec![
                GraphNode::basic_block("B", "m", 0, vec!["nop".into()]),
                GraphNode::basic_block("A", "m", 0, vec!["nop".into()]),
            ],
            edges: vec![("A/m/0".into(), "B/m/0".into())],
            meta: BTreeMap::new(),
        };
        let adj = build_adjacency(&doc);
        assert_eq!(adj.node_order(), ["A/m/0", "B/m/0"]);
        assert_eq!(adj.to_dense(), vec![vec![0, 1], vec![0, 0]]);
    }

    #[test]
    fn single_node() {
        let adj = AdjacencyMatrix::from_index_edges(1, &[]);
        assert_eq!(adj.to_dense(), vec![vec![0]]);
    }

    #[test]
    fn row_sums_equal_out_degree() {
        let doc = synth_generate(&SynthParams::new(Label::Malware, 20, 3)).unwrap();
        let adj = build_adjacency(&doc);
        let dense = adj.to_dense();
        for (i, id) in adj.node_order().iter().enumerate() {
            let brute = doc.edges.iter().filter(|(s, _)| s == id).count();
            let row_sum: usize = dense[i].iter().map(|&x| x as usize).sum();
            assert_eq!(row_sum, brute);
        }
        assert_eq!(adj.edge_count(), doc.edges.len());
    }

    #[test]
    fn undirected_neighbors_symmetrize() {
        let adj = AdjacencyMatrix::from_index_edges(3, &[(0, 1), (1, 0), (2, 1)]);
        assert_eq!(adj.undirected_neighbors(), vec![vec![1], vec![0, 2], vec![1]]);
    }
}
