//! Synthetic two-class graph generator for desk-scale runs.
//!
//! Benign graphs are near-chains whose node opcodes follow a Zipf-like
//! distribution over the alphabet. Malware graphs share the chain backbone,
//! add a planted dense 5-node motif (all forward edges between the motif
//! members) and draw 40% of their opcodes from a small "suspicious" subset
//! that benign code rarely uses.

use std::collections::{BTreeMap, HashSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GraphDoc, GraphNode, Label, Layer, MAX_NODES};
use crate::error::{Error, Result};

const BYTECODE_TOKENS: [&str; 24] = [
    "move",
    "move-result",
    "return-void",
    "const/4",
    "iget",
    "iput",
    "invoke-virtual",
    "invoke-direct",
    "if-eqz",
    "if-nez",
    "goto",
    "new-instance",
    "check-cast",
    "aget",
    "aput",
    "add-int",
    "array-length",
    "return-object",
    "sget-object",
    "const-string",
    "invoke-static",
    "xor-int",
    "shl-int",
    "throw",
];

const NATIVE_TOKENS: [&str; 20] = [
    "mov", "ldr", "str", "bl", "push", "pop", "add", "sub", "cmp", "beq", "bne", "b", "and", "orr", "mul", "blx",
    "lsl", "eor", "lsr", "svc",
];

/// How many tokens at the end of each alphabet form the suspicious subset.
const SUSPICIOUS: usize = 5;
const SUSPICIOUS_MASS: f64 = 0.4;
const MOTIF_SIZE: usize = 5;
const EXTRA_EDGE_P: f64 = 0.15;
const BLOCKS_PER_METHOD: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthParams {
    pub class: Label,
    pub layer: Layer,
    pub n_nodes: usize,
    pub seed: u64,
}

impl SynthParams {
    /// Byte-code layer parameters.
    pub fn new(class: Label, n_nodes: usize, seed: u64) -> Self {
        Self { class, layer: Layer::Bytecode, n_nodes, seed }
    }

    pub fn native(class: Label, n_nodes: usize, seed: u64) -> Self {
        Self { class, layer: Layer::Native, n_nodes, seed }
    }
}

/// The opcode alphabet used for a layer.
pub fn token_alphabet(layer: Layer) -> &'static [&'static str] {
    match layer {
        Layer::Bytecode => &BYTECODE_TOKENS,
        Layer::Native => &NATIVE_TOKENS,
    }
}

fn token_weights(layer: Layer, class: Label) -> Vec<f64> {
    let n = token_alphabet(layer).len();
    let common = n - SUSPICIOUS;
    let zipf: Vec<f64> = (0..common).map(|i| 1.0 / (i as f64 + 1.0).powf(0.8)).collect();
    let zsum: f64 = zipf.iter().sum();
    // benign code still uses the suspicious tokens, only rarely
    let rare = 0.01;
    let mut w: Vec<f64> = zipf.iter().map(|z| z / zsum * (1.0 - rare * SUSPICIOUS as f64)).collect();
    w.extend(std::iter::repeat_n(rare, SUSPICIOUS));
    if class == Label::Malware {
        for x in w.iter_mut() {
            *x *= 1.0 - SUSPICIOUS_MASS;
        }
        for x in &mut w[common..] {
            *x += SUSPICIOUS_MASS / SUSPICIOUS as f64;
        }
    }
    w
}

fn class_salt(class: Label, layer: Layer) -> u64 {
    let c = match class {
        Label::Malware => 0x6d61_6c77,
        Label::Benign => 0x6265_6e69,
        Label::Unknown => 0x756e_6b6e,
    };
    let l = match layer {
        Layer::Bytecode => 0x1000_0000_0000,
        Layer::Native => 0x2000_0000_0000,
    };
    c ^ l
}

/// Deterministic synthetic graph of the requested class.
pub fn synth_generate(params: &SynthParams) -> Result<GraphDoc> {
    let n = params.n_nodes;
    if !(1..=MAX_NODES).contains(&n) {
        return Err(Error::Range(format!("n_nodes {n} not in [1, {MAX_NODES}]")));
    }
    if params.class == Label::Unknown {
        return Err(Error::Range("synthetic class must be malware or benign".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ class_salt(params.class, params.layer));
    let alphabet = token_alphabet(params.layer);
    let dist = WeightedIndex::new(token_weights(params.layer, params.class)).expect("positive weights");

    let class_tag = params.class.as_str();
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let len = rng.gen_range(2..=8);
        let opcodes = (0..len).map(|_| alphabet[dist.sample(&mut rng)].to_owned()).collect();
        let node = match params.layer {
            Layer::Bytecode => {
                let class_desc = format!("Lcom/synth/{class_tag}/C{:05};", i / (BLOCKS_PER_METHOD * 4));
                let method_desc = format!("m{:05}", i / BLOCKS_PER_METHOD);
                GraphNode::basic_block(&class_desc, &method_desc, i % BLOCKS_PER_METHOD, opcodes)
            }
            Layer::Native => GraphNode::function(&format!("sub_{i:05}"), opcodes),
        };
        nodes.push(node);
    }

    let mut edges: HashSet<(usize, usize)> = HashSet::new();
    for i in 0..n.saturating_sub(1) {
        edges.insert((i, i + 1));
    }
    if n > 2 {
        for i in 0..n {
            if rng.gen_bool(EXTRA_EDGE_P) {
                let j = rng.gen_range(0..n);
                if j != i {
                    edges.insert((i, j));
                }
            }
        }
    }
    if params.class == Label::Malware && n > 1 {
        let mut motif = sample(&mut rng, n, MOTIF_SIZE.min(n)).into_vec();
        motif.sort_unstable();
        for (a, &u) in motif.iter().enumerate() {
            for &v in &motif[a + 1..] {
                edges.insert((u, v));
            }
        }
    }

    let mut edge_list: Vec<(String, String)> =
        edges.into_iter().map(|(a, b)| (nodes[a].id.clone(), nodes[b].id.clone())).collect();
    edge_list.sort();

    let mut meta = BTreeMap::new();
    meta.insert("generator".to_owned(), "synth".to_owned());
    meta.insert("seed".to_owned(), params.seed.to_string());

    let mut doc = GraphDoc {
        graph_id: format!("{}-{}-{}", params.layer, class_tag, params.seed),
        layer: params.layer,
        label: params.class,
        nodes,
        edges: edge_list,
        meta,
    };
    doc.canonicalize();
    Ok(doc)
}
