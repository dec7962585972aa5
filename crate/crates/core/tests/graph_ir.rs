use std::collections::BTreeMap;

use graphshield_core::graph_ir::{
    build_adjacency, parse_graph_doc, serialize_graph_doc, synth_generate, token_alphabet, validate_graph, GraphDoc,
    Label, Layer, SynthParams, Violation,
};
use graphshield_core::Error;
use graphshield_testkit::total_variation;
use proptest::prelude::*;

fn params(layer: Layer, class: Label, n: usize, seed: u64) -> SynthParams {
    match layer {
        Layer::Bytecode => SynthParams::new(class, n, seed),
        Layer::Native => SynthParams::native(class, n, seed),
    }
}

#[test]
fn synthetic_graphs_round_trip_for_100_seeds() {
    for seed in 0..100u64 {
        let layer = if seed % 2 == 0 { Layer::Bytecode } else { Layer::Native };
        let class = if seed % 3 == 0 { Label::Malware } else { Label::Benign };
        let doc = synth_generate(&params(layer, class, 5 + (seed as usize % 40), seed)).unwrap();
        assert!(validate_graph(&doc).is_empty(), "seed {seed}");
        let bytes = serialize_graph_doc(&doc);
        let back = parse_graph_doc(&bytes).unwrap();
        assert_eq!(back, doc, "seed {seed}");
        assert_eq!(serialize_graph_doc(&back), bytes, "seed {seed}");
    }
}

/// Relative opcode frequencies over many graphs of one class, in alphabet order.
fn histogram(layer: Layer, class: Label) -> Vec<f64> {
    let alphabet = token_alphabet(layer);
    let mut counts: BTreeMap<&str, f64> = alphabet.iter().map(|&t| (t, 0.0)).collect();
    for seed in 0..20 {
        let doc = synth_generate(&params(layer, class, 30, seed)).unwrap();
        for op in doc.nodes.iter().flat_map(|n| &n.opcodes) {
            *counts.get_mut(op.as_str()).expect("token from the alphabet") += 1.0;
        }
    }
    alphabet.iter().map(|t| counts[t]).collect()
}

#[test]
fn classes_differ_in_opcode_distribution() {
    for layer in Layer::ALL {
        let tv = total_variation(&histogram(layer, Label::Malware), &histogram(layer, Label::Benign));
        assert!(tv > 0.2, "{layer}: total variation {tv}");
    }
}

#[test]
fn malware_graphs_are_denser() {
    let density = |class| {
        (0..20)
            .map(|seed| {
                let d = synth_generate(&SynthParams::new(class, 30, seed)).unwrap();
                d.edges.len() as f64 / d.nodes.len() as f64
            })
            .sum::<f64>()
    };
    assert!(density(Label::Malware) > density(Label::Benign));
}

#[test]
fn generation_is_deterministic_and_seed_sensitive() {
    let p = SynthParams::new(Label::Malware, 25, 9);
    assert_eq!(serialize_graph_doc(&synth_generate(&p).unwrap()), serialize_graph_doc(&synth_generate(&p).unwrap()));
    let q = SynthParams { seed: 10, ..p };
    assert_ne!(synth_generate(&p).unwrap().nodes, synth_generate(&q).unwrap().nodes);
}

#[test]
fn adjacency_matches_edge_list() {
    let doc = synth_generate(&SynthParams::new(Label::Malware, 40, 3)).unwrap();
    let adj = build_adjacency(&doc);
    assert_eq!(adj.n(), doc.nodes.len());
    assert_eq!(adj.edge_count(), doc.edges.len());
    let order = adj.node_order();
    assert!(order.windows(2).all(|w| w[0] < w[1]));
    let pos = |id: &str| order.iter().position(|o| o == id).unwrap();
    for (a, b) in &doc.edges {
        assert!(adj.get(pos(a), pos(b)));
    }
    let dense = adj.to_dense();
    let ones: usize = dense.iter().flatten().map(|&x| x as usize).sum();
    assert_eq!(ones, doc.edges.len());
}

#[test]
fn dangling_edge_is_reported() {
    let mut doc = synth_generate(&SynthParams::new(Label::Benign, 4, 1)).unwrap();
    let first = doc.nodes[0].id.clone();
    doc.edges.push((first, "nowhere".into()));
    let v = validate_graph(&doc);
    assert!(v.iter().any(|x| matches!(x, Violation::UnknownEndpoint(id) if id == "nowhere")), "{v:?}");
    assert!(matches!(parse_graph_doc(&serialize_graph_doc(&doc)), Err(Error::Validation(_))));
}

#[test]
fn malformed_json_reports_offset() {
    let good = serialize_graph_doc(&synth_generate(&SynthParams::new(Label::Benign, 3, 1)).unwrap());
    let cut = good.len() / 2;
    match parse_graph_doc(&good[..cut]) {
        Err(Error::Parse { offset, .. }) => assert!(offset <= cut),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

fn shuffled(doc: &GraphDoc, keys: &[u64]) -> GraphDoc {
    let mut d = doc.clone();
    let mut nodes: Vec<_> = d.nodes.drain(..).zip(keys.iter().cycle()).collect();
    nodes.sort_by_key(|(_, k)| **k);
    d.nodes = nodes.into_iter().map(|(n, _)| n).collect();
    d.edges.reverse();
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialization_ignores_in_memory_order(seed in 0u64..1000, n in 1usize..30, keys in prop::collection::vec(any::<u64>(), 1..30)) {
        let doc = synth_generate(&SynthParams::native(Label::Malware, n, seed)).unwrap();
        prop_assert_eq!(serialize_graph_doc(&shuffled(&doc, &keys)), serialize_graph_doc(&doc));
    }

    #[test]
    fn node_cap_bounds_are_enforced(n in prop_oneof![Just(0usize), Just(90_001usize)]) {
        prop_assert!(matches!(synth_generate(&SynthParams::new(Label::Benign, n, 0)), Err(Error::Range(_))));
    }
}
