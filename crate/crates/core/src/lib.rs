//! Two-layer Android malware detection over program graphs.
//!
//! Byte-code program dependence graphs and native function call graphs are
//! turned into 64-dimensional vectors (skip-gram opcode embeddings, SIF
//! function embeddings, Structure2Vec message passing), classified by a small
//! MLP per layer, fused per application, and stress-tested with
//! gradient-sign perturbations.

pub mod adversarial;
pub mod classifier;
pub mod ensemble;
pub mod error;
pub mod featurize;
pub mod graph_ir;
pub mod json;
pub mod linalg;
pub mod opcode_embed;
pub mod sif;
pub mod struct2vec;

pub use error::{Error, Result};

/// Width of every opcode, node and graph embedding.
pub const EMBED_DIM: usize = 64;
