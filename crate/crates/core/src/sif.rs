//! Smooth-inverse-frequency function embeddings.
//!
//! A function's vector is the frequency-weighted mean of its instruction
//! vectors, `(1/n) Σ α/(α + p(i)) v_i`. The first left singular vector `u` of
//! the matrix whose columns are all function vectors is then projected out:
//! `v_f <- v_f - u uᵀ v_f`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, Matrix};
use crate::opcode_embed::{EmbeddingTable, Vocabulary};

pub const DEFAULT_ALPHA: f64 = 1e-3;
pub const POWER_TOLERANCE: f64 = 1e-10;
pub const POWER_MAX_ITERS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionFrequencyTable {
    pub total: u64,
    pub p: BTreeMap<String, f64>,
}

impl InstructionFrequencyTable {
    pub fn from_counts<'a, I>(counts: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, u64)>,
    {
        let counts: Vec<(&str, u64)> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        let total: u64 = counts.iter().map(|(_, c)| c).sum();
        let p = counts.into_iter().map(|(t, c)| (t.to_owned(), c as f64 / total as f64)).collect();
        Self { total, p }
    }

    /// Relative frequencies from an opcode vocabulary's counts.
    pub fn from_vocab(vocab: &Vocabulary) -> Self {
        Self::from_counts(vocab.tokens().iter().map(String::as_str).zip(vocab.counts().iter().copied()))
    }

    pub fn from_corpus<S: AsRef<str>>(corpus: &[Vec<S>]) -> Self {
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for t in corpus.iter().flatten() {
            *counts.entry(t.as_ref()).or_default() += 1;
        }
        Self::from_counts(counts)
    }

    /// Unseen tokens have probability 0.
    pub fn probability(&self, token: &str) -> f64 {
        self.p.get(token).copied().unwrap_or(0.0)
    }

    pub fn to_json(&self) -> Vec<u8> {
        crate::json::to_vec_pretty(self).expect("frequency table serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let t: Self = serde_json::from_slice(bytes)?;
        if t.p.values().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Range("instruction probability outside [0, 1]".into()));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SifConfig {
    pub alpha: f64,
}

impl Default for SifConfig {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA }
    }
}

impl SifConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha > 0.0 && self.alpha.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)))
        }
    }

    /// Weight of an instruction with corpus probability `p`.
    pub fn weight(&self, p: f64) -> f64 {
        self.alpha / (self.alpha + p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionEmbedding {
    pub function_id: String,
    pub vector: Vec<f64>,
}

/// A function to embed: its id, its instruction tokens and their vectors.
#[derive(Debug, Clone)]
pub struct FunctionInput {
    pub id: String,
    pub tokens: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl FunctionInput {
    /// Looks up each token's input vector in a trained table.
    pub fn from_table(id: impl Into<String>, tokens: Vec<String>, table: &EmbeddingTable) -> Self {
        let vectors = tokens.iter().map(|t| table.vector(t).to_vec()).collect();
        Self { id: id.into(), tokens, vectors }
    }
}

pub fn weighted_average<S: AsRef<str>>(
    vectors: &[Vec<f64>],
    tokens: &[S],
    freq: &InstructionFrequencyTable,
    cfg: &SifConfig,
) -> Result<Vec<f64>> {
    if vectors.is_empty() {
        return Err(Error::EmptyFunction);
    }
    if vectors.len() != tokens.len() {
        return Err(Error::Shape(format!("{} vectors for {} tokens", vectors.len(), tokens.len())));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Shape("instruction vectors differ in length".into()));
    }
    let mut acc = vec![0.0; dim];
    for (v, t) in vectors.iter().zip(tokens) {
        axpy(cfg.weight(freq.probability(t.as_ref())), v, &mut acc);
    }
    let n = vectors.len() as f64;
    acc.iter_mut().for_each(|x| *x /= n);
    Ok(acc)
}

/// First left singular vector of the matrix whose columns are `columns`.
///
/// Power iteration on the Gram matrix `X Xᵀ`, started from the normalized
/// all-ones vector (or, if that is orthogonal to the column space, the
/// largest column). Stops when successive iterates differ by less than
/// [`POWER_TOLERANCE`] or after [`POWER_MAX_ITERS`] steps. The sign is fixed
/// so that the largest-magnitude component is positive.
pub fn principal_direction(columns: &[Vec<f64>]) -> Result<Vec<f64>> {
    let dim = columns.first().map(Vec::len).ok_or(Error::DegenerateMatrix)?;
    if columns.iter().any(|c| c.len() != dim) {
        return Err(Error::Shape("columns differ in length".into()));
    }
    let largest = columns
        .iter()
        .map(|c| (norm(c), c))
        .fold((0.0, None), |best, (n, c)| if n > best.0 { (n, Some(c)) } else { best });
    let Some(largest) = largest.1 else {
        return Err(Error::DegenerateMatrix);
    };

    let mut gram = Matrix::zeros(dim, dim);
    for c in columns {
        for i in 0..dim {
            if c[i] == 0.0 {
                continue;
            }
            axpy(c[i], c, gram.row_mut(i));
        }
    }

    let apply = |v: &[f64]| -> Vec<f64> { gram.mul_vec(v) };
    let mut u = vec![1.0 / (dim as f64).sqrt(); dim];
    let first = apply(&u);
    // relative to the spectral scale, a vanishing image means the ones
    // vector has no component in the column space
    if norm(&first) <= 1e-12 * gram.inf_norm() {
        u = largest.iter().map(|x| x / norm(largest)).collect();
    }

    for _ in 0..POWER_MAX_ITERS {
        let mut next = apply(&u);
        let n = norm(&next);
        if n == 0.0 {
            return Err(Error::DegenerateMatrix);
        }
        next.iter_mut().for_each(|x| *x /= n);
        let delta = next.iter().zip(&u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        u = next;
        if delta < POWER_TOLERANCE {
            break;
        }
    }
    fix_sign(&mut u);
    Ok(u)
}

fn fix_sign(u: &mut [f64]) {
    let mut best = 0;
    for (i, x) in u.iter().enumerate() {
        if x.abs() > u[best].abs() {
            best = i;
        }
    }
    if u[best] < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
    }
}

/// `v - u (uᵀ v)` for unit `u`.
pub fn remove_component(v: &[f64], u: &[f64]) -> Vec<f64> {
    let proj = dot(u, v);
    v.iter().zip(u).map(|(vi, ui)| vi - proj * ui).collect()
}

/// Result of embedding a set of functions: the embeddings in input order and
/// the removed direction (absent when every weighted average was zero).
#[derive(Debug, Clone, PartialEq)]
pub struct SifOutput {
    pub embeddings: Vec<FunctionEmbedding>,
    pub direction: Option<Vec<f64>>,
}

pub fn sif_embed(functions: &[FunctionInput], freq: &InstructionFrequencyTable, cfg: &SifConfig) -> Result<SifOutput> {
    cfg.validate()?;
    if functions.is_empty() {
        return Err(Error::EmptyFunction);
    }
    let averages: Vec<Vec<f64>> =
        functions.iter().map(|f| weighted_average(&f.vectors, &f.tokens, freq, cfg)).collect::<Result<_>>()?;

    let direction = match principal_direction(&averages) {
        Ok(u) => Some(u),
        Err(Error::DegenerateMatrix) => None,
        Err(e) => return Err(e),
    };
    // A lone function spans its own principal direction, so removing that
    // direction leaves exactly nothing; skip the rounding residue.
    let lone = functions.len() == 1;
    let embeddings = functions
        .iter()
        .zip(averages)
        .map(|(f, v)| FunctionEmbedding {
            function_id: f.id.clone(),
            vector: match &direction {
                Some(_) if lone => vec![0.0; v.len()],
                Some(u) => remove_component(&v, u),
                None => v,
            },
        })
        .collect();
    Ok(SifOutput { embeddings, direction })
}

/// SIF parameters frozen after fitting on a training corpus, applied to
/// functions seen later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SifModel {
    pub alpha: f64,
    pub direction: Option<Vec<f64>>,
}

impl SifModel {
    pub fn fit(functions: &[FunctionInput], freq: &InstructionFrequencyTable, cfg: &SifConfig) -> Result<Self> {
        let out = sif_embed(functions, freq, cfg)?;
        Ok(Self { alpha: cfg.alpha, direction: out.direction })
    }

    pub fn embed(&self, function: &FunctionInput, freq: &InstructionFrequencyTable) -> Result<Vec<f64>> {
        let cfg = SifConfig { alpha: self.alpha };
        let v = weighted_average(&function.vectors, &function.tokens, freq, &cfg)?;
        Ok(match &self.direction {
            Some(u) => remove_component(&v, u),
            None => v,
        })
    }
}
