//! Opcode vocabulary, skip-gram embeddings with negative sampling, and
//! basic-block vectors.
//!
//! Training uses a window of one: every position contributes the pairs
//! `(t[i], t[i-1])` and `(t[i], t[i+1])` where they exist. Each pair is scored
//! with the negative-sampling objective
//!
//! ```text
//! loss = -ln σ(u_ctx · v_c) - Σ_neg ln σ(-u_neg · v_c)
//! ```
//!
//! where `v` are input (center) vectors and `u` output (context) vectors.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Matrix};
use crate::EMBED_DIM;

pub const OOV_TOKEN: &str = "<oov>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<u64>,
}

impl Vocabulary {
    fn from_parts(tokens: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(OOV_TOKEN) {
            return Err(Error::Config(format!("vocabulary must start with {OOV_TOKEN}")));
        }
        if tokens.len() != counts.len() {
            return Err(Error::Shape("token and count lists differ in length".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate token {t}")));
            }
        }
        Ok(Self { tokens, index, counts })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of `token`, or 0 (the OOV slot) if unseen.
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts[index]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Counts every token and orders the vocabulary by (count desc, token asc),
/// after the OOV slot at index 0.
pub fn build_vocab<S: AsRef<str>>(corpus: &[Vec<S>]) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for seq in corpus {
        for t in seq {
            *counts.entry(t.as_ref()).or_default() += 1;
        }
    }
    counts.remove(OOV_TOKEN);
    let mut ordered: Vec<(&str, u64)> = counts.into_iter().collect();
    ordered.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    let mut tokens = vec![OOV_TOKEN.to_owned()];
    let mut cnt = vec![0];
    for (t, c) in ordered {
        tokens.push(t.to_owned());
        cnt.push(c);
    }
    Vocabulary::from_parts(tokens, cnt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub window: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self { window: 1, negatives: 5, learning_rate: 0.025, epochs: 5, seed: 0 }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window != 1 {
            return Err(Error::Config(format!("window must be 1, got {}", self.window)));
        }
        if self.negatives < 1 {
            return Err(Error::Config("at least one negative sample is required".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vocab: Vocabulary,
    input: Matrix,
    output: Matrix,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    dim: usize,
    tokens: Vec<String>,
    #[serde(default)]
    counts: Vec<u64>,
    input: Matrix,
    output: Matrix,
}

impl EmbeddingTable {
    /// Input vectors uniform in `[-0.5/dim, 0.5/dim]`, output vectors zero.
    pub fn initialize(vocab: Vocabulary, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 0.5 / EMBED_DIM as f64;
        let input = Matrix::uniform(vocab.len(), EMBED_DIM, bound, &mut rng);
        let output = Matrix::zeros(vocab.len(), EMBED_DIM);
        Self { vocab, input, output }
    }

    pub fn from_parts(vocab: Vocabulary, input: Matrix, output: Matrix) -> Result<Self> {
        for m in [&input, &output] {
            if m.rows() != vocab.len() || m.cols() != EMBED_DIM {
                return Err(Error::Shape(format!(
                    "embedding matrix is {}x{}, expected {}x{EMBED_DIM}",
                    m.rows(),
                    m.cols(),
                    vocab.len()
                )));
            }
            if !m.is_finite() {
                return Err(Error::Numeric("embedding matrix".into()));
            }
        }
        Ok(Self { vocab, input, output })
    }

    pub fn dim(&self) -> usize {
        EMBED_DIM
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn input_vectors(&self) -> &Matrix {
        &self.input
    }

    pub fn output_vectors(&self) -> &Matrix {
        &self.output
    }

    pub fn input_vectors_mut(&mut self) -> &mut Matrix {
        &mut self.input
    }

    pub fn output_vectors_mut(&mut self) -> &mut Matrix {
        &mut self.output
    }

    /// Input vector of `token`, falling back to the OOV vector.
    pub fn vector(&self, token: &str) -> &[f64] {
        self.input.row(self.vocab.lookup(token))
    }

    /// σ(u_ctx · v_center): the model's affinity for a (center, context) pair.
    pub fn pair_score(&self, center: usize, context: usize) -> f64 {
        sigmoid(dot(self.input.row(center), self.output.row(context)))
    }

    pub fn to_json(&self) -> Vec<u8> {
        let file = TableFile {
            dim: EMBED_DIM,
            tokens: self.vocab.tokens.clone(),
            counts: self.vocab.counts.clone(),
            input: self.input.clone(),
            output: self.output.clone(),
        };
        crate::json::to_vec_pretty(&file).expect("embedding table serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let f: TableFile = serde_json::from_slice(bytes)?;
        if f.dim != EMBED_DIM {
            return Err(Error::Shape(format!("dim {} != {EMBED_DIM}", f.dim)));
        }
        let counts = if f.counts.is_empty() { vec![0; f.tokens.len()] } else { f.counts };
        let vocab = Vocabulary::from_parts(f.tokens, counts)?;
        Self::from_parts(vocab, f.input, f.output)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln σ(x)` evaluated without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// Exact partial derivatives of one pair's loss with respect to the rows it
/// touches. Repeated negatives are accumulated into a single entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramGrads {
    /// d loss / d input[center]
    pub center: Vec<f64>,
    /// (row, d loss / d output[row]) for the context and every negative
    pub outputs: Vec<(usize, Vec<f64>)>,
}

pub fn skipgram_loss_grad(
    table: &EmbeddingTable,
    center: usize,
    context: usize,
    negatives: &[usize],
) -> Result<(f64, SkipGramGrads)> {
    let len = table.vocab.len();
    for &i in std::iter::once(&center).chain(std::iter::once(&context)).chain(negatives) {
        if i >= len {
            return Err(Error::Index { index: i, len });
        }
    }
    if negatives.contains(&context) {
        return Err(Error::Config(format!("negative samples must exclude the context {context}")));
    }

    let v = table.input.row(center);
    let mut center_grad = vec![0.0; EMBED_DIM];
    let mut outputs: Vec<(usize, Vec<f64>)> = Vec::with_capacity(1 + negatives.len());

    // positive: d/dx [-ln σ(x)] = σ(x) - 1
    let u = table.output.row(context);
    let x = dot(u, v);
    let mut loss = neg_log_sigmoid(x);
    let g = sigmoid(x) - 1.0;
    axpy(g, u, &mut center_grad);
    outputs.push((context, v.iter().map(|vi| g * vi).collect()));

    // negative: d/dx [-ln σ(-x)] = σ(x)
    for &neg in negatives {
        let u = table.output.row(neg);
        let x = dot(u, v);
        loss += neg_log_sigmoid(-x);
        let g = sigmoid(x);
        axpy(g, u, &mut center_grad);
        match outputs.iter_mut().find(|(row, _)| *row == neg) {
            Some((_, acc)) => axpy(g, v, acc),
            None => outputs.push((neg, v.iter().map(|vi| g * vi).collect())),
        }
    }
    Ok((loss, SkipGramGrads { center: center_grad, outputs }))
}

/// Window-1 (center, context) index pairs of one sequence, in order.
pub fn window_pairs(seq: &[usize]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(2 * seq.len().saturating_sub(1));
    for i in 0..seq.len() {
        if i > 0 {
            pairs.push((seq[i], seq[i - 1]));
        }
        if i + 1 < seq.len() {
            pairs.push((seq[i], seq[i + 1]));
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramRun {
    pub table: EmbeddingTable,
    /// Mean pair loss over the whole corpus after each epoch, evaluated with
    /// one fixed set of noise samples per pair so that epochs are comparable.
    pub epoch_losses: Vec<f64>,
}

pub fn train_skipgram<S: AsRef<str>>(corpus: &[Vec<S>], config: &SkipGramConfig) -> Result<EmbeddingTable> {
    train_skipgram_logged(corpus, config).map(|run| run.table)
}

/// Draws `k` noise tokens different from `context` into `out`. Vocabularies
/// too small to offer anything else may yield fewer.
fn draw_negatives<R: Rng>(
    noise: Option<&WeightedIndex<f64>>,
    k: usize,
    context: usize,
    rng: &mut R,
    out: &mut Vec<usize>,
) {
    out.clear();
    let Some(noise) = noise else { return };
    for _ in 0..k {
        for _ in 0..8 {
            let n = noise.sample(rng);
            if n != context {
                out.push(n);
                break;
            }
        }
    }
}

fn pair_loss(table: &EmbeddingTable, center: usize, context: usize, negatives: &[usize]) -> f64 {
    let v = table.input.row(center);
    let mut loss = neg_log_sigmoid(dot(table.output.row(context), v));
    for &n in negatives {
        loss += neg_log_sigmoid(-dot(table.output.row(n), v));
    }
    loss
}

pub fn train_skipgram_logged<S: AsRef<str>>(corpus: &[Vec<S>], config: &SkipGramConfig) -> Result<SkipGramRun> {
    config.validate()?;
    let vocab = build_vocab(corpus)?;
    let mut table = EmbeddingTable::initialize(vocab, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));

    let encoded: Vec<Vec<usize>> =
        corpus.iter().map(|seq| seq.iter().map(|t| table.vocab.lookup(t.as_ref())).collect()).collect();
    let pairs: Vec<(usize, usize)> = encoded.iter().flat_map(|s| window_pairs(s)).collect();

    // unigram^0.75 noise; OOV never appears in training data so it has weight 0
    let noise_weights: Vec<f64> = table.vocab.counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let noise = WeightedIndex::new(&noise_weights).ok();

    let mut eval_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut scratch = Vec::with_capacity(config.negatives);
    let eval_negatives: Vec<Vec<usize>> = pairs
        .iter()
        .map(|&(_, context)| {
            draw_negatives(noise.as_ref(), config.negatives, context, &mut eval_rng, &mut scratch);
            scratch.clone()
        })
        .collect();
    let corpus_loss = |table: &EmbeddingTable| {
        if pairs.is_empty() {
            return 0.0;
        }
        let total: f64 =
            pairs.iter().zip(&eval_negatives).map(|(&(c, ctx), negs)| pair_loss(table, c, ctx, negs)).sum();
        total / pairs.len() as f64
    };

    let total_steps = (pairs.len() * config.epochs).max(1) as f64;
    let floor = 1e-4;
    let mut step = 0usize;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut negatives = Vec::with_capacity(config.negatives);

    for _ in 0..config.epochs {
        for &(center, context) in &pairs {
            let progress = step as f64 / total_steps;
            let lr = config.learning_rate * (1.0 - (1.0 - floor) * progress);
            step += 1;

            draw_negatives(noise.as_ref(), config.negatives, context, &mut rng, &mut negatives);
            let (_, grads) = skipgram_loss_grad(&table, center, context, &negatives)?;
            axpy(-lr, &grads.center, table.input.row_mut(center));
            for (row, g) in &grads.outputs {
                axpy(-lr, g, table.output.row_mut(*row));
            }
        }
        epoch_losses.push(corpus_loss(&table));
    }
    Ok(SkipGramRun { table, epoch_losses })
}

/// Arithmetic mean of the input vectors of a block's opcodes.
pub fn block_embedding<S: AsRef<str>>(table: &EmbeddingTable, opcodes: &[S]) -> Result<Vec<f64>> {
    if opcodes.is_empty() {
        return Err(Error::EmptyBlock);
    }
    let mut acc = vec![0.0; EMBED_DIM];
    for t in opcodes {
        axpy(1.0, table.vector(t.as_ref()), &mut acc);
    }
    let n = opcodes.len() as f64;
    acc.iter_mut().for_each(|x| *x /= n);
    Ok(acc)
}

/// One whitespace-separated opcode sequence per non-empty line.
pub fn parse_corpus(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split_whitespace().map(str::to_owned).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn write_corpus<S: AsRef<str>>(corpus: &[Vec<S>]) -> String {
    let mut out = String::new();
    for seq in corpus {
        let line: Vec<&str> = seq.iter().map(AsRef::as_ref).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}
