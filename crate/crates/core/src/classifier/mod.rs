//! Per-layer malware classifier: a small MLP over 64-dim graph embeddings,
//! its SGD trainer and evaluation metrics.

mod metrics;
mod mlp;
mod scaling;

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use metrics::{compute_metrics, evaluate, metrics_from_scores, roc_auc, Confusion, Metrics, RocCurve, RocPoint};
pub use mlp::{cross_entropy, softmax, Forward, Gradients, Mlp, NetworkMode};
pub use scaling::Standardizer;

use crate::error::{Error, Result};
use crate::graph_ir::Label;
use crate::EMBED_DIM;

/// Binary class; malware is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    Benign,
    Malware,
}

impl Class {
    /// Output neuron: 0 for benign, 1 for malware.
    pub fn index(self) -> usize {
        match self {
            Class::Benign => 0,
            Class::Malware => 1,
        }
    }

    pub fn one_hot(self) -> [f64; 2] {
        match self {
            Class::Benign => [1.0, 0.0],
            Class::Malware => [0.0, 1.0],
        }
    }

    pub fn is_malware(self) -> bool {
        self == Class::Malware
    }
}

impl TryFrom<Label> for Class {
    type Error = Error;

    fn try_from(label: Label) -> Result<Self> {
        match label {
            Label::Malware => Ok(Class::Malware),
            Label::Benign => Ok(Class::Benign),
            Label::Unknown => Err(Error::DegenerateDataset("sample has unknown label".into())),
        }
    }
}

impl From<Class> for Label {
    fn from(c: Class) -> Label {
        match c {
            Class::Malware => Label::Malware,
            Class::Benign => Label::Benign,
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Class::Benign => "benign",
            Class::Malware => "malware",
        })
    }
}

/// Malware iff the score is strictly positive; a zero score is benign.
pub fn predict(params: &Mlp, x: &[f64]) -> Result<(Class, f64)> {
    let f = params.forward(x)?;
    Ok((verdict_for(f.score), f.score))
}

pub fn verdict_for(score: f64) -> Class {
    if score > 0.0 {
        Class::Malware
    } else {
        Class::Benign
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub split: f64,
    pub learning_rate: f64,
    pub l2_delta: f64,
    pub hidden: Vec<usize>,
    pub mode: NetworkMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 1,
            split: 0.70,
            learning_rate: 0.01,
            l2_delta: 0.0,
            hidden: vec![32, 16],
            mode: NetworkMode::Default,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Config(format!("split {} not in (0, 1)", self.split)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.l2_delta >= 0.0 && self.l2_delta.is_finite()) {
            return Err(Error::Config("l2_delta must be non-negative".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layers must be non-empty".into()));
        }
        Ok(())
    }

    /// `[64, hidden..., 2]`
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![EMBED_DIM];
        s.extend(&self.hidden);
        s.push(2);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: Mlp,
    /// Mean training loss of each epoch (measured before each update).
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch SGD (batch size 1 by default) with a seeded per-epoch shuffle.
pub fn train_classifier(dataset: &[(Vec<f64>, Class)], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let has = |c: Class| dataset.iter().any(|(_, l)| *l == c);
    if !has(Class::Malware) || !has(Class::Benign) {
        return Err(Error::DegenerateDataset("training data must contain both classes".into()));
    }
    let mut params = Mlp::random(&cfg.sizes(), cfg.mode, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Option<Gradients> = None;
            for &i in batch {
                let (x, y) = &dataset[i];
                let (loss, g) = params.loss_and_grad(x, *y, cfg.l2_delta)?;
                total += loss;
                match &mut acc {
                    None => acc = Some(g),
                    Some(a) => accumulate(a, &g),
                }
            }
            let acc = acc.expect("chunks are non-empty");
            params.apply_gradients(&acc, cfg.learning_rate / batch.len() as f64);
        }
        let mean = total / dataset.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Numeric("training loss diverged".into()));
        }
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome { params, epoch_losses })
}

fn accumulate(into: &mut Gradients, g: &Gradients) {
    for (a, b) in into.weights.iter_mut().zip(&g.weights) {
        for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
            *x += y;
        }
    }
    for (a, b) in into.biases.iter_mut().zip(&g.biases) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    }
}
