//! Fusion of the byte-code and native-code verdicts of one application.
//!
//! The default logic gate calls an app benign only when the byte-code model
//! and every native library model agree that it is benign. Apps without
//! native code take the byte-code verdict as is. The weighted mode combines
//! the two scores linearly with weights learned by logistic regression.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{verdict_for, Class};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    LogicGate,
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppRecord {
    pub app_id: String,
    pub bytecode_embedding: Vec<f64>,
    pub native_embeddings: Vec<Vec<f64>>,
    pub true_label: Option<Class>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleVerdict {
    pub app_id: String,
    #[serde(rename = "final")]
    pub final_verdict: Class,
    pub bytecode_score: f64,
    pub native_scores: Vec<f64>,
    pub mode: EnsembleMode,
}

pub fn combine_logic(bytecode: Class, native: &[Class]) -> Class {
    if bytecode == Class::Benign && native.iter().all(|&v| v == Class::Benign) {
        Class::Benign
    } else {
        Class::Malware
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub w_b: f64,
    pub w_n: f64,
    pub bias: f64,
}

/// `score = w_b s_b + w_n s_n + bias`; malware iff the score is positive.
pub fn combine_weighted(bytecode_score: f64, native_score: f64, weights: &EnsembleWeights) -> (f64, Class) {
    let s = weights.w_b * bytecode_score + weights.w_n * native_score + weights.bias;
    (s, verdict_for(s))
}

/// Logistic regression on `(s_b, s_n)` pairs, fitted by seeded SGD.
pub fn train_weights(samples: &[(f64, f64, Class)], seed: u64) -> Result<EnsembleWeights> {
    let has = |c: Class| samples.iter().any(|s| s.2 == c);
    if !has(Class::Malware) || !has(Class::Benign) {
        return Err(Error::DegenerateDataset("ensemble training needs both classes".into()));
    }
    if samples.iter().any(|s| !s.0.is_finite() || !s.1.is_finite()) {
        return Err(Error::Numeric("ensemble training scores".into()));
    }
    const EPOCHS: usize = 200;
    const L2: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = [rng.gen_range(-0.01..0.01), rng.gen_range(-0.01..0.01), 0.0];
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..EPOCHS {
        let lr = 0.1 / (1.0 + epoch as f64 / 20.0);
        order.shuffle(&mut rng);
        for &i in &order {
            let (sb, sn, y) = samples[i];
            let z = w[0] * sb + w[1] * sn + w[2];
            let p = crate::opcode_embed::sigmoid(z);
            let err = p - if y.is_malware() { 1.0 } else { 0.0 };
            w[0] -= lr * (err * sb + L2 * w[0]);
            w[1] -= lr * (err * sn + L2 * w[1]);
            w[2] -= lr * err;
        }
    }
    Ok(EnsembleWeights { w_b: w[0], w_n: w[1], bias: w[2] })
}

/// Per-app fusion in either mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Fuser {
    pub mode: EnsembleMode,
    pub weights: Option<EnsembleWeights>,
}

impl Fuser {
    pub fn logic_gate() -> Self {
        Self { mode: EnsembleMode::LogicGate, weights: None }
    }

    pub fn weighted(weights: Option<EnsembleWeights>) -> Self {
        Self { mode: EnsembleMode::Weighted, weights }
    }

    /// Fuses one app's scores. In weighted mode the native score is the max
    /// over the app's libraries; apps without native code fall back to the
    /// logic rule, which then reduces to the byte-code verdict.
    pub fn fuse(&self, app_id: &str, bytecode_score: f64, native_scores: &[f64]) -> Result<EnsembleVerdict> {
        let final_verdict = match self.mode {
            EnsembleMode::LogicGate => logic_from_scores(bytecode_score, native_scores),
            EnsembleMode::Weighted => {
                let weights = self.weights.as_ref().ok_or(Error::NotTrained)?;
                match native_scores.iter().copied().reduce(f64::max) {
                    Some(native) => combine_weighted(bytecode_score, native, weights).1,
                    None => logic_from_scores(bytecode_score, native_scores),
                }
            }
        };
        Ok(EnsembleVerdict {
            app_id: app_id.to_owned(),
            final_verdict,
            bytecode_score,
            native_scores: native_scores.to_vec(),
            mode: self.mode,
        })
    }
}

fn logic_from_scores(bytecode_score: f64, native_scores: &[f64]) -> Class {
    let native: Vec<Class> = native_scores.iter().map(|&s| verdict_for(s)).collect();
    combine_logic(verdict_for(bytecode_score), &native)
}

/// One verdict per line.
pub fn verdicts_to_jsonl(verdicts: &[EnsembleVerdict]) -> Vec<u8> {
    let mut out = Vec::new();
    for v in verdicts {
        out.extend(crate::json::to_vec_compact(v).expect("verdict serializes"));
        out.push(b'\n');
    }
    out
}

pub fn verdicts_from_jsonl(bytes: &[u8]) -> Result<Vec<EnsembleVerdict>> {
    bytes
        .split(|&b| b == b'\n')
        .filter(|l| !l.iter().all(u8::is_ascii_whitespace))
        .map(|l| serde_json::from_slice(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use Class::{Benign as B, Malware as M};

    #[test]
    fn passthrough_without_native() {
        assert_eq!(combine_logic(B, &[]), B);
        assert_eq!(combine_logic(M, &[]), M);
    }

    #[test]
    fn any_malicious_library_flags_the_app() {
        assert_eq!(combine_logic(B, &[B, M]), M);
        assert_eq!(combine_logic(M, &[B]), M);
        assert_eq!(combine_logic(B, &[B, B]), B);
    }

    #[test]
    fn weighted_arithmetic() {
        let w = EnsembleWeights { w_b: 0.5, w_n: 0.5, bias: 0.0 };
        assert_eq!(combine_weighted(2.0, -1.0, &w), (0.5, M));
        let bytecode_only = EnsembleWeights { w_b: 1.0, w_n: 0.0, bias: 0.0 };
        for s in [-3.0, -0.1, 0.0, 0.1, 3.0] {
            assert_eq!(combine_weighted(s, 100.0, &bytecode_only).1, verdict_for(s));
        }
    }

    #[test]
    fn weighted_mode_needs_weights() {
        assert!(matches!(Fuser::weighted(None).fuse("a", 1.0, &[1.0]), Err(Error::NotTrained)));
    }

    #[test]
    fn weighted_mode_uses_max_native_score() {
        let w = EnsembleWeights { w_b: 0.0, w_n: 1.0, bias: 0.0 };
        let v = Fuser::weighted(Some(w)).fuse("a", -5.0, &[-1.0, 0.5, -3.0]).unwrap();
        assert_eq!(v.final_verdict, M);
        let v = Fuser::weighted(Some(w)).fuse("a", -5.0, &[]).unwrap();
        assert_eq!(v.final_verdict, B);
    }

    #[test]
    fn single_class_training_rejected() {
        assert!(matches!(train_weights(&[(1.0, 1.0, M)], 0), Err(Error::DegenerateDataset(_))));
    }

    #[test]
    fn training_is_seeded() {
        let data = vec![(1.0, 0.5, M), (-1.0, -0.2, B), (0.3, 1.0, M), (-0.5, 0.1, B)];
        assert_eq!(train_weights(&data, 4).unwrap(), train_weights(&data, 4).unwrap());
    }

    #[test]
    fn jsonl_round_trip() {
        let f = Fuser::logic_gate();
        let vs = vec![f.fuse("a", 1.5, &[]).unwrap(), f.fuse("b", -0.25, &[-1.0, 2.0]).unwrap()];
        let bytes = verdicts_to_jsonl(&vs);
        assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 2);
        assert_eq!(verdicts_from_jsonl(&bytes).unwrap(), vs);
    }
}
