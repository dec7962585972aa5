//! Gradient-sign perturbations of graph embeddings.
//!
//! The attack loss is the squared error between the network output and the
//! one-hot label, `‖f(x) - Y‖²`. A sample is pushed one step of size ε along
//! `sign(∇_x loss)`, which increases the loss to first order.

use serde::{Deserialize, Serialize};

use crate::classifier::{predict, Class, Mlp};
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 0.05;
pub const CURVE_SIZES: [usize; 4] = [100, 500, 1000, 2000];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub epsilon: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self { epsilon: DEFAULT_EPSILON }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon >= 0.0 && self.epsilon.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("epsilon must be a non-negative number, got {}", self.epsilon)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialSample {
    pub original: Vec<f64>,
    pub perturbation: Vec<f64>,
    pub crafted: Vec<f64>,
}

/// A crafted sample together with the model's verdicts before and after.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub sample: AdversarialSample,
    pub clean_verdict: Class,
    pub adv_verdict: Class,
}

pub fn attack_loss(params: &Mlp, x: &[f64], y: Class) -> Result<f64> {
    let f = params.forward(x)?;
    let t = y.one_hot();
    Ok((f.logits[0] - t[0]).powi(2) + (f.logits[1] - t[1]).powi(2))
}

/// Exact `∂ attack_loss / ∂ x`.
pub fn input_gradient(params: &Mlp, x: &[f64], y: Class) -> Result<Vec<f64>> {
    let f = params.forward(x)?;
    let t = y.one_hot();
    let d = [2.0 * (f.logits[0] - t[0]), 2.0 * (f.logits[1] - t[1])];
    Ok(params.backward(x, d)?.input)
}

/// `sign(0) = 0`, so coordinates with a zero gradient are left alone.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn craft(x: &[f64], grad: &[f64], cfg: &AttackConfig) -> AdversarialSample {
    debug_assert_eq!(x.len(), grad.len());
    let perturbation: Vec<f64> = grad.iter().map(|&g| cfg.epsilon * sign(g)).collect();
    let crafted = x.iter().zip(&perturbation).map(|(a, p)| a + p).collect();
    AdversarialSample { original: x.to_vec(), perturbation, crafted }
}

/// Crafts an adversarial version of `x` against its own label.
pub fn attack(params: &Mlp, x: &[f64], label: Class, cfg: &AttackConfig) -> Result<AttackOutcome> {
    cfg.validate()?;
    let grad = input_gradient(params, x, label)?;
    let sample = craft(x, &grad, cfg);
    let (clean_verdict, _) = predict(params, x)?;
    let (adv_verdict, _) = predict(params, &sample.crafted)?;
    Ok(AttackOutcome { sample, clean_verdict, adv_verdict })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub clean: f64,
    pub adv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub epsilon: f64,
    pub clean: f64,
    pub adversarial: f64,
    pub curve: Vec<CurvePoint>,
}

impl RobustnessReport {
    pub fn to_json(&self) -> Vec<u8> {
        crate::json::to_vec_pretty(self).expect("report serializes")
    }
}

/// Clean vs adversarial accuracy over the whole test set and over each
/// prefix of the requested sizes that the set can supply.
pub fn robustness_eval(
    params: &Mlp,
    testset: &[(Vec<f64>, Class)],
    cfg: &AttackConfig,
    sizes: &[usize],
) -> Result<RobustnessReport> {
    cfg.validate()?;
    if testset.is_empty() {
        return Err(Error::DegenerateDataset("robustness evaluation needs samples".into()));
    }
    let mut clean_hits = Vec::with_capacity(testset.len());
    let mut adv_hits = Vec::with_capacity(testset.len());
    for (x, y) in testset {
        let out = attack(params, x, *y, cfg)?;
        clean_hits.push(out.clean_verdict == *y);
        adv_hits.push(out.adv_verdict == *y);
    }
    let accuracy = |hits: &[bool]| hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64;
    let curve = sizes
        .iter()
        .filter(|&&n| n >= 1 && n <= testset.len())
        .map(|&n| CurvePoint { n, clean: accuracy(&clean_hits[..n]), adv: accuracy(&adv_hits[..n]) })
        .collect();
    Ok(RobustnessReport { epsilon: cfg.epsilon, clean: accuracy(&clean_hits), adversarial: accuracy(&adv_hits), curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::NetworkMode;
    use crate::linalg::Matrix;

    fn literal_2d(w1: [[f64; 2]; 2], b1: [f64; 2], w2: [[f64; 2]; 2], b2: [f64; 2]) -> Mlp {
        Mlp::from_parts(
            vec![2, 2, 2],
            vec![
                Matrix::from_rows(&[w1[0].to_vec(), w1[1].to_vec()]).unwrap(),
                Matrix::from_rows(&[w2[0].to_vec(), w2[1].to_vec()]).unwrap(),
            ],
            vec![b1.to_vec(), b2.to_vec()],
            NetworkMode::LiteralFormula,
        )
        .unwrap()
    }

    #[test]
    fn exact_fit_has_zero_loss_and_gradient() {
        let net = literal_2d([[1.0, 0.0], [0.0, 1.0]], [0.0; 2], [[1.0, 0.0], [0.0, 1.0]], [0.0; 2]);
        // output equals one-hot malware = (0, 1)
        assert_eq!(attack_loss(&net, &[0.0, 1.0], Class::Malware).unwrap(), 0.0);
        assert_eq!(input_gradient(&net, &[0.0, 1.0], Class::Malware).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn constant_network_loss() {
        let mut net = Mlp::zeros(&[3, 2], NetworkMode::Default).unwrap();
        net.biases_mut()[0] = vec![0.5, -1.0];
        // Y = (1, 0): (0.5 - 1)^2 + (-1 - 0)^2
        assert_eq!(attack_loss(&net, &[9.0, 9.0, 9.0], Class::Benign).unwrap(), 1.25);
    }

    #[test]
    fn literal_formula_gradient_in_closed_form() {
        let w1 = [[0.5, -1.0], [2.0, 0.25]];
        let b1 = [0.1, -0.2];
        let w2 = [[1.5, 0.3], [-0.7, 0.9]];
        let b2 = [0.05, -0.4];
        let net = literal_2d(w1, b1, w2, b2);
        let x = [0.3, -0.6];
        let y = Class::Malware.one_hot();
        // W = W1 W2
        let w = |i: usize, j: usize| w1[i][0] * w2[0][j] + w1[i][1] * w2[1][j];
        let h = [x[0] * w1[0][0] + x[1] * w1[1][0] + b1[0], x[0] * w1[0][1] + x[1] * w1[1][1] + b1[1]];
        let out = [h[0] * w2[0][0] + h[1] * w2[1][0] + b2[0], h[0] * w2[0][1] + h[1] * w2[1][1] + b2[1]];
        let r = [out[0] - y[0], out[1] - y[1]];
        let expected = [2.0 * (r[0] * w(0, 0) + r[1] * w(0, 1)), 2.0 * (r[0] * w(1, 0) + r[1] * w(1, 1))];
        let got = input_gradient(&net, &x, Class::Malware).unwrap();
        for k in 0..2 {
            assert!((got[k] - expected[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn craft_follows_sign() {
        let cfg = AttackConfig { epsilon: 0.1 };
        let s = craft(&[1.0, 1.0, 1.0], &[3.0, -0.2, 0.0], &cfg);
        assert_eq!(s.perturbation, vec![0.1, -0.1, 0.0]);
        assert_eq!(s.crafted, vec![1.1, 0.9, 1.0]);
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let s = craft(&[0.2, -0.4], &[1.0, -1.0], &AttackConfig { epsilon: 0.0 });
        assert_eq!(s.crafted, s.original);
    }

    #[test]
    fn negative_epsilon_rejected() {
        let net = Mlp::zeros(&[2, 2], NetworkMode::Default).unwrap();
        let r = robustness_eval(&net, &[(vec![0.0; 2], Class::Benign)], &AttackConfig { epsilon: -1.0 }, &[]);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn empty_testset_rejected() {
        let net = Mlp::zeros(&[2, 2], NetworkMode::Default).unwrap();
        assert!(matches!(
            robustness_eval(&net, &[], &AttackConfig::default(), &CURVE_SIZES),
            Err(Error::DegenerateDataset(_))
        ));
    }

    #[test]
    fn curve_only_for_available_sizes() {
        let net = Mlp::random(&[2, 4, 2], NetworkMode::Default, 1).unwrap();
        let set: Vec<_> = (0..600).map(|i| (vec![i as f64 / 600.0, 0.5], Class::Benign)).collect();
        let r = robustness_eval(&net, &set, &AttackConfig::default(), &CURVE_SIZES).unwrap();
        assert_eq!(r.curve.iter().map(|c| c.n).collect::<Vec<_>>(), vec![100, 500]);
    }
}
