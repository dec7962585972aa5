use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Class;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, Matrix};
use crate::opcode_embed::sigmoid;

/// `Default` applies the logistic function after every hidden layer;
/// `LiteralFormula` chains affine maps only, `Y = (X W1 + B1) W2 + B2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkMode {
    Default,
    LiteralFormula,
}

/// Fully connected network in row-vector convention: `a <- σ(a W + b)`.
/// `weights[l]` is `sizes[l] x sizes[l + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    mode: NetworkMode,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    sizes: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    activation: String,
    mode: NetworkMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    /// `[benign, malware]`
    pub logits: [f64; 2],
    /// `logits[malware] - logits[benign]`
    pub score: f64,
}

/// Same layout as the parameters they differentiate, plus the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub input: Vec<f64>,
}

impl Mlp {
    pub fn from_parts(
        sizes: Vec<usize>,
        weights: Vec<Matrix>,
        biases: Vec<Vec<f64>>,
        mode: NetworkMode,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Shape("network needs at least an input and an output layer".into()));
        }
        if *sizes.last().unwrap() != 2 {
            return Err(Error::Shape(format!("output width must be 2, got {}", sizes.last().unwrap())));
        }
        if weights.len() != sizes.len() - 1 || biases.len() != sizes.len() - 1 {
            return Err(Error::Shape("one weight matrix and bias vector per layer".into()));
        }
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.rows() != sizes[l] || w.cols() != sizes[l + 1] || b.len() != sizes[l + 1] {
                return Err(Error::Shape(format!(
                    "layer {l}: weight {}x{}, bias {}; expected {}x{}",
                    w.rows(),
                    w.cols(),
                    b.len(),
                    sizes[l],
                    sizes[l + 1]
                )));
            }
            if !w.is_finite() || !all_finite(b) {
                return Err(Error::Numeric(format!("layer {l} parameters")));
            }
        }
        Ok(Self { sizes, weights, biases, mode })
    }

    /// Uniform Glorot initialization of weights, zero biases.
    pub fn random(sizes: &[usize], mode: NetworkMode, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in sizes.windows(2) {
            let bound = (6.0 / (pair[0] + pair[1]) as f64).sqrt();
            weights.push(Matrix::uniform(pair[0], pair[1], bound, &mut rng));
            biases.push(vec![0.0; pair[1]]);
        }
        Self::from_parts(sizes.to_vec(), weights, biases, mode)
    }

    pub fn zeros(sizes: &[usize], mode: NetworkMode) -> Result<Self> {
        let weights = sizes.windows(2).map(|p| Matrix::zeros(p[0], p[1])).collect();
        let biases = sizes.windows(2).map(|p| vec![0.0; p[1]]).collect();
        Self::from_parts(sizes.to_vec(), weights, biases, mode)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn mode(&self) -> NetworkMode {
        self.mode
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.rows() * w.cols()).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!("input has {} entries, expected {}", x.len(), self.input_dim())));
        }
        if !all_finite(x) {
            return Err(Error::Numeric("classifier input".into()));
        }
        Ok(())
    }

    /// Activations of every layer, input first, logits last.
    fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w.vec_mul(acts.last().unwrap());
            for (zi, bi) in z.iter_mut().zip(b) {
                *zi += bi;
            }
            if l < last && self.mode == NetworkMode::Default {
                z.iter_mut().for_each(|v| *v = sigmoid(*v));
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        self.check_input(x)?;
        let out = self.trace(x).pop().unwrap();
        let logits = [out[0], out[1]];
        Ok(Forward { logits, score: logits[1] - logits[0] })
    }

    /// Backpropagates `d loss / d logits` through the network evaluated at `x`.
    pub fn backward(&self, x: &[f64], d_logits: [f64; 2]) -> Result<Gradients> {
        self.check_input(x)?;
        let acts = self.trace(x);
        Ok(self.backward_from(&acts, d_logits))
    }

    fn backward_from(&self, acts: &[Vec<f64>], d_logits: [f64; 2]) -> Gradients {
        let layers = self.weights.len();
        let mut weights = vec![Matrix::zeros(0, 0); layers];
        let mut biases = vec![Vec::new(); layers];
        let mut delta = d_logits.to_vec();
        for l in (0..layers).rev() {
            let input = &acts[l];
            let mut gw = Matrix::zeros(self.sizes[l], self.sizes[l + 1]);
            for (i, &a) in input.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (g, d) in gw.row_mut(i).iter_mut().zip(&delta) {
                    *g = a * d;
                }
            }
            weights[l] = gw;
            biases[l] = delta.clone();
            // d loss / d input of this layer
            let mut d_in = self.weights[l].mul_vec(&delta);
            if l > 0 && self.mode == NetworkMode::Default {
                for (d, a) in d_in.iter_mut().zip(input) {
                    *d *= a * (1.0 - a);
                }
            }
            delta = d_in;
        }
        Gradients { weights, biases, input: delta }
    }

    pub fn l2_penalty(&self) -> f64 {
        self.weights.iter().map(Matrix::frobenius_sq).sum()
    }

    /// Softmax cross-entropy against `label` plus `l2_delta · Σ ‖W‖²_F`.
    pub fn loss(&self, x: &[f64], label: Class, l2_delta: f64) -> Result<f64> {
        let f = self.forward(x)?;
        Ok(cross_entropy(f.logits, label) + l2_delta * self.l2_penalty())
    }

    pub fn loss_and_grad(&self, x: &[f64], label: Class, l2_delta: f64) -> Result<(f64, Gradients)> {
        self.check_input(x)?;
        let acts = self.trace(x);
        let out = acts.last().unwrap();
        let logits = [out[0], out[1]];
        let p = softmax(logits);
        let y = label.one_hot();
        let d_logits = [p[0] - y[0], p[1] - y[1]];
        let mut g = self.backward_from(&acts, d_logits);
        for (gw, w) in g.weights.iter_mut().zip(&self.weights) {
            for (gi, wi) in gw.as_mut_slice().iter_mut().zip(w.as_slice()) {
                *gi += 2.0 * l2_delta * wi;
            }
        }
        Ok((cross_entropy(logits, label) + l2_delta * self.l2_penalty(), g))
    }

    /// `params -= lr * grads` (input gradient ignored).
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            for (wi, gi) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *wi -= lr * gi;
            }
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            for (bi, gi) in b.iter_mut().zip(g) {
                *bi -= lr * gi;
            }
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let file = ModelFile {
            sizes: self.sizes.clone(),
            weights: self.weights.clone(),
            biases: self.biases.clone(),
            activation: match self.mode {
                NetworkMode::Default => "logistic",
                NetworkMode::LiteralFormula => "identity",
            }
            .to_owned(),
            mode: self.mode,
        };
        crate::json::to_vec_pretty(&file).expect("model serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let f: ModelFile = serde_json::from_slice(bytes)?;
        let expected = match f.mode {
            NetworkMode::Default => "logistic",
            NetworkMode::LiteralFormula => "identity",
        };
        if f.activation != expected {
            return Err(Error::Config(format!("activation {} does not match mode", f.activation)));
        }
        Self::from_parts(f.sizes, f.weights, f.biases, f.mode)
    }
}

pub fn softmax(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

pub fn cross_entropy(logits: [f64; 2], label: Class) -> f64 {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    lse - logits[label.index()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_final_bias() {
        let mut net = Mlp::zeros(&[64, 32, 16, 2], NetworkMode::Default).unwrap();
        let f = net.forward(&[0.3; 64]).unwrap();
        assert_eq!(f.logits, [0.0, 0.0]);
        assert_eq!(f.score, 0.0);
        net.biases_mut()[2] = vec![0.25, -0.5];
        assert_eq!(net.forward(&[1.0; 64]).unwrap().logits, [0.25, -0.5]);
    }

    #[test]
    fn literal_formula_identity() {
        let net = Mlp::from_parts(
            vec![2, 2, 2],
            vec![Matrix::identity(2), Matrix::identity(2)],
            vec![vec![0.0; 2], vec![0.0; 2]],
            NetworkMode::LiteralFormula,
        )
        .unwrap();
        assert_eq!(net.forward(&[1.0, 0.0]).unwrap().logits, [1.0, 0.0]);
    }

    #[test]
    fn uniform_logits_cost_ln2() {
        let net = Mlp::zeros(&[4, 3, 2], NetworkMode::Default).unwrap();
        let l = net.loss(&[1.0, 2.0, 3.0, 4.0], Class::Malware, 0.5).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);

        let net = Mlp::random(&[4, 3, 2], NetworkMode::Default, 1).unwrap();
        let base = net.loss(&[1.0, 2.0, 3.0, 4.0], Class::Malware, 0.0).unwrap();
        let reg = net.loss(&[1.0, 2.0, 3.0, 4.0], Class::Malware, 0.5).unwrap();
        assert!((reg - base - 0.5 * net.l2_penalty()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction_costs_nothing() {
        assert!(cross_entropy([-400.0, 400.0], Class::Malware) < 1e-300);
        assert!((cross_entropy([-400.0, 400.0], Class::Benign) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let net = Mlp::zeros(&[3, 2], NetworkMode::Default).unwrap();
        assert!(matches!(net.forward(&[f64::NAN, 0.0, 0.0]), Err(Error::Numeric(_))));
        assert!(matches!(net.forward(&[0.0; 2]), Err(Error::Shape(_))));
        assert!(Mlp::zeros(&[3, 3], NetworkMode::Default).is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let net = Mlp::random(&[64, 32, 16, 2], NetworkMode::Default, 4).unwrap();
        let text = String::from_utf8(net.to_json()).unwrap();
        assert!(text.contains("\"activation\": \"logistic\"") && text.contains("\"mode\": \"default\""));
        assert_eq!(Mlp::from_json(text.as_bytes()).unwrap(), net);

        let lit = Mlp::random(&[64, 8, 2], NetworkMode::LiteralFormula, 4).unwrap();
        assert!(String::from_utf8(lit.to_json()).unwrap().contains("literal-formula"));
        assert_eq!(Mlp::from_json(&lit.to_json()).unwrap(), lit);
    }
}
