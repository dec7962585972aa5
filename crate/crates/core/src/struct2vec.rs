//! Structure2Vec graph embedding.
//!
//! Node states start at zero and are updated `T` times with
//!
//! ```text
//! l_v    = Σ_{u ∈ N(v)} μ_u
//! μ_v'   = tanh(W1 x_v + σ(l_v))
//! ```
//!
//! where `N(v)` is the union of in- and out-neighbours. The graph embedding
//! is `W2` applied to the vertex mean of the final states (or, with
//! [`Readout::Mean`], to the average over iterations of those vertex means).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_ir::AdjacencyMatrix;
use crate::linalg::{axpy, Matrix};

pub const DEFAULT_ITERATIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Relu,
    Identity,
}

impl Aggregation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Aggregation::Relu => x.max(0.0),
            Aggregation::Identity => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    Last,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S2VParams {
    #[serde(rename = "T")]
    pub iterations: usize,
    pub sigma: Aggregation,
    pub readout: Readout,
    #[serde(rename = "W1")]
    pub w1: Matrix,
    #[serde(rename = "W2")]
    pub w2: Matrix,
    pub seed: u64,
}

impl S2VParams {
    /// Square `dim x dim` weights drawn uniformly from `±1/sqrt(dim)`.
    pub fn random(dim: usize, iterations: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (dim as f64).sqrt();
        let w1 = Matrix::uniform(dim, dim, bound, &mut rng);
        let w2 = Matrix::uniform(dim, dim, bound, &mut rng);
        Self { iterations, sigma: Aggregation::Relu, readout: Readout::Last, w1, w2, seed }
    }

    pub fn dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("Structure2Vec needs at least one iteration".into()));
        }
        let d = self.w1.rows();
        if self.w1.cols() != d || self.w2.cols() != d {
            return Err(Error::Shape(format!(
                "W1 is {}x{}, W2 is {}x{}; both must take {d}-dim inputs",
                self.w1.rows(),
                self.w1.cols(),
                self.w2.rows(),
                self.w2.cols()
            )));
        }
        if !self.w1.is_finite() || !self.w2.is_finite() {
            return Err(Error::Numeric("Structure2Vec weights".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Vec<u8> {
        crate::json::to_vec_pretty(self).expect("parameters serialize")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let p: Self = serde_json::from_slice(bytes)?;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationState {
    pub mu: Matrix,
    pub iteration: usize,
}

pub fn init_state(n_nodes: usize, params: &S2VParams) -> Result<PropagationState> {
    if n_nodes < 1 {
        return Err(Error::Range("graph must have at least one node".into()));
    }
    Ok(PropagationState { mu: Matrix::zeros(n_nodes, params.dim()), iteration: 0 })
}

fn check_shapes(state: &PropagationState, features: &Matrix, adj: &AdjacencyMatrix, params: &S2VParams) -> Result<()> {
    let n = adj.n();
    let d = params.dim();
    if features.rows() != n || features.cols() != params.w1.cols() {
        return Err(Error::Shape(format!(
            "features are {}x{}, expected {n}x{}",
            features.rows(),
            features.cols(),
            params.w1.cols()
        )));
    }
    if state.mu.rows() != n || state.mu.cols() != d {
        return Err(Error::Shape(format!("state is {}x{}, expected {n}x{d}", state.mu.rows(), state.mu.cols())));
    }
    Ok(())
}

/// `W1 x_v` for every node, as rows.
fn project_features(features: &Matrix, params: &S2VParams) -> Matrix {
    let mut out = Matrix::zeros(features.rows(), params.dim());
    for v in 0..features.rows() {
        out.row_mut(v).copy_from_slice(&params.w1.mul_vec(features.row(v)));
    }
    out
}

fn step(mu: &Matrix, projected: &Matrix, neighbors: &[Vec<usize>], sigma: Aggregation) -> Matrix {
    let d = mu.cols();
    let mut next = Matrix::zeros(mu.rows(), d);
    let mut l = vec![0.0; d];
    for (v, nb) in neighbors.iter().enumerate() {
        l.fill(0.0);
        for &u in nb {
            axpy(1.0, mu.row(u), &mut l);
        }
        let out = next.row_mut(v);
        for k in 0..d {
            out[k] = (projected[(v, k)] + sigma.apply(l[k])).tanh();
        }
    }
    next
}

/// One synchronous update of every node state. The input state is untouched.
pub fn propagate_step(
    state: &PropagationState,
    features: &Matrix,
    adj: &AdjacencyMatrix,
    params: &S2VParams,
) -> Result<PropagationState> {
    params.validate()?;
    check_shapes(state, features, adj, params)?;
    if state.iteration >= params.iterations {
        return Err(Error::Range(format!("state already at iteration {}", state.iteration)));
    }
    let projected = project_features(features, params);
    let mu = step(&state.mu, &projected, &adj.undirected_neighbors(), params.sigma);
    Ok(PropagationState { mu, iteration: state.iteration + 1 })
}

fn vertex_mean(mu: &Matrix) -> Vec<f64> {
    let mut mean = vec![0.0; mu.cols()];
    for v in 0..mu.rows() {
        axpy(1.0, mu.row(v), &mut mean);
    }
    let n = mu.rows() as f64;
    mean.iter_mut().for_each(|x| *x /= n);
    mean
}

/// Vertex mean of the node states that feeds `W2` (before the readout map).
pub fn pooled_state(features: &Matrix, adj: &AdjacencyMatrix, params: &S2VParams) -> Result<Vec<f64>> {
    params.validate()?;
    let mut state = init_state(adj.n(), params)?;
    check_shapes(&state, features, adj, params)?;
    let projected = project_features(features, params);
    let neighbors = adj.undirected_neighbors();
    let mut iteration_sum = vec![0.0; params.dim()];
    for _ in 0..params.iterations {
        state.mu = step(&state.mu, &projected, &neighbors, params.sigma);
        state.iteration += 1;
        if params.readout == Readout::Mean {
            axpy(1.0, &vertex_mean(&state.mu), &mut iteration_sum);
        }
    }
    Ok(match params.readout {
        Readout::Last => vertex_mean(&state.mu),
        Readout::Mean => iteration_sum.iter().map(|x| x / params.iterations as f64).collect(),
    })
}

/// Embedding of a whole graph: `W2 · mean_v μ_v`.
pub fn embed_graph(features: &Matrix, adj: &AdjacencyMatrix, params: &S2VParams) -> Result<Vec<f64>> {
    let pooled = pooled_state(features, adj, params)?;
    Ok(params.w2.mul_vec(&pooled))
}
