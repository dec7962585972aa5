//! Reference computations used as test oracles.
//!
//! Everything here is written with plain nested `Vec`s and dense loops, and
//! shares no code with `graphshield-core`. The point is to have a second,
//! deliberately naive route to every number the library computes.

#![allow(clippy::needless_range_loop)]

pub mod jacobi;

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn central_gradient<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Relative error between an analytic and a numeric derivative.
///
/// The denominator is floored at 1.0e-6 so that coordinates whose true
/// derivative is essentially zero are judged on absolute agreement.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1.0e-6);
    (analytic - numeric).abs() / scale
}

/// Worst relative error over paired slices.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(numeric).map(|(a, n)| relative_error(*a, *n)).fold(0.0, f64::max)
}

/// P(score_pos > score_neg) + 0.5 * P(score_pos == score_neg), by enumerating
/// every positive/negative pair.
pub fn pairwise_auc(scores: &[f64], positive: &[bool]) -> f64 {
    assert_eq!(scores.len(), positive.len());
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !positive[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if positive[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Dense matrix-vector product `m * v` where `m` is a list of rows.
pub fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| {
            let mut acc = 0.0;
            for k in 0..v.len() {
                acc += row[k] * v[k];
            }
            acc
        })
        .collect()
}

/// Straightforward Structure2Vec forward pass.
///
/// `edges` are directed index pairs; neighbourhoods are taken as the union of
/// in- and out-neighbours. `w1` and `w2` are given as lists of rows.
/// `relu` selects the aggregation nonlinearity (otherwise identity).
/// Returns the graph embedding of the final iteration.
pub fn structure2vec_embedding(
    features: &[Vec<f64>],
    edges: &[(usize, usize)],
    w1: &[Vec<f64>],
    w2: &[Vec<f64>],
    iterations: usize,
    relu: bool,
) -> Vec<f64> {
    let n = features.len();
    let d = w1.len();
    let mut dense = vec![vec![false; n]; n];
    for &(a, b) in edges {
        dense[a][b] = true;
        dense[b][a] = true;
    }
    let mut mu = vec![vec![0.0; d]; n];
    for _ in 0..iterations {
        let mut next = vec![vec![0.0; d]; n];
        for v in 0..n {
            let mut l = vec![0.0f64; d];
            for u in 0..n {
                if dense[v][u] {
                    for k in 0..d {
                        l[k] += mu[u][k];
                    }
                }
            }
            let wx = mat_vec(w1, &features[v]);
            for k in 0..d {
                let agg = if relu { l[k].max(0.0) } else { l[k] };
                next[v][k] = (wx[k] + agg).tanh();
            }
        }
        mu = next;
    }
    let mut mean = vec![0.0; d];
    for row in &mu {
        for k in 0..d {
            mean[k] += row[k];
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    mat_vec(w2, &mean)
}

/// Loop-based MLP forward pass in row-vector convention: `a <- a * W + b`.
///
/// `weights[l][i][j]` connects input `i` to output `j` of layer `l`.
/// Hidden layers use the logistic function when `logistic_hidden` is set.
pub fn mlp_forward(weights: &[Vec<Vec<f64>>], biases: &[Vec<f64>], x: &[f64], logistic_hidden: bool) -> Vec<f64> {
    let mut a = x.to_vec();
    let layers = weights.len();
    for l in 0..layers {
        let w = &weights[l];
        let outputs = biases[l].len();
        let mut z = vec![0.0; outputs];
        for j in 0..outputs {
            let mut acc = biases[l][j];
            for i in 0..a.len() {
                acc += a[i] * w[i][j];
            }
            z[j] = acc;
        }
        if l + 1 < layers && logistic_hidden {
            for v in z.iter_mut() {
                *v = 1.0 / (1.0 + (-*v).exp());
            }
        }
        a = z;
    }
    a
}

/// Total-variation distance between two count histograms over the same keys.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    0.5 * a.iter().zip(b).map(|(x, y)| (x / sa - y / sb).abs()).sum::<f64>()
}
