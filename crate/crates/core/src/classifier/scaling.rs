//! Per-dimension standardization of classifier inputs.
//!
//! Embedding scales differ by orders of magnitude between layers (SIF
//! weights shrink native function vectors by roughly `α / p`), so each
//! layer's classifier sees `(x - mean) / scale` with statistics taken from
//! its training split.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions whose spread is below this are centred but not rescaled.
const MIN_SCALE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    /// Mean and population standard deviation of each dimension.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::DegenerateDataset("no rows to standardize".into()))?;
        let d = first.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("rows of differing width".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for k in 0..d {
                var[k] += (r[k] - mean[k]).powi(2) / n;
            }
        }
        let scale = var.into_iter().map(|v| if v.sqrt() > MIN_SCALE { v.sqrt() } else { 1.0 }).collect();
        let s = Self { mean, scale };
        if !crate::linalg::all_finite(&s.mean) || !crate::linalg::all_finite(&s.scale) {
            return Err(Error::Numeric("standardizer statistics".into()));
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!("expected {} inputs, got {}", self.dim(), x.len())));
        }
        Ok(x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect())
    }

    pub fn to_json(&self) -> Vec<u8> {
        crate::json::to_vec_pretty(self).expect("standardizer serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let s: Self = serde_json::from_slice(bytes)?;
        if s.mean.len() != s.scale.len() {
            return Err(Error::Shape("mean and scale lengths differ".into()));
        }
        if s.scale.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Numeric("standardizer scale must be positive".into()));
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fitted_rows_have_zero_mean_unit_variance() {
        let rows = vec![vec![1.0, 10.0, 5.0], vec![3.0, 30.0, 5.0], vec![5.0, 20.0, 5.0]];
        let s = Standardizer::fit(&rows).unwrap();
        let t: Vec<Vec<f64>> = rows.iter().map(|r| s.apply(r).unwrap()).collect();
        for k in 0..2 {
            let m: f64 = t.iter().map(|r| r[k]).sum::<f64>() / 3.0;
            let v: f64 = t.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>() / 3.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
        // constant column: centred, scale left at 1
        assert_eq!(s.scale[2], 1.0);
        assert!(t.iter().all(|r| r[2] == 0.0));
    }

    #[test]
    fn identity_is_a_no_op() {
        assert_eq!(Standardizer::identity(2).apply(&[0.25, -3.0]).unwrap(), vec![0.25, -3.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(Standardizer::fit(&[]), Err(Error::DegenerateDataset(_))));
        assert!(matches!(Standardizer::fit(&[vec![1.0], vec![1.0, 2.0]]), Err(Error::Shape(_))));
        assert!(matches!(Standardizer::identity(2).apply(&[1.0]), Err(Error::Shape(_))));
        assert!(Standardizer::from_json(br#"{"mean":[0.0],"scale":[0.0]}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = Standardizer::fit(&[vec![0.1, 0.7], vec![0.3, -0.2]]).unwrap();
        assert_eq!(Standardizer::from_json(&s.to_json()).unwrap(), s);
    }
}
