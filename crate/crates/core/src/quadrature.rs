//! Gauss–Hermite rules for expectations over a standard Gaussian.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights such that `Σ w_k f(t_k) ≈ E[f(t)]`, `t ~ N(0,1)`.
///
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::Config(format!(
                "quadrature order must be at least 2, got {order}"
            )));
        }
        // Golub–Welsch: nodes are the eigenvalues of the Jacobi matrix of the
        // probabilists' Hermite recurrence, weights the squared first
        // eigenvector components.
        let jacobi = DMatrix::from_fn(order, order, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Enforce exact symmetry.
        for k in 0..order / 2 {
            let x = 0.5 * (pairs[order - 1 - k].0 - pairs[k].0);
            let w = 0.5 * (pairs[order - 1 - k].1 + pairs[k].1);
            pairs[k] = (-x, w);
            pairs[order - 1 - k] = (x, w);
        }
        if order % 2 == 1 {
            pairs[order / 2].0 = 0.0;
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Ok(GaussHermite {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.iter().map(|(t, w)| w * f(t)).sum()
    }
}
