//! Exact reference computations used to check the engine: live-edge
//! enumeration for the independent cascade model and a dense eigensolver.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::network::DenseMatrix;

/// Largest edge count accepted by [`ic_activation_exact`].
pub const MAX_ENUMERATED_EDGES: usize = 24;

/// Exact per-node activation probabilities of the independent cascade model
/// on `n` nodes, by enumerating all live-edge subsets. `edges` holds
/// `(sender, receiver, probability)` triples; `seeds` start active.
pub fn ic_activation_exact(n: usize, edges: &[(usize, usize, f64)], seeds: &[usize]) -> Result<Vec<f64>> {
    if edges.len() > MAX_ENUMERATED_EDGES {
        return Err(Error::precondition(format!(
            "{} edges exceed the enumeration limit of {MAX_ENUMERATED_EDGES}",
            edges.len()
        )));
    }
    if edges.iter().any(|&(u, v, _)| u >= n || v >= n) || seeds.iter().any(|&s| s >= n) {
        return Err(Error::precondition("node index out of range"));
    }
    let mut prob = vec![0.0; n];
    let mut active = vec![false; n];
    let mut stack = Vec::with_capacity(n);
    for mask in 0u64..(1u64 << edges.len()) {
        let mut weight = 1.0;
        for (k, &(_, _, p)) in edges.iter().enumerate() {
            weight *= if mask >> k & 1 == 1 { p } else { 1.0 - p };
        }
        if weight == 0.0 {
            continue;
        }
        active.iter_mut().for_each(|a| *a = false);
        stack.clear();
        for &s in seeds {
            if !active[s] {
                active[s] = true;
                stack.push(s);
            }
        }
        while let Some(u) = stack.pop() {
            for (k, &(from, to, _)) in edges.iter().enumerate() {
                if from == u && mask >> k & 1 == 1 && !active[to] {
                    active[to] = true;
                    stack.push(to);
                }
            }
        }
        for (p, &a) in prob.iter_mut().zip(&active) {
            if a {
                *p += weight;
            }
        }
    }
    Ok(prob)
}

/// Spectral radius via a full dense eigendecomposition.
pub fn dense_spectral_radius(m: &DenseMatrix) -> Result<f64> {
    let n = m.n();
    if n == 0 {
        return Ok(0.0);
    }
    let a = DMatrix::from_row_slice(n, n, m.as_slice());
    let eig = a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    if !eig.is_finite() {
        return Err(Error::NonFinite("eigenvalue".into()));
    }
    Ok(eig)
}
