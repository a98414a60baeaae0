//! Small dense-vector helpers shared by the agent and network code.

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn is_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Returns `a / ‖a‖₂`, or `None` when the norm is below `min_norm`.
pub fn normalized(a: &[f64], min_norm: f64) -> Option<Vec<f64>> {
    let n = norm(a);
    if !(n >= min_norm) {
        return None;
    }
    Some(a.iter().map(|x| x / n).collect())
}

pub(crate) fn check_dim(what: &str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::config(format!(
            "{what} has dimension {}, expected {expected}",
            v.len()
        )));
    }
    Ok(())
}

/// Logistic function `1 / (1 + e^{-x})`, evaluated without overflow and
/// kept strictly inside (0, 1).
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}
