//! Reference MIL rules: the max-pooling label rule over instance scores and
//! aggregate-then-classify with mean pooling.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Bag is positive iff some instance scores at least 0.5.
pub fn max_pool_predict(embeddings: &Matrix, instance_scorer: impl Fn(&[f64]) -> f64) -> Result<bool> {
    if embeddings.rows() == 0 {
        return Err(Error::Contract("max_pool_predict on an empty bag".into()));
    }
    let best = embeddings
        .row_iter()
        .map(&instance_scorer)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(best >= 0.5)
}

/// `g(mean_j f(x_j))`.
pub fn avgpool_predict(
    embeddings: &Matrix,
    f: impl Fn(&[f64]) -> Vec<f64>,
    g: impl Fn(&[f64]) -> f64,
) -> Result<f64> {
    if embeddings.rows() == 0 {
        return Err(Error::Contract("avgpool_predict on an empty bag".into()));
    }
    let mut acc: Vec<f64> = Vec::new();
    for row in embeddings.row_iter() {
        let feat = f(row);
        if acc.is_empty() {
            acc = vec![0.0; feat.len()];
        }
        if feat.len() != acc.len() {
            return Err(Error::Dimension(format!(
                "instance features of length {} and {}",
                acc.len(),
                feat.len()
            )));
        }
        acc.iter_mut().zip(&feat).for_each(|(a, v)| *a += v);
    }
    let n = embeddings.rows() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(g(&acc))
}
