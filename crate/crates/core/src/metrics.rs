//! Evaluation metrics and the raw-feature nearest-neighbour baseline.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Matrix};

pub fn mae(predictions: &[f64], truth: &[f64]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::shape("mae", truth.len(), predictions.len()));
    }
    if truth.is_empty() {
        return Err(Error::NoRows);
    }
    let s: f64 = predictions.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(s / truth.len() as f64)
}

/// Median of a non-empty slice; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::NoRows);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// k-NN regression: mean target of the `k` nearest training rows (Euclidean),
/// ties broken by ascending training index. `k` is clipped to the training size.
pub fn knn_regress(train_x: &Matrix, train_y: &[f64], query: &Matrix, k: usize) -> Result<Vec<f64>> {
    if train_x.rows() != train_y.len() {
        return Err(Error::shape("knn targets", train_x.rows(), train_y.len()));
    }
    if train_y.is_empty() {
        return Err(Error::NoRows);
    }
    if k == 0 {
        return Err(Error::Precondition("k must be >= 1".into()));
    }
    if query.cols() != train_x.cols() {
        return Err(Error::shape("knn query width", train_x.cols(), query.cols()));
    }
    let k = k.min(train_y.len());
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(train_y.len());
    Ok(query
        .iter_rows()
        .map(|q| {
            order.clear();
            order.extend(train_x.iter_rows().enumerate().map(|(i, r)| (squared_distance(q, r), i)));
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            order[..k].iter().map(|&(_, i)| train_y[i]).sum::<f64>() / k as f64
        })
        .collect())
}
