//! Output heads: softmax, weighted cross-entropy and Euclidean loss.

use super::tensor::Tensor;
use crate::scalar::Scalar;

/// Row-wise softmax of `[N, C]` logits, shifted by the row max.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let c = *logits.shape().last().expect("non-scalar logits");
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(c) {
        softmax_in_place(row);
    }
    out
}

pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Class-weighted mean cross-entropy: `Σ w_y · −log p_y / Σ w_y`.
pub fn cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
    class_weights: Option<&[f64]>,
) -> (T, Tensor<T>) {
    let c = logits.shape()[1];
    let probs = softmax(logits);
    let weight = |y: usize| T::lit(class_weights.map_or(1.0, |w| w[y]));
    let total: T = labels.iter().map(|&y| weight(y)).sum();
    let mut loss = T::zero();
    let mut grad = probs.clone();
    for (n, &y) in labels.iter().enumerate() {
        let w = weight(y);
        let p = probs.data()[n * c + y].max(T::lit(1e-300));
        loss -= w * p.ln();
        let row = &mut grad.data_mut()[n * c..(n + 1) * c];
        row[y] -= T::one();
        for v in row.iter_mut() {
            *v *= w / total;
        }
    }
    (loss / total, grad)
}

/// Euclidean loss `Σ (p − t)² / 2N` on `[N, 1]` predictions.
pub fn euclidean<T: Scalar>(pred: &Tensor<T>, targets: &[f64]) -> (T, Tensor<T>) {
    let n = T::from_usize_lossy(targets.len());
    let mut loss = T::zero();
    let mut grad = pred.clone();
    for (g, &t) in grad.data_mut().iter_mut().zip(targets) {
        let d = *g - T::lit(t);
        loss += d * d;
        *g = d / n;
    }
    (loss / (n + n), grad)
}
