use crate::error::{Error, Result};
use crate::tensor::{ensure_same_shape, Real, Tensor};

/// Mean squared error over all elements, with its gradient `2(p - t)/K`.
pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    ensure_same_shape("mse_loss", pred, target)?;
    let k = pred.len() as f64;
    let scale = T::from_f64(2.0 / k);
    let mut grad = Tensor::zeros(pred.shape());
    let mut sum = 0.0f64;
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        sum += d.as_f64() * d.as_f64();
        *g = scale * d;
    }
    Ok((sum / k, grad))
}

/// Row-wise softmax of `(n, classes)` logits, computed in f64.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Vec<Vec<f64>>> {
    let (n, c) = match logits.shape() {
        &[n, c] => (n, c),
        other => return Err(Error::invalid(format!("logits must be (n, classes), got {other:?}"))),
    };
    Ok((0..n)
        .map(|b| {
            let row = &logits.data()[b * c..(b + 1) * c];
            let m = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v.as_f64() - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect())
}

/// Two-class softmax cross-entropy averaged over the batch.
pub fn softmax_ce_loss<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
    if logits.rank() != 2 || logits.shape()[1] != 2 {
        return Err(Error::invalid(format!(
            "softmax_ce_loss expects (n, 2) logits, got {:?}",
            logits.shape()
        )));
    }
    let n = logits.shape()[0];
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for {n} samples", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::invalid(format!("label {bad} out of range for 2 classes")));
    }
    let probs = softmax(logits)?;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(2 * n);
    for (b, (p, &label)) in probs.iter().zip(labels).enumerate() {
        // log-sum-exp keeps saturated logits exact
        let row = &logits.data()[2 * b..2 * b + 2];
        let (a, b) = (row[0].as_f64(), row[1].as_f64());
        let m = a.max(b);
        let lse = m + ((a - m).exp() + (b - m).exp()).ln();
        loss -= [a, b][label] - lse;
        for (c, &pc) in p.iter().enumerate() {
            let onehot = if c == label { 1.0 } else { 0.0 };
            grad.push(T::from_f64((pc - onehot) / n as f64));
        }
    }
    Ok((loss / n as f64, Tensor::from_vec(&[n, 2], grad)?))
}
