use super::Tensor;
use crate::{Error, Result};

/// Mean softmax cross-entropy over the batch and its gradient
/// `(softmax − onehot) / batch` with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, c) = (logits.rows(), logits.cols());
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} logit rows but {} labels", labels.len())));
    }
    if n == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    let mut grad = Tensor::zeros(&[n, c]);
    let mut total = 0.0;
    let inv_n = 1.0 / n as f64;
    for (r, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::Shape(format!("label {y} out of range for {c} classes")));
        }
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let log_sum = max + sum_exp.ln();
        total += log_sum - row[y];
        let g = grad.row_mut(r);
        for (k, (gk, &z)) in g.iter_mut().zip(row).enumerate() {
            let p = (z - log_sum).exp();
            *gk = (p - if k == y { 1.0 } else { 0.0 }) * inv_n;
        }
    }
    Ok((total * inv_n, grad))
}

/// Mean squared error over all elements and its gradient `2(x − t)/N`.
pub fn mse_loss(x: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    x.check_same_shape(target)?;
    let n = x.len() as f64;
    let mut grad = Tensor::zeros(x.shape());
    let mut total = 0.0;
    for ((g, &a), &b) in grad.data_mut().iter_mut().zip(x.data()).zip(target.data()) {
        let d = a - b;
        total += d * d;
        *g = 2.0 * d / n;
    }
    Ok((total / n, grad))
}
