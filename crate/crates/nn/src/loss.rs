use crate::error::{NnError, Result};
use crate::tensor::Tensor;

pub const BCE_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy and its gradient with respect to `p`.
///
/// `p` is clamped to `[1e-7, 1 - 1e-7]` before the logs; the gradient is
/// `(p - y) / (p (1 - p)) / N` at the clamped value.
pub fn bce_loss(p: &Tensor, y: &Tensor) -> Result<(f64, Tensor)> {
    if p.shape() != y.shape() {
        return Err(NnError::Loss(format!(
            "prediction shape {:?} differs from target shape {:?}",
            p.shape(),
            y.shape()
        )));
    }
    let n = p.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(p.len());
    for (&pi, &yi) in p.data().iter().zip(y.data()) {
        let pc = pi.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        total -= yi * libm::log(pc) + (1.0 - yi) * libm::log(1.0 - pc);
        grad.push((pc - yi) / (pc * (1.0 - pc)) / n);
    }
    Ok((total / n, Tensor::new(p.shape().to_vec(), grad)?))
}

/// Gradient of mean BCE with respect to the logits feeding a sigmoid:
/// `(p - y) / N`.
pub fn bce_logit_grad(p: &Tensor, y: &Tensor) -> Result<Tensor> {
    if p.shape() != y.shape() {
        return Err(NnError::Loss(format!(
            "prediction shape {:?} differs from target shape {:?}",
            p.shape(),
            y.shape()
        )));
    }
    let n = p.len() as f64;
    let g = p.data().iter().zip(y.data()).map(|(pi, yi)| (pi - yi) / n).collect();
    Tensor::new(p.shape().to_vec(), g)
}
