use super::Real;
use crate::error::{Error, Result};

/// Mean softmax cross-entropy over a batch.
///
/// Returns the loss and its gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Real>(
    logits: &[T],
    labels: &[u16],
    n_classes: usize,
) -> Result<(T, Vec<T>)> {
    if n_classes == 0 || logits.len() != labels.len() * n_classes {
        return Err(Error::Shape(format!(
            "{} logits for {} labels over {n_classes} classes",
            logits.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let batch = T::of(labels.len() as f64);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &label) in logits.chunks_exact(n_classes).zip(labels) {
        let label = label as usize;
        if label >= n_classes {
            return Err(Error::Data(format!("label {label} out of range for {n_classes} classes")));
        }
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let sum = row.iter().fold(T::zero(), |s, &v| s + (v - max).exp());
        let log_z = max + sum.ln();
        loss = loss + (log_z - row[label]);
        for (j, &v) in row.iter().enumerate() {
            let p = (v - log_z).exp();
            let target = if j == label { T::one() } else { T::zero() };
            grad.push((p - target) / batch);
        }
    }
    let loss = loss / batch;
    if !loss.is_finite() {
        return Err(Error::NonFinite("cross-entropy loss".into()));
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        for k in [2usize, 3, 10] {
            let logits = vec![0.7f64; 4 * k];
            let (loss, grad) = softmax_cross_entropy(&logits, &[0, 1, 0, 1], k).unwrap();
            assert!((loss - (k as f64).ln()).abs() < 1e-12);
            let sum: f64 = grad.iter().sum();
            assert!(sum.abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_shapes_and_labels() {
        assert!(matches!(
            softmax_cross_entropy(&[0.0f64; 5], &[0, 1], 3),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            softmax_cross_entropy(&[0.0f64; 3], &[3], 3),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn large_logits_stay_finite() {
        let (loss, _) = softmax_cross_entropy(&[1000.0f32, -1000.0], &[0], 2).unwrap();
        assert_eq!(loss, 0.0);
        assert!(matches!(
            softmax_cross_entropy(&[f64::NAN, 0.0], &[0], 2),
            Err(Error::NonFinite(_))
        ));
    }
}
