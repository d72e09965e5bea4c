use super::NeuralError;
use crate::matrix::{Matrix, Real};

fn check_labels(classes: usize, rows: usize, y: &[usize]) -> Result<(), NeuralError> {
    if y.len() != rows {
        return Err(NeuralError::ShapeMismatch {
            what: "labels",
            expected: rows,
            found: y.len(),
        });
    }
    if let Some(&label) = y.iter().find(|&&l| l >= classes) {
        return Err(NeuralError::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// Log-softmax of one row, with the row maximum subtracted first.
pub fn log_softmax_row<F: Real>(logits: &[F]) -> Vec<f64> {
    let max = logits
        .iter()
        .map(|v| v.to_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let lse = logits
        .iter()
        .map(|v| (v.to_f64() - max).exp())
        .sum::<f64>()
        .ln()
        + max;
    logits.iter().map(|v| v.to_f64() - lse).collect()
}

/// Row-wise softmax.
pub fn softmax<F: Real>(logits: &Matrix<F>) -> Matrix<f64> {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        for (o, l) in out.row_mut(r).iter_mut().zip(log_softmax_row(logits.row(r))) {
            *o = l.exp();
        }
    }
    out
}

/// Cross-entropy of each row against its label.
pub fn per_example_loss<F: Real>(logits: &Matrix<F>, y: &[usize]) -> Result<Vec<f64>, NeuralError> {
    check_labels(logits.cols(), logits.rows(), y)?;
    Ok(logits
        .iter_rows()
        .zip(y)
        .map(|(row, &label)| -log_softmax_row(row)[label])
        .collect())
}

/// Mean cross-entropy over the batch.
pub fn cross_entropy<F: Real>(logits: &Matrix<F>, y: &[usize]) -> Result<f64, NeuralError> {
    if y.is_empty() {
        return Err(NeuralError::EmptyBatch);
    }
    let losses = per_example_loss(logits, y)?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Mean cross-entropy and its gradient with respect to the logits,
/// `(softmax - onehot) / B`.
pub fn cross_entropy_grad<F: Real>(logits: &Matrix<F>, y: &[usize]) -> Result<(f64, Matrix<F>), NeuralError> {
    if y.is_empty() {
        return Err(NeuralError::EmptyBatch);
    }
    check_labels(logits.cols(), logits.rows(), y)?;
    let batch = y.len() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for (r, &label) in y.iter().enumerate() {
        let logp = log_softmax_row(logits.row(r));
        total -= logp[label];
        for (k, (g, lp)) in grad.row_mut(r).iter_mut().zip(&logp).enumerate() {
            let onehot = if k == label { 1.0 } else { 0.0 };
            *g = F::from_f64((lp.exp() - onehot) / batch);
        }
    }
    Ok((total / batch, grad))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<F: Real>(row: &[F]) -> usize {
    let mut best = 0;
    for (k, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Textbook formula without max subtraction, for moderate logits.
    fn naive_loss(logits: &[f64], label: usize) -> f64 {
        let z: f64 = logits.iter().map(|v| v.exp()).sum();
        -(logits[label].exp() / z).ln()
    }

    #[test]
    fn uniform_logits_give_log_k() {
        let logits = Matrix::<f64>::zeros(3, 112);
        let loss = cross_entropy(&logits, &[0, 50, 111]).unwrap();
        assert!((loss - 112f64.ln()).abs() < 1e-12);
        assert!((loss - 4.7185).abs() < 1e-4);
    }

    #[test]
    fn confident_prediction_has_tiny_loss() {
        let mut logits = Matrix::<f32>::zeros(1, 10);
        logits.set(0, 4, 40.0);
        assert!(cross_entropy(&logits, &[4]).unwrap() < 1e-6);
    }

    #[test]
    fn matches_naive_formula() {
        let mut rng = crate::seed::rng(3);
        for _ in 0..200 {
            let k = rng.random_range(2..20);
            let b = rng.random_range(1..6);
            let logits = Matrix::<f64>::from_fn(b, k, |_, _| rng.random_range(-8.0..8.0));
            let y: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
            let want = (0..b).map(|r| naive_loss(logits.row(r), y[r])).sum::<f64>() / b as f64;
            let got = cross_entropy(&logits, &y).unwrap();
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn stable_for_huge_logits() {
        let logits = Matrix::<f64>::from_rows(&[[1000.0, -1000.0, 999.0]]).unwrap();
        let loss = cross_entropy(&logits, &[2]).unwrap();
        assert!(loss.is_finite());
        // lse = 1000 + ln(1 + e^-1), minus the true logit 999
        assert!((loss - (1.0 + (1.0 + (-1.0f64).exp()).ln())).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let mut rng = crate::seed::rng(4);
        let logits = Matrix::<f32>::from_fn(20, 9, |_, _| rng.random_range(-30.0..30.0));
        let p = softmax(&logits);
        for r in 0..20 {
            let s: f64 = p.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(p.row(r).iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn label_out_of_range() {
        let logits = Matrix::<f32>::zeros(1, 3);
        assert!(matches!(
            cross_entropy(&logits, &[3]),
            Err(NeuralError::LabelOutOfRange { label: 3, classes: 3 })
        ));
        assert!(matches!(cross_entropy(&logits, &[]), Err(NeuralError::EmptyBatch)));
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0f32, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0f64; 4]), 0);
    }
}
