use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Mean squared error over the components of one pump vector.
pub fn mse(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    if y_hat.len() != y.len() || y.is_empty() {
        return Err(Error::invalid(format!(
            "mse needs equal non-empty lengths, got {} and {}",
            y_hat.len(),
            y.len()
        )));
    }
    Ok(y_hat.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

/// Batch-mean of per-sample MSE for `batch × dim` buffers, and its gradient
/// with respect to `y_hat`.
pub fn batch_mse<T: Scalar>(y_hat: &[T], y: &[T], dim: usize) -> (f64, Vec<T>) {
    debug_assert!(dim > 0 && y.len() % dim == 0);
    let n = y.len() as f64;
    let (sum, grad) = squared_error(y_hat, y, n);
    (sum / n, grad)
}

/// Sum of squared errors and its gradient divided by `denom`, for losses
/// averaged over more elements than `y` holds.
pub(crate) fn squared_error<T: Scalar>(y_hat: &[T], y: &[T], denom: f64) -> (f64, Vec<T>) {
    assert_eq!(y_hat.len(), y.len());
    let mut sum = 0.0f64;
    let grad = y_hat
        .iter()
        .zip(y)
        .map(|(&a, &b)| {
            let d = a.as_f64() - b.as_f64();
            sum += d * d;
            T::of_f64(2.0 * d / denom)
        })
        .collect();
    (sum, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(mse(&[0.1, 0.2, 0.3, 0.4], &[0.1, 0.2, 0.3, 0.4]).unwrap(), 0.0);
        let v = mse(&[0.1, 0.1, 0.1, 0.1], &[0.0, 0.2, 0.0, 0.2]).unwrap();
        assert!((v - 0.01).abs() < 1e-15);
        assert!(mse(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn batch_loss_is_mean_of_sample_losses() {
        let y_hat = [0.1f64, 0.5, 0.9, 0.3, 0.0, 1.0];
        let y = [0.2f64, 0.5, 0.7, 0.3, 0.4, 0.6];
        let (l, g) = batch_mse(&y_hat, &y, 2);
        let per: Vec<f64> = (0..3).map(|s| mse(&y_hat[2 * s..2 * s + 2], &y[2 * s..2 * s + 2]).unwrap()).collect();
        assert!((l - per.iter().sum::<f64>() / 3.0).abs() < 1e-15);
        assert!((g[0] - 2.0 * (0.1 - 0.2) / 6.0).abs() < 1e-15);
    }
}
