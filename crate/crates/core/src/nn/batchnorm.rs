//! Batch normalization over the feature axis of a 2-D activation matrix.
//! Training uses biased batch statistics and folds them into running
//! estimates with momentum 0.99; inference normalizes with the running
//! estimates alone.

use ndarray::{Array1, Array2, Axis};

use crate::Scalar;

use super::{Mode, NnError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<S: Scalar> {
    pub gamma: Array1<S>,
    pub beta: Array1<S>,
    pub running_mean: Array1<S>,
    pub running_var: Array1<S>,
    pub momentum: S,
    pub epsilon: S,
}

impl<S: Scalar> BatchNormParams<S> {
    pub fn init(dim: usize) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
            momentum: S::of_f64(0.99),
            epsilon: S::of_f64(1e-3),
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    /// Learnable parameters only; running statistics are state, not
    /// gradient targets, but they do ship in checkpoints.
    pub fn param_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }
}

/// Saved by the training-mode forward pass for the backward pass.
pub struct BatchNormCache<S: Scalar> {
    /// Normalized input (x - mean) * inv_std, same shape as x.
    pub x_hat: Array2<S>,
    /// 1 / sqrt(var + eps) per feature.
    pub inv_std: Array1<S>,
}

/// Normalizes `(rows, dim)` activations. Train mode needs at least two
/// rows so the batch variance is meaningful, and mutates the running
/// statistics; infer mode reads them and returns no cache.
pub fn batchnorm_forward<S: Scalar>(
    params: &mut BatchNormParams<S>,
    x: &Array2<S>,
    mode: Mode,
) -> Result<(Array2<S>, Option<BatchNormCache<S>>)> {
    let (rows, dim) = x.dim();
    if dim != params.dim() {
        return Err(NnError::Shape(format!(
            "input features {dim} vs layer size {}",
            params.dim()
        )));
    }
    match mode {
        Mode::Train => {
            if rows < 2 {
                return Err(NnError::Argument(format!(
                    "batch normalization needs at least 2 rows in training mode, got {rows}"
                )));
            }
            let n = S::of_usize(rows);
            let mean = x.sum_axis(Axis(0)) / n;
            let mut var = Array1::<S>::zeros(dim);
            for row in x.rows() {
                for (j, &v) in row.iter().enumerate() {
                    let d = v - mean[j];
                    var[j] += d * d;
                }
            }
            var.mapv_inplace(|v| v / n);

            let inv_std = var.mapv(|v| S::one() / (v + params.epsilon).sqrt());
            let mut x_hat = x.clone();
            for mut row in x_hat.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = (*v - mean[j]) * inv_std[j];
                }
            }
            let mut y = x_hat.clone();
            for mut row in y.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = *v * params.gamma[j] + params.beta[j];
                }
            }

            let m = params.momentum;
            let one_minus = S::one() - m;
            for j in 0..dim {
                params.running_mean[j] = m * params.running_mean[j] + one_minus * mean[j];
                params.running_var[j] = m * params.running_var[j] + one_minus * var[j];
            }
            Ok((y, Some(BatchNormCache { x_hat, inv_std })))
        }
        Mode::Infer => Ok((batchnorm_infer(params, x)?, None)),
    }
}

/// Inference-mode normalization from the running statistics; never
/// mutates the layer.
pub fn batchnorm_infer<S: Scalar>(
    params: &BatchNormParams<S>,
    x: &Array2<S>,
) -> Result<Array2<S>> {
    let (_, dim) = x.dim();
    if dim != params.dim() {
        return Err(NnError::Shape(format!(
            "input features {dim} vs layer size {}",
            params.dim()
        )));
    }
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            let inv = S::one() / (params.running_var[j] + params.epsilon).sqrt();
            *v = (*v - params.running_mean[j]) * inv * params.gamma[j] + params.beta[j];
        }
    }
    Ok(y)
}

/// Backward through the training-mode forward pass. The batch statistics
/// depend on every row, which is where the two correction sums come from:
///
///   dx = (gamma * inv_std / N) * (N*dy - sum(dy) - x_hat * sum(dy*x_hat))
pub fn batchnorm_backward<S: Scalar>(
    params: &BatchNormParams<S>,
    cache: &BatchNormCache<S>,
    grad_y: &Array2<S>,
) -> Result<(Array1<S>, Array1<S>, Array2<S>)> {
    let (rows, dim) = cache.x_hat.dim();
    if grad_y.dim() != (rows, dim) {
        return Err(NnError::Shape(format!(
            "upstream gradient {:?} vs cached activations ({rows}, {dim})",
            grad_y.dim()
        )));
    }
    let n = S::of_usize(rows);
    let dgamma = (grad_y * &cache.x_hat).sum_axis(Axis(0));
    let dbeta = grad_y.sum_axis(Axis(0));

    let sum_dy = &dbeta;
    let sum_dy_xhat = &dgamma;
    let mut dx = Array2::zeros((rows, dim));
    for r in 0..rows {
        for j in 0..dim {
            let term = n * grad_y[(r, j)] - sum_dy[j] - cache.x_hat[(r, j)] * sum_dy_xhat[j];
            dx[(r, j)] = params.gamma[j] * cache.inv_std[j] / n * term;
        }
    }
    Ok((dgamma, dbeta, dx))
}

/// Backward through the inference-mode forward pass, where the running
/// statistics are constants: dx = dy * gamma / sqrt(running_var + eps).
pub fn batchnorm_backward_infer<S: Scalar>(
    params: &BatchNormParams<S>,
    grad_y: &Array2<S>,
) -> Result<(Array1<S>, Array1<S>, Array2<S>)> {
    let (_, dim) = grad_y.dim();
    if dim != params.dim() {
        return Err(NnError::Shape(format!(
            "upstream gradient features {dim} vs layer size {}",
            params.dim()
        )));
    }
    let mut dx = grad_y.clone();
    for mut row in dx.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            let inv = S::one() / (params.running_var[j] + params.epsilon).sqrt();
            *v = *v * params.gamma[j] * inv;
        }
    }
    // gamma and beta stay frozen alongside the running statistics when a
    // layer runs inference-mode inside a training step.
    Ok((Array1::zeros(dim), Array1::zeros(dim), dx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_diff, max_rel_err};

    #[test]
    fn train_output_is_standardized_before_affine() {
        let mut params = BatchNormParams::<f64>::init(2);
        let x = Array2::from_shape_vec((4, 2), vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0])
            .unwrap();
        let (y, cache) = batchnorm_forward(&mut params, &x, Mode::Train).unwrap();
        let cache = cache.unwrap();
        for j in 0..2 {
            let col_mean: f64 = (0..4).map(|r| y[(r, j)]).sum::<f64>() / 4.0;
            let col_var: f64 = (0..4).map(|r| (y[(r, j)] - col_mean).powi(2)).sum::<f64>() / 4.0;
            assert!(col_mean.abs() < 1e-12);
            // Variance lands slightly under 1 because of epsilon.
            assert!((col_var - 1.0).abs() < 1e-2);
        }
        assert_eq!(cache.x_hat.dim(), (4, 2));
    }

    #[test]
    fn running_stats_blend_with_momentum() {
        let mut params = BatchNormParams::<f64>::init(1);
        let x = Array2::from_shape_vec((2, 1), vec![1.0, 3.0]).unwrap();
        batchnorm_forward(&mut params, &x, Mode::Train).unwrap();
        // Batch mean 2, biased variance 1.
        assert!((params.running_mean[0] - 0.01 * 2.0).abs() < 1e-12);
        assert!((params.running_var[0] - (0.99 + 0.01 * 1.0)).abs() < 1e-12);
    }

    #[test]
    fn infer_uses_running_statistics() {
        let mut params = BatchNormParams::<f64>::init(1);
        params.running_mean[0] = 5.0;
        params.running_var[0] = 4.0;
        params.gamma[0] = 2.0;
        params.beta[0] = 1.0;
        let x = Array2::from_shape_vec((1, 1), vec![7.0]).unwrap();
        let (y, cache) = batchnorm_forward(&mut params, &x, Mode::Infer).unwrap();
        assert!(cache.is_none());
        let expect = (7.0 - 5.0) / (4.0f64 + 1e-3).sqrt() * 2.0 + 1.0;
        assert!((y[(0, 0)] - expect).abs() < 1e-12);
    }

    #[test]
    fn single_row_train_batch_is_rejected() {
        let mut params = BatchNormParams::<f64>::init(3);
        let x = Array2::zeros((1, 3));
        assert!(matches!(
            batchnorm_forward(&mut params, &x, Mode::Train),
            Err(NnError::Argument(_))
        ));
    }

    #[test]
    fn train_gradients_match_finite_differences() {
        let x = Array2::from_shape_fn((5, 3), |(r, c)| (r as f64 - 1.3) * 0.7 + c as f64 * 0.4);
        let mut base = BatchNormParams::<f64>::init(3);
        base.gamma = Array1::from_vec(vec![1.1, 0.8, -0.5]);
        base.beta = Array1::from_vec(vec![0.2, -0.1, 0.4]);

        let loss = |gamma: &[f64], beta: &[f64], xs: &Array2<f64>| -> f64 {
            let mut p = base.clone();
            p.gamma = Array1::from_vec(gamma.to_vec());
            p.beta = Array1::from_vec(beta.to_vec());
            let (y, _) = batchnorm_forward(&mut p, xs, Mode::Train).unwrap();
            y.iter().map(|v| v * v).sum()
        };

        let mut p = base.clone();
        let (y, cache) = batchnorm_forward(&mut p, &x, Mode::Train).unwrap();
        let grad_y = y.mapv(|v| 2.0 * v);
        let (dgamma, dbeta, dx) = batchnorm_backward(&base, &cache.unwrap(), &grad_y).unwrap();

        let g0 = base.gamma.to_vec();
        let b0 = base.beta.to_vec();
        let fd_gamma = central_diff(&mut |p: &[f64]| loss(p, &b0, &x), &g0, 1e-5);
        let fd_beta = central_diff(&mut |p: &[f64]| loss(&g0, p, &x), &b0, 1e-5);
        let fd_x = central_diff(
            &mut |p: &[f64]| {
                let xs = Array2::from_shape_vec((5, 3), p.to_vec()).unwrap();
                loss(&g0, &b0, &xs)
            },
            &x.iter().cloned().collect::<Vec<_>>(),
            1e-5,
        );
        assert!(max_rel_err(&dgamma.to_vec(), &fd_gamma) < 1e-4);
        assert!(max_rel_err(&dbeta.to_vec(), &fd_beta) < 1e-4);
        assert!(max_rel_err(&dx.iter().cloned().collect::<Vec<_>>(), &fd_x) < 1e-4);
    }

    #[test]
    fn infer_backward_scales_by_gamma_over_std() {
        let mut params = BatchNormParams::<f64>::init(2);
        params.gamma = Array1::from_vec(vec![3.0, 0.5]);
        params.running_var = Array1::from_vec(vec![0.25, 4.0]);
        let grad_y = Array2::from_shape_vec((1, 2), vec![1.0, 1.0]).unwrap();
        let (_, _, dx) = batchnorm_backward_infer(&params, &grad_y).unwrap();
        assert!((dx[(0, 0)] - 3.0 / (0.25f64 + 1e-3).sqrt()).abs() < 1e-12);
        assert!((dx[(0, 1)] - 0.5 / (4.0f64 + 1e-3).sqrt()).abs() < 1e-12);
    }
}
