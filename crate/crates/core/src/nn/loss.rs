//! Training losses: root-mean-square error against one-hot (or soft)
//! targets, and an L1 penalty on recurrent-layer biases.

use ndarray::{Array1, Array2};

use crate::Scalar;

use super::{NnError, Result};

/// Guards the 1/loss factor in the gradient when predictions are exact.
const LOSS_FLOOR: f64 = 1e-12;

/// loss = sqrt(mean((pred - target)^2)) over every cell. The gradient is
/// (pred - target) / (n_cells * loss) with the loss floored at 1e-12.
pub fn rmse_loss<S: Scalar>(pred: &Array2<S>, target: &Array2<S>) -> Result<(S, Array2<S>)> {
    if pred.dim() != target.dim() {
        return Err(NnError::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let n_cells = S::of_usize(pred.len());
    if pred.is_empty() {
        return Err(NnError::Argument("empty prediction batch".to_string()));
    }
    let diff = pred - target;
    let mse = diff.iter().map(|&d| d * d).fold(S::zero(), |a, v| a + v) / n_cells;
    let loss = mse.sqrt();
    let denom = (loss.max(S::of_f64(LOSS_FLOOR))) * n_cells;
    let grad = diff.mapv(|d| d / denom);
    Ok((loss, grad))
}

/// lambda * sum(|b|) over a set of bias vectors, with the matching
/// subgradient lambda * sign(b) per vector; sign(0) = 0.
pub fn l1_penalty<S: Scalar>(biases: &[&Array1<S>], lambda: S) -> (S, Vec<Array1<S>>) {
    let mut total = S::zero();
    let mut grads = Vec::with_capacity(biases.len());
    for b in biases {
        for &v in b.iter() {
            total += v.abs();
        }
        grads.push(b.mapv(|v| {
            if v > S::zero() {
                lambda
            } else if v < S::zero() {
                -lambda
            } else {
                S::zero()
            }
        }));
    }
    (lambda * total, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_diff, max_rel_err};

    #[test]
    fn opposite_one_hots_give_unit_loss() {
        let pred = Array2::from_shape_vec((1, 2), vec![1.0f64, 0.0]).unwrap();
        let target = Array2::from_shape_vec((1, 2), vec![0.0, 1.0]).unwrap();
        let (loss, _) = rmse_loss(&pred, &target).unwrap();
        assert!((loss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_has_finite_gradient() {
        let pred = Array2::from_elem((3, 4), 0.25f64);
        let (loss, grad) = rmse_loss(&pred, &pred.clone()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|v| v.is_finite()));
        assert!(grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pred =
            Array2::from_shape_vec((2, 3), vec![0.7f64, 0.2, 0.1, 0.3, 0.4, 0.3]).unwrap();
        let target =
            Array2::from_shape_vec((2, 3), vec![1.0f64, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let (_, grad) = rmse_loss(&pred, &target).unwrap();
        let fd = central_diff(
            &mut |p: &[f64]| {
                let q = Array2::from_shape_vec((2, 3), p.to_vec()).unwrap();
                rmse_loss(&q, &target).unwrap().0
            },
            &pred.iter().cloned().collect::<Vec<_>>(),
            1e-6,
        );
        assert!(max_rel_err(&grad.iter().cloned().collect::<Vec<_>>(), &fd) < 1e-4);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = Array2::<f64>::zeros((2, 3));
        let b = Array2::<f64>::zeros((3, 2));
        assert!(matches!(rmse_loss(&a, &b), Err(NnError::Shape(_))));
    }

    #[test]
    fn l1_penalty_worked_example() {
        let b = Array1::from_vec(vec![1.0f64, -2.0]);
        let (value, grads) = l1_penalty(&[&b], 0.001);
        assert!((value - 0.003).abs() < 1e-12);
        assert_eq!(grads[0].to_vec(), vec![0.001, -0.001]);
    }

    #[test]
    fn l1_subgradient_at_zero_is_zero() {
        let b = Array1::from_vec(vec![0.0f64, 5.0, -5.0]);
        let (value, grads) = l1_penalty(&[&b], 0.1);
        assert!((value - 1.0).abs() < 1e-12);
        assert_eq!(grads[0].to_vec(), vec![0.0, 0.1, -0.1]);
    }

    #[test]
    fn l1_sums_across_vectors() {
        let b1 = Array1::from_vec(vec![1.0f64]);
        let b2 = Array1::from_vec(vec![-3.0f64, 2.0]);
        let (value, grads) = l1_penalty(&[&b1, &b2], 0.5);
        assert!((value - 3.0).abs() < 1e-12);
        assert_eq!(grads.len(), 2);
    }
}
