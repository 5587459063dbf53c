//! Fully connected layer with selectable activation.

use ndarray::{Array1, Array2, Axis};
use rand_chacha::ChaCha8Rng;

use crate::Scalar;

use super::activations::{sigmoid, softmax_rows};
use super::init::glorot_uniform;
use super::{matmul, NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayerParams<S: Scalar> {
    pub w: Array2<S>,
    pub b: Array1<S>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads<S: Scalar> {
    pub w: Array2<S>,
    pub b: Array1<S>,
}

impl<S: Scalar> DenseLayerParams<S> {
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: glorot_uniform(in_dim, out_dim, rng),
            b: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.ncols()
    }
}

/// y = act(x W + b) for a batch of rows.
pub fn dense_forward<S: Scalar>(
    params: &DenseLayerParams<S>,
    x: &Array2<S>,
    activation: Activation,
) -> Result<Array2<S>> {
    if x.ncols() != params.in_dim() {
        return Err(NnError::Shape(format!(
            "input has {} columns, layer expects {}",
            x.ncols(),
            params.in_dim()
        )));
    }
    let mut z = matmul(x.view(), params.w.view());
    for mut row in z.rows_mut() {
        row += &params.b;
    }
    Ok(match activation {
        Activation::Identity => z,
        Activation::Tanh => {
            z.mapv_inplace(|v| v.tanh());
            z
        }
        Activation::Sigmoid => {
            z.mapv_inplace(sigmoid);
            z
        }
        Activation::Softmax => softmax_rows(&z),
    })
}

/// Gradients through the activation and affine map. `y` must be the output
/// of [`dense_forward`] for the same `x`; every activation's Jacobian here
/// is a function of its output alone.
pub fn dense_backward<S: Scalar>(
    params: &DenseLayerParams<S>,
    x: &Array2<S>,
    y: &Array2<S>,
    activation: Activation,
    grad_y: &Array2<S>,
) -> Result<(DenseGrads<S>, Array2<S>)> {
    if grad_y.dim() != y.dim() {
        return Err(NnError::Shape(format!(
            "upstream gradient {:?} does not match output {:?}",
            grad_y.dim(),
            y.dim()
        )));
    }
    let grad_z = match activation {
        Activation::Identity => grad_y.clone(),
        Activation::Tanh => {
            let mut g = grad_y.clone();
            g.zip_mut_with(y, |gv, &yv| *gv = *gv * (S::one() - yv * yv));
            g
        }
        Activation::Sigmoid => {
            let mut g = grad_y.clone();
            g.zip_mut_with(y, |gv, &yv| *gv = *gv * yv * (S::one() - yv));
            g
        }
        Activation::Softmax => {
            // Full Jacobian per row: dz_j = y_j * (g_j - sum_k g_k y_k).
            let mut g = Array2::zeros(grad_y.dim());
            for ((mut out_row, y_row), g_row) in g
                .rows_mut()
                .into_iter()
                .zip(y.rows())
                .zip(grad_y.rows())
            {
                let dot = y_row
                    .iter()
                    .zip(g_row.iter())
                    .map(|(&yv, &gv)| yv * gv)
                    .sum::<S>();
                for ((o, &yv), &gv) in out_row.iter_mut().zip(y_row).zip(g_row) {
                    *o = yv * (gv - dot);
                }
            }
            g
        }
    };
    let grads = DenseGrads {
        w: matmul(x.t(), grad_z.view()),
        b: grad_z.sum_axis(Axis(0)),
    };
    let grad_x = matmul(grad_z.view(), params.w.t());
    Ok((grads, grad_x))
}
