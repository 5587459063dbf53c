//! LSTM layer: batched forward recursion and exact backpropagation through
//! time. Gate pre-activations are laid out as the concatenated columns
//! [input | forget | cell | output] of one `(.., 4*units)` matrix.

use ndarray::{s, Array1, Array2, Array3, Axis};
use rand_chacha::ChaCha8Rng;

use crate::Scalar;

use super::activations::{hard_sigmoid, hard_sigmoid_grad_from_value};
use super::init::glorot_uniform;
use super::{matmul, NnError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams<S: Scalar> {
    /// Input weights, (in_dim, 4*units).
    pub w: Array2<S>,
    /// Recurrent weights, (units, 4*units).
    pub u: Array2<S>,
    /// Bias, (4*units). Forget section starts at 1.0.
    pub b: Array1<S>,
}

impl<S: Scalar> LstmLayerParams<S> {
    pub fn init(in_dim: usize, units: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut b = Array1::zeros(4 * units);
        b.slice_mut(s![units..2 * units]).fill(S::one());
        Self {
            w: glorot_uniform(in_dim, 4 * units, rng),
            u: glorot_uniform(units, 4 * units, rng),
            b,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn units(&self) -> usize {
        self.u.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.u.len() + self.b.len()
    }
}

/// Everything the backward pass needs, saved per timestep.
pub struct LstmCache<S: Scalar> {
    /// Post-activation gates (T, batch, 4*units): [i | f | g | o].
    pub gates: Array3<S>,
    /// Cell state c_t, (T, batch, units).
    pub c: Array3<S>,
    /// tanh(c_t), (T, batch, units).
    pub tanh_c: Array3<S>,
    /// h_{t-1} entering each step (unmasked), (T, batch, units).
    pub h_prev: Array3<S>,
    /// c_{t-1} entering each step, (T, batch, units).
    pub c_prev: Array3<S>,
    /// The recurrent dropout mask applied to h_{t-1}, (batch, units).
    pub rec_mask: Option<Array2<S>>,
}

#[derive(Debug, Clone)]
pub struct LstmGrads<S: Scalar> {
    pub w: Array2<S>,
    pub u: Array2<S>,
    pub b: Array1<S>,
}

/// Runs the recursion over a time-major sequence batch `(T, batch,
/// in_dim)`. The recurrent dropout mask, when given, multiplies h_{t-1} in
/// every gate pre-activation and stays fixed across timesteps.
pub fn lstm_forward<S: Scalar>(
    params: &LstmLayerParams<S>,
    x_seq: &Array3<S>,
    h0: &Array2<S>,
    c0: &Array2<S>,
    rec_mask: Option<&Array2<S>>,
) -> Result<(Array3<S>, LstmCache<S>)> {
    let (t_len, batch, in_dim) = x_seq.dim();
    let units = params.units();
    if in_dim != params.in_dim() {
        return Err(NnError::Shape(format!(
            "sequence features {in_dim} vs layer input {}",
            params.in_dim()
        )));
    }
    if h0.dim() != (batch, units) || c0.dim() != (batch, units) {
        return Err(NnError::Shape(format!(
            "state shapes {:?}/{:?} vs (batch, units) = ({batch}, {units})",
            h0.dim(),
            c0.dim()
        )));
    }
    if let Some(mask) = rec_mask {
        if mask.dim() != (batch, units) {
            return Err(NnError::Shape(format!(
                "recurrent mask {:?} vs ({batch}, {units})",
                mask.dim()
            )));
        }
    }

    let mut h_seq = Array3::zeros((t_len, batch, units));
    let mut gates = Array3::zeros((t_len, batch, 4 * units));
    let mut c_all = Array3::zeros((t_len, batch, units));
    let mut tanh_c_all = Array3::zeros((t_len, batch, units));
    let mut h_prev_all = Array3::zeros((t_len, batch, units));
    let mut c_prev_all = Array3::zeros((t_len, batch, units));

    let mut h = h0.clone();
    let mut c = c0.clone();
    for t in 0..t_len {
        h_prev_all.slice_mut(s![t, .., ..]).assign(&h);
        c_prev_all.slice_mut(s![t, .., ..]).assign(&c);
        let h_in = match rec_mask {
            Some(mask) => &h * mask,
            None => h.clone(),
        };
        let x_t = x_seq.slice(s![t, .., ..]);
        let mut a = matmul(x_t, params.w.view());
        a += &matmul(h_in.view(), params.u.view());
        for mut row in a.rows_mut() {
            row += &params.b;
        }
        // Gate activations in place: hard sigmoid on i, f, o; tanh on g.
        for (col, v) in a.indexed_iter_mut().map(|((_, col), v)| (col, v)) {
            *v = if (2 * units..3 * units).contains(&col) {
                v.tanh()
            } else {
                hard_sigmoid(*v)
            };
        }
        let i = a.slice(s![.., 0..units]);
        let f = a.slice(s![.., units..2 * units]);
        let g = a.slice(s![.., 2 * units..3 * units]);
        let o = a.slice(s![.., 3 * units..4 * units]);
        c = &f.to_owned() * &c + &i.to_owned() * &g.to_owned();
        let tanh_c = c.mapv(S::tanh);
        h = &o.to_owned() * &tanh_c;

        gates.slice_mut(s![t, .., ..]).assign(&a);
        c_all.slice_mut(s![t, .., ..]).assign(&c);
        tanh_c_all.slice_mut(s![t, .., ..]).assign(&tanh_c);
        h_seq.slice_mut(s![t, .., ..]).assign(&h);
    }
    let cache = LstmCache {
        gates,
        c: c_all,
        tanh_c: tanh_c_all,
        h_prev: h_prev_all,
        c_prev: c_prev_all,
        rec_mask: rec_mask.cloned(),
    };
    Ok((h_seq, cache))
}

/// Exact BPTT through the forward recursion. Returns parameter gradients
/// and the gradient with respect to the input sequence.
pub fn lstm_backward<S: Scalar>(
    params: &LstmLayerParams<S>,
    x_seq: &Array3<S>,
    cache: &LstmCache<S>,
    grad_h_seq: &Array3<S>,
) -> Result<(LstmGrads<S>, Array3<S>)> {
    let (t_len, batch, in_dim) = x_seq.dim();
    let units = params.units();
    if grad_h_seq.dim() != (t_len, batch, units) {
        return Err(NnError::Shape(format!(
            "upstream gradient {:?} vs (T, batch, units) = ({t_len}, {batch}, {units})",
            grad_h_seq.dim()
        )));
    }

    let mut dw = Array2::zeros((in_dim, 4 * units));
    let mut du = Array2::zeros((units, 4 * units));
    let mut db = Array1::zeros(4 * units);
    let mut grad_x = Array3::zeros((t_len, batch, in_dim));
    let mut dh_next = Array2::<S>::zeros((batch, units));
    let mut dc_next = Array2::<S>::zeros((batch, units));

    for t in (0..t_len).rev() {
        let gates = cache.gates.slice(s![t, .., ..]);
        let i = gates.slice(s![.., 0..units]);
        let f = gates.slice(s![.., units..2 * units]);
        let g = gates.slice(s![.., 2 * units..3 * units]);
        let o = gates.slice(s![.., 3 * units..4 * units]);
        let tanh_c = cache.tanh_c.slice(s![t, .., ..]);
        let c_prev = cache.c_prev.slice(s![t, .., ..]);
        let h_prev = cache.h_prev.slice(s![t, .., ..]);

        let dh = &grad_h_seq.slice(s![t, .., ..]).to_owned() + &dh_next;
        // c_t path: from h_t = o * tanh(c_t) plus the carry from t+1.
        let mut dc = &dh * &o;
        dc.zip_mut_with(&tanh_c.to_owned(), |v, &tc| *v = *v * (S::one() - tc * tc));
        dc += &dc_next;

        // Post-activation gate gradients.
        let d_o = &dh * &tanh_c;
        let d_i = &dc * &g;
        let d_f = &dc * &c_prev;
        let d_g = &dc * &i;

        // Pre-activation gradients, using each gate's value to recover the
        // local derivative.
        let mut da = Array2::zeros((batch, 4 * units));
        {
            let mut set = |offset: usize, post: &Array2<S>, saturating: bool, vals: &ndarray::ArrayView2<S>| {
                for r in 0..batch {
                    for cidx in 0..units {
                        let grad = if saturating {
                            hard_sigmoid_grad_from_value(vals[(r, cidx)])
                        } else {
                            S::one() - vals[(r, cidx)] * vals[(r, cidx)]
                        };
                        da[(r, offset + cidx)] = post[(r, cidx)] * grad;
                    }
                }
            };
            set(0, &d_i, true, &i);
            set(units, &d_f, true, &f);
            set(2 * units, &d_g, false, &g);
            set(3 * units, &d_o, true, &o);
        }

        let h_in = match &cache.rec_mask {
            Some(mask) => &h_prev.to_owned() * mask,
            None => h_prev.to_owned(),
        };
        dw += &matmul(x_seq.slice(s![t, .., ..]).t(), da.view());
        du += &matmul(h_in.t(), da.view());
        db += &da.sum_axis(Axis(0));
        grad_x.slice_mut(s![t, .., ..]).assign(&matmul(da.view(), params.w.t()));

        dh_next = matmul(da.view(), params.u.t());
        if let Some(mask) = &cache.rec_mask {
            dh_next = &dh_next * mask;
        }
        dc_next = &dc * &f;
    }
    Ok((LstmGrads { w: dw, u: du, b: db }, grad_x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_diff, max_rel_err};
    use crate::rng::seeded_rng;

    fn zero_state(batch: usize, units: usize) -> (Array2<f64>, Array2<f64>) {
        (Array2::zeros((batch, units)), Array2::zeros((batch, units)))
    }

    #[test]
    fn zero_weights_and_inputs_give_zero_outputs() {
        let params = LstmLayerParams::<f64> {
            w: Array2::zeros((3, 8)),
            u: Array2::zeros((2, 8)),
            b: Array1::zeros(8),
        };
        let x = Array3::zeros((4, 2, 3));
        let (h0, c0) = zero_state(2, 2);
        let (h_seq, _) = lstm_forward(&params, &x, &h0, &c0, None).unwrap();
        // Gates land at hard_sigmoid(0) = 0.5, g at tanh(0) = 0, so the
        // cell never accumulates and h stays 0.
        assert!(h_seq.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forced_gates_carry_memory() {
        // Bias drives f to saturation 1 and i to 0: c_t = c_0 forever.
        let units = 3;
        let mut b = Array1::zeros(4 * units);
        b.slice_mut(s![0..units]).fill(-100.0); // i = 0
        b.slice_mut(s![units..2 * units]).fill(100.0); // f = 1
        let params = LstmLayerParams::<f64> {
            w: Array2::zeros((2, 4 * units)),
            u: Array2::zeros((units, 4 * units)),
            b,
        };
        let x = Array3::from_elem((5, 1, 2), 0.7);
        let h0 = Array2::zeros((1, units));
        let c0 = Array2::from_elem((1, units), 0.9);
        let (_, cache) = lstm_forward(&params, &x, &h0, &c0, None).unwrap();
        for t in 0..5 {
            for j in 0..units {
                assert!((cache.c[(t, 0, j)] - 0.9).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_scalar_loop_oracle() {
        // units = 2, in = 2, T = 3, batch = 1, hand-rolled recursion.
        let mut rng = seeded_rng(5);
        let params = LstmLayerParams::<f64>::init(2, 2, &mut rng);
        let x = Array3::from_shape_fn((3, 1, 2), |(t, _, d)| 0.3 * (t as f64 + 1.0) - 0.2 * d as f64);
        let (h0, c0) = zero_state(1, 2);
        let (h_seq, _) = lstm_forward(&params, &x, &h0, &c0, None).unwrap();

        let hs = |v: f64| (0.2 * v + 0.5).clamp(0.0, 1.0);
        let mut h = [0.0f64; 2];
        let mut c = [0.0f64; 2];
        for t in 0..3 {
            let mut a = [0.0f64; 8];
            for col in 0..8 {
                let mut acc = params.b[col];
                for d in 0..2 {
                    acc += x[(t, 0, d)] * params.w[(d, col)];
                }
                for j in 0..2 {
                    acc += h[j] * params.u[(j, col)];
                }
                a[col] = acc;
            }
            let mut new_h = [0.0f64; 2];
            let mut new_c = [0.0f64; 2];
            for j in 0..2 {
                let i_g = hs(a[j]);
                let f_g = hs(a[2 + j]);
                let g_g = a[4 + j].tanh();
                let o_g = hs(a[6 + j]);
                new_c[j] = f_g * c[j] + i_g * g_g;
                new_h[j] = o_g * new_c[j].tanh();
            }
            h = new_h;
            c = new_c;
            for j in 0..2 {
                assert!(
                    (h_seq[(t, 0, j)] - h[j]).abs() < 1e-12,
                    "t={t} j={j}: {} vs {}",
                    h_seq[(t, 0, j)],
                    h[j]
                );
            }
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_param_grads() {
        let mut rng = seeded_rng(9);
        let params = LstmLayerParams::<f64>::init(3, 4, &mut rng);
        let x = Array3::from_shape_fn((4, 2, 3), |(t, b, d)| (t + b + d) as f64 * 0.1);
        let (h0, c0) = zero_state(2, 4);
        let (_, cache) = lstm_forward(&params, &x, &h0, &c0, None).unwrap();
        let (grads, grad_x) =
            lstm_backward(&params, &x, &cache, &Array3::zeros((4, 2, 4))).unwrap();
        assert!(grads.w.iter().all(|&v| v == 0.0));
        assert!(grads.u.iter().all(|&v| v == 0.0));
        assert!(grads.b.iter().all(|&v| v == 0.0));
        assert!(grad_x.iter().all(|&v| v == 0.0));
    }

    /// Loss = sum of squares of the full h sequence; FD-checks every
    /// parameter and the input, with and without a recurrent mask.
    fn fd_check_lstm(seed: u64, with_mask: bool) {
        let (t_len, batch, in_dim, units) = (3, 2, 4, 3);
        let mut rng = seeded_rng(seed);
        let params = LstmLayerParams::<f64>::init(in_dim, units, &mut rng);
        let x = glorot_uniform::<f64>(t_len * batch, in_dim, &mut rng)
            .into_shape_with_order((t_len, batch, in_dim))
            .unwrap();
        let mask = with_mask.then(|| {
            Array2::from_shape_fn((batch, units), |(r, j)| {
                if (r + j) % 3 == 0 { 0.0 } else { 1.25 }
            })
        });
        let (h0, c0) = zero_state(batch, units);

        let loss = |p: &LstmLayerParams<f64>, xs: &Array3<f64>| -> f64 {
            let (h_seq, _) = lstm_forward(p, xs, &h0, &c0, mask.as_ref()).unwrap();
            h_seq.iter().map(|v| v * v).sum()
        };
        let (h_seq, cache) = lstm_forward(&params, &x, &h0, &c0, mask.as_ref()).unwrap();
        let grad_h = h_seq.mapv(|v| 2.0 * v);
        let (grads, grad_x) = lstm_backward(&params, &x, &cache, &grad_h).unwrap();

        let fd_w = central_diff(
            &mut |p: &[f64]| {
                let mut q = params.clone();
                q.w = Array2::from_shape_vec((in_dim, 4 * units), p.to_vec()).unwrap();
                loss(&q, &x)
            },
            &params.w.iter().cloned().collect::<Vec<_>>(),
            1e-5,
        );
        assert!(
            max_rel_err(&grads.w.iter().cloned().collect::<Vec<_>>(), &fd_w) < 1e-4,
            "W (seed {seed}, mask {with_mask})"
        );

        let fd_u = central_diff(
            &mut |p: &[f64]| {
                let mut q = params.clone();
                q.u = Array2::from_shape_vec((units, 4 * units), p.to_vec()).unwrap();
                loss(&q, &x)
            },
            &params.u.iter().cloned().collect::<Vec<_>>(),
            1e-5,
        );
        assert!(
            max_rel_err(&grads.u.iter().cloned().collect::<Vec<_>>(), &fd_u) < 1e-4,
            "U (seed {seed}, mask {with_mask})"
        );

        let fd_b = central_diff(
            &mut |p: &[f64]| {
                let mut q = params.clone();
                q.b = Array1::from_vec(p.to_vec());
                loss(&q, &x)
            },
            &params.b.to_vec(),
            1e-5,
        );
        assert!(
            max_rel_err(&grads.b.to_vec(), &fd_b) < 1e-4,
            "b (seed {seed}, mask {with_mask})"
        );

        let fd_x = central_diff(
            &mut |p: &[f64]| {
                let xs = Array3::from_shape_vec((t_len, batch, in_dim), p.to_vec()).unwrap();
                loss(&params, &xs)
            },
            &x.iter().cloned().collect::<Vec<_>>(),
            1e-5,
        );
        assert!(
            max_rel_err(&grad_x.iter().cloned().collect::<Vec<_>>(), &fd_x) < 1e-4,
            "x (seed {seed}, mask {with_mask})"
        );
    }

    #[test]
    fn gradients_match_finite_differences() {
        fd_check_lstm(21, false);
        fd_check_lstm(22, true);
    }

    #[test]
    fn forget_bias_initializes_to_one() {
        let params = LstmLayerParams::<f32>::init(6, 5, &mut seeded_rng(1));
        for j in 0..5 {
            assert_eq!(params.b[5 + j], 1.0);
            assert_eq!(params.b[j], 0.0);
            assert_eq!(params.b[10 + j], 0.0);
            assert_eq!(params.b[15 + j], 0.0);
        }
        assert_eq!(params.param_count(), 6 * 20 + 5 * 20 + 20);
    }
}
