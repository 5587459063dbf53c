//! Adam optimizer over flat parameter slices, with the 1/(1 + decay*t)
//! learning-rate schedule, plus a reduce-on-plateau controller that scales
//! the base rate when validation loss stalls.

use crate::Scalar;

/// One Adam state per training run. Parameter groups register lazily: the
/// first `step` call with a given group index allocates its moments.
#[derive(Debug, Clone)]
pub struct AdamState<S: Scalar> {
    pub t: u64,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    pub decay: S,
    /// Base rate before time decay; plateau reductions rewrite this.
    pub lr_sched: S,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(lr0: f64) -> Self {
        Self {
            t: 0,
            beta1: S::of_f64(0.9),
            beta2: S::of_f64(0.999),
            eps: S::of_f64(1e-8),
            decay: S::of_f64(1e-6),
            lr_sched: S::of_f64(lr0),
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Advances the shared timestep. Call once per optimization step,
    /// before updating any parameter group.
    pub fn begin_step(&mut self) -> S {
        self.t += 1;
        self.lr_sched / (S::one() + self.decay * S::of_usize(self.t as usize))
    }

    /// Applies one Adam update to a parameter group in place. `lr_t` is
    /// the value returned by `begin_step` for the current step.
    pub fn update(&mut self, group: usize, lr_t: S, params: &mut [S], grads: &[S]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient length mismatch");
        while self.m.len() <= group {
            self.m.push(Vec::new());
            self.v.push(Vec::new());
        }
        if self.m[group].is_empty() {
            self.m[group] = vec![S::zero(); params.len()];
            self.v[group] = vec![S::zero(); params.len()];
        }
        assert_eq!(self.m[group].len(), params.len(), "parameter group size changed");

        let t = self.t as i32;
        let bc1 = S::one() - self.beta1.powi(t);
        let bc2 = S::one() - self.beta2.powi(t);
        let m = &mut self.m[group];
        let v = &mut self.v[group];
        for k in 0..params.len() {
            let g = grads[k];
            m[k] = self.beta1 * m[k] + (S::one() - self.beta1) * g;
            v[k] = self.beta2 * v[k] + (S::one() - self.beta2) * g * g;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            params[k] -= lr_t * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Multiplies the optimizer's base rate by `factor` after `patience`
/// epochs without a validation improvement of at least `min_delta`.
#[derive(Debug, Clone)]
pub struct PlateauScheduler<S: Scalar> {
    pub patience: u32,
    pub factor: S,
    pub min_delta: S,
    pub floor: S,
    best: S,
    wait: u32,
}

impl<S: Scalar> PlateauScheduler<S> {
    pub fn new(patience: u32, factor: f64, min_delta: f64) -> Self {
        Self {
            patience,
            factor: S::of_f64(factor),
            min_delta: S::of_f64(min_delta),
            floor: S::of_f64(1e-10),
            best: S::infinity(),
            wait: 0,
        }
    }

    /// Feeds one epoch's validation loss; mutates the optimizer's base
    /// rate on plateau. Returns true when a reduction fired.
    pub fn observe(&mut self, loss: S, opt: &mut AdamState<S>) -> bool {
        if loss < self.best - self.min_delta {
            self.best = loss;
            self.wait = 0;
            return false;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            opt.lr_sched = (opt.lr_sched * self.factor).max(self.floor);
            self.wait = 0;
            return true;
        }
        false
    }
}
