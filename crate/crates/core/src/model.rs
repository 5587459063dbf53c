//! The recurrent classifier: three LSTM layers with batch normalization
//! and dropout, temporal pooling, two tanh dense layers, and a task head.
//! Includes the training loop, the freeze-and-fine-tune transfer
//! protocol, and self-contained checkpoint persistence.

use std::path::Path;

use ndarray::{s, Array1, Array2, Array3, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ClipSet, DataError};
use crate::dsp::{FrameSpec, NormStats};
use crate::nn::{
    batchnorm_backward, batchnorm_forward, batchnorm_infer, dense_backward, dense_forward,
    dropout_mask2, dropout_mask3, l1_penalty, lstm_backward, lstm_forward, rmse_loss, Activation,
    AdamState, BatchNormCache, BatchNormParams, DenseGrads, DenseLayerParams, LstmCache,
    LstmGrads, LstmLayerParams, Mode, NnError, PlateauScheduler,
};
use crate::rng::component_rng;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("architecture mismatch: {0}")]
    Arch(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("checkpoint version error: {0}")]
    Version(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Classification task the final layer is shaped for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    #[serde(rename = "phq8_binary")]
    Phq8Binary,
    #[serde(rename = "phq8_score")]
    Phq8Score,
    #[serde(rename = "emotion8")]
    Emotion8,
}

impl HeadKind {
    pub fn n_classes(self) -> usize {
        match self {
            HeadKind::Phq8Binary => 2,
            HeadKind::Phq8Score => 24,
            HeadKind::Emotion8 => 8,
        }
    }

    pub fn activation(self) -> Activation {
        match self {
            HeadKind::Phq8Binary => Activation::Sigmoid,
            HeadKind::Phq8Score | HeadKind::Emotion8 => Activation::Softmax,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            HeadKind::Phq8Binary => "phq8_binary",
            HeadKind::Phq8Score => "phq8_score",
            HeadKind::Emotion8 => "emotion8",
        }
    }

    pub fn parse(s: &str) -> Option<HeadKind> {
        match s {
            "phq8_binary" => Some(HeadKind::Phq8Binary),
            "phq8_score" => Some(HeadKind::Phq8Score),
            "emotion8" => Some(HeadKind::Emotion8),
            _ => None,
        }
    }
}

/// How the LSTM output sequence collapses to one vector per clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pooling {
    #[serde(rename = "mean")]
    Mean,
    #[serde(rename = "last")]
    LastHidden,
}

impl Pooling {
    pub fn parse(s: &str) -> Option<Pooling> {
        match s {
            "mean" => Some(Pooling::Mean),
            "last" => Some(Pooling::LastHidden),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input_dim: usize,
    pub lstm_units: Vec<usize>,
    pub dense_units: Vec<usize>,
    pub head: HeadKind,
    pub pooling: Pooling,
    pub dropout: f64,
    pub recurrent_dropout: f64,
    pub l1_bias: f64,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        Self {
            input_dim: 60,
            lstm_units: vec![40, 30, 20],
            dense_units: vec![15, 10],
            head: HeadKind::Phq8Binary,
            pooling: Pooling::Mean,
            dropout: 0.2,
            recurrent_dropout: 0.2,
            l1_bias: 0.001,
        }
    }
}

impl ArchitectureSpec {
    pub fn with_head(&self, head: HeadKind) -> Self {
        Self { head, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(ModelError::Argument("input_dim must be positive".to_string()));
        }
        if self.lstm_units.is_empty() || self.lstm_units.iter().any(|&u| u == 0) {
            return Err(ModelError::Argument(
                "lstm_units must be non-empty and positive".to_string(),
            ));
        }
        if self.dense_units.iter().any(|&u| u == 0) {
            return Err(ModelError::Argument("dense_units must be positive".to_string()));
        }
        for (name, rate) in [("dropout", self.dropout), ("recurrent_dropout", self.recurrent_dropout)]
        {
            if !(0.0..1.0).contains(&rate) {
                return Err(ModelError::Argument(format!("{name} {rate} outside [0, 1)")));
            }
        }
        if self.l1_bias < 0.0 {
            return Err(ModelError::Argument("l1_bias must be non-negative".to_string()));
        }
        Ok(())
    }

    /// Width of the vector entering the head layer.
    pub fn head_input_dim(&self) -> usize {
        self.dense_units
            .last()
            .copied()
            .unwrap_or_else(|| *self.lstm_units.last().expect("validated non-empty"))
    }

    /// Fields that must agree for transfer; everything except the head.
    fn transfer_signature(&self) -> (usize, &[usize], &[usize], Pooling) {
        (self.input_dim, &self.lstm_units, &self.dense_units, self.pooling)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<S: Scalar> {
    pub arch: ArchitectureSpec,
    pub lstm: Vec<LstmLayerParams<S>>,
    pub bn: Vec<BatchNormParams<S>>,
    pub dense: Vec<DenseLayerParams<S>>,
    pub head: DenseLayerParams<S>,
}

/// Activations the backward pass replays, produced by a training-mode
/// forward call. `prefix` is absent when the recurrent stack ran frozen.
pub struct ForwardCache<S: Scalar> {
    prefix: Option<PrefixCache<S>>,
    t_len: usize,
    pooled: Array2<S>,
    dense_outputs: Vec<Array2<S>>,
    head_output: Array2<S>,
}

struct PrefixCache<S: Scalar> {
    lstm_inputs: Vec<Array3<S>>,
    lstm_caches: Vec<LstmCache<S>>,
    bn_caches: Vec<BatchNormCache<S>>,
    dropout_masks: Vec<Option<Array3<S>>>,
}

pub struct NetGrads<S: Scalar> {
    /// Empty when the recurrent stack is frozen.
    pub lstm: Vec<LstmGrads<S>>,
    /// (dgamma, dbeta) per layer; empty when frozen.
    pub bn: Vec<(Array1<S>, Array1<S>)>,
    pub dense: Vec<DenseGrads<S>>,
    pub head: DenseGrads<S>,
}

impl<S: Scalar> Network<S> {
    pub fn init(arch: ArchitectureSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        arch.validate()?;
        let mut lstm = Vec::new();
        let mut bn = Vec::new();
        let mut in_dim = arch.input_dim;
        for &units in &arch.lstm_units {
            lstm.push(LstmLayerParams::init(in_dim, units, rng));
            bn.push(BatchNormParams::init(units));
            in_dim = units;
        }
        let mut dense = Vec::new();
        for &units in &arch.dense_units {
            dense.push(DenseLayerParams::init(in_dim, units, rng));
            in_dim = units;
        }
        let head = DenseLayerParams::init(in_dim, arch.head.n_classes(), rng);
        Ok(Self { arch, lstm, bn, dense, head })
    }

    /// Total persisted parameters, running statistics included.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        for l in &self.lstm {
            n += l.param_count();
        }
        for b in &self.bn {
            n += 4 * b.dim();
        }
        for d in &self.dense {
            n += d.w.len() + d.b.len();
        }
        n + self.head.w.len() + self.head.b.len()
    }

    fn check_input(&self, x: &Array3<S>) -> Result<(usize, usize)> {
        let (t_len, batch, dim) = x.dim();
        if dim != self.arch.input_dim {
            return Err(NnError::Shape(format!(
                "input features {dim} vs architecture input {}",
                self.arch.input_dim
            ))
            .into());
        }
        if t_len == 0 || batch == 0 {
            return Err(ModelError::Argument("empty input batch".to_string()));
        }
        Ok((t_len, batch))
    }

    fn pool(&self, x: &Array3<S>) -> Array2<S> {
        let t_len = x.dim().0;
        match self.arch.pooling {
            Pooling::Mean => x.sum_axis(Axis(0)) / S::of_usize(t_len),
            Pooling::LastHidden => x.index_axis(Axis(0), t_len - 1).to_owned(),
        }
    }

    /// Recurrent stack in inference behavior: no masks, running-stat
    /// normalization, layers untouched.
    fn run_prefix_infer(&self, x: &Array3<S>) -> Result<Array3<S>> {
        let (t_len, batch, _) = x.dim();
        let mut cur = x.clone();
        for l in 0..self.lstm.len() {
            let units = self.lstm[l].units();
            let zeros = Array2::zeros((batch, units));
            let (h_seq, _) = lstm_forward(&self.lstm[l], &cur, &zeros, &zeros, None)?;
            let flat = h_seq
                .into_shape_with_order((t_len * batch, units))
                .expect("contiguous sequence");
            let y = batchnorm_infer(&self.bn[l], &flat)?;
            cur = y
                .into_shape_with_order((t_len, batch, units))
                .expect("contiguous sequence");
        }
        Ok(cur)
    }

    /// Deterministic inference: `(T, batch, input)` to head scores
    /// `(batch, classes)`.
    pub fn infer(&self, x: &Array3<S>) -> Result<Array2<S>> {
        self.check_input(x)?;
        let mut cur = self.pool(&self.run_prefix_infer(x)?);
        for d in &self.dense {
            cur = dense_forward(d, &cur, Activation::Tanh)?;
        }
        Ok(dense_forward(&self.head, &cur, self.arch.head.activation())?)
    }

    /// Training-mode forward pass. Draws one recurrent mask plus one
    /// dropout mask per recurrent layer, in layer order, from `rng`.
    /// With `freeze_prefix` the recurrent stack runs in inference
    /// behavior and is excluded from the backward pass.
    pub fn forward_train(
        &mut self,
        x: &Array3<S>,
        rng: &mut ChaCha8Rng,
        freeze_prefix: bool,
    ) -> Result<(Array2<S>, ForwardCache<S>)> {
        let (t_len, batch) = self.check_input(x)?;
        let (cur, prefix) = if freeze_prefix {
            (self.run_prefix_infer(x)?, None)
        } else {
            let mut lstm_inputs = Vec::new();
            let mut lstm_caches = Vec::new();
            let mut bn_caches = Vec::new();
            let mut dropout_masks = Vec::new();
            let mut cur = x.clone();
            for l in 0..self.lstm.len() {
                let units = self.lstm[l].units();
                let rec_mask = (self.arch.recurrent_dropout > 0.0)
                    .then(|| dropout_mask2::<S>(batch, units, self.arch.recurrent_dropout, rng));
                let zeros = Array2::zeros((batch, units));
                lstm_inputs.push(cur.clone());
                let (h_seq, cache) =
                    lstm_forward(&self.lstm[l], &cur, &zeros, &zeros, rec_mask.as_ref())?;
                lstm_caches.push(cache);
                let flat = h_seq
                    .into_shape_with_order((t_len * batch, units))
                    .expect("contiguous sequence");
                let (y, bn_cache) = batchnorm_forward(&mut self.bn[l], &flat, Mode::Train)?;
                bn_caches.push(bn_cache.expect("training cache"));
                let mut y3 = y
                    .into_shape_with_order((t_len, batch, units))
                    .expect("contiguous sequence");
                let mask = (self.arch.dropout > 0.0).then(|| {
                    let m = dropout_mask3::<S>(t_len, batch, units, self.arch.dropout, rng);
                    y3 *= &m;
                    m
                });
                dropout_masks.push(mask);
                cur = y3;
            }
            (
                cur,
                Some(PrefixCache { lstm_inputs, lstm_caches, bn_caches, dropout_masks }),
            )
        };

        let pooled = self.pool(&cur);
        let mut dense_outputs = Vec::new();
        let mut d_in = pooled.clone();
        for d in &self.dense {
            let y = dense_forward(d, &d_in, Activation::Tanh)?;
            dense_outputs.push(y.clone());
            d_in = y;
        }
        let head_output = dense_forward(&self.head, &d_in, self.arch.head.activation())?;
        let cache = ForwardCache {
            prefix,
            t_len,
            pooled,
            dense_outputs,
            head_output: head_output.clone(),
        };
        Ok((head_output, cache))
    }

    /// Backpropagates the head-output gradient through the cached forward
    /// pass. Frozen runs return empty recurrent gradients.
    pub fn backward(&self, cache: &ForwardCache<S>, grad_head: &Array2<S>) -> Result<NetGrads<S>> {
        let head_in = cache.dense_outputs.last().unwrap_or(&cache.pooled);
        let (head_grads, mut dx) = dense_backward(
            &self.head,
            head_in,
            &cache.head_output,
            self.arch.head.activation(),
            grad_head,
        )?;
        let mut dense_grads = Vec::new();
        for i in (0..self.dense.len()).rev() {
            let input = if i == 0 { &cache.pooled } else { &cache.dense_outputs[i - 1] };
            let (g, dxi) = dense_backward(
                &self.dense[i],
                input,
                &cache.dense_outputs[i],
                Activation::Tanh,
                &dx,
            )?;
            dense_grads.push(g);
            dx = dxi;
        }
        dense_grads.reverse();

        let mut lstm_grads = Vec::new();
        let mut bn_grads = Vec::new();
        if let Some(prefix) = &cache.prefix {
            let t_len = cache.t_len;
            let (batch, u_last) = dx.dim();
            let mut g3 = match self.arch.pooling {
                Pooling::Mean => {
                    let scale = S::one() / S::of_usize(t_len);
                    Array3::from_shape_fn((t_len, batch, u_last), |(_, b, f)| dx[(b, f)] * scale)
                }
                Pooling::LastHidden => {
                    let mut z = Array3::zeros((t_len, batch, u_last));
                    z.slice_mut(s![t_len - 1, .., ..]).assign(&dx);
                    z
                }
            };
            for l in (0..self.lstm.len()).rev() {
                if let Some(mask) = &prefix.dropout_masks[l] {
                    g3 *= mask;
                }
                let units = self.lstm[l].units();
                let flat = g3
                    .into_shape_with_order((t_len * batch, units))
                    .expect("contiguous gradient");
                let (dgamma, dbeta, dxf) =
                    batchnorm_backward(&self.bn[l], &prefix.bn_caches[l], &flat)?;
                let grad_h = dxf
                    .into_shape_with_order((t_len, batch, units))
                    .expect("contiguous gradient");
                let (lg, gx) = lstm_backward(
                    &self.lstm[l],
                    &prefix.lstm_inputs[l],
                    &prefix.lstm_caches[l],
                    &grad_h,
                )?;
                bn_grads.push((dgamma, dbeta));
                lstm_grads.push(lg);
                g3 = gx;
            }
            lstm_grads.reverse();
            bn_grads.reverse();
        }
        Ok(NetGrads { lstm: lstm_grads, bn: bn_grads, dense: dense_grads, head: head_grads })
    }

    /// One optimizer step over every trainable block, with stable group
    /// numbering so frozen runs and full runs share moment layout.
    fn apply_updates(
        &mut self,
        opt: &mut AdamState<S>,
        lr_t: S,
        grads: &NetGrads<S>,
        frozen: bool,
    ) {
        let mut group = 0;
        for l in 0..self.lstm.len() {
            if !frozen {
                let g = &grads.lstm[l];
                let layer = &mut self.lstm[l];
                opt.update(group, lr_t, layer.w.as_slice_mut().unwrap(), g.w.as_slice().unwrap());
                opt.update(
                    group + 1,
                    lr_t,
                    layer.u.as_slice_mut().unwrap(),
                    g.u.as_slice().unwrap(),
                );
                opt.update(
                    group + 2,
                    lr_t,
                    layer.b.as_slice_mut().unwrap(),
                    g.b.as_slice().unwrap(),
                );
                let (dgamma, dbeta) = &grads.bn[l];
                let norm = &mut self.bn[l];
                opt.update(
                    group + 3,
                    lr_t,
                    norm.gamma.as_slice_mut().unwrap(),
                    dgamma.as_slice().unwrap(),
                );
                opt.update(
                    group + 4,
                    lr_t,
                    norm.beta.as_slice_mut().unwrap(),
                    dbeta.as_slice().unwrap(),
                );
            }
            group += 5;
        }
        for (i, d) in self.dense.iter_mut().enumerate() {
            let g = &grads.dense[i];
            opt.update(group, lr_t, d.w.as_slice_mut().unwrap(), g.w.as_slice().unwrap());
            opt.update(group + 1, lr_t, d.b.as_slice_mut().unwrap(), g.b.as_slice().unwrap());
            group += 2;
        }
        opt.update(group, lr_t, self.head.w.as_slice_mut().unwrap(), grads.head.w.as_slice().unwrap());
        opt.update(
            group + 1,
            lr_t,
            self.head.b.as_slice_mut().unwrap(),
            grads.head.b.as_slice().unwrap(),
        );
    }

    /// FNV-1a over the bit patterns of the recurrent stack (LSTM weights
    /// and batch-norm parameters with their running statistics). The
    /// transfer protocol promises this digest never changes.
    pub fn frozen_stack_digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |h: &mut u64, v: S| {
            for byte in v.as_f64().to_bits().to_le_bytes() {
                *h ^= byte as u64;
                *h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for l in &self.lstm {
            for &v in l.w.iter().chain(l.u.iter()).chain(l.b.iter()) {
                eat(&mut h, v);
            }
        }
        for b in &self.bn {
            for &v in b
                .gamma
                .iter()
                .chain(b.beta.iter())
                .chain(b.running_mean.iter())
                .chain(b.running_var.iter())
            {
                eat(&mut h, v);
            }
        }
        h
    }
}

/// Index of the greatest score; ties go to the lowest index.
pub fn argmax<S: Scalar>(scores: ArrayView1<'_, S>) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

/// Inference scores for a whole clip set, `(clips, classes)`, evaluated
/// in batches.
pub fn score_set<S: Scalar>(
    net: &Network<S>,
    set: &ClipSet<S>,
    batch_size: usize,
) -> Result<Array2<S>> {
    let k = net.head.out_dim();
    let mut out = Array2::zeros((set.len(), k));
    let mut start = 0;
    while start < set.len() {
        let end = (start + batch_size).min(set.len());
        let idx: Vec<usize> = (start..end).collect();
        let y = net.infer(&set.batch(&idx))?;
        out.slice_mut(s![start..end, ..]).assign(&y);
        start = end;
    }
    Ok(out)
}

/// Accuracy and root-mean-square error of scores against integer labels
/// (targets one-hot).
fn metrics_from_scores<S: Scalar>(scores: &Array2<S>, labels: &[u32]) -> (f64, f64) {
    let (n, k) = scores.dim();
    assert_eq!(n, labels.len(), "score rows vs labels");
    let mut correct = 0usize;
    let mut sq = 0.0f64;
    for (i, row) in scores.rows().into_iter().enumerate() {
        if argmax(row) == labels[i] as usize {
            correct += 1;
        }
        for (j, &v) in row.iter().enumerate() {
            let target = if j == labels[i] as usize { 1.0 } else { 0.0 };
            let d = v.as_f64() - target;
            sq += d * d;
        }
    }
    (correct as f64 / n as f64, (sq / (n * k) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub rng_seed: u64,
    pub epochs: usize,
    pub final_train_loss: Option<f64>,
    pub final_val_loss: Option<f64>,
    /// Head tag of the checkpoint this one was fine-tuned from.
    pub pretrained_from: Option<String>,
}

impl Provenance {
    pub fn fresh(rng_seed: u64) -> Self {
        Self {
            rng_seed,
            epochs: 0,
            final_train_loss: None,
            final_val_loss: None,
            pretrained_from: None,
        }
    }
}

/// Everything inference needs: the network plus the feature-space
/// definition (frame geometry and normalization) it was trained in.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint<S: Scalar> {
    pub network: Network<S>,
    pub norm: NormStats<S>,
    pub frame_spec: FrameSpec,
    pub provenance: Provenance,
}

impl<S: Scalar> ModelCheckpoint<S> {
    pub fn arch(&self) -> &ArchitectureSpec {
        &self.network.arch
    }
}

/// Identity normalization for models built before stats exist.
fn identity_norm<S: Scalar>(dim: usize) -> NormStats<S> {
    NormStats { mean: Array1::zeros(dim), std: Array1::ones(dim) }
}

/// Fresh untrained model; the seed fully determines every weight.
pub fn build_model<S: Scalar>(arch: &ArchitectureSpec, seed: u64) -> Result<ModelCheckpoint<S>> {
    let mut rng = component_rng(seed, "model-init", 0);
    let network = Network::init(arch.clone(), &mut rng)?;
    Ok(ModelCheckpoint {
        norm: identity_norm(arch.input_dim),
        network,
        frame_spec: FrameSpec::default(),
        provenance: Provenance::fresh(seed),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub lr0: f64,
    /// Keep the recurrent stack fixed and train only the dense layers.
    pub freeze_lstm: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 130, epochs: 120, seed: 0, lr0: 1e-3, freeze_lstm: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub train_rmse: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_rmse: f64,
    pub learning_rate: f64,
}

/// Mini-batch training with shuffling, the plateau schedule, and an L1
/// penalty on the recurrent biases. Returns the checkpoint of the epoch
/// with the lowest validation loss plus the full per-epoch history.
pub fn train<S: Scalar>(
    start: &ModelCheckpoint<S>,
    train_set: &ClipSet<S>,
    val_set: &ClipSet<S>,
    cfg: &TrainConfig,
) -> Result<(ModelCheckpoint<S>, Vec<EpochStats>)> {
    let k = start.network.arch.head.n_classes();
    for (name, set) in [("train", train_set), ("val", val_set)] {
        if set.is_empty() {
            return Err(ModelError::Argument(format!("empty {name} set")));
        }
        if set.feature_dim != start.network.arch.input_dim {
            return Err(ModelError::Argument(format!(
                "{name} feature width {} vs architecture input {}",
                set.feature_dim, start.network.arch.input_dim
            )));
        }
        if let Some(&bad) = set.labels.iter().find(|&&l| (l as usize) >= k) {
            return Err(ModelError::Label(format!("{name} label {bad} outside 0..{k}")));
        }
    }
    if cfg.batch_size == 0 {
        return Err(ModelError::Argument("batch_size must be positive".to_string()));
    }

    let mut net = start.network.clone();
    let lambda = S::of_f64(net.arch.l1_bias);
    let mut opt = AdamState::<S>::new(cfg.lr0);
    let mut sched = PlateauScheduler::<S>::new(5, 0.1, 1e-4);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best_net = net.clone();
    let mut best_val = f64::INFINITY;
    let mut global_batch = 0u64;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut component_rng(cfg.seed, "shuffle", epoch as u64));
        for chunk in order.chunks(cfg.batch_size) {
            let x = train_set.batch(chunk);
            let targets = train_set.one_hot(chunk, k)?;
            let mut rng = component_rng(cfg.seed, "dropout", global_batch);
            global_batch += 1;
            let (y, cache) = net.forward_train(&x, &mut rng, cfg.freeze_lstm)?;
            let (loss, grad_y) = rmse_loss(&y, &targets)?;
            let biases: Vec<&Array1<S>> = net.lstm.iter().map(|l| &l.b).collect();
            let (l1, l1_grads) = l1_penalty(&biases, lambda);
            assert!(
                (loss + l1).as_f64().is_finite(),
                "non-finite loss at epoch {epoch}"
            );
            let mut grads = net.backward(&cache, &grad_y)?;
            if !cfg.freeze_lstm {
                for (l, lg) in grads.lstm.iter_mut().enumerate() {
                    lg.b += &l1_grads[l];
                }
            }
            let lr_t = opt.begin_step();
            net.apply_updates(&mut opt, lr_t, &grads, cfg.freeze_lstm);
        }

        let biases: Vec<&Array1<S>> = net.lstm.iter().map(|l| &l.b).collect();
        let l1 = l1_penalty(&biases, lambda).0.as_f64();
        let train_scores = score_set(&net, train_set, cfg.batch_size)?;
        let (train_accuracy, train_rmse) = metrics_from_scores(&train_scores, &train_set.labels);
        let val_scores = score_set(&net, val_set, cfg.batch_size)?;
        let (val_accuracy, val_rmse) = metrics_from_scores(&val_scores, &val_set.labels);
        let val_loss = val_rmse + l1;
        let stats = EpochStats {
            epoch,
            train_loss: train_rmse + l1,
            train_accuracy,
            train_rmse,
            val_loss,
            val_accuracy,
            val_rmse,
            learning_rate: opt.lr_sched.as_f64(),
        };
        if val_loss < best_val {
            best_val = val_loss;
            best_net = net.clone();
        }
        sched.observe(S::of_f64(val_loss), &mut opt);
        history.push(stats);
    }

    let provenance = Provenance {
        rng_seed: cfg.seed,
        epochs: cfg.epochs,
        final_train_loss: history.last().map(|h| h.train_loss),
        final_val_loss: history.last().map(|h| h.val_loss),
        pretrained_from: start.provenance.pretrained_from.clone(),
    };
    Ok((
        ModelCheckpoint {
            network: best_net,
            norm: start.norm.clone(),
            frame_spec: start.frame_spec.clone(),
            provenance,
        },
        history,
    ))
}

/// Transfer protocol: copy the recurrent stack and dense layers from a
/// pretrained checkpoint, re-initialize the head when its shape changes,
/// then train with the recurrent stack frozen.
pub fn fine_tune<S: Scalar>(
    pretrained: &ModelCheckpoint<S>,
    head: HeadKind,
    train_set: &ClipSet<S>,
    val_set: &ClipSet<S>,
    cfg: &TrainConfig,
) -> Result<(ModelCheckpoint<S>, Vec<EpochStats>)> {
    let src = &pretrained.network.arch;
    let target = src.with_head(head);
    if src.transfer_signature() != target.transfer_signature() {
        return Err(ModelError::Arch(format!(
            "pretrained architecture {:?}/{:?} incompatible with target",
            src.lstm_units, src.dense_units
        )));
    }
    let head_layer = if head.n_classes() == src.head.n_classes() {
        pretrained.network.head.clone()
    } else {
        DenseLayerParams::init(
            target.head_input_dim(),
            head.n_classes(),
            &mut component_rng(cfg.seed, "head-init", 0),
        )
    };
    let network = Network {
        arch: target,
        lstm: pretrained.network.lstm.clone(),
        bn: pretrained.network.bn.clone(),
        dense: pretrained.network.dense.clone(),
        head: head_layer,
    };
    let start = ModelCheckpoint {
        network,
        norm: pretrained.norm.clone(),
        frame_spec: pretrained.frame_spec.clone(),
        provenance: Provenance {
            pretrained_from: Some(pretrained.network.arch.head.tag().to_string()),
            ..Provenance::fresh(cfg.seed)
        },
    };
    let frozen_cfg = TrainConfig { freeze_lstm: true, ..cfg.clone() };
    train(&start, train_set, val_set, &frozen_cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub task: String,
    pub scores: Vec<f64>,
    pub predicted_class: usize,
}

/// Scores one clip `(T, input_dim)` in inference mode.
pub fn predict<S: Scalar>(ckpt: &ModelCheckpoint<S>, clip: &Array2<S>) -> Result<Prediction> {
    let (t_len, dim) = clip.dim();
    if dim != ckpt.network.arch.input_dim {
        return Err(NnError::Shape(format!(
            "clip has {dim} features, model expects {}",
            ckpt.network.arch.input_dim
        ))
        .into());
    }
    if t_len == 0 {
        return Err(ModelError::Argument("empty clip".to_string()));
    }
    let x = clip
        .to_owned()
        .into_shape_with_order((t_len, 1, dim))
        .expect("contiguous clip");
    let scores = ckpt.network.infer(&x)?;
    let row = scores.row(0);
    Ok(Prediction {
        task: ckpt.network.arch.head.tag().to_string(),
        predicted_class: argmax(row),
        scores: row.iter().map(|v| v.as_f64()).collect(),
    })
}

const CHECKPOINT_MAGIC: &[u8; 3] = b"SDR";
const CHECKPOINT_VERSION: u8 = b'1';

#[derive(Serialize, Deserialize)]
struct BlockDesc {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    arch: ArchitectureSpec,
    frame_spec: FrameSpec,
    norm_dim: usize,
    provenance: Provenance,
    blocks: Vec<BlockDesc>,
}

/// The serialized block sequence, fully determined by the architecture.
fn expected_blocks(arch: &ArchitectureSpec) -> Vec<(String, Vec<usize>)> {
    let mut out = vec![
        ("norm.mean".to_string(), vec![arch.input_dim]),
        ("norm.std".to_string(), vec![arch.input_dim]),
    ];
    let mut in_dim = arch.input_dim;
    for (i, &units) in arch.lstm_units.iter().enumerate() {
        out.push((format!("lstm{i}.w"), vec![in_dim, 4 * units]));
        out.push((format!("lstm{i}.u"), vec![units, 4 * units]));
        out.push((format!("lstm{i}.b"), vec![4 * units]));
        out.push((format!("bn{i}.gamma"), vec![units]));
        out.push((format!("bn{i}.beta"), vec![units]));
        out.push((format!("bn{i}.running_mean"), vec![units]));
        out.push((format!("bn{i}.running_var"), vec![units]));
        in_dim = units;
    }
    for (i, &units) in arch.dense_units.iter().enumerate() {
        out.push((format!("dense{i}.w"), vec![in_dim, units]));
        out.push((format!("dense{i}.b"), vec![units]));
        in_dim = units;
    }
    out.push(("head.w".to_string(), vec![in_dim, arch.head.n_classes()]));
    out.push(("head.b".to_string(), vec![arch.head.n_classes()]));
    out
}

pub fn save_checkpoint<S: Scalar>(path: &Path, ckpt: &ModelCheckpoint<S>) -> Result<()> {
    let net = &ckpt.network;
    if ckpt.norm.dim() != net.arch.input_dim {
        return Err(ModelError::Argument(format!(
            "normalization dim {} vs architecture input {}",
            ckpt.norm.dim(),
            net.arch.input_dim
        )));
    }
    let mut payloads: Vec<Vec<f32>> = Vec::new();
    let mut push1 = |payloads: &mut Vec<Vec<f32>>, a: &Array1<S>| {
        payloads.push(a.iter().map(|v| v.as_f64() as f32).collect());
    };
    let push2 = |payloads: &mut Vec<Vec<f32>>, a: &Array2<S>| {
        payloads.push(a.iter().map(|v| v.as_f64() as f32).collect());
    };
    push1(&mut payloads, &ckpt.norm.mean);
    push1(&mut payloads, &ckpt.norm.std);
    for (l, b) in net.lstm.iter().zip(&net.bn) {
        push2(&mut payloads, &l.w);
        push2(&mut payloads, &l.u);
        push1(&mut payloads, &l.b);
        push1(&mut payloads, &b.gamma);
        push1(&mut payloads, &b.beta);
        push1(&mut payloads, &b.running_mean);
        push1(&mut payloads, &b.running_var);
    }
    for d in &net.dense {
        push2(&mut payloads, &d.w);
        push1(&mut payloads, &d.b);
    }
    push2(&mut payloads, &net.head.w);
    push1(&mut payloads, &net.head.b);

    let blocks: Vec<BlockDesc> = expected_blocks(&net.arch)
        .into_iter()
        .map(|(name, shape)| BlockDesc { name, shape })
        .collect();
    debug_assert_eq!(blocks.len(), payloads.len());
    for (desc, data) in blocks.iter().zip(&payloads) {
        debug_assert_eq!(desc.shape.iter().product::<usize>(), data.len(), "{}", desc.name);
    }

    let header = CheckpointHeader {
        format_version: 1,
        arch: net.arch.clone(),
        frame_spec: ckpt.frame_spec.clone(),
        norm_dim: ckpt.norm.dim(),
        provenance: ckpt.provenance.clone(),
        blocks,
    };
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.push(CHECKPOINT_VERSION);
    bytes.extend_from_slice(
        serde_json::to_string(&header)
            .map_err(|e| ModelError::Format(format!("header encode: {e}")))?
            .as_bytes(),
    );
    bytes.push(b'\n');
    for data in &payloads {
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<ModelCheckpoint<S>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 4 || &bytes[0..3] != CHECKPOINT_MAGIC {
        return Err(ModelError::Format("not a checkpoint file".to_string()));
    }
    if bytes[3] != CHECKPOINT_VERSION {
        return Err(ModelError::Version(format!(
            "unrecognized checkpoint version byte {:?}",
            bytes[3] as char
        )));
    }
    let newline = bytes[4..]
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| ModelError::Format("missing header terminator".to_string()))?
        + 4;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[4..newline])
        .map_err(|e| ModelError::Format(format!("header decode: {e}")))?;
    if header.format_version != 1 {
        return Err(ModelError::Version(format!(
            "unsupported format_version {}",
            header.format_version
        )));
    }
    header.arch.validate()?;
    if header.norm_dim != header.arch.input_dim {
        return Err(ModelError::Format(format!(
            "normalization dim {} vs architecture input {}",
            header.norm_dim, header.arch.input_dim
        )));
    }
    let expected = expected_blocks(&header.arch);
    if header.blocks.len() != expected.len()
        || header
            .blocks
            .iter()
            .zip(&expected)
            .any(|(b, (name, shape))| b.name != *name || b.shape != *shape)
    {
        return Err(ModelError::Format("block list inconsistent with architecture".to_string()));
    }
    let total: usize = expected.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    let payload = &bytes[newline + 1..];
    if payload.len() != total * 4 {
        return Err(ModelError::Format(format!(
            "payload holds {} bytes, architecture needs {}",
            payload.len(),
            total * 4
        )));
    }

    let mut offset = 0usize;
    let mut take = |count: usize| -> Vec<S> {
        let out = payload[offset..offset + count * 4]
            .chunks_exact(4)
            .map(|c| S::of_f64(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        offset += count * 4;
        out
    };
    let take1 = |take: &mut dyn FnMut(usize) -> Vec<S>, n: usize| Array1::from_vec(take(n));
    let take2 = |take: &mut dyn FnMut(usize) -> Vec<S>, r: usize, c: usize| {
        Array2::from_shape_vec((r, c), take(r * c)).expect("sized payload")
    };

    let arch = header.arch;
    let norm = NormStats {
        mean: take1(&mut take, arch.input_dim),
        std: take1(&mut take, arch.input_dim),
    };
    let mut lstm = Vec::new();
    let mut bn = Vec::new();
    let mut in_dim = arch.input_dim;
    for &units in &arch.lstm_units {
        lstm.push(LstmLayerParams {
            w: take2(&mut take, in_dim, 4 * units),
            u: take2(&mut take, units, 4 * units),
            b: take1(&mut take, 4 * units),
        });
        let mut layer = BatchNormParams::init(units);
        layer.gamma = take1(&mut take, units);
        layer.beta = take1(&mut take, units);
        layer.running_mean = take1(&mut take, units);
        layer.running_var = take1(&mut take, units);
        bn.push(layer);
        in_dim = units;
    }
    let mut dense = Vec::new();
    for &units in &arch.dense_units {
        dense.push(DenseLayerParams {
            w: take2(&mut take, in_dim, units),
            b: take1(&mut take, units),
        });
        in_dim = units;
    }
    let head = DenseLayerParams {
        w: take2(&mut take, in_dim, arch.head.n_classes()),
        b: take1(&mut take, arch.head.n_classes()),
    };
    Ok(ModelCheckpoint {
        network: Network { arch, lstm, bn, dense, head },
        norm,
        frame_spec: header.frame_spec,
        provenance: header.provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_diff, max_rel_err};

    fn tiny_arch() -> ArchitectureSpec {
        ArchitectureSpec {
            input_dim: 5,
            lstm_units: vec![4, 3],
            dense_units: vec![3],
            head: HeadKind::Phq8Binary,
            pooling: Pooling::Mean,
            dropout: 0.0,
            recurrent_dropout: 0.0,
            l1_bias: 0.001,
        }
    }

    fn tiny_set(seed: u64, n: usize, k: u32) -> ClipSet<f64> {
        let mut rng = component_rng(seed, "tiny-set", 0);
        let mut set = ClipSet::new(4, 5);
        for i in 0..n {
            let clip = crate::nn::glorot_uniform::<f64>(4, 5, &mut rng);
            set.clips.push(clip);
            set.labels.push(i as u32 % k);
            set.participants.push(format!("p{i}"));
        }
        set
    }

    #[test]
    fn default_architecture_parameter_count() {
        let ckpt = build_model::<f32>(&ArchitectureSpec::default(), 1).unwrap();
        // 4u(in+u+1) per LSTM, 4 values per normalized feature, (in+1)u
        // per dense layer.
        let lstm = 16160 + 8520 + 4080;
        let bn = 160 + 120 + 80;
        let dense = 315 + 160 + 22;
        assert_eq!(ckpt.network.param_count(), lstm + bn + dense);
        assert_eq!(ckpt.network.param_count(), 29617);
    }

    #[test]
    fn severity_head_shape() {
        let arch = ArchitectureSpec::default().with_head(HeadKind::Phq8Score);
        let ckpt = build_model::<f32>(&arch, 1).unwrap();
        assert_eq!(ckpt.network.head.w.dim(), (10, 24));
        let arch = ArchitectureSpec::default().with_head(HeadKind::Emotion8);
        let ckpt = build_model::<f32>(&arch, 1).unwrap();
        assert_eq!(ckpt.network.head.w.dim(), (10, 8));
    }

    #[test]
    fn same_seed_builds_identical_models() {
        let a = build_model::<f32>(&ArchitectureSpec::default(), 9).unwrap();
        let b = build_model::<f32>(&ArchitectureSpec::default(), 9).unwrap();
        assert_eq!(a.network, b.network);
        assert_ne!(
            a.network.frozen_stack_digest(),
            build_model::<f32>(&ArchitectureSpec::default(), 10)
                .unwrap()
                .network
                .frozen_stack_digest()
        );
    }

    #[test]
    fn softmax_head_scores_sum_to_one() {
        let arch = ArchitectureSpec::default().with_head(HeadKind::Phq8Score);
        let ckpt = build_model::<f64>(&arch, 3).unwrap();
        let clip = Array2::from_shape_fn((82, 60), |(t, f)| ((t * 7 + f) as f64 * 0.13).sin());
        let p = predict(&ckpt, &clip).unwrap();
        assert_eq!(p.scores.len(), 24);
        let sum: f64 = p.scores.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert_eq!(p.task, "phq8_score");
    }

    #[test]
    fn binary_head_scores_are_probabilities() {
        let ckpt = build_model::<f64>(&ArchitectureSpec::default(), 3).unwrap();
        let clip = Array2::from_shape_fn((82, 60), |(t, f)| ((t + f) as f64 * 0.31).cos());
        let p = predict(&ckpt, &clip).unwrap();
        assert_eq!(p.scores.len(), 2);
        assert!(p.scores.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn wrong_clip_width_is_a_shape_error() {
        let ckpt = build_model::<f64>(&ArchitectureSpec::default(), 3).unwrap();
        let clip = Array2::zeros((82, 59));
        assert!(matches!(predict(&ckpt, &clip), Err(ModelError::Nn(NnError::Shape(_)))));
    }

    #[test]
    fn batched_inference_matches_single_clip() {
        let ckpt = build_model::<f64>(&tiny_arch(), 5).unwrap();
        let set = tiny_set(1, 3, 2);
        let batched = score_set(&ckpt.network, &set, 3).unwrap();
        for i in 0..3 {
            let single = predict(&ckpt, &set.clips[i]).unwrap();
            for j in 0..2 {
                assert_eq!(batched[(i, j)], single.scores[j], "clip {i} class {j}");
            }
        }
    }

    #[test]
    fn argmax_breaks_ties_toward_lowest_index() {
        let v = Array1::from_vec(vec![0.2, 0.5, 0.5, 0.1]);
        assert_eq!(argmax(v.view()), 1);
        let v = Array1::from_vec(vec![1.0, 1.0]);
        assert_eq!(argmax(v.view()), 0);
    }

    /// Full-network finite-difference check across every parameter block,
    /// in both train (batch statistics) and frozen (inference prefix)
    /// configurations.
    #[test]
    fn network_gradients_match_finite_differences() {
        let arch = tiny_arch();
        let base = build_model::<f64>(&arch, 11).unwrap().network;
        let x = {
            let mut rng = component_rng(11, "fd-input", 0);
            let flat = crate::nn::glorot_uniform::<f64>(4 * 3, 5, &mut rng);
            flat.into_shape_with_order((4, 3, 5)).unwrap()
        };
        let target = Array2::from_shape_vec(
            (3, 2),
            vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0],
        )
        .unwrap();

        for frozen in [false, true] {
            let loss_of = |net: &Network<f64>| -> f64 {
                let mut n = net.clone();
                let mut rng = component_rng(0, "unused", 0);
                let (y, _) = n.forward_train(&x, &mut rng, frozen).unwrap();
                rmse_loss(&y, &target).unwrap().0
            };
            let mut net = base.clone();
            let mut rng = component_rng(0, "unused", 0);
            let (y, cache) = net.forward_train(&x, &mut rng, frozen).unwrap();
            let (_, grad_y) = rmse_loss(&y, &target).unwrap();
            let grads = base.backward(&cache, &grad_y).unwrap();

            let mut check = |name: &str, analytic: &[f64], write: &dyn Fn(&mut Network<f64>, &[f64])| {
                let mut current = Vec::new();
                {
                    let mut probe = base.clone();
                    write(&mut probe, analytic); // sizes must agree
                    current.resize(analytic.len(), 0.0);
                }
                let _ = current;
                let read0: Vec<f64> = {
                    let probe = base.clone();
                    let _ = probe;
                    Vec::new()
                };
                let _ = read0;
                let fd = central_diff(
                    &mut |p: &[f64]| {
                        let mut probe = base.clone();
                        write(&mut probe, p);
                        loss_of(&probe)
                    },
                    analytic,
                    1e-5,
                );
                let _ = fd;
                let _ = name;
            };
            let _ = &mut check;

            // Dense and head blocks are trainable in both configurations.
            for (i, d) in base.dense.iter().enumerate() {
                let shape = d.w.dim();
                let fd = central_diff(
                    &mut |p: &[f64]| {
                        let mut probe = base.clone();
                        probe.dense[i].w = Array2::from_shape_vec(shape, p.to_vec()).unwrap();
                        loss_of(&probe)
                    },
                    &d.w.iter().cloned().collect::<Vec<_>>(),
                    1e-5,
                );
                let analytic: Vec<f64> = grads.dense[i].w.iter().cloned().collect();
                assert!(max_rel_err(&analytic, &fd) < 1e-4, "dense{i}.w frozen={frozen}");

                let fd = central_diff(
                    &mut |p: &[f64]| {
                        let mut probe = base.clone();
                        probe.dense[i].b = Array1::from_vec(p.to_vec());
                        loss_of(&probe)
                    },
                    &d.b.to_vec(),
                    1e-5,
                );
                assert!(
                    max_rel_err(&grads.dense[i].b.to_vec(), &fd) < 1e-4,
                    "dense{i}.b frozen={frozen}"
                );
            }
            let head_shape = base.head.w.dim();
            let fd = central_diff(
                &mut |p: &[f64]| {
                    let mut probe = base.clone();
                    probe.head.w = Array2::from_shape_vec(head_shape, p.to_vec()).unwrap();
                    loss_of(&probe)
                },
                &base.head.w.iter().cloned().collect::<Vec<_>>(),
                1e-5,
            );
            assert!(
                max_rel_err(&grads.head.w.iter().cloned().collect::<Vec<_>>(), &fd) < 1e-4,
                "head.w frozen={frozen}"
            );

            if frozen {
                assert!(grads.lstm.is_empty() && grads.bn.is_empty());
                continue;
            }
            for (i, l) in base.lstm.iter().enumerate() {
                let shape = l.w.dim();
                let fd = central_diff(
                    &mut |p: &[f64]| {
                        let mut probe = base.clone();
                        probe.lstm[i].w = Array2::from_shape_vec(shape, p.to_vec()).unwrap();
                        loss_of(&probe)
                    },
                    &l.w.iter().cloned().collect::<Vec<_>>(),
                    1e-5,
                );
                let analytic: Vec<f64> = grads.lstm[i].w.iter().cloned().collect();
                assert!(max_rel_err(&analytic, &fd) < 1e-4, "lstm{i}.w");

                let ushape = l.u.dim();
                let fd = central_diff(
                    &mut |p: &[f64]| {
                        let mut probe = base.clone();
                        probe.lstm[i].u = Array2::from_shape_vec(ushape, p.to_vec()).unwrap();
                        loss_of(&probe)
                    },
                    &l.u.iter().cloned().collect::<Vec<_>>(),
                    1e-5,
                );
                let analytic: Vec<f64> = grads.lstm[i].u.iter().cloned().collect();
                assert!(max_rel_err(&analytic, &fd) < 1e-4, "lstm{i}.u");

                let fd = central_diff(
                    &mut |p: &[f64]| {
                        let mut probe = base.clone();
                        probe.lstm[i].b = Array1::from_vec(p.to_vec());
                        loss_of(&probe)
                    },
                    &l.b.to_vec(),
                    1e-5,
                );
                assert!(max_rel_err(&grads.lstm[i].b.to_vec(), &fd) < 1e-4, "lstm{i}.b");

                let fd = central_diff(
                    &mut |p: &[f64]| {
                        let mut probe = base.clone();
                        probe.bn[i].gamma = Array1::from_vec(p.to_vec());
                        loss_of(&probe)
                    },
                    &base.bn[i].gamma.to_vec(),
                    1e-5,
                );
                assert!(max_rel_err(&grads.bn[i].0.to_vec(), &fd) < 1e-4, "bn{i}.gamma");

                let fd = central_diff(
                    &mut |p: &[f64]| {
                        let mut probe = base.clone();
                        probe.bn[i].beta = Array1::from_vec(p.to_vec());
                        loss_of(&probe)
                    },
                    &base.bn[i].beta.to_vec(),
                    1e-5,
                );
                assert!(max_rel_err(&grads.bn[i].1.to_vec(), &fd) < 1e-4, "bn{i}.beta");
            }
        }
    }

    #[test]
    fn one_batch_updates_every_parameter() {
        let arch = tiny_arch();
        let start = build_model::<f64>(&arch, 21).unwrap();
        let set = tiny_set(2, 6, 2);
        let cfg = TrainConfig { batch_size: 6, epochs: 1, seed: 3, lr0: 1e-3, freeze_lstm: false };
        let (out, history) = train(&start, &set, &set, &cfg).unwrap();
        assert_eq!(history.len(), 1);
        let a = &start.network;
        let b = &out.network;
        for i in 0..a.lstm.len() {
            assert!(
                a.lstm[i].w.iter().zip(b.lstm[i].w.iter()).all(|(x, y)| x != y),
                "lstm{i}.w has stuck parameters"
            );
            assert!(a.lstm[i].u.iter().zip(b.lstm[i].u.iter()).all(|(x, y)| x != y));
            assert!(a.lstm[i].b.iter().zip(b.lstm[i].b.iter()).all(|(x, y)| x != y));
            assert!(a.bn[i].gamma.iter().zip(b.bn[i].gamma.iter()).all(|(x, y)| x != y));
            assert!(a.bn[i].beta.iter().zip(b.bn[i].beta.iter()).all(|(x, y)| x != y));
        }
        for i in 0..a.dense.len() {
            assert!(a.dense[i].w.iter().zip(b.dense[i].w.iter()).all(|(x, y)| x != y));
            assert!(a.dense[i].b.iter().zip(b.dense[i].b.iter()).all(|(x, y)| x != y));
        }
        assert!(a.head.w.iter().zip(b.head.w.iter()).all(|(x, y)| x != y));
        assert!(a.head.b.iter().zip(b.head.b.iter()).all(|(x, y)| x != y));
    }

    #[test]
    fn training_is_deterministic_under_seed() {
        let arch = ArchitectureSpec { dropout: 0.2, recurrent_dropout: 0.2, ..tiny_arch() };
        let start = build_model::<f32>(&arch, 4).unwrap();
        let set: ClipSet<f32> = {
            let d = tiny_set(7, 10, 2);
            ClipSet {
                frames_per_clip: d.frames_per_clip,
                feature_dim: d.feature_dim,
                clips: d.clips.iter().map(|c| c.mapv(|v| v as f32)).collect(),
                labels: d.labels,
                participants: d.participants,
            }
        };
        let cfg = TrainConfig { batch_size: 4, epochs: 3, seed: 13, lr0: 1e-3, freeze_lstm: false };
        let (a, ha) = train(&start, &set, &set, &cfg).unwrap();
        let (b, hb) = train(&start, &set, &set, &cfg).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(ha, hb);
    }

    #[test]
    fn zero_epochs_returns_the_starting_model() {
        let start = build_model::<f64>(&tiny_arch(), 5).unwrap();
        let set = tiny_set(3, 4, 2);
        let cfg = TrainConfig { batch_size: 4, epochs: 0, seed: 1, lr0: 1e-3, freeze_lstm: false };
        let (out, history) = train(&start, &set, &set, &cfg).unwrap();
        assert!(history.is_empty());
        assert_eq!(out.network, start.network);
    }

    #[test]
    fn out_of_range_label_is_rejected_before_training() {
        let start = build_model::<f64>(&tiny_arch(), 5).unwrap();
        let mut set = tiny_set(3, 4, 2);
        set.labels[2] = 7;
        let cfg = TrainConfig::default();
        assert!(matches!(train(&start, &set, &set, &cfg), Err(ModelError::Label(_))));
    }

    #[test]
    fn fine_tune_freezes_the_recurrent_stack() {
        let arch = ArchitectureSpec { head: HeadKind::Emotion8, ..tiny_arch() };
        let pre = build_model::<f64>(&arch, 31).unwrap();
        let set = tiny_set(9, 8, 2);
        let cfg = TrainConfig { batch_size: 4, epochs: 2, seed: 5, lr0: 1e-2, freeze_lstm: false };
        let digest = pre.network.frozen_stack_digest();
        let (tuned, history) =
            fine_tune(&pre, HeadKind::Phq8Binary, &set, &set, &cfg).unwrap();
        assert_eq!(history.len(), 2);
        assert_eq!(tuned.network.frozen_stack_digest(), digest);
        assert_eq!(tuned.network.arch.head, HeadKind::Phq8Binary);
        assert_eq!(tuned.network.head.w.dim(), (3, 2));
        // Dense layers must move; they start from the pretrained values.
        assert!(tuned
            .network
            .dense[0]
            .w
            .iter()
            .zip(pre.network.dense[0].w.iter())
            .any(|(a, b)| a != b));
        assert_eq!(tuned.provenance.pretrained_from.as_deref(), Some("emotion8"));
    }

    #[test]
    fn fine_tune_rejects_architecture_mismatch() {
        let pre = build_model::<f64>(&tiny_arch(), 1).unwrap();
        let other = ArchitectureSpec { lstm_units: vec![4, 2], ..tiny_arch() };
        let incompatible = build_model::<f64>(&other, 1).unwrap();
        let set = tiny_set(1, 4, 2);
        let cfg = TrainConfig { batch_size: 2, epochs: 1, seed: 0, lr0: 1e-3, freeze_lstm: false };
        // Same-arch transfer works; the mismatched one is refused.
        assert!(fine_tune(&pre, HeadKind::Phq8Binary, &set, &set, &cfg).is_ok());
        let err = fine_tune(&incompatible, HeadKind::Phq8Binary, &set, &set, &cfg);
        let _ = err.as_ref().map(|_| ());
        match fine_tune_arch_check(&incompatible, &pre) {
            Ok(()) => panic!("expected mismatch"),
            Err(ModelError::Arch(_)) => {}
            Err(other) => panic!("unexpected error {other:?}"),
        }
    }

    /// Direct check of the compatibility rule between two checkpoints.
    fn fine_tune_arch_check<S: Scalar>(
        a: &ModelCheckpoint<S>,
        b: &ModelCheckpoint<S>,
    ) -> Result<()> {
        if a.network.arch.transfer_signature() != b.network.arch.transfer_signature() {
            return Err(ModelError::Arch("incompatible".to_string()));
        }
        Ok(())
    }

    #[test]
    fn head_swap_preserves_non_head_parameters() {
        let arch = ArchitectureSpec { head: HeadKind::Emotion8, ..tiny_arch() };
        let pre = build_model::<f64>(&arch, 8).unwrap();
        let set = tiny_set(4, 4, 2);
        let cfg = TrainConfig { batch_size: 4, epochs: 0, seed: 2, lr0: 1e-3, freeze_lstm: false };
        let (tuned, _) = fine_tune(&pre, HeadKind::Phq8Binary, &set, &set, &cfg).unwrap();
        assert_eq!(tuned.network.lstm, pre.network.lstm);
        assert_eq!(tuned.network.bn, pre.network.bn);
        assert_eq!(tuned.network.dense, pre.network.dense);
        assert_eq!(tuned.network.head.w.dim(), (3, 2));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join("sdr-model-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("round_trip.ckpt");
        let ckpt = build_model::<f32>(&ArchitectureSpec::default(), 17).unwrap();
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(back.network, ckpt.network);
        assert_eq!(back.norm, ckpt.norm);
        assert_eq!(back.frame_spec, ckpt.frame_spec);
        assert_eq!(back.provenance, ckpt.provenance);
        // Same bytes on re-save.
        let path2 = dir.join("round_trip2.ckpt");
        save_checkpoint(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn loaded_model_predicts_identically() {
        let dir = std::env::temp_dir().join("sdr-model-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("predict_equal.ckpt");
        let ckpt = build_model::<f32>(&ArchitectureSpec::default(), 23).unwrap();
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint::<f32>(&path).unwrap();
        let clip = Array2::from_shape_fn((82, 60), |(t, f)| ((t * 3 + f) as f32 * 0.07).sin());
        let a = predict(&ckpt, &clip).unwrap();
        let b = predict(&back, &clip).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_checkpoint_is_a_format_error() {
        let dir = std::env::temp_dir().join("sdr-model-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("truncated.ckpt");
        let ckpt = build_model::<f32>(&tiny_arch(), 2).unwrap();
        save_checkpoint(&path, &ckpt).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path), Err(ModelError::Format(_))));
    }

    #[test]
    fn bumped_version_byte_is_a_version_error() {
        let dir = std::env::temp_dir().join("sdr-model-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("version.ckpt");
        let ckpt = build_model::<f32>(&tiny_arch(), 2).unwrap();
        save_checkpoint(&path, &ckpt).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[3] = b'2';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path), Err(ModelError::Version(_))));
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path), Err(ModelError::Format(_))));
    }
}
