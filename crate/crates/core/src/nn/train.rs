use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{clamp_log_var, Cache, NnError, TrainedNet, LOG_VAR_LIMIT, OUTPUT_DIM};
use crate::divergence::{self, Grid, Source, DEFAULT_BINS, DEFAULT_SPAN_SD};
use crate::gp::GaussianPredictive;
use crate::ingest::NUM_FEATURES;
use crate::util;

pub const DEFAULT_CLIP_NORM: f64 = 5.0;

/// Largest number of samples pushed through one batched forward pass.
const BLOCK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Summed per-channel JSD against oracle predictives.
    Jsd,
    /// Summed squared error of the predicted means against observed values.
    SquaredError,
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Oracle([GaussianPredictive; NUM_FEATURES]),
    Point([f64; NUM_FEATURES]),
}

impl Target {
    /// Oracle target whose variances are raised to at least `floor`.
    pub fn oracle_with_floor(mut preds: [GaussianPredictive; NUM_FEATURES], floor: f64) -> Self {
        for p in &mut preds {
            p.variance = p.variance.max(floor);
        }
        Target::Oracle(preds)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub input: Vec<f64>,
    pub target: Target,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Stop once the evaluation-mode mean loss falls to this value.
    #[serde(default)]
    pub stop_below: Option<f64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Rescale each mini-batch gradient to at most this Euclidean norm.
    #[serde(default = "default_clip")]
    pub clip_norm: Option<f64>,
}

fn default_clip() -> Option<f64> {
    Some(DEFAULT_CLIP_NORM)
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 0.01, momentum: 0.9, batch_size: 32, epochs: 100, seed: 0, stop_below: None, bins: DEFAULT_BINS, clip_norm: default_clip() }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(NnError::InvalidConfig(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NnError::InvalidConfig(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(NnError::InvalidConfig(format!("clip_norm must be positive, got {c}")));
            }
        }
        if self.bins < 2 {
            return Err(NnError::InvalidConfig("bins must be at least 2".into()));
        }
        Ok(())
    }
}

/// How the JSD grid is chosen for each (oracle, prediction) pair.
#[derive(Clone, Copy)]
pub enum GridPolicy<'a> {
    /// Rebuilt from the current prediction, treated as a constant for the gradient.
    Adaptive,
    /// Grids previously returned for the same examples, in order.
    Fixed(&'a [[Grid; NUM_FEATURES]]),
}

pub struct LossBreakdown {
    pub mean_loss: f64,
    pub grad: Vec<f64>,
    pub grids: Vec<[Grid; NUM_FEATURES]>,
}

/// Loss of one example and its gradient w.r.t. the raw head output.
fn example_loss(out: &[f64], target: &Target, bins: usize, fixed: Option<&[Grid; NUM_FEATURES]>) -> (f64, [f64; OUTPUT_DIM], [Grid; NUM_FEATURES]) {
    let mut d_out = [0.0; OUTPUT_DIM];
    let mut grids = [Grid::spanning(0.0, 1.0, 2).expect("valid"); NUM_FEATURES];
    let mut loss = 0.0;
    match target {
        Target::Oracle(oracle) => {
            for k in 0..NUM_FEATURES {
                let mean = out[k];
                let raw_lv = out[NUM_FEATURES + k];
                let lv = clamp_log_var(raw_lv);
                let q = GaussianPredictive::new(mean, lv.exp());
                let grid = match fixed {
                    Some(g) => g[k],
                    None => Grid::for_pair(&oracle[k], &q, bins, DEFAULT_SPAN_SD).expect("finite outputs"),
                };
                let p = divergence::discretize_tagged(oracle[k].mean, oracle[k].variance, &grid, Source::Gp);
                let (v, dm, dlv) = divergence::jsd_value_and_grad(&p, mean, lv, &grid).expect("same grid");
                loss += v;
                d_out[k] = dm;
                d_out[NUM_FEATURES + k] = if raw_lv.abs() < LOG_VAR_LIMIT { dlv } else { 0.0 };
                grids[k] = grid;
            }
        }
        Target::Point(y) => {
            for k in 0..NUM_FEATURES {
                let e = out[k] - y[k];
                loss += e * e;
                d_out[k] = 2.0 * e;
            }
        }
    }
    (loss, d_out, grids)
}

impl TrainedNet {
    /// Mean loss over `examples` and its gradient w.r.t. the weights, with
    /// dropout disabled.
    pub fn loss_and_grad(&self, examples: &[Example], bins: usize, policy: GridPolicy<'_>) -> LossBreakdown {
        self.loss_and_grad_at(&self.weights, examples, bins, policy, None)
    }

    /// Mean evaluation-mode loss at an arbitrary weight vector.
    pub fn loss_at(&self, weights: &[f64], examples: &[Example], bins: usize, policy: GridPolicy<'_>) -> f64 {
        self.pass(weights, examples, bins, policy, None, false).mean_loss
    }

    pub fn mean_loss(&self, examples: &[Example], bins: usize) -> f64 {
        self.loss_at(&self.weights, examples, bins, GridPolicy::Adaptive)
    }

    fn loss_and_grad_at(
        &self,
        weights: &[f64],
        examples: &[Example],
        bins: usize,
        policy: GridPolicy<'_>,
        dropout: Option<(u64, u64, &[usize])>,
    ) -> LossBreakdown {
        self.pass(weights, examples, bins, policy, dropout, true)
    }

    /// Batched forward (and optionally backward) pass in blocks of [`BLOCK`]
    /// samples. `dropout` carries `(seed, epoch, global indices)` for
    /// training-mode passes; each sample gets its own mask stream. Per-sample
    /// losses run in parallel but are reduced in sample order, so results do
    /// not depend on the thread count.
    fn pass(
        &self,
        weights: &[f64],
        examples: &[Example],
        bins: usize,
        policy: GridPolicy<'_>,
        dropout: Option<(u64, u64, &[usize])>,
        with_grad: bool,
    ) -> LossBreakdown {
        let layout = self.layout();
        let n = examples.len();
        let dim = self.config.input_dim;
        let mut grad = if with_grad { vec![0.0; weights.len()] } else { Vec::new() };
        let mut loss = 0.0;
        let mut grids = Vec::with_capacity(n);
        let mut cache = Cache::default();
        let mut inputs = Vec::new();
        let mut d_out = Vec::new();
        for start in (0..n).step_by(BLOCK) {
            let block = &examples[start..(start + BLOCK).min(n)];
            inputs.clear();
            for ex in block {
                assert_eq!(ex.input.len(), dim, "input dimension checked by caller");
                inputs.extend_from_slice(&ex.input);
            }
            match dropout {
                Some((seed, epoch, ids)) => {
                    let mut rngs: Vec<_> =
                        (start..start + block.len()).map(|i| util::rng(seed, &[0xd809, epoch, ids[i] as u64])).collect();
                    self.forward_cached(weights, &layout, &inputs, Some(&mut rngs), &mut cache)
                }
                None => self.forward_cached::<rand_chacha::ChaCha8Rng>(weights, &layout, &inputs, None, &mut cache),
            }
            let per_sample: Vec<_> = (0..block.len())
                .into_par_iter()
                .map(|r| {
                    let fixed = match policy {
                        GridPolicy::Fixed(g) => Some(&g[start + r]),
                        GridPolicy::Adaptive => None,
                    };
                    example_loss(cache.row(r), &block[r].target, bins, fixed)
                })
                .collect();
            d_out.clear();
            for (l, d, g) in per_sample {
                loss += l;
                d_out.extend_from_slice(&d);
                grids.push(g);
            }
            if with_grad {
                self.backward(weights, &layout, &cache, &d_out, &mut grad);
            }
        }
        let scale = 1.0 / n as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        LossBreakdown { mean_loss: loss * scale, grad, grids }
    }
}

fn objective_of(data: &[Example]) -> Objective {
    let oracle = data.iter().filter(|e| matches!(e.target, Target::Oracle(_))).count();
    match oracle {
        0 => Objective::SquaredError,
        n if n == data.len() => Objective::Jsd,
        _ => Objective::Mixed,
    }
}

/// Mini-batch SGD with momentum (`v <- m v + g; w <- w - lr v`), with the
/// batch gradient optionally clipped to `clip_norm` first.
///
/// The logged loss of an epoch is the mean training-mode loss over its
/// batches. A non-finite epoch loss aborts with [`NnError::DivergentTraining`].
pub fn train(net: &TrainedNet, data: &[Example], tc: &TrainConfig) -> Result<TrainedNet, NnError> {
    tc.validate()?;
    if tc.epochs == 0 {
        return Ok(net.clone());
    }
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    if let Some(ex) = data.iter().find(|e| e.input.len() != net.config.input_dim) {
        return Err(NnError::DimensionMismatch { expected: net.config.input_dim, got: ex.input.len() });
    }
    let valid = data.iter().all(|e| match &e.target {
        Target::Oracle(g) => g.iter().all(|p| p.mean.is_finite() && p.variance.is_finite() && p.variance >= 0.0),
        Target::Point(y) => y.iter().all(|v| v.is_finite()),
    });
    if !valid {
        return Err(NnError::InvalidConfig("training targets must be finite".into()));
    }

    let mut out = net.clone();
    out.seed = tc.seed;
    out.objective = Some(objective_of(data));
    let mut velocity = vec![0.0; out.weights.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch: Vec<Example> = Vec::with_capacity(tc.batch_size);
    for epoch in 0..tc.epochs {
        let mut rng = util::rng(tc.seed, &[0x5u64, epoch as u64]);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for ids in order.chunks(tc.batch_size) {
            batch.clear();
            batch.extend(ids.iter().map(|&i| data[i].clone()));
            let step = out.loss_and_grad_at(
                &out.weights,
                &batch,
                tc.bins,
                GridPolicy::Adaptive,
                Some((tc.seed, epoch as u64, ids)),
            );
            epoch_loss += step.mean_loss * ids.len() as f64;
            let mut grad = step.grad;
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(NnError::DivergentTraining { epoch: epoch + 1, loss: step.mean_loss });
            }
            if let Some(c) = tc.clip_norm {
                if norm > c {
                    let s = c / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            for ((w, v), g) in out.weights.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = tc.momentum * *v + g;
                *w -= tc.lr * *v;
            }
        }
        let mean = epoch_loss / data.len() as f64;
        if !mean.is_finite() || out.weights.iter().any(|w| !w.is_finite()) {
            return Err(NnError::DivergentTraining { epoch: epoch + 1, loss: mean });
        }
        out.train_log.push(mean);
        if let Some(threshold) = tc.stop_below {
            if out.mean_loss(data, tc.bins) <= threshold {
                break;
            }
        }
    }
    Ok(out)
}
