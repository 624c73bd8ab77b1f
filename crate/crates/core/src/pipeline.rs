//! Inference-phase protocol.
//!
//! Predictions are made one step at a time and fed back into the input
//! window. After every block of predictions the GP bank is refit on the
//! episode so far: truths that have arrived by then replace the predictions
//! they correspond to, everything else stays self-fed. Emitted predictions
//! are never rewritten.

use std::collections::VecDeque;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::divergence::feature_jsd;
use crate::gp::{GaussianPredictive, GpBank};
use crate::ingest::{encode_window, Normalization, SignalSample, Trace, FEATURE_NAMES, NUM_FEATURES};
use crate::nn::{Mode, TrainedNet};
use crate::util;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("trace too short: {len} samples, need at least {required}")]
    TooShort { len: usize, required: usize },
    #[error("predictor failure: {0}")]
    PredictorFailure(String),
    #[error("causality violation: sample {requested} read at time {now}")]
    Causality { requested: usize, now: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub window: usize,
    /// Predictions per block; the GP is refit after each block.
    pub block: usize,
    /// Most recent training pairs kept for a refit.
    pub refit_capacity: usize,
    /// Hyperparameter-search budget per refit, warm-started.
    pub refit_evals: usize,
    /// Number of blocks; `None` runs as many as the trace allows.
    #[serde(default)]
    pub blocks: Option<usize>,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            window: crate::ingest::DEFAULT_WINDOW,
            block: crate::ingest::PREDICTION_BLOCK,
            refit_capacity: 50,
            refit_evals: 20,
            blocks: None,
        }
    }
}

#[derive(Clone, Copy)]
pub enum Predictor<'a> {
    Gp,
    Net(&'a TrainedNet),
}

impl Predictor<'_> {
    pub fn label(&self) -> String {
        match self {
            Predictor::Gp => "gp".into(),
            Predictor::Net(n) => format!("nn_{}", serde_json::to_value(n.config.arch).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Sample(SignalSample),
    Missing,
}

/// Delivery of the true sample at `index`, `delay` samples after it was due.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrivalEvent {
    pub index: usize,
    pub payload: Payload,
    pub delay: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossModel {
    None,
    DropAll,
    IidDrop { p: f64, seed: u64 },
    /// Repeating pattern: `gap` delivered samples followed by `len` lost ones.
    Burst { len: usize, gap: usize },
    FixedDelay { d: usize },
}

impl LossModel {
    /// Arrival events for trace indices `from..to`.
    pub fn arrivals(&self, trace: &Trace, from: usize, to: usize) -> Vec<ArrivalEvent> {
        let samples = trace.samples();
        (from..to.min(samples.len()))
            .map(|index| {
                let delivered = |delay| ArrivalEvent { index, payload: Payload::Sample(samples[index].clone()), delay };
                let missing = ArrivalEvent { index, payload: Payload::Missing, delay: 0 };
                match *self {
                    LossModel::None => delivered(0),
                    LossModel::DropAll => missing,
                    LossModel::IidDrop { p, seed } => {
                        if util::rng(seed, &[0xd0, index as u64]).random::<f64>() < p {
                            missing
                        } else {
                            delivered(0)
                        }
                    }
                    LossModel::Burst { len, gap } => {
                        if (index - from) % (len + gap).max(1) < gap {
                            delivered(0)
                        } else {
                            missing
                        }
                    }
                    LossModel::FixedDelay { d } => delivered(d),
                }
            })
            .collect()
    }
}

impl std::str::FromStr for LossModel {
    type Err = String;

    /// `none`, `drop-all`, `iid-drop:P[:SEED]`, `burst:LEN:GAP`, `fixed-delay:D`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize| -> Result<usize, String> {
            parts.get(i).ok_or_else(|| format!("{s}: missing argument {i}"))?.parse().map_err(|e| format!("{s}: {e}"))
        };
        match parts[0] {
            "none" if parts.len() == 1 => Ok(LossModel::None),
            "drop-all" if parts.len() == 1 => Ok(LossModel::DropAll),
            "iid-drop" if (2..=3).contains(&parts.len()) => {
                let p: f64 = parts[1].parse().map_err(|e| format!("{s}: {e}"))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(format!("{s}: drop probability must lie in [0, 1]"));
                }
                let seed = if parts.len() == 3 { num(2)? as u64 } else { 0 };
                Ok(LossModel::IidDrop { p, seed })
            }
            "burst" if parts.len() == 3 => Ok(LossModel::Burst { len: num(1)?, gap: num(2)? }),
            "fixed-delay" if parts.len() == 2 => Ok(LossModel::FixedDelay { d: num(1)? }),
            _ => Err(format!("unknown loss model '{s}' (expected none, drop-all, iid-drop:P[:SEED], burst:LEN:GAP, fixed-delay:D)")),
        }
    }
}

/// Ground truth as seen by the receiver: a sample becomes readable only once
/// its arrival time has passed, and nothing beyond the current time is ever
/// readable.
#[derive(Clone, Debug)]
pub struct TruthFeed {
    /// `(arrival time, normalized row)` by sample index.
    slots: Vec<Option<(usize, [f64; NUM_FEATURES])>>,
    max_read: Option<usize>,
}

impl TruthFeed {
    pub fn new(events: &[ArrivalEvent], norm: &Normalization) -> Self {
        let len = events.iter().map(|e| e.index + 1).max().unwrap_or(0);
        let mut slots = vec![None; len];
        for e in events {
            if let Payload::Sample(s) = &e.payload {
                slots[e.index] = Some((e.index + e.delay, norm.normalize(&s.values)));
            }
        }
        Self { slots, max_read: None }
    }

    /// The true row for `index` if it has arrived by `now`.
    pub fn read(&mut self, index: usize, now: usize) -> Result<Option<[f64; NUM_FEATURES]>, PipelineError> {
        if index > now {
            return Err(PipelineError::Causality { requested: index, now });
        }
        self.max_read = Some(self.max_read.map_or(index, |m| m.max(index)));
        Ok(self.slots.get(index).copied().flatten().filter(|(at, _)| *at <= now).map(|(_, row)| row))
    }

    /// Largest index ever read.
    pub fn max_read(&self) -> Option<usize> {
        self.max_read
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub first_index: usize,
    /// No true sample of this block had arrived at refit time.
    pub self_fed: bool,
    pub delivered: usize,
    /// The block's rows as used for the refit (truth where delivered).
    pub refit_rows: Vec<[f64; NUM_FEATURES]>,
    pub refit_time_ns: u64,
}

/// One call to [`EpisodeState::predict_next`].
#[derive(Clone, Debug)]
pub struct Prediction {
    pub index: usize,
    /// Steps since the last refit, starting at 1.
    pub horizon: usize,
    pub sample: SignalSample,
    /// Model-space (normalized) predictive distributions.
    pub dists: [GaussianPredictive; NUM_FEATURES],
    pub jsd_vs_gp: Option<[f64; NUM_FEATURES]>,
    pub time_ns: u64,
}

/// The per-episode state machine.
pub struct EpisodeState {
    bank: GpBank,
    base_inputs: Vec<Vec<f64>>,
    base_targets: Vec<[f64; NUM_FEATURES]>,
    cfg: EpisodeConfig,
    norm: Normalization,
    side: crate::ingest::Side,
    feed: TruthFeed,
    start: usize,
    /// Rows from `start` on: warm-up truth, then predictions with late truth spliced in at refits.
    seq: Vec<[f64; NUM_FEATURES]>,
    history: VecDeque<[f64; NUM_FEATURES]>,
    counter: usize,
    refits: usize,
    blocks: Vec<BlockRecord>,
}

impl EpisodeState {
    /// `warmup` holds the `cfg.window` true normalized rows ending just before
    /// the first prediction, which is trace index `start + window`.
    pub fn new(
        bank: &GpBank,
        warmup: &[[f64; NUM_FEATURES]],
        start: usize,
        feed: TruthFeed,
        norm: Normalization,
        side: crate::ingest::Side,
        cfg: EpisodeConfig,
    ) -> Result<Self, PipelineError> {
        if cfg.window == 0 || cfg.block == 0 {
            return Err(PipelineError::InvalidConfig("window and block must be positive".into()));
        }
        if bank.window() != cfg.window {
            return Err(PipelineError::InvalidConfig(format!("bank window {} != episode window {}", bank.window(), cfg.window)));
        }
        if warmup.len() != cfg.window {
            return Err(PipelineError::TooShort { len: warmup.len(), required: cfg.window });
        }
        Ok(Self {
            base_inputs: bank.train_inputs(),
            base_targets: bank.train_targets(),
            bank: bank.clone(),
            cfg,
            norm,
            side,
            feed,
            start,
            seq: warmup.to_vec(),
            history: warmup.iter().copied().collect(),
            counter: 0,
            refits: 0,
            blocks: Vec::new(),
        })
    }

    pub fn refit_counter(&self) -> usize {
        self.counter
    }

    pub fn refits(&self) -> usize {
        self.refits
    }

    pub fn bank(&self) -> &GpBank {
        &self.bank
    }

    pub fn history(&self) -> impl Iterator<Item = &[f64; NUM_FEATURES]> {
        self.history.iter()
    }

    pub fn blocks(&self) -> &[BlockRecord] {
        &self.blocks
    }

    pub fn feed(&self) -> &TruthFeed {
        &self.feed
    }

    /// Index of the next sample to predict.
    pub fn next_index(&self) -> usize {
        self.start + self.seq.len()
    }

    /// Predicts the next sample, slides the window, and refits once a block
    /// is complete. Only the predictor call is timed.
    pub fn predict_next(&mut self, predictor: Predictor<'_>) -> Result<Prediction, PipelineError> {
        let rows: Vec<&[f64; NUM_FEATURES]> = self.history.iter().collect();
        let x = encode_window(&rows, self.bank.features());
        let fail = |e: String| PipelineError::PredictorFailure(e);
        let (dists, time_ns, jsd_vs_gp) = match predictor {
            Predictor::Gp => {
                let t0 = Instant::now();
                let d = self.bank.predict(&x).map_err(|e| fail(e.to_string()))?;
                (d, t0.elapsed().as_nanos() as u64, None)
            }
            Predictor::Net(net) => {
                let t0 = Instant::now();
                let d = net.forward(&x, Mode::Eval).map_err(|e| fail(e.to_string()))?;
                let dt = t0.elapsed().as_nanos() as u64;
                let gp = self.bank.predict_observation(&x).map_err(|e| fail(e.to_string()))?;
                (d, dt, Some(assess_against_oracle(&d, &gp)))
            }
        };
        if dists.iter().any(|g| !g.mean.is_finite() || !g.variance.is_finite()) {
            return Err(fail("non-finite prediction".into()));
        }
        let index = self.next_index();
        let row: [f64; NUM_FEATURES] = std::array::from_fn(|k| dists[k].mean);
        self.history.pop_front();
        self.history.push_back(row);
        self.seq.push(row);
        self.counter += 1;
        let horizon = self.counter;
        if self.counter == self.cfg.block {
            self.refit(index)?;
        }
        let sample = SignalSample { t: index as u64 + 1, side: self.side, values: self.norm.denormalize(&row) };
        Ok(Prediction { index, horizon, sample, dists, jsd_vs_gp, time_ns })
    }

    fn refit(&mut self, now: usize) -> Result<(), PipelineError> {
        let t0 = Instant::now();
        let block_start = self.seq.len() - self.cfg.block;
        let first_pred = self.cfg.window;
        let mut delivered_in_block = 0;
        for j in first_pred..self.seq.len() {
            if let Some(row) = self.feed.read(self.start + j, now)? {
                self.seq[j] = row;
                if j >= block_start {
                    delivered_in_block += 1;
                }
            }
        }
        let w = self.cfg.window;
        let mut inputs = self.base_inputs.clone();
        let mut targets = self.base_targets.clone();
        for j in first_pred..self.seq.len() {
            inputs.push(encode_window(&self.seq[j - w..j], self.bank.features()));
            targets.push(self.seq[j]);
        }
        let skip = inputs.len().saturating_sub(self.cfg.refit_capacity);
        self.bank = self
            .bank
            .refit(&inputs[skip..], &targets[skip..], self.cfg.refit_evals)
            .map_err(|e| PipelineError::PredictorFailure(format!("refit: {e}")))?;
        self.history = self.seq[self.seq.len() - w..].iter().copied().collect();
        self.counter = 0;
        self.refits += 1;
        self.blocks.push(BlockRecord {
            first_index: self.start + block_start,
            self_fed: delivered_in_block == 0,
            delivered: delivered_in_block,
            refit_rows: self.seq[block_start..].to_vec(),
            refit_time_ns: t0.elapsed().as_nanos() as u64,
        });
        Ok(())
    }
}

/// Per-feature discretized JSD between the network and the GP.
pub fn assess_against_oracle(nn_out: &[GaussianPredictive; NUM_FEATURES], gp_out: &[GaussianPredictive; NUM_FEATURES]) -> [f64; NUM_FEATURES] {
    feature_jsd(nn_out, gp_out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSample {
    pub index: usize,
    pub horizon: usize,
    /// Denormalized predicted values.
    pub prediction: [f64; NUM_FEATURES],
    pub dists: [GaussianPredictive; NUM_FEATURES],
    /// Denormalized truth, filled in after the episode for scoring.
    pub truth: Option<[f64; NUM_FEATURES]>,
    pub jsd_vs_gp: Option<[f64; NUM_FEATURES]>,
    pub time_ns: u64,
}

impl EpisodeSample {
    pub fn abs_error(&self) -> Option<[f64; NUM_FEATURES]> {
        self.truth.map(|t| std::array::from_fn(|k| (self.prediction[k] - t[k]).abs()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub trace: String,
    pub side: crate::ingest::Side,
    pub predictor: String,
    pub features: Vec<usize>,
    pub window: usize,
    pub block: usize,
    pub start: usize,
    pub samples: Vec<EpisodeSample>,
    pub blocks: Vec<BlockRecord>,
    pub refits: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub trace: String,
    pub predictor: String,
    pub features: Vec<usize>,
    pub predicted: usize,
    pub refits: usize,
    pub self_fed_blocks: usize,
    pub mean_abs_error: [f64; NUM_FEATURES],
    pub horizon_mae: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_jsd_vs_gp: Option<[f64; NUM_FEATURES]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_time_ns: Option<f64>,
}

impl EpisodeResult {
    pub fn predicted(&self) -> usize {
        self.samples.len()
    }

    pub fn self_fed_blocks(&self) -> usize {
        self.blocks.iter().filter(|b| b.self_fed).count()
    }

    pub fn times_ns(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.time_ns).collect()
    }

    /// Mean absolute error (all features) per horizon `1..=block`.
    pub fn horizon_mae(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.block];
        let mut n = vec![0usize; self.block];
        for s in &self.samples {
            if let Some(e) = s.abs_error() {
                sum[s.horizon - 1] += e.iter().sum::<f64>() / NUM_FEATURES as f64;
                n[s.horizon - 1] += 1;
            }
        }
        sum.iter().zip(&n).map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 }).collect()
    }

    pub fn summary(&self, with_timing: bool) -> EpisodeSummary {
        let scored: Vec<[f64; NUM_FEATURES]> = self.samples.iter().filter_map(|s| s.abs_error()).collect();
        let mean_abs_error = std::array::from_fn(|k| scored.iter().map(|e| e[k]).sum::<f64>() / scored.len().max(1) as f64);
        let jsd: Vec<[f64; NUM_FEATURES]> = self.samples.iter().filter_map(|s| s.jsd_vs_gp).collect();
        let mean_jsd_vs_gp =
            (!jsd.is_empty()).then(|| std::array::from_fn(|k| jsd.iter().map(|j| j[k]).sum::<f64>() / jsd.len() as f64));
        let median_time_ns = with_timing.then(|| {
            let mut t: Vec<f64> = self.times_ns().into_iter().map(|v| v as f64).collect();
            util::median(&mut t)
        });
        EpisodeSummary {
            trace: self.trace.clone(),
            predictor: self.predictor.clone(),
            features: self.features.clone(),
            predicted: self.predicted(),
            refits: self.refits,
            self_fed_blocks: self.self_fed_blocks(),
            mean_abs_error,
            horizon_mae: self.horizon_mae(),
            mean_jsd_vs_gp,
            median_time_ns,
        }
    }

    /// One row per predicted sample. Timing is optional so that the data
    /// columns can be compared byte for byte across runs.
    pub fn to_csv(&self, with_timing: bool) -> String {
        let mut header = vec!["index".to_string(), "horizon".to_string()];
        for prefix in ["pred", "truth", "abs_err", "jsd_vs_gp"] {
            header.extend(FEATURE_NAMES.iter().map(|f| format!("{prefix}_{f}")));
        }
        header.push("self_fed_block".into());
        if with_timing {
            header.push("time_ns".into());
        }
        let mut out = header.join(",");
        out.push('\n');
        let fmt_opt = |v: Option<[f64; NUM_FEATURES]>| -> Vec<String> {
            match v {
                Some(a) => a.iter().map(|x| format!("{x:?}")).collect(),
                None => vec![String::new(); NUM_FEATURES],
            }
        };
        for s in &self.samples {
            let mut cells = vec![(s.index + 1).to_string(), s.horizon.to_string()];
            cells.extend(s.prediction.iter().map(|x| format!("{x:?}")));
            cells.extend(fmt_opt(s.truth));
            cells.extend(fmt_opt(s.abs_error()));
            cells.extend(fmt_opt(s.jsd_vs_gp));
            let block = (s.index - self.start - self.window) / self.block;
            cells.push(self.blocks.get(block).map_or(String::new(), |b| b.self_fed.to_string()));
            if with_timing {
                cells.push(s.time_ns.to_string());
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Runs one episode on a normalized trace. The warm-up window is
/// `trace[start .. start + window]`; predictions start right after it.
pub fn run_episode(
    trace: &Trace,
    start: usize,
    predictor: Predictor<'_>,
    bank: &GpBank,
    arrivals: &[ArrivalEvent],
    cfg: &EpisodeConfig,
) -> Result<EpisodeResult, PipelineError> {
    let w = cfg.window;
    let available = trace.len().saturating_sub(start + w) / cfg.block.max(1);
    let blocks = cfg.blocks.unwrap_or(available);
    if blocks == 0 || blocks > available {
        return Err(PipelineError::TooShort { len: trace.len(), required: start + w + cfg.block * blocks.max(1) });
    }
    if let Predictor::Net(net) = predictor {
        if net.config.input_dim != bank.input_dim() {
            return Err(PipelineError::InvalidConfig(format!(
                "network expects {} inputs, window encodes {}",
                net.config.input_dim,
                bank.input_dim()
            )));
        }
    }
    let norm = trace.norm().clone();
    let rows = trace.rows();
    let warmup: Vec<[f64; NUM_FEATURES]> = rows[start..start + w].to_vec();
    let feed = TruthFeed::new(arrivals, &Normalization::identity());
    let mut state = EpisodeState::new(bank, &warmup, start, feed, norm.clone(), trace.side(), cfg.clone())?;
    let mut samples = Vec::with_capacity(blocks * cfg.block);
    for _ in 0..blocks * cfg.block {
        let p = state.predict_next(predictor)?;
        samples.push(EpisodeSample {
            index: p.index,
            horizon: p.horizon,
            prediction: p.sample.values,
            dists: p.dists,
            truth: None,
            jsd_vs_gp: p.jsd_vs_gp,
            time_ns: p.time_ns,
        });
    }
    // Scoring after the fact.
    for s in &mut samples {
        s.truth = rows.get(s.index).map(|r| norm.denormalize(r));
    }
    Ok(EpisodeResult {
        trace: trace.name().to_string(),
        side: trace.side(),
        predictor: predictor.label(),
        features: bank.features().to_vec(),
        window: w,
        block: cfg.block,
        start,
        samples,
        blocks: state.blocks.clone(),
        refits: state.refits,
    })
}
