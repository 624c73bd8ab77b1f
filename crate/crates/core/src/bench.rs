//! Accuracy metric, experiment grid, and report export.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gp::{FitOptions, GpBank};
use crate::ingest::{
    normalize, one_step_pairs, parse_trace, IngestError, Schema, Side, SyntheticKind, SyntheticSpec, Trace,
    FEATURE_NAMES, NUM_FEATURES,
};
use crate::nn::{self, Architecture, Example, NetConfig, Target, TrainConfig, TrainedNet};
use crate::pipeline::{run_episode, EpisodeConfig, EpisodeResult, LossModel, Predictor};
use crate::shapley::{make_feature_value_fn, same_side_columns, select_top_k, shapley_exact, ShapleyReport, ValueFnSettings};
use crate::util;

pub const SCHEMA_VERSION: u32 = 1;
pub const METRIC: &str = "accuracy_pct = 100 * max(0, 1 - RMSE / (max(truth) - min(truth))) per feature";
/// Default lower bound on oracle target variances used when training networks.
pub const DEFAULT_TARGET_VAR_FLOOR: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("index {index} outside the truth trace (length {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Range-normalized RMSE complement, in percent.
///
/// A constant truth segment scores 100 when the RMSE is at most `1e-9`, else 0.
pub fn range_accuracy(pred: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "prediction/truth length mismatch");
    if truth.is_empty() {
        return f64::NAN;
    }
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / truth.len() as f64;
    let rmse = mse.sqrt();
    let (lo, hi) = truth.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)));
    let range = hi - lo;
    if range == 0.0 {
        return if rmse <= 1e-9 { 100.0 } else { 0.0 };
    }
    100.0 * (1.0 - rmse / range).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScore {
    pub accuracy: [f64; NUM_FEATURES],
    /// Mean absolute error over all features, by steps since the last refit.
    pub horizon_mae: Vec<f64>,
}

/// Scores an episode against denormalized truth from `truth`.
pub fn score_episode(result: &EpisodeResult, truth: &Trace) -> Result<EpisodeScore, BenchError> {
    score_episodes(std::slice::from_ref(result), truth)
}

/// Pools the samples of several episodes on the same trace before scoring.
pub fn score_episodes(results: &[EpisodeResult], truth: &Trace) -> Result<EpisodeScore, BenchError> {
    let samples = truth.samples();
    let norm = truth.norm();
    let block = results.iter().map(|r| r.block).max().unwrap_or(0);
    let mut pred: Vec<Vec<f64>> = vec![Vec::new(); NUM_FEATURES];
    let mut act: Vec<Vec<f64>> = vec![Vec::new(); NUM_FEATURES];
    let mut h_sum = vec![0.0; block];
    let mut h_n = vec![0usize; block];
    for r in results {
        for s in &r.samples {
            let t = samples.get(s.index).ok_or(BenchError::IndexOutOfRange { index: s.index, len: samples.len() })?;
            let t = norm.denormalize(&t.values);
            let mut err = 0.0;
            for k in 0..NUM_FEATURES {
                pred[k].push(s.prediction[k]);
                act[k].push(t[k]);
                err += (s.prediction[k] - t[k]).abs();
            }
            h_sum[s.horizon - 1] += err / NUM_FEATURES as f64;
            h_n[s.horizon - 1] += 1;
        }
    }
    Ok(EpisodeScore {
        accuracy: std::array::from_fn(|k| range_accuracy(&pred[k], &act[k])),
        horizon_mae: h_sum.iter().zip(&h_n).map(|(s, &n)| if n == 0 { f64::NAN } else { s / n as f64 }).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchArch {
    Fc,
    Resnet,
    Gp,
}

impl BenchArch {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchArch::Fc => "fc",
            BenchArch::Resnet => "resnet",
            BenchArch::Gp => "gp",
        }
    }

    fn net_arch(self) -> Option<Architecture> {
        match self {
            BenchArch::Fc => Some(Architecture::FullyConnected),
            BenchArch::Resnet => Some(Architecture::ResidualMlp),
            BenchArch::Gp => None,
        }
    }
}

impl FromStr for BenchArch {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fc" => Ok(BenchArch::Fc),
            "resnet" => Ok(BenchArch::Resnet),
            "gp" => Ok(BenchArch::Gp),
            _ => Err(format!("unknown architecture `{s}` (fc|resnet|gp)")),
        }
    }
}

/// `Baseline`: all features, squared-error training on observed samples.
/// `Gp`: all features, JSD training against the GP oracle.
/// `GpSfv`: the top-k Shapley features, JSD training against a GP on those features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Gp,
    GpSfv,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Gp => "gp",
            Method::GpSfv => "gp_sfv",
        }
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" | "lefo" => Ok(Method::Baseline),
            "gp" => Ok(Method::Gp),
            "gp_sfv" | "gp-sfv" => Ok(Method::GpSfv),
            _ => Err(format!("unknown method `{s}` (baseline|gp|gp_sfv)")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic { kind: SyntheticKind, len: usize, noise_sd: f64, seed: u64 },
    Files {
        name: String,
        #[serde(default)]
        human: Option<PathBuf>,
        #[serde(default)]
        robot: Option<PathBuf>,
        #[serde(default)]
        schema: Option<PathBuf>,
    },
}

impl DatasetSpec {
    pub fn name(&self) -> String {
        match self {
            DatasetSpec::Synthetic { kind, seed, .. } => format!("{}_{seed}", kind.as_str()),
            DatasetSpec::Files { name, .. } => name.clone(),
        }
    }

    /// The raw (unnormalized) trace for one side, if the dataset has it.
    pub fn load(&self, side: Side) -> Result<Option<Trace>, BenchError> {
        match self {
            DatasetSpec::Synthetic { kind, len, noise_sd, seed } => {
                Ok(Some(SyntheticSpec::new(*kind, *len, *noise_sd, *seed).with_side(side).generate()?))
            }
            DatasetSpec::Files { human, robot, schema, .. } => {
                let path = match side {
                    Side::Human => human,
                    Side::Robot => robot,
                };
                let schema = match schema {
                    Some(p) => Schema::from_file(p)?,
                    None => Schema::canonical(),
                };
                path.as_ref().map(|p| parse_trace(p, &schema)).transpose().map_err(Into::into)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnBenchSettings {
    #[serde(default)]
    pub depth: Option<usize>,
    #[serde(default)]
    pub width: Option<usize>,
    #[serde(default)]
    pub dropout_p: Option<f64>,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Training windows drawn (evenly) from the training split.
    pub max_windows: usize,
    #[serde(default)]
    pub clip_norm: Option<f64>,
    /// Lower bound on oracle target variances (normalized units).
    #[serde(default)]
    pub target_var_floor: f64,
}

impl Default for NnBenchSettings {
    fn default() -> Self {
        let tc = TrainConfig::default();
        Self { depth: None, width: None, dropout_p: None, epochs: 40, lr: tc.lr, momentum: tc.momentum, batch_size: tc.batch_size, max_windows: 400, clip_norm: tc.clip_norm, target_var_floor: DEFAULT_TARGET_VAR_FLOOR }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingSettings {
    pub predictions: usize,
    pub warmup: usize,
    /// Time cells one after another once all accuracy work is done.
    pub sequential: bool,
}

impl Default for TimingSettings {
    fn default() -> Self {
        Self { predictions: 1000, warmup: 100, sequential: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub datasets: Vec<DatasetSpec>,
    pub archs: Vec<BenchArch>,
    pub methods: Vec<Method>,
    pub sides: Vec<Side>,
    pub runs: usize,
    pub base_seed: u64,
    /// Features kept by the SFV method.
    pub k: usize,
    pub train_fraction: f64,
    /// Training pairs for the oracle GP fitted on the training split.
    pub gp_max_train: usize,
    pub gp_fit_evals: usize,
    pub episode: EpisodeConfig,
    pub episodes_per_run: usize,
    pub loss_model: LossModel,
    pub nn: NnBenchSettings,
    pub shapley: ValueFnSettings,
    pub timing: TimingSettings,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            datasets: SyntheticKind::ALL
                .iter()
                .map(|&kind| DatasetSpec::Synthetic { kind, len: 1000, noise_sd: 0.001, seed: 1 })
                .collect(),
            archs: vec![BenchArch::Fc, BenchArch::Resnet, BenchArch::Gp],
            methods: vec![Method::Baseline, Method::Gp, Method::GpSfv],
            sides: vec![Side::Human, Side::Robot],
            runs: 10,
            base_seed: 0,
            k: 3,
            train_fraction: 0.6,
            gp_max_train: 64,
            gp_fit_evals: 200,
            episode: EpisodeConfig { blocks: Some(2), ..EpisodeConfig::default() },
            episodes_per_run: 8,
            loss_model: LossModel::None,
            nn: NnBenchSettings::default(),
            shapley: ValueFnSettings { max_train: 48, max_validation: 48, fit_evals: 15, ..ValueFnSettings::default() },
            timing: TimingSettings::default(),
        }
    }
}

impl BenchConfig {
    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_seeds(&self) -> Vec<u64> {
        (0..self.runs as u64).map(|r| util::derive_seed(self.base_seed, &[r])).collect()
    }

    fn validate(&self) -> Result<(), BenchError> {
        if !(0.0..1.0).contains(&self.train_fraction) || self.train_fraction == 0.0 {
            return Err(BenchError::Config("train_fraction must lie in (0, 1)".into()));
        }
        if self.k == 0 || self.k > NUM_FEATURES {
            return Err(BenchError::Config(format!("k must lie in 1..={NUM_FEATURES}")));
        }
        if self.runs == 0 {
            return Err(BenchError::Config("runs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation over runs (0 for a single run).
    pub std: f64,
    pub values: Vec<f64>,
}

impl Stat {
    pub fn from_values(values: Vec<f64>) -> Self {
        Self { mean: util::mean(&values), std: util::sample_std(&values), values }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub median_ns: f64,
    pub predictions: usize,
    pub warmup_discarded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub dataset: String,
    pub arch: BenchArch,
    pub method: Method,
    pub side: Side,
    pub status: CellStatus,
    pub features: Vec<usize>,
    pub seeds: Vec<u64>,
    pub runs: usize,
    /// Per-feature accuracy (%) over runs.
    pub per_feature: Vec<Stat>,
    /// Feature-averaged accuracy (%) over runs.
    pub overall: Option<Stat>,
    pub horizon_mae: Vec<f64>,
    #[serde(default, skip_serializing)]
    pub timing: Option<CellTiming>,
}

impl CellReport {
    fn failed(dataset: &str, arch: BenchArch, method: Method, side: Side, seeds: Vec<u64>, reason: String) -> Self {
        Self {
            dataset: dataset.to_string(),
            arch,
            method,
            side,
            status: CellStatus::Failed { reason },
            features: Vec::new(),
            seeds,
            runs: 0,
            per_feature: Vec::new(),
            overall: None,
            horizon_mae: Vec::new(),
            timing: None,
        }
    }

    pub fn ok(&self) -> bool {
        self.status == CellStatus::Ok
    }

    pub fn key(&self) -> String {
        format!("{}/{}/{}/{}", self.dataset, self.arch.as_str(), self.method.as_str(), self.side.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub metric: String,
    pub config: BenchConfig,
    pub config_hash: String,
    pub machine: String,
    /// Shapley reports keyed by `dataset/side`.
    pub sfv: BTreeMap<String, ShapleyReport>,
    pub cells: Vec<CellReport>,
}

impl BenchReport {
    pub fn cell(&self, dataset: &str, arch: BenchArch, method: Method, side: Side) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.dataset == dataset && c.arch == arch && c.method == method && c.side == side)
    }

    pub fn any_ok(&self) -> bool {
        self.cells.iter().any(CellReport::ok)
    }
}

pub fn machine_info() -> String {
    let cpus = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{}-{} cpus={cpus}", std::env::consts::OS, std::env::consts::ARCH)
}

struct Prepared {
    trace: Trace,
    split: usize,
}

/// Runs the full grid. Failures are recorded per cell and never abort the run.
pub fn run_matrix(config: &BenchConfig) -> Result<BenchReport, BenchError> {
    config.validate()?;
    let seeds = config.run_seeds();
    let mut prepared: BTreeMap<(usize, Side), Result<Prepared, String>> = BTreeMap::new();
    for (d, ds) in config.datasets.iter().enumerate() {
        for &side in &config.sides {
            let p = match ds.load(side) {
                Ok(Some(raw)) => {
                    let trace = normalize(&raw);
                    let split = (trace.len() as f64 * config.train_fraction).floor() as usize;
                    Ok(Prepared { trace, split })
                }
                Ok(None) => Err(format!("dataset has no {side} trace")),
                Err(e) => Err(e.to_string()),
            };
            prepared.insert((d, side), p);
        }
    }

    let needs_sfv = config.methods.contains(&Method::GpSfv) && !config.archs.is_empty();
    let sfv: BTreeMap<(usize, Side), Result<ShapleyReport, String>> = prepared
        .par_iter()
        .filter(|_| needs_sfv)
        .map(|(&key, p)| {
            let r = p.as_ref().map_err(Clone::clone).and_then(|p| {
                let train = p.trace.slice(0, p.split).map_err(|e| e.to_string())?;
                let v = make_feature_value_fn(same_side_columns(&train), &train, &config.shapley).map_err(|e| e.to_string())?;
                let mut report = shapley_exact(&v).map_err(|e| e.to_string())?;
                report.feature_names = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
                Ok(report)
            });
            (key, r)
        })
        .collect();

    let mut jobs = Vec::new();
    for d in 0..config.datasets.len() {
        for &arch in &config.archs {
            for &method in &config.methods {
                for &side in &config.sides {
                    jobs.push((d, arch, method, side));
                }
            }
        }
    }

    let outcomes: Vec<(CellReport, Option<CellAssets>)> = jobs
        .par_iter()
        .map(|&(d, arch, method, side)| {
            let name = config.datasets[d].name();
            let fail = |reason: String| (CellReport::failed(&name, arch, method, side, seeds.clone(), reason), None);
            if arch == BenchArch::Gp && method == Method::Baseline {
                return fail("the baseline method trains a network; not applicable to the gp architecture".into());
            }
            let p = match &prepared[&(d, side)] {
                Ok(p) => p,
                Err(e) => return fail(e.clone()),
            };
            let features: Vec<usize> = match method {
                Method::GpSfv => match &sfv[&(d, side)] {
                    Ok(r) => match select_top_k(r, config.k) {
                        Ok(s) => s.indices(),
                        Err(e) => return fail(e.to_string()),
                    },
                    Err(e) => return fail(format!("feature values: {e}")),
                },
                _ => (0..NUM_FEATURES).collect(),
            };
            match run_cell(config, p, &name, arch, method, side, &features, &seeds) {
                Ok((cell, assets)) => (cell, Some(assets)),
                Err(e) => fail(e),
            }
        })
        .collect();

    let mut cells = Vec::with_capacity(outcomes.len());
    let mut timed = Vec::new();
    for (i, (cell, assets)) in outcomes.into_iter().enumerate() {
        if let Some(a) = assets {
            timed.push((i, a));
        }
        cells.push(cell);
    }
    let timing_job = |(i, a): &(usize, CellAssets)| -> (usize, Result<CellTiming, String>) {
        let (d, _, _, side) = jobs[*i];
        let p = prepared[&(d, side)].as_ref().expect("prepared for a successful cell");
        (*i, time_cell(config, p, a))
    };
    let timings: Vec<(usize, Result<CellTiming, String>)> = if config.timing.sequential {
        timed.iter().map(timing_job).collect()
    } else {
        timed.par_iter().map(timing_job).collect()
    };
    for (i, t) in timings {
        match t {
            Ok(t) => cells[i].timing = Some(t),
            Err(e) => cells[i].status = CellStatus::Failed { reason: format!("timing: {e}") },
        }
    }

    let sfv = sfv
        .into_iter()
        .filter_map(|((d, side), r)| r.ok().map(|r| (format!("{}/{}", config.datasets[d].name(), side.as_str()), r)))
        .collect();
    Ok(BenchReport {
        schema_version: SCHEMA_VERSION,
        metric: METRIC.into(),
        config: config.clone(),
        config_hash: config.hash(),
        machine: machine_info(),
        sfv,
        cells,
    })
}

/// What a finished cell needs for its timing pass.
struct CellAssets {
    bank: GpBank,
    net: Option<TrainedNet>,
}

fn episode_starts(config: &BenchConfig, p: &Prepared) -> Result<Vec<usize>, String> {
    let ep = &config.episode;
    let blocks = ep.blocks.unwrap_or(1);
    let span = ep.window + ep.block * blocks;
    let first = p.split;
    let room = p.trace.len().saturating_sub(first + span);
    if p.trace.len() < first + span {
        return Err(format!("test split of {} samples is shorter than one episode ({span})", p.trace.len() - first));
    }
    let n = config.episodes_per_run.max(1);
    Ok((0..n).map(|i| first + if n == 1 { 0 } else { i * room / (n - 1) }).collect())
}

/// Fits the oracle and, for network architectures, trains one network per run.
#[allow(clippy::too_many_arguments)]
fn run_cell(
    config: &BenchConfig,
    p: &Prepared,
    dataset: &str,
    arch: BenchArch,
    method: Method,
    side: Side,
    features: &[usize],
    seeds: &[u64],
) -> Result<(CellReport, CellAssets), String> {
    let w = config.episode.window;
    let rows = p.trace.rows();
    let train_rows = &rows[..p.split];
    let opts = FitOptions { max_evals: config.gp_fit_evals, ..FitOptions::default() };
    let bank = GpBank::fit_rows(train_rows, w, features, config.gp_max_train, opts).map_err(|e| format!("oracle fit: {e}"))?;
    let starts = episode_starts(config, p)?;
    let epcfg = EpisodeConfig { blocks: Some(config.episode.blocks.unwrap_or(1)), ..config.episode.clone() };

    let mut per_feature: Vec<Vec<f64>> = vec![Vec::new(); NUM_FEATURES];
    let mut overall = Vec::new();
    let mut horizon_sum = vec![0.0; epcfg.block];
    let mut first_net = None;
    for (r, &seed) in seeds.iter().enumerate() {
        let net = match arch.net_arch() {
            Some(a) => Some(train_cell_net(config, train_rows, &bank, a, method, features, seed)?),
            None => None,
        };
        let predictor = match &net {
            Some(n) => Predictor::Net(n),
            None => Predictor::Gp,
        };
        let mut results = Vec::with_capacity(starts.len());
        for &s in &starts {
            let events = config.loss_model.arrivals(&p.trace, s + w, s + w + epcfg.block * epcfg.blocks.unwrap_or(1));
            results.push(run_episode(&p.trace, s, predictor, &bank, &events, &epcfg).map_err(|e| e.to_string())?);
        }
        let score = score_episodes(&results, &p.trace).map_err(|e| e.to_string())?;
        for k in 0..NUM_FEATURES {
            per_feature[k].push(score.accuracy[k]);
        }
        overall.push(score.accuracy.iter().sum::<f64>() / NUM_FEATURES as f64);
        for (h, v) in score.horizon_mae.iter().enumerate() {
            horizon_sum[h] += v;
        }
        if r == 0 {
            first_net = net;
        }
    }
    let runs = seeds.len();
    let cell = CellReport {
        dataset: dataset.to_string(),
        arch,
        method,
        side,
        status: CellStatus::Ok,
        features: features.to_vec(),
        seeds: seeds.to_vec(),
        runs,
        per_feature: per_feature.into_iter().map(Stat::from_values).collect(),
        overall: Some(Stat::from_values(overall)),
        horizon_mae: horizon_sum.into_iter().map(|s| s / runs as f64).collect(),
        timing: None,
    };
    Ok((cell, CellAssets { bank, net: first_net }))
}

fn train_cell_net(
    config: &BenchConfig,
    train_rows: &[[f64; NUM_FEATURES]],
    bank: &GpBank,
    arch: Architecture,
    method: Method,
    features: &[usize],
    seed: u64,
) -> Result<TrainedNet, String> {
    let w = config.episode.window;
    let (inputs, targets) = one_step_pairs(train_rows, w, features);
    let keep: Vec<usize> = if inputs.len() > config.nn.max_windows && config.nn.max_windows > 0 {
        (0..config.nn.max_windows).map(|i| i * inputs.len() / config.nn.max_windows).collect()
    } else {
        (0..inputs.len()).collect()
    };
    let mut data = Vec::with_capacity(keep.len());
    for i in keep {
        let target = match method {
            Method::Baseline => Target::Point(train_rows[targets[i]]),
            Method::Gp | Method::GpSfv => {
                let preds = bank.predict_observation(&inputs[i]).map_err(|e| e.to_string())?;
                Target::oracle_with_floor(preds, config.nn.target_var_floor)
            }
        };
        data.push(Example { input: inputs[i].clone(), target });
    }
    let mut cfg = NetConfig::for_arch(arch, w * features.len());
    if let Some(d) = config.nn.depth {
        cfg.depth = d;
    }
    if let Some(wd) = config.nn.width {
        cfg.width = wd;
    }
    if let Some(p) = config.nn.dropout_p {
        cfg.dropout_p = p;
    }
    let net = TrainedNet::init(cfg, seed).map_err(|e| e.to_string())?;
    let tc = TrainConfig {
        lr: config.nn.lr,
        momentum: config.nn.momentum,
        batch_size: config.nn.batch_size,
        epochs: config.nn.epochs,
        seed,
        clip_norm: config.nn.clip_norm,
        ..TrainConfig::default()
    };
    nn::train(&net, &data, &tc).map_err(|e| format!("training: {e}"))
}

/// Median per-sample inference time over `predictions` samples after
/// discarding the first `warmup`, cycling episodes over the test split.
fn time_cell(config: &BenchConfig, p: &Prepared, a: &CellAssets) -> Result<CellTiming, String> {
    let need = config.timing.predictions + config.timing.warmup;
    let starts = episode_starts(config, p)?;
    let epcfg = EpisodeConfig { blocks: Some(config.episode.blocks.unwrap_or(1)), ..config.episode.clone() };
    let predictor = match &a.net {
        Some(n) => Predictor::Net(n),
        None => Predictor::Gp,
    };
    let mut times: Vec<f64> = Vec::with_capacity(need);
    let mut i = 0;
    while times.len() < need {
        let s = starts[i % starts.len()];
        let r = run_episode(&p.trace, s, predictor, &a.bank, &[], &epcfg).map_err(|e| e.to_string())?;
        times.extend(r.times_ns().into_iter().map(|t| t as f64));
        i += 1;
    }
    times.truncate(need);
    let mut kept = times.split_off(config.timing.warmup);
    Ok(CellTiming { median_ns: util::median(&mut kept), predictions: kept.len(), warmup_discarded: config.timing.warmup })
}

fn header() -> String {
    format!("# schema_version={SCHEMA_VERSION}\n")
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

/// Per-feature accuracy (one row per cell and feature).
pub fn table1_csv(report: &BenchReport) -> String {
    let mut out = header();
    out.push_str("dataset,arch,method,side,feature,mean,std,runs,seeds\n");
    for c in report.cells.iter().filter(|c| c.ok()) {
        let seeds = c.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";");
        for (k, s) in c.per_feature.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                c.dataset,
                c.arch.as_str(),
                c.method.as_str(),
                c.side.as_str(),
                FEATURE_NAMES[k],
                f(s.mean),
                f(s.std),
                c.runs,
                seeds
            ));
        }
    }
    out
}

/// Overall accuracy per cell, including failed cells.
pub fn table2_csv(report: &BenchReport) -> String {
    let mut out = header();
    out.push_str("dataset,arch,method,side,n_features,mean,std,runs,status\n");
    for c in &report.cells {
        let (mean, std) = c.overall.as_ref().map_or((String::new(), String::new()), |s| (f(s.mean), f(s.std)));
        let status = match &c.status {
            CellStatus::Ok => "ok".to_string(),
            CellStatus::Failed { reason } => format!("failed: {}", reason.replace([',', '\n'], ";")),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            c.dataset,
            c.arch.as_str(),
            c.method.as_str(),
            c.side.as_str(),
            c.features.len(),
            mean,
            std,
            c.runs,
            status
        ));
    }
    out
}

pub fn table3_timing_csv(report: &BenchReport) -> String {
    let mut out = header();
    out.push_str("dataset,arch,method,side,n_features,median_ms,predictions,warmup_discarded\n");
    for c in &report.cells {
        if let Some(t) = &c.timing {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6},{},{}\n",
                c.dataset,
                c.arch.as_str(),
                c.method.as_str(),
                c.side.as_str(),
                c.features.len(),
                t.median_ns / 1e6,
                t.predictions,
                t.warmup_discarded
            ));
        }
    }
    out
}

/// Rows are `side_feature`, columns are datasets, for one (arch, method).
pub fn heatmap_csv(report: &BenchReport, arch: BenchArch, method: Method) -> String {
    let datasets: Vec<String> = report.config.datasets.iter().map(DatasetSpec::name).collect();
    let mut out = header();
    out.push_str("row");
    for d in &datasets {
        out.push(',');
        out.push_str(d);
    }
    out.push('\n');
    for &side in &report.config.sides {
        for (k, name) in FEATURE_NAMES.iter().enumerate() {
            out.push_str(&format!("{}_{name}", side.as_str()));
            for d in &datasets {
                out.push(',');
                if let Some(c) = report.cell(d, arch, method, side).filter(|c| c.ok()) {
                    out.push_str(&f(c.per_feature[k].mean));
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn horizon_csv(report: &BenchReport) -> String {
    let mut out = header();
    out.push_str("dataset,arch,method,side,horizon,mae\n");
    for c in report.cells.iter().filter(|c| c.ok()) {
        for (h, v) in c.horizon_mae.iter().enumerate() {
            out.push_str(&format!("{},{},{},{},{},{}\n", c.dataset, c.arch.as_str(), c.method.as_str(), c.side.as_str(), h + 1, f(*v)));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

#[derive(Serialize, Deserialize)]
struct TimingDoc {
    schema_version: u32,
    machine: String,
    /// `(cell key, timing)` in cell order.
    cells: Vec<(String, CellTiming)>,
}

/// Writes the report files into `dir` and returns their paths. Timing lives
/// in its own files so that every other file is reproducible byte for byte.
pub fn export_report(report: &BenchReport, format: ExportFormat, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    std::fs::create_dir_all(dir)?;
    let mut files: Vec<(String, String)> = Vec::new();
    match format {
        ExportFormat::Csv => {
            files.push(("table1_per_feature.csv".into(), table1_csv(report)));
            files.push(("table2_summary.csv".into(), table2_csv(report)));
            files.push(("table3_timing.csv".into(), table3_timing_csv(report)));
            files.push(("horizon_error.csv".into(), horizon_csv(report)));
            for &arch in &report.config.archs {
                for &method in &report.config.methods {
                    files.push((format!("heatmap_{}_{}.csv", arch.as_str(), method.as_str()), heatmap_csv(report, arch, method)));
                }
            }
        }
        ExportFormat::Json => {
            files.push(("report.json".into(), serde_json::to_string_pretty(report)? + "\n"));
            let timing = TimingDoc {
                schema_version: SCHEMA_VERSION,
                machine: report.machine.clone(),
                cells: report.cells.iter().filter_map(|c| c.timing.clone().map(|t| (c.key(), t))).collect(),
            };
            files.push(("timing.json".into(), serde_json::to_string_pretty(&timing)? + "\n"));
        }
    }
    let mut paths = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads `report.json` (and `timing.json` when present) written by [`export_report`].
pub fn import_report(dir: &Path) -> Result<BenchReport, BenchError> {
    let mut report: BenchReport = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json"))?)?;
    let timing_path = dir.join("timing.json");
    if timing_path.exists() {
        let doc: TimingDoc = serde_json::from_str(&std::fs::read_to_string(timing_path)?)?;
        let by_key: BTreeMap<String, CellTiming> = doc.cells.into_iter().collect();
        for c in &mut report.cells {
            c.timing = by_key.get(&c.key()).cloned();
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        let t = [0.0, 1.0, 2.0, 4.0];
        assert_eq!(range_accuracy(&t, &t), 100.0);
        let off: Vec<f64> = t.iter().map(|v| v + 0.5).collect();
        assert!((range_accuracy(&off, &t) - 100.0 * (1.0 - 0.5 / 4.0)).abs() < 1e-12);
        assert_eq!(range_accuracy(&[3.0, 3.0], &[3.0, 3.0]), 100.0);
        assert_eq!(range_accuracy(&[3.1, 3.0], &[3.0, 3.0]), 0.0);
        assert_eq!(range_accuracy(&[100.0, -100.0], &[0.0, 1.0]), 0.0);
    }

    #[test]
    fn parsing_and_hash_sensitivity() {
        assert_eq!("gp-sfv".parse::<Method>().unwrap(), Method::GpSfv);
        assert_eq!("resnet".parse::<BenchArch>().unwrap(), BenchArch::Resnet);
        let a = BenchConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.k = 4;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn empty_grid_is_an_empty_report() {
        let cfg = BenchConfig { datasets: Vec::new(), ..BenchConfig::default() };
        let r = run_matrix(&cfg).unwrap();
        assert!(r.cells.is_empty());
        assert!(!r.any_ok());
    }
}
