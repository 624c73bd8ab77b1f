//! Compact neural predictors that output a Gaussian `(mean, ln var)` per channel.
//!
//! Two architectures share one flat parameter vector layout:
//!
//! - `FullyConnected`: `depth` ReLU layers of `width` units, then a linear head.
//! - `ResidualMlp`: a ReLU input projection, `depth` identity-skip blocks
//!   `h <- relu(h + W2 drop(relu(W1 h + b1)) + b2)`, then a linear head.
//!
//! Dense weights are stored row-major (`out x in`) followed by the bias.
//! Dropout is inverted (kept activations are scaled by `1 / (1 - p)` during
//! training) so evaluation needs no rescaling.

mod train;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::GaussianPredictive;
use crate::ingest::NUM_FEATURES;
use crate::util;

pub use train::{train, Example, GridPolicy, LossBreakdown, Objective, Target, TrainConfig, DEFAULT_CLIP_NORM};

pub const OUTPUT_DIM: usize = 2 * NUM_FEATURES;
/// Log-variance outputs are clamped to `[-LOG_VAR_LIMIT, LOG_VAR_LIMIT]`.
pub const LOG_VAR_LIMIT: f64 = 30.0;
pub const DOC_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    DivergentTraining { epoch: usize, loss: f64 },
    #[error("empty training set")]
    EmptyDataset,
    #[error("unsupported network document version {0}")]
    Version(u32),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    FullyConnected,
    ResidualMlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub arch: Architecture,
    /// Hidden layers (fully connected) or residual blocks.
    pub depth: usize,
    pub width: usize,
    pub dropout_p: f64,
    pub input_dim: usize,
}

impl NetConfig {
    /// 12 ReLU layers of 100 units.
    pub fn fully_connected(input_dim: usize) -> Self {
        Self { arch: Architecture::FullyConnected, depth: 12, width: 100, dropout_p: 0.1, input_dim }
    }

    /// 15 residual blocks of width 64: 1 + 2 * 15 + 1 = 32 weight layers.
    pub fn residual(input_dim: usize) -> Self {
        Self { arch: Architecture::ResidualMlp, depth: 15, width: 64, dropout_p: 0.1, input_dim }
    }

    pub fn for_arch(arch: Architecture, input_dim: usize) -> Self {
        match arch {
            Architecture::FullyConnected => Self::fully_connected(input_dim),
            Architecture::ResidualMlp => Self::residual(input_dim),
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.depth == 0 || self.width == 0 || self.input_dim == 0 {
            return Err(NnError::InvalidConfig("depth, width and input_dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(NnError::InvalidConfig(format!("dropout_p must lie in [0, 1), got {}", self.dropout_p)));
        }
        Ok(())
    }

    pub fn weight_layers(&self) -> usize {
        match self.arch {
            Architecture::FullyConnected => self.depth + 1,
            Architecture::ResidualMlp => 2 * self.depth + 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Dense {
    pub fan_in: usize,
    pub fan_out: usize,
    pub w: usize,
    pub b: usize,
}

impl Dense {
    fn end(&self) -> usize {
        self.b + self.fan_out
    }

    /// `out = X W^T + b` for a `rows x fan_in` row-major batch `x`.
    fn apply(&self, params: &[f64], x: &[f64], rows: usize, out: &mut Vec<f64>) {
        let (fi, fo) = (self.fan_in, self.fan_out);
        let bias = &params[self.b..self.end()];
        out.clear();
        for _ in 0..rows {
            out.extend_from_slice(bias);
        }
        let w = &params[self.w..self.b];
        gemm(rows, fi, fo, x, (fi, 1), w, (1, fi), 1.0, out, (fo, 1));
    }

    /// Accumulates parameter gradients for the batch `dz` and writes
    /// `dz W` into `dx`.
    fn backward(&self, params: &[f64], x: &[f64], dz: &[f64], rows: usize, grad: &mut [f64], dx: &mut Vec<f64>) {
        let (fi, fo) = (self.fan_in, self.fan_out);
        let (gw, gb) = grad[self.w..self.end()].split_at_mut(fo * fi);
        gemm(fo, rows, fi, dz, (1, fo), x, (fi, 1), 1.0, gw, (fi, 1));
        for row in dz.chunks_exact(fo) {
            gb.iter_mut().zip(row).for_each(|(g, d)| *g += d);
        }
        dx.clear();
        dx.resize(rows * fi, 0.0);
        gemm(rows, fo, fi, dz, (fo, 1), &params[self.w..self.b], (fi, 1), 0.0, dx, (fi, 1));
    }
}

/// `C <- A B + beta C` with `A: m x k`, `B: k x n`, `C: m x n`, each given as
/// a slice plus `(row stride, column stride)`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    sa: (usize, usize),
    b: &[f64],
    sb: (usize, usize),
    beta: f64,
    c: &mut [f64],
    sc: (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, s: (usize, usize)| (rows - 1) * s.0 + (cols - 1) * s.1;
    assert!(last(m, n, sc) < c.len());
    if k > 0 {
        assert!(last(m, k, sa) < a.len() && last(k, n, sb) < b.len());
    }
    // SAFETY: the asserts above keep every addressed element inside its slice,
    // and `c` is uniquely borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            beta,
            c.as_mut_ptr(),
            sc.0 as isize,
            sc.1 as isize,
        );
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Layout {
    pub layers: Vec<Dense>,
    pub n_params: usize,
}

impl Layout {
    pub fn new(cfg: &NetConfig) -> Self {
        let mut shapes = vec![(cfg.input_dim, cfg.width)];
        let hidden = match cfg.arch {
            Architecture::FullyConnected => cfg.depth - 1,
            Architecture::ResidualMlp => 2 * cfg.depth,
        };
        shapes.extend(std::iter::repeat_n((cfg.width, cfg.width), hidden));
        shapes.push((cfg.width, OUTPUT_DIM));
        let mut offset = 0;
        let layers = shapes
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let d = Dense { fan_in, fan_out, w: offset, b: offset + fan_in * fan_out };
                offset = d.end();
                d
            })
            .collect();
        Self { layers, n_params: offset }
    }
}

/// Forward-pass mode. Training mode draws dropout masks from the given RNG.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

/// Intermediate values of a batched forward pass, kept for backpropagation.
/// Every buffer is row-major with one row per sample.
#[derive(Default)]
pub(crate) struct Cache {
    rows: usize,
    /// Input to every dense layer, in layer order.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of every dense layer except the head.
    pre: Vec<Vec<f64>>,
    /// Dropout multipliers per dropout site (empty when inactive).
    masks: Vec<Vec<f64>>,
    /// Residual: `h + r` before the block's output ReLU.
    sums: Vec<Vec<f64>>,
    /// `rows x OUTPUT_DIM` head outputs.
    pub out: Vec<f64>,
}

impl Cache {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.out[r * OUTPUT_DIM..(r + 1) * OUTPUT_DIM]
    }
}

fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|v| v.max(0.0)).collect()
}

/// A network and its training record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedNet {
    pub config: NetConfig,
    pub weights: Vec<f64>,
    /// Mean training loss per completed epoch.
    pub train_log: Vec<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<Objective>,
}

#[derive(Serialize, Deserialize)]
struct NetDoc {
    version: u32,
    net: TrainedNet,
}

impl TrainedNet {
    /// He-initialized network: weights `N(0, 2 / fan_in)`, biases zero. The
    /// second layer of each residual branch is further scaled by `1 / depth`
    /// so the skip path dominates at initialization.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut weights = vec![0.0; layout.n_params];
        let mut rng = util::rng(seed, &[0x1417]);
        for (idx, layer) in layout.layers.iter().enumerate() {
            let mut var = 2.0 / layer.fan_in as f64;
            let is_branch_out = config.arch == Architecture::ResidualMlp
                && idx >= 1
                && idx < layout.layers.len() - 1
                && (idx - 1) % 2 == 1;
            if is_branch_out {
                var /= config.depth as f64;
            }
            let dist = Normal::new(0.0, var.sqrt()).expect("positive variance");
            for w in &mut weights[layer.w..layer.b] {
                *w = dist.sample(&mut rng);
            }
        }
        Ok(Self { config, weights, train_log: Vec::new(), seed, objective: None })
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    pub fn n_params(&self) -> usize {
        self.weights.len()
    }

    /// Raw 18-dimensional head output: 9 means then 9 log-variances.
    pub fn forward_raw(&self, input: &[f64], mode: Mode<'_>) -> Result<Vec<f64>, NnError> {
        if input.len() != self.config.input_dim {
            return Err(NnError::DimensionMismatch { expected: self.config.input_dim, got: input.len() });
        }
        let mut cache = Cache::default();
        let layout = self.layout();
        match mode {
            Mode::Eval => self.forward_cached::<&mut dyn RngCore>(&self.weights, &layout, input, None, &mut cache),
            Mode::Train(rng) => self.forward_cached(&self.weights, &layout, input, Some(&mut [rng]), &mut cache),
        }
        Ok(cache.out)
    }

    pub fn forward(&self, input: &[f64], mode: Mode<'_>) -> Result<[GaussianPredictive; NUM_FEATURES], NnError> {
        let out = self.forward_raw(input, mode)?;
        Ok(head_to_predictive(&out))
    }

    /// Batched forward pass over `inputs` (`rows x input_dim`). With `rngs`,
    /// sample `r` draws its dropout masks from `rngs[r]`, site by site in
    /// layer order, so a batch reproduces the single-sample passes exactly.
    pub(crate) fn forward_cached<R: RngCore>(
        &self,
        params: &[f64],
        layout: &Layout,
        inputs: &[f64],
        mut rngs: Option<&mut [R]>,
        cache: &mut Cache,
    ) {
        let rows = inputs.len() / self.config.input_dim;
        debug_assert_eq!(rows * self.config.input_dim, inputs.len());
        let p = self.config.dropout_p;
        let mut dropout = |a: &mut Vec<f64>, masks: &mut Vec<Vec<f64>>| {
            let mut mask = Vec::new();
            if let Some(rngs) = rngs.as_deref_mut() {
                if p > 0.0 {
                    let keep = 1.0 / (1.0 - p);
                    let width = a.len() / rows;
                    mask.reserve(a.len());
                    for rng in rngs.iter_mut().take(rows) {
                        mask.extend((0..width).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }));
                    }
                    a.iter_mut().zip(&mask).for_each(|(v, k)| *v *= k);
                }
            }
            masks.push(mask);
        };
        cache.rows = rows;
        cache.inputs.clear();
        cache.pre.clear();
        cache.masks.clear();
        cache.sums.clear();
        let layers = &layout.layers;
        let mut z = Vec::new();
        let mut h = inputs.to_vec();
        match self.config.arch {
            Architecture::FullyConnected => {
                for layer in &layers[..layers.len() - 1] {
                    layer.apply(params, &h, rows, &mut z);
                    cache.inputs.push(std::mem::take(&mut h));
                    let mut a = relu(&z);
                    cache.pre.push(z.clone());
                    dropout(&mut a, &mut cache.masks);
                    h = a;
                }
            }
            Architecture::ResidualMlp => {
                layers[0].apply(params, &h, rows, &mut z);
                cache.inputs.push(std::mem::take(&mut h));
                h = relu(&z);
                cache.pre.push(z.clone());
                for pair in layers[1..layers.len() - 1].chunks(2) {
                    pair[0].apply(params, &h, rows, &mut z);
                    cache.inputs.push(h.clone());
                    let mut u = relu(&z);
                    cache.pre.push(z.clone());
                    dropout(&mut u, &mut cache.masks);
                    pair[1].apply(params, &u, rows, &mut z);
                    cache.inputs.push(u);
                    cache.pre.push(z.clone());
                    let sum: Vec<f64> = h.iter().zip(&z).map(|(a, b)| a + b).collect();
                    h = relu(&sum);
                    cache.sums.push(sum);
                }
            }
        }
        let head = layers.last().expect("head layer");
        head.apply(params, &h, rows, &mut z);
        cache.inputs.push(h);
        cache.out = z;
    }

    /// Backpropagates `d_out` (`rows x OUTPUT_DIM`, gradient w.r.t. the raw
    /// head outputs) through a cached forward pass, accumulating into `grad`.
    pub(crate) fn backward(&self, params: &[f64], layout: &Layout, cache: &Cache, d_out: &[f64], grad: &mut [f64]) {
        let layers = &layout.layers;
        let rows = cache.rows;
        let n = layers.len();
        let mut dh = Vec::new();
        layers[n - 1].backward(params, &cache.inputs[n - 1], d_out, rows, grad, &mut dh);
        let relu_grad = |d: &mut [f64], pre: &[f64]| d.iter_mut().zip(pre).for_each(|(g, z)| if *z <= 0.0 { *g = 0.0 });
        let apply_mask = |d: &mut [f64], mask: &[f64]| {
            if !mask.is_empty() {
                d.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
            }
        };
        let mut dx = Vec::new();
        match self.config.arch {
            Architecture::FullyConnected => {
                for l in (0..n - 1).rev() {
                    apply_mask(&mut dh, &cache.masks[l]);
                    relu_grad(&mut dh, &cache.pre[l]);
                    layers[l].backward(params, &cache.inputs[l], &dh, rows, grad, &mut dx);
                    std::mem::swap(&mut dh, &mut dx);
                }
            }
            Architecture::ResidualMlp => {
                let blocks = (n - 2) / 2;
                let mut d_branch = Vec::new();
                for b in (0..blocks).rev() {
                    let (l1, l2) = (1 + 2 * b, 2 + 2 * b);
                    relu_grad(&mut dh, &cache.sums[b]);
                    // dh now holds d(sum); it flows to both the skip and the branch.
                    layers[l2].backward(params, &cache.inputs[l2], &dh, rows, grad, &mut dx);
                    apply_mask(&mut dx, &cache.masks[b]);
                    relu_grad(&mut dx, &cache.pre[l1]);
                    layers[l1].backward(params, &cache.inputs[l1], &dx, rows, grad, &mut d_branch);
                    dh.iter_mut().zip(&d_branch).for_each(|(a, b)| *a += b);
                }
                relu_grad(&mut dh, &cache.pre[0]);
                layers[0].backward(params, &cache.inputs[0], &dh, rows, grad, &mut dx);
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&NetDoc { version: DOC_VERSION, net: self.clone() }).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        let doc: NetDoc = serde_json::from_str(text)?;
        if doc.version != DOC_VERSION {
            return Err(NnError::Version(doc.version));
        }
        let expected = Layout::new(&doc.net.config).n_params;
        if doc.net.weights.len() != expected {
            return Err(NnError::DimensionMismatch { expected, got: doc.net.weights.len() });
        }
        Ok(doc.net)
    }

    /// `epoch,<column>` rows, one per logged epoch (1-based).
    pub fn loss_log_csv(&self) -> String {
        let column = match self.objective {
            Some(Objective::SquaredError) => "mean_squared_error",
            _ => "mean_jsd",
        };
        let mut s = format!("epoch,{column}\n");
        for (i, v) in self.train_log.iter().enumerate() {
            s.push_str(&format!("{},{v:?}\n", i + 1));
        }
        s
    }
}

pub(crate) fn clamp_log_var(v: f64) -> f64 {
    v.clamp(-LOG_VAR_LIMIT, LOG_VAR_LIMIT)
}

pub fn head_to_predictive(out: &[f64]) -> [GaussianPredictive; NUM_FEATURES] {
    std::array::from_fn(|k| GaussianPredictive { mean: out[k], variance: clamp_log_var(out[NUM_FEATURES + k]).exp() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_shapes() {
        let fc = NetConfig::fully_connected(90);
        assert_eq!(fc.weight_layers(), 13);
        let res = NetConfig::residual(90);
        assert_eq!(res.weight_layers(), 32);
        let net = TrainedNet::init(fc, 1).unwrap();
        assert_eq!(net.n_params(), 90 * 100 + 100 + 11 * (100 * 100 + 100) + 100 * 18 + 18);
    }

    #[test]
    fn init_is_deterministic() {
        let a = TrainedNet::init(NetConfig::residual(30), 9).unwrap();
        let b = TrainedNet::init(NetConfig::residual(30), 9).unwrap();
        assert_eq!(a.weights, b.weights);
        let c = TrainedNet::init(NetConfig::residual(30), 10).unwrap();
        assert_ne!(a.weights, c.weights);
    }

    #[test]
    fn he_variance_on_wide_layers() {
        let net = TrainedNet::init(NetConfig::fully_connected(100), 3).unwrap();
        let layout = net.layout();
        for layer in &layout.layers[1..layout.layers.len() - 1] {
            let w = &net.weights[layer.w..layer.b];
            let var = w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64;
            let target = 2.0 / layer.fan_in as f64;
            assert!((var / target - 1.0).abs() < 0.1, "{var} vs {target}");
            assert!(net.weights[layer.b..layer.b + layer.fan_out].iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn zero_input_gives_bias_outputs() {
        for cfg in [NetConfig::fully_connected(20), NetConfig::residual(20)] {
            let net = TrainedNet::init(cfg, 4).unwrap();
            let out = net.forward(&[0.0; 20], Mode::Eval).unwrap();
            for g in out {
                assert_eq!(g.mean, 0.0);
                assert_eq!(g.variance, 1.0);
            }
        }
    }

    #[test]
    fn eval_is_deterministic_and_train_is_not() {
        let net = TrainedNet::init(NetConfig::fully_connected(12), 5).unwrap();
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(net.forward_raw(&x, Mode::Eval).unwrap(), net.forward_raw(&x, Mode::Eval).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = net.forward_raw(&x, Mode::Train(&mut rng)).unwrap();
        let b = net.forward_raw(&x, Mode::Train(&mut rng)).unwrap();
        assert_ne!(a, b);
        assert!(net.forward_raw(&x[..5], Mode::Eval).is_err());
    }

    #[test]
    fn residual_branch_off_reduces_to_projection_and_head() {
        let mut net = TrainedNet::init(NetConfig { depth: 4, width: 8, ..NetConfig::residual(6) }, 2).unwrap();
        let layout = net.layout();
        let n = layout.layers.len();
        for layer in &layout.layers[1..n - 1] {
            net.weights[layer.w..layer.end()].fill(0.0);
        }
        let x = [0.3, -1.2, 0.8, 0.1, -0.5, 2.0];
        let out = net.forward_raw(&x, Mode::Eval).unwrap();
        // Skip path only: head(relu(W0 x + b0)).
        let (p, h) = (&layout.layers[0], &layout.layers[n - 1]);
        let hidden: Vec<f64> = (0..p.fan_out)
            .map(|o| {
                let s: f64 = (0..p.fan_in).map(|i| net.weights[p.w + o * p.fan_in + i] * x[i]).sum();
                (s + net.weights[p.b + o]).max(0.0)
            })
            .collect();
        for o in 0..OUTPUT_DIM {
            let s: f64 = (0..h.fan_in).map(|i| net.weights[h.w + o * h.fan_in + i] * hidden[i]).sum::<f64>() + net.weights[h.b + o];
            assert!((s - out[o]).abs() < 1e-12);
        }
    }

    #[test]
    fn variance_is_positive() {
        let net = TrainedNet::init(NetConfig { depth: 2, width: 16, ..NetConfig::fully_connected(8) }, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 20.0 - 10.0).collect();
            assert!(net.forward(&x, Mode::Eval).unwrap().iter().all(|g| g.variance > 0.0));
        }
    }

    #[test]
    fn json_round_trip() {
        let net = TrainedNet::init(NetConfig { depth: 2, width: 4, ..NetConfig::residual(3) }, 1).unwrap();
        let back = TrainedNet::from_json(&net.to_json()).unwrap();
        assert_eq!(net, back);
    }
}
